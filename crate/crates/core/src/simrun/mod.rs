//! Scenario configuration, end-to-end execution and artifact emission.

mod artifacts;
mod config;
mod runner;

pub use artifacts::{
    emit_artifacts, render_artifacts, summarize, Evm, EvmStats, Regime, Report, Totals, CHANNEL_CSV,
    CONSTELLATION_MRC_CSV, CONSTELLATION_RX_CSV, CONSTELLATION_RZF_CSV, REPORT_JSON, SCHEDULE_CSV,
    SLOTS_CSV, THROUGHPUT_CSV,
};
pub use config::{format_toggles, parse_config, parse_toggles, BacklogModel, ScenarioConfig, ToggleEvent};
pub use runner::{
    run_scenario, ChannelSnapshot, ConstellationSample, FrameUserMetrics, MetricsSeries, ScheduleEntry,
    ScheduleKind, SlotRecord,
};
