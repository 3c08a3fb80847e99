use super::runner::{ConstellationSample, MetricsSeries, ScheduleKind};
use crate::channel::NUM_USERS;
use crate::combining::CombinerKind;
use crate::error::Result;
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const THROUGHPUT_CSV: &str = "throughput.csv";
pub const CHANNEL_CSV: &str = "channel_mag.csv";
pub const CONSTELLATION_RX_CSV: &str = "constellation_rx.csv";
pub const CONSTELLATION_MRC_CSV: &str = "constellation_mrc.csv";
pub const CONSTELLATION_RZF_CSV: &str = "constellation_rzf.csv";
pub const SCHEDULE_CSV: &str = "schedule.csv";
pub const SLOTS_CSV: &str = "slot_metrics.csv";
pub const REPORT_JSON: &str = "report.json";

/// Contiguous frames with one MU-MIMO setting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Regime {
    pub mu_mimo: bool,
    pub start_frame: usize,
    /// Exclusive.
    pub end_frame: usize,
    pub mean_bits_per_frame: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Totals {
    pub delivered_bits: Vec<usize>,
    pub transport_blocks: Vec<usize>,
    pub crc_pass: Vec<usize>,
    pub crc_fail: Vec<usize>,
    pub stale_csi: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvmStats {
    pub mean: Vec<Option<f64>>,
    pub min: Vec<Option<f64>>,
    pub max: Vec<Option<f64>>,
    pub samples: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evm {
    pub rx: EvmStats,
    pub mrc: EvmStats,
    pub rzf: EvmStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub duration_frames: usize,
    pub slots_per_frame: usize,
    pub regimes: Vec<Regime>,
    pub totals: Totals,
    /// Percent, over slots with a decoded stream.
    pub evm_percent: Evm,
    pub theta_error_rad_mean: Vec<Option<f64>>,
    pub srs_occasions: usize,
    pub fixed_point_saturations: usize,
}

fn evm_stats(m: &MetricsSeries, pick: impl Fn(&super::SlotRecord) -> f64) -> EvmStats {
    let mut s = EvmStats { mean: vec![], min: vec![], max: vec![], samples: vec![] };
    for u in 0..NUM_USERS {
        let v: Vec<f64> = m.slots.iter().filter(|r| r.user == u).map(&pick).filter(|x| x.is_finite()).collect();
        let n = v.len();
        s.samples.push(n);
        s.mean.push((n > 0).then(|| v.iter().sum::<f64>() / n as f64));
        s.min.push(v.iter().cloned().reduce(f64::min));
        s.max.push(v.iter().cloned().reduce(f64::max));
    }
    s
}

/// Summary of a series; an empty series gives empty vectors.
pub fn summarize(m: &MetricsSeries) -> Report {
    let users: Vec<usize> = if m.frames.is_empty() { vec![] } else { (0..NUM_USERS).collect() };
    let mut regimes: Vec<Regime> = Vec::new();
    for r in m.frames.iter().filter(|r| r.user == 0) {
        match regimes.last_mut() {
            Some(g) if g.mu_mimo == r.mu_mimo && g.end_frame == r.frame => g.end_frame += 1,
            _ => regimes.push(Regime {
                mu_mimo: r.mu_mimo,
                start_frame: r.frame,
                end_frame: r.frame + 1,
                mean_bits_per_frame: vec![],
            }),
        }
    }
    for g in regimes.iter_mut() {
        g.mean_bits_per_frame = users.iter().map(|&u| m.mean_bits(u, g.start_frame..g.end_frame)).collect();
    }
    let per_user = |f: &dyn Fn(usize) -> usize| users.iter().map(|&u| f(u)).collect::<Vec<_>>();
    let tbs = |u| m.slots.iter().filter(|r| r.user == u).count();
    let fails = |u| m.slots.iter().filter(|r| r.user == u && !r.crc_ok).count();
    let mut evm = Evm {
        rx: evm_stats(m, |r| r.evm_rx),
        mrc: evm_stats(m, |r| r.evm_mrc),
        rzf: evm_stats(m, |r| r.evm_rzf),
    };
    if users.is_empty() {
        for s in [&mut evm.rx, &mut evm.mrc, &mut evm.rzf] {
            *s = EvmStats { mean: vec![], min: vec![], max: vec![], samples: vec![] };
        }
    }
    Report {
        duration_frames: m.duration_frames,
        slots_per_frame: m.slots_per_frame,
        regimes,
        totals: Totals {
            delivered_bits: per_user(&|u| m.total_bits(u)),
            transport_blocks: per_user(&tbs),
            crc_pass: per_user(&|u| tbs(u) - fails(u)),
            crc_fail: per_user(&fails),
            stale_csi: per_user(&|u| m.slots.iter().filter(|r| r.user == u && r.stale_csi).count()),
        },
        evm_percent: evm,
        theta_error_rad_mean: users
            .iter()
            .map(|&u| {
                let v: Vec<f64> = m
                    .slots
                    .iter()
                    .filter(|r| r.user == u && r.theta_hat.is_finite())
                    .map(|r| crate::linalg::circular_distance(r.theta_hat, r.theta_true))
                    .collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect(),
        srs_occasions: m.channel.len(),
        fixed_point_saturations: m.slots.iter().map(|r| r.saturations).sum(),
    }
}

fn f(x: f64) -> String {
    if x.is_finite() { format!("{x:.6}") } else { String::new() }
}

fn constellation_csv(samples: &[ConstellationSample]) -> String {
    let mut s = String::from("frame,user,i,q\n");
    for c in samples {
        let _ = writeln!(s, "{},{},{:.6},{:.6}", c.frame, c.user, c.value.re, c.value.im);
    }
    s
}

/// CSV and JSON artifacts as `(file name, contents)`.
pub fn render_artifacts(m: &MetricsSeries) -> Vec<(&'static str, String)> {
    let mut tp = String::from("frame,user,bits\n");
    for r in &m.frames {
        let _ = writeln!(tp, "{},{},{}", r.frame, r.user, r.delivered_bits);
    }
    let mut ch = String::from("occasion,antenna,user,subcarrier,magnitude\n");
    for c in &m.channel {
        for ant in 0..2 {
            for (k, mag) in c.magnitude.iter().enumerate() {
                let _ = writeln!(ch, "{},{},{},{},{:.6}", c.occasion, ant, c.user, k, mag[ant]);
            }
        }
    }
    let mut sc = String::from(
        "frame,slot,kind,user,layer,prb_start,prb_len,symbol_start,symbol_len,tb_bytes,mu_mimo\n",
    );
    for e in &m.schedule {
        let kind = match e.kind {
            ScheduleKind::Srs => "srs",
            ScheduleKind::Pusch => "pusch",
        };
        let _ = writeln!(
            sc,
            "{},{},{},{},{},{},{},{},{},{},{}",
            e.frame, e.slot, kind, e.user, e.layer, e.prb_start, e.prb_len, e.symbol_start,
            e.symbol_len, e.tb_bytes, e.mu_mimo as u8
        );
    }
    let mut sl = String::from(
        "frame,slot,user,mu_mimo,combiner,prb_len,tb_bytes,crc_ok,bits,evm_rx,evm_mrc,evm_rzf,theta_hat,theta_true,sinr_db,saturations,stale_csi\n",
    );
    for r in &m.slots {
        let comb = match r.combiner {
            CombinerKind::Mrc => "mrc",
            CombinerKind::Rzf => "rzf",
        };
        let _ = writeln!(
            sl,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.frame, r.slot, r.user, r.mu_mimo as u8, comb, r.prb_len, r.tb_bytes, r.crc_ok as u8,
            r.delivered_bits, f(r.evm_rx), f(r.evm_mrc), f(r.evm_rzf), f(r.theta_hat),
            f(r.theta_true), f(r.sinr_db), r.saturations, r.stale_csi as u8
        );
    }
    let mut report = serde_json::to_string_pretty(&summarize(m)).expect("report serializes");
    report.push('\n');
    vec![
        (THROUGHPUT_CSV, tp),
        (CHANNEL_CSV, ch),
        (CONSTELLATION_RX_CSV, constellation_csv(&m.constellation_rx)),
        (CONSTELLATION_MRC_CSV, constellation_csv(&m.constellation_mrc)),
        (CONSTELLATION_RZF_CSV, constellation_csv(&m.constellation_rzf)),
        (SCHEDULE_CSV, sc),
        (SLOTS_CSV, sl),
        (REPORT_JSON, report),
    ]
}

/// Writes every artifact into `out_dir`, creating it if needed.
pub fn emit_artifacts(m: &MetricsSeries, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (name, body) in render_artifacts(m) {
        let path = out_dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
