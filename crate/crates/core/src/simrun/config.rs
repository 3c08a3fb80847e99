//! Flat key-value scenario document.
//!
//! Every key is optional. Unknown keys are rejected by name.

use crate::channel::{ChannelModel, UeProfile, NUM_USERS};
use crate::error::{Result, SimError};
use crate::grid::WaveformConfig;
use crate::link::{FixedFormat, GnbConfig};
use crate::mac::{MacConfig, TddPattern};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BacklogModel {
    /// Every user always has more data than one slot can carry.
    FullBuffer,
    /// `backlog_bytes_per_frame` arrive at the start of each frame.
    PerFrame,
    None,
}

/// MU-MIMO state change taking effect at the start of `frame`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToggleEvent {
    pub frame: usize,
    pub enabled: bool,
}

impl fmt::Display for ToggleEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.frame, if self.enabled { "on" } else { "off" })
    }
}

impl FromStr for ToggleEvent {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || SimError::validation("mu_mimo_toggles", format!("`{s}` is not <frame>:on|off"));
        let (frame, state) = s.trim().split_once(':').ok_or_else(bad)?;
        let frame = frame.trim().parse().map_err(|_| bad())?;
        let enabled = match state.trim() {
            "on" => true,
            "off" => false,
            _ => return Err(bad()),
        };
        Ok(ToggleEvent { frame, enabled })
    }
}

/// Parses `"20:on,45:off"`; the empty string gives no events.
pub fn parse_toggles(s: &str) -> Result<Vec<ToggleEvent>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect()
}

pub fn format_toggles(events: &[ToggleEvent]) -> String {
    events.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",")
}

/// On-disk form. Field names are the document keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Document {
    seed: u64,
    duration_frames: usize,
    snr_db: Vec<f64>,
    cfo_hz: Vec<f64>,
    tx_power_db: Vec<f64>,
    channel_model: String,
    channel_correlation: f64,
    channel_seed: u64,
    channel_redraw_frames: usize,
    n_srs_prb: usize,
    srs_base_slot: usize,
    uplink_slots: String,
    mu_mimo: bool,
    mu_mimo_toggles: String,
    backlog: BacklogModel,
    backlog_bytes_per_frame: usize,
    fixed_point: bool,
    fixed_word_bits: u32,
    fixed_frac_bits: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    rzf_sigma: Option<f64>,
    srs_smoothing: usize,
    time_domain: bool,
    constellation_frames: Vec<usize>,
    constellation_points: usize,
    output_dir: String,
}

impl Default for Document {
    fn default() -> Self {
        ScenarioConfig::default().to_document()
    }
}

/// A complete, validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub waveform: WaveformConfig,
    pub users: Vec<UeProfile>,
    pub snr_db: Vec<f64>,
    pub channel_model_name: String,
    pub channel_correlation: f64,
    pub channel_seed: u64,
    /// Redraw H every this many frames; 0 keeps it for the whole run.
    pub channel_redraw_frames: usize,
    pub seed: u64,
    pub duration_frames: usize,
    pub n_srs_prb: usize,
    pub srs_base_slot: usize,
    pub tdd: TddPattern,
    pub mu_mimo_initial: bool,
    pub mu_mimo_toggle_events: Vec<ToggleEvent>,
    pub backlog: BacklogModel,
    pub backlog_bytes_per_frame: usize,
    pub fixed_point: Option<FixedFormat>,
    pub fixed_format: FixedFormat,
    pub rzf_sigma: Option<f64>,
    pub srs_smoothing: usize,
    /// Pass every slot through OFDM modulation and demodulation.
    pub time_domain: bool,
    /// Frames whose constellations are recorded; empty selects the last frame.
    pub constellation_frames: Vec<usize>,
    /// Per frame, user and path.
    pub constellation_points: usize,
    pub output_dir: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let waveform = WaveformConfig::default();
        let channel_seed = 7;
        ScenarioConfig {
            users: (0..NUM_USERS)
                .map(|k| UeProfile {
                    channel_seed: channel_seed + k as u64,
                    ..UeProfile::new(k)
                })
                .collect(),
            snr_db: vec![25.0; NUM_USERS],
            channel_model_name: "fixed_los_like".into(),
            channel_correlation: 0.5,
            channel_seed,
            channel_redraw_frames: 0,
            seed: 1,
            duration_frames: 60,
            n_srs_prb: 20,
            srs_base_slot: 8,
            tdd: TddPattern::all_uplink(waveform.slots_per_frame),
            mu_mimo_initial: false,
            mu_mimo_toggle_events: Vec::new(),
            backlog: BacklogModel::FullBuffer,
            backlog_bytes_per_frame: 0,
            fixed_point: None,
            fixed_format: FixedFormat::default(),
            rzf_sigma: None,
            srs_smoothing: 1,
            time_domain: true,
            constellation_frames: Vec::new(),
            constellation_points: 240,
            output_dir: PathBuf::from("out"),
            waveform,
        }
    }
}

fn per_user(field: &str, v: &[f64]) -> Result<[f64; NUM_USERS]> {
    <[f64; NUM_USERS]>::try_from(v)
        .map_err(|_| SimError::validation(field, format!("needs {NUM_USERS} values, got {}", v.len())))
}

fn uplink_string(tdd: &TddPattern) -> String {
    tdd.uplink.iter().map(|&u| if u { 'U' } else { 'D' }).collect()
}

impl ScenarioConfig {
    pub fn channel_model(&self) -> Result<ChannelModel> {
        ChannelModel::parse(&self.channel_model_name, self.channel_correlation).map_err(|e| match e {
            SimError::Config(msg) => SimError::validation("channel_model", msg),
            other => other,
        })
    }

    pub fn mac_config(&self) -> MacConfig {
        MacConfig {
            n_prb: self.waveform.n_prb,
            n_srs_prb: self.n_srs_prb,
            srs_base_slot: self.srs_base_slot,
            slots_per_frame: self.waveform.slots_per_frame,
            tdd: self.tdd.clone(),
        }
    }

    pub fn gnb_config(&self) -> GnbConfig {
        GnbConfig {
            waveform: self.waveform.clone(),
            n_srs_prb: self.n_srs_prb,
            seed: self.seed,
            sigma_override: self.rzf_sigma,
            fixed_point: self.fixed_point,
            smoothing: self.srs_smoothing,
        }
    }

    /// Sets the seed in both the pilot/scrambling and noise roles.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.waveform.validate()?;
        if self.duration_frames == 0 {
            return Err(SimError::validation("duration_frames", "must be at least 1"));
        }
        if self.users.len() != NUM_USERS {
            return Err(SimError::validation("users", format!("exactly {NUM_USERS} users")));
        }
        for (i, u) in self.users.iter().enumerate() {
            if u.user_id != i {
                return Err(SimError::validation(&format!("users[{i}].user_id"), "must equal position"));
            }
            u.validate()?;
            if !u.cfo_hz.is_finite() {
                return Err(SimError::validation(&format!("cfo_hz[{i}]"), "must be finite"));
            }
            if !u.tx_power_db.is_finite() {
                return Err(SimError::validation(&format!("tx_power_db[{i}]"), "must be finite"));
            }
        }
        per_user("snr_db", &self.snr_db)?;
        if let Some(i) = self.snr_db.iter().position(|s| !s.is_finite()) {
            return Err(SimError::validation(&format!("snr_db[{i}]"), "must be finite"));
        }
        self.channel_model()?;
        if self.n_srs_prb == 0 || self.n_srs_prb > self.waveform.n_prb {
            return Err(SimError::validation(
                "n_srs_prb",
                format!("must be in 1..={}", self.waveform.n_prb),
            ));
        }
        if self.tdd.uplink.len() != self.waveform.slots_per_frame {
            return Err(SimError::validation(
                "uplink_slots",
                format!("needs {} entries", self.waveform.slots_per_frame),
            ));
        }
        crate::mac::schedule_srs(0, &[0, 1], &self.mac_config())
            .map_err(|e| SimError::validation("srs_base_slot", e.to_string()))?;
        let mut last = None;
        for (i, ev) in self.mu_mimo_toggle_events.iter().enumerate() {
            if ev.frame >= self.duration_frames {
                return Err(SimError::validation(
                    &format!("mu_mimo_toggles[{i}]"),
                    format!("frame {} is outside 0..{}", ev.frame, self.duration_frames),
                ));
            }
            if last.is_some_and(|f| ev.frame <= f) {
                return Err(SimError::validation(
                    &format!("mu_mimo_toggles[{i}]"),
                    "frames must be strictly increasing",
                ));
            }
            last = Some(ev.frame);
        }
        let f = &self.fixed_format;
        if ![8, 16, 32].contains(&f.word_bits) {
            return Err(SimError::validation("fixed_word_bits", "must be 8, 16 or 32"));
        }
        if f.frac_bits >= f.word_bits {
            return Err(SimError::validation("fixed_frac_bits", "must be below fixed_word_bits"));
        }
        if let Some(s) = self.rzf_sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(SimError::validation("rzf_sigma", "must be a nonnegative number"));
            }
        }
        if self.srs_smoothing == 0 {
            return Err(SimError::validation("srs_smoothing", "must be at least 1"));
        }
        if let Some(i) = self.constellation_frames.iter().position(|&f| f >= self.duration_frames) {
            return Err(SimError::validation(
                &format!("constellation_frames[{i}]"),
                "outside the run",
            ));
        }
        Ok(())
    }

    fn to_document(&self) -> Document {
        Document {
            seed: self.seed,
            duration_frames: self.duration_frames,
            snr_db: self.snr_db.clone(),
            cfo_hz: self.users.iter().map(|u| u.cfo_hz).collect(),
            tx_power_db: self.users.iter().map(|u| u.tx_power_db).collect(),
            channel_model: self.channel_model_name.clone(),
            channel_correlation: self.channel_correlation,
            channel_seed: self.channel_seed,
            channel_redraw_frames: self.channel_redraw_frames,
            n_srs_prb: self.n_srs_prb,
            srs_base_slot: self.srs_base_slot,
            uplink_slots: uplink_string(&self.tdd),
            mu_mimo: self.mu_mimo_initial,
            mu_mimo_toggles: format_toggles(&self.mu_mimo_toggle_events),
            backlog: self.backlog,
            backlog_bytes_per_frame: self.backlog_bytes_per_frame,
            fixed_point: self.fixed_point.is_some(),
            fixed_word_bits: self.fixed_format.word_bits,
            fixed_frac_bits: self.fixed_format.frac_bits,
            rzf_sigma: self.rzf_sigma,
            srs_smoothing: self.srs_smoothing,
            time_domain: self.time_domain,
            constellation_frames: self.constellation_frames.clone(),
            constellation_points: self.constellation_points,
            output_dir: self.output_dir.to_string_lossy().into_owned(),
        }
    }

    fn from_document(d: Document) -> Result<Self> {
        let cfo = per_user("cfo_hz", &d.cfo_hz)?;
        let power = per_user("tx_power_db", &d.tx_power_db)?;
        let waveform = WaveformConfig::default();
        if d.uplink_slots.len() != waveform.slots_per_frame
            || d.uplink_slots.chars().any(|c| c != 'U' && c != 'D')
        {
            return Err(SimError::validation(
                "uplink_slots",
                format!("needs {} characters of U or D", waveform.slots_per_frame),
            ));
        }
        let tdd = TddPattern {
            uplink: d.uplink_slots.chars().map(|c| c == 'U').collect(),
        };
        let fixed_format = FixedFormat {
            word_bits: d.fixed_word_bits,
            frac_bits: d.fixed_frac_bits,
        };
        let users = (0..NUM_USERS)
            .map(|k| UeProfile {
                cfo_hz: cfo[k],
                tx_power_db: power[k],
                channel_seed: d.channel_seed.wrapping_add(k as u64),
                ..UeProfile::new(k)
            })
            .collect();
        let cfg = ScenarioConfig {
            waveform,
            users,
            snr_db: d.snr_db,
            channel_model_name: d.channel_model,
            channel_correlation: d.channel_correlation,
            channel_seed: d.channel_seed,
            channel_redraw_frames: d.channel_redraw_frames,
            seed: d.seed,
            duration_frames: d.duration_frames,
            n_srs_prb: d.n_srs_prb,
            srs_base_slot: d.srs_base_slot,
            tdd,
            mu_mimo_initial: d.mu_mimo,
            mu_mimo_toggle_events: parse_toggles(&d.mu_mimo_toggles)?,
            backlog: d.backlog,
            backlog_bytes_per_frame: d.backlog_bytes_per_frame,
            fixed_point: d.fixed_point.then_some(fixed_format),
            fixed_format,
            rzf_sigma: d.rzf_sigma,
            srs_smoothing: d.srs_smoothing,
            time_domain: d.time_domain,
            constellation_frames: d.constellation_frames,
            constellation_points: d.constellation_points,
            output_dir: PathBuf::from(d.output_dir),
        };
        Ok(cfg)
    }

    /// Canonical document text; [`parse_config`] of it gives back `self`.
    pub fn serialize(&self) -> String {
        toml::to_string(&self.to_document()).expect("flat document always serializes")
    }
}

fn unknown_key(msg: &str) -> Option<String> {
    let rest = msg.split("unknown field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

/// Key of the `key = value` line containing byte offset `pos`.
fn key_on_line(text: &str, pos: usize) -> Option<String> {
    let start = text.get(..pos)?.rfind('\n').map_or(0, |i| i + 1);
    let line = text[start..].lines().next()?;
    let (key, _) = line.split_once('=')?;
    let key = key.trim();
    (!key.is_empty()).then(|| key.to_string())
}

/// Parses and validates a scenario document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let doc: Document = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        match unknown_key(&msg) {
            Some(key) => SimError::UnknownKey(key),
            None => {
                let field = e
                    .span()
                    .and_then(|sp| key_on_line(text, sp.start))
                    .unwrap_or_else(|| "document".into());
                SimError::validation(&field, msg.trim())
            }
        }
    })?;
    let cfg = ScenarioConfig::from_document(doc)?;
    cfg.validate()?;
    Ok(cfg)
}
