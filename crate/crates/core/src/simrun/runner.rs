use super::config::{BacklogModel, ScenarioConfig};
use crate::channel::{draw_user_channels, phase_rotation, propagate, NoiseModel, UeProfile, NUM_RX, NUM_USERS};
use crate::combining::CombinerKind;
use crate::error::{Result, SimError};
use crate::grid::{OfdmModem, ResourceGrid, SUBCARRIERS_PER_PRB};
use crate::linalg::{circular_distance, C64};
use crate::link::{ue_tx_slot, GnbReceiver};
use crate::mac::{SlotSchedule, Scheduler};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

const NOISE_TAG: u64 = 0x6e6f_6973_6531;
const PAYLOAD_TAG: u64 = 0x7061_796c_6f61;
const CHANNEL_TAG: u64 = 0x6368_616e_6e65;
/// Demand presented by a full-buffer user; larger than any grant.
const FULL_BUFFER_BYTES: usize = 1 << 24;

/// SplitMix64 finalizer over a tuple of words.
pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

/// One user's PUSCH outcome in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub frame: usize,
    pub slot: usize,
    pub user: usize,
    pub mu_mimo: bool,
    pub combiner: CombinerKind,
    pub prb_len: usize,
    pub tb_bytes: usize,
    pub crc_ok: bool,
    pub delivered_bits: usize,
    pub evm_rx: f64,
    pub evm_mrc: f64,
    pub evm_rzf: f64,
    pub theta_hat: f64,
    /// Planted rotation `wrap(2 pi cfo tau)` of this slot.
    pub theta_true: f64,
    pub sinr_db: f64,
    pub saturations: usize,
    pub stale_csi: bool,
}

/// Per-frame, per-user aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameUserMetrics {
    pub frame: usize,
    pub user: usize,
    pub mu_mimo: bool,
    pub delivered_bits: usize,
    /// Upper bound on deliverable bits: data REs x 2 bits x rate 1/2.
    pub capacity_bits: usize,
    pub transport_blocks: usize,
    pub crc_failures: usize,
    /// Means over slots with a decoded stream; NaN when there were none.
    pub evm_rx: f64,
    pub evm_mrc: f64,
    pub evm_rzf: f64,
    /// Circular mean of the per-slot estimates.
    pub theta_hat: f64,
    pub theta_error: f64,
}

/// LS channel magnitude after one SRS occasion, `magnitude[k][m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSnapshot {
    pub occasion: usize,
    pub frame: usize,
    pub slot: usize,
    pub user: usize,
    pub magnitude: Vec<[f64; NUM_RX]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstellationSample {
    pub frame: usize,
    pub user: usize,
    pub value: C64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Srs,
    Pusch,
}

/// One allocation of the emitted schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub frame: usize,
    pub slot: usize,
    pub kind: ScheduleKind,
    pub user: usize,
    pub layer: usize,
    pub prb_start: usize,
    pub prb_len: usize,
    pub symbol_start: usize,
    pub symbol_len: usize,
    pub tb_bytes: usize,
    pub mu_mimo: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsSeries {
    pub duration_frames: usize,
    pub slots_per_frame: usize,
    pub frames: Vec<FrameUserMetrics>,
    pub slots: Vec<SlotRecord>,
    pub channel: Vec<ChannelSnapshot>,
    pub constellation_rx: Vec<ConstellationSample>,
    pub constellation_mrc: Vec<ConstellationSample>,
    pub constellation_rzf: Vec<ConstellationSample>,
    pub schedule: Vec<ScheduleEntry>,
}

impl MetricsSeries {
    pub fn frame_user(&self, frame: usize, user: usize) -> Option<&FrameUserMetrics> {
        self.frames.iter().find(|r| r.frame == frame && r.user == user)
    }

    /// Mean delivered bits per frame of `user` over `frames`.
    pub fn mean_bits(&self, user: usize, frames: std::ops::Range<usize>) -> f64 {
        let rows: Vec<_> = self
            .frames
            .iter()
            .filter(|r| r.user == user && frames.contains(&r.frame))
            .collect();
        if rows.is_empty() {
            return f64::NAN;
        }
        rows.iter().map(|r| r.delivered_bits as f64).sum::<f64>() / rows.len() as f64
    }

    pub fn total_bits(&self, user: usize) -> usize {
        self.frames.iter().filter(|r| r.user == user).map(|r| r.delivered_bits).sum()
    }
}

fn finite_mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.filter(|x| x.is_finite()).fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { f64::NAN } else { s / n as f64 }
}

fn aggregate_frame(frame: usize, mu: bool, recs: &[SlotRecord], capacity: [usize; NUM_USERS]) -> Vec<FrameUserMetrics> {
    (0..NUM_USERS)
        .map(|u| {
            let r: Vec<&SlotRecord> = recs.iter().filter(|r| r.user == u).collect();
            let decoded: Vec<&&SlotRecord> = r.iter().filter(|r| r.theta_hat.is_finite()).collect();
            let phasor: C64 = decoded.iter().map(|r| C64::from_polar(1.0, r.theta_hat)).sum();
            FrameUserMetrics {
                frame,
                user: u,
                mu_mimo: mu,
                delivered_bits: r.iter().map(|r| r.delivered_bits).sum(),
                capacity_bits: capacity[u],
                transport_blocks: r.len(),
                crc_failures: r.iter().filter(|r| !r.crc_ok).count(),
                evm_rx: finite_mean(r.iter().map(|r| r.evm_rx)),
                evm_mrc: finite_mean(r.iter().map(|r| r.evm_mrc)),
                evm_rzf: finite_mean(r.iter().map(|r| r.evm_rzf)),
                theta_hat: if decoded.is_empty() { f64::NAN } else { phasor.arg() },
                theta_error: finite_mean(
                    decoded.iter().map(|r| circular_distance(r.theta_hat, r.theta_true)),
                ),
            }
        })
        .collect()
}

fn schedule_entries(s: &SlotSchedule, n_srs_prb: usize) -> Vec<ScheduleEntry> {
    let srs = s.srs_occasions.iter().map(|&(user, sym)| ScheduleEntry {
        frame: s.frame_idx,
        slot: s.slot_idx,
        kind: ScheduleKind::Srs,
        user,
        layer: 0,
        prb_start: 0,
        prb_len: n_srs_prb,
        symbol_start: sym,
        symbol_len: 1,
        tb_bytes: 0,
        mu_mimo: s.mu_mimo_enabled,
    });
    let pusch = s.pusch_allocs.iter().map(|a| ScheduleEntry {
        frame: s.frame_idx,
        slot: s.slot_idx,
        kind: ScheduleKind::Pusch,
        user: a.user_id,
        layer: a.layer,
        prb_start: a.prbs.start,
        prb_len: a.prbs.len,
        symbol_start: a.symbols.start,
        symbol_len: a.symbols.len(),
        tb_bytes: a.tb_bytes,
        mu_mimo: s.mu_mimo_enabled,
    });
    srs.chain(pusch).collect()
}

fn payload(seed: u64, abs_slot: u64, user: usize, len: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, PAYLOAD_TAG, abs_slot, user as u64]));
    let mut out = vec![0u8; len];
    rng.fill_bytes(&mut out);
    out
}

/// Channel seeds of the realization in force at `frame`.
fn epoch_profiles(cfg: &ScenarioConfig, frame: usize) -> Vec<UeProfile> {
    let epoch = match cfg.channel_redraw_frames {
        0 => 0,
        n => frame / n,
    };
    cfg.users
        .iter()
        .map(|u| UeProfile {
            channel_seed: if epoch == 0 {
                u.channel_seed
            } else {
                mix_seed(&[u.channel_seed, CHANNEL_TAG, epoch as u64])
            },
            ..u.clone()
        })
        .collect()
}

struct Recorder {
    frames: BTreeSet<usize>,
    points: usize,
}

impl Recorder {
    fn take(&self, out: &mut Vec<ConstellationSample>, frame: usize, user: usize, s: &[C64]) {
        if !self.frames.contains(&frame) {
            return;
        }
        let have = out.iter().filter(|c| c.frame == frame && c.user == user).count();
        let n = self.points.saturating_sub(have).min(s.len());
        out.extend(s[..n].iter().map(|&value| ConstellationSample { frame, user, value }));
    }
}

/// Runs the scenario; identical configs give identical series.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsSeries> {
    cfg.validate()?;
    let wf = &cfg.waveform;
    let spf = wf.slots_per_frame;
    let mac = cfg.mac_config();
    let n_srs_sc = cfg.n_srs_prb * SUBCARRIERS_PER_PRB;
    let model = cfg.channel_model()?;
    let mut gnb = GnbReceiver::new(cfg.gnb_config())?;
    let mut sched = Scheduler::new(mac.clone(), cfg.mu_mimo_initial)?;
    for ev in &cfg.mu_mimo_toggle_events {
        sched.set_mu_mimo(ev.enabled, ev.frame)?;
    }
    let modem = if cfg.time_domain { Some(OfdmModem::new(wf)?) } else { None };

    // per-user SNR: common noise floor at the best user, weaker users attenuated
    let snr_max = cfg.snr_db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let noise_var = 10f64.powf(-snr_max / 10.0);
    let power_offset: Vec<f64> = cfg.snr_db.iter().map(|s| s - snr_max).collect();

    let recorder = Recorder {
        frames: if cfg.constellation_frames.is_empty() {
            BTreeSet::from([cfg.duration_frames - 1])
        } else {
            cfg.constellation_frames.iter().copied().collect()
        },
        points: cfg.constellation_points,
    };

    let mut out = MetricsSeries {
        duration_frames: cfg.duration_frames,
        slots_per_frame: spf,
        ..Default::default()
    };
    let mut last_srs: [Option<u64>; NUM_USERS] = [None; NUM_USERS];
    let mut backlog = [0usize; NUM_USERS];
    let mut chan_epoch = None;
    let mut chan = None;

    for frame in 0..cfg.duration_frames {
        if cfg.backlog == BacklogModel::PerFrame {
            for b in backlog.iter_mut() {
                *b += cfg.backlog_bytes_per_frame;
            }
        }
        let profiles: Vec<UeProfile> = epoch_profiles(cfg, frame)
            .into_iter()
            .zip(&power_offset)
            .map(|(p, off)| UeProfile { tx_power_db: p.tx_power_db + off, ..p })
            .collect();
        let epoch = profiles.iter().map(|p| p.channel_seed).collect::<Vec<_>>();
        if chan_epoch.as_ref() != Some(&epoch) {
            chan = Some(draw_user_channels(&profiles, &model, wf));
            chan_epoch = Some(epoch);
        }
        let chan = chan.as_ref().expect("drawn above");

        let mut frame_recs = Vec::new();
        let mut capacity = [0usize; NUM_USERS];
        let mu = sched.mu_mimo_at(frame);
        for slot in 0..spf {
            let wrap = |e: SimError| SimError::Scenario { frame, slot, source: Box::new(e) };
            let demands: Vec<usize> = (0..NUM_USERS)
                .map(|u| match cfg.backlog {
                    BacklogModel::FullBuffer => FULL_BUFFER_BYTES,
                    BacklogModel::PerFrame => backlog[u],
                    BacklogModel::None => 0,
                })
                .collect();
            let s = sched.schedule_slot(frame, slot, &demands);
            s.validate(&mac).map_err(wrap)?;
            out.schedule.extend(schedule_entries(&s, cfg.n_srs_prb));
            let abs = s.abs_slot(spf);

            for &(u, _) in &s.srs_occasions {
                last_srs[u] = Some(abs);
            }
            let elapsed: Vec<f64> = (0..NUM_USERS)
                .map(|u| (abs - last_srs[u].unwrap_or(0)) as f64 * wf.slot_duration_s)
                .collect();

            let mut tx = Vec::with_capacity(NUM_USERS);
            for p in &profiles {
                let tb = s.alloc_for(p.user_id).map_or(0, |a| a.tb_bytes);
                let data = payload(cfg.seed, abs, p.user_id, tb);
                tx.push(ue_tx_slot(wf, p, &s, &data, n_srs_sc, cfg.seed).map_err(wrap)?);
                if let Some(a) = s.alloc_for(p.user_id) {
                    backlog[p.user_id] = backlog[p.user_id].saturating_sub(a.tb_bytes);
                    // 2 coded bits per RE at rate 1/2
                    capacity[p.user_id] += a.data_res();
                }
            }
            let grids: Vec<ResourceGrid> = tx.iter().map(|t| t.grid.clone()).collect();
            let noise = NoiseModel {
                noise_variance: noise_var,
                rng_seed: mix_seed(&[cfg.seed, NOISE_TAG, abs]),
            };
            let mut rx = propagate(&grids, chan, &profiles, &noise, &elapsed).map_err(wrap)?;
            if let Some(m) = &modem {
                for g in rx.iter_mut() {
                    *g = m.demodulate(&m.modulate(g).map_err(wrap)?, frame, slot).map_err(wrap)?;
                }
            }
            let refs: Vec<Option<&[C64]>> = tx
                .iter()
                .map(|t| (!t.data_symbols.is_empty()).then_some(t.data_symbols.as_slice()))
                .collect();
            let report = gnb.rx_slot(&rx, &s, s.mu_mimo_enabled, &refs).map_err(wrap)?;

            for upd in &report.srs_updates {
                let magnitude = gnb.state.h_est[..n_srs_sc]
                    .iter()
                    .map(|h| [h.0[0][upd.user_id].norm(), h.0[1][upd.user_id].norm()])
                    .collect();
                out.channel.push(ChannelSnapshot {
                    occasion: out.channel.len(),
                    frame,
                    slot,
                    user: upd.user_id,
                    magnitude,
                });
            }
            for u in &report.users {
                let alloc = s.alloc_for(u.user_id).expect("report follows schedule");
                frame_recs.push(SlotRecord {
                    frame,
                    slot,
                    user: u.user_id,
                    mu_mimo: s.mu_mimo_enabled,
                    combiner: u.combiner,
                    prb_len: alloc.prbs.len,
                    tb_bytes: u.tb_bytes,
                    crc_ok: u.crc_ok,
                    delivered_bits: u.delivered_bits,
                    evm_rx: u.evm_rx,
                    evm_mrc: u.evm_mrc,
                    evm_rzf: u.evm_rzf,
                    theta_hat: u.theta_hat,
                    theta_true: phase_rotation(profiles[u.user_id].cfo_hz, elapsed[u.user_id]),
                    sinr_db: u.post_combining_sinr_db,
                    saturations: u.fixed_saturations,
                    stale_csi: u.error.is_some(),
                });
                recorder.take(&mut out.constellation_rx, frame, u.user_id, &u.symbols.rx);
                recorder.take(&mut out.constellation_mrc, frame, u.user_id, &u.symbols.mrc);
                recorder.take(&mut out.constellation_rzf, frame, u.user_id, &u.symbols.rzf);
            }
        }
        out.frames.extend(aggregate_frame(frame, mu, &frame_recs, capacity));
        out.slots.extend(frame_recs);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simrun::parse_config;

    #[test]
    fn one_frame_no_backlog() {
        let cfg = parse_config("duration_frames = 1\nbacklog = \"none\"").unwrap();
        let m = run_scenario(&cfg).unwrap();
        assert_eq!(m.frames.len(), 2);
        assert!(m.frames.iter().all(|r| r.delivered_bits == 0 && r.transport_blocks == 0));
        // users sound in slots 8/9 and 18/19
        let occ: Vec<_> = m.channel.iter().map(|c| (c.slot, c.user)).collect();
        assert_eq!(occ, vec![(8, 0), (9, 1), (18, 0), (19, 1)]);
        assert!(m.channel.iter().all(|c| c.magnitude.len() == 240));
    }

    #[test]
    fn frame_zero_is_blind_until_both_users_sound() {
        let cfg = parse_config("duration_frames = 2\ntime_domain = false").unwrap();
        let m = run_scenario(&cfg).unwrap();
        for r in m.slots.iter().filter(|r| r.frame == 0) {
            assert_eq!(r.stale_csi, r.slot <= 8, "slot {}", r.slot);
        }
        assert!(m.slots.iter().filter(|r| r.frame == 1).all(|r| r.crc_ok));
        for r in &m.frames {
            assert!(r.delivered_bits <= r.capacity_bits);
        }
    }

    #[test]
    fn mix_seed_spreads() {
        assert_ne!(mix_seed(&[1, 2]), mix_seed(&[2, 1]));
        assert_ne!(mix_seed(&[0]), mix_seed(&[1]));
    }
}
