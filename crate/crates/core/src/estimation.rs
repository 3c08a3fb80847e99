//! SRS channel estimation, DMRS residual-phase estimation and noise estimation.

use crate::channel::{NUM_RX, NUM_USERS};
use crate::error::{Result, SimError};
use crate::grid::{PrbRange, ResourceGrid, SUBCARRIERS_PER_PRB};
use crate::linalg::{CMat2, C64};
use crate::pilots::{DmrsPattern, SrsPattern};

/// Estimated channel matrix per subcarrier with per-user column validity.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub h_est: Vec<CMat2>,
    /// Absolute slot index (frame * slots_per_frame + slot) of each column's
    /// latest SRS estimate; `None` until the user has sounded once.
    pub last_update_slot: [Option<u64>; NUM_USERS],
    pub valid_prbs: PrbRange,
    /// Moving-average window over subcarriers applied to new estimates; 1 = off.
    pub smoothing: usize,
}

impl ChannelState {
    pub fn new(n_sc: usize, srs_prbs: PrbRange) -> Self {
        ChannelState {
            h_est: vec![CMat2::ZERO; n_sc],
            last_update_slot: [None; NUM_USERS],
            valid_prbs: srs_prbs,
            smoothing: 1,
        }
    }

    pub fn is_valid(&self, user: usize) -> bool {
        self.last_update_slot.get(user).is_some_and(|s| s.is_some())
    }

    pub fn all_valid(&self) -> bool {
        (0..NUM_USERS).all(|u| self.is_valid(u))
    }

    pub fn first_invalid(&self) -> Option<usize> {
        (0..NUM_USERS).find(|&u| !self.is_valid(u))
    }

    pub fn covers(&self, k: usize) -> bool {
        self.valid_prbs.contains(k / SUBCARRIERS_PER_PRB)
    }
}

fn check_pattern(rx_grids: &[ResourceGrid], pattern: &SrsPattern) -> Result<()> {
    if rx_grids.len() != NUM_RX {
        return Err(SimError::Config(format!(
            "expected {NUM_RX} receive grids, got {}",
            rx_grids.len()
        )));
    }
    if pattern.user_id >= NUM_USERS {
        return Err(SimError::Index(format!("SRS user {}", pattern.user_id)));
    }
    let g = &rx_grids[0];
    if pattern.sequence.len() > g.n_sc() || pattern.symbol_idx >= g.n_sym() {
        return Err(SimError::Index(format!(
            "SRS of {} subcarriers on symbol {} outside {}x{} grid",
            pattern.sequence.len(),
            pattern.symbol_idx,
            g.n_sc(),
            g.n_sym()
        )));
    }
    Ok(())
}

/// Least-squares column estimate `h(s) = y(s) * conj(p(s))` on every SRS
/// subcarrier and antenna. Only column `pattern.user_id` is touched.
pub fn estimate_srs_channel(
    rx_grids: &[ResourceGrid],
    pattern: &SrsPattern,
    state: &mut ChannelState,
    stamp: u64,
) -> Result<()> {
    check_pattern(rx_grids, pattern)?;
    let user = pattern.user_id;
    let n = pattern.sequence.len();
    let mut raw = vec![[C64::new(0.0, 0.0); NUM_RX]; n];
    for (s, p) in pattern.sequence.iter().enumerate() {
        for (m, g) in rx_grids.iter().enumerate() {
            raw[s][m] = g.get(s, pattern.symbol_idx) * p.conj();
        }
    }
    let col = smooth(&raw, state.smoothing);
    for (s, h) in col.into_iter().enumerate() {
        state.h_est[s].set_column(user, h);
    }
    state.last_update_slot[user] = Some(stamp);
    Ok(())
}

fn smooth(raw: &[[C64; NUM_RX]], window: usize) -> Vec<[C64; NUM_RX]> {
    if window <= 1 {
        return raw.to_vec();
    }
    let half = window / 2;
    (0..raw.len())
        .map(|s| {
            let lo = s.saturating_sub(half);
            let hi = (s + half + 1).min(raw.len());
            let mut acc = [C64::new(0.0, 0.0); NUM_RX];
            for r in &raw[lo..hi] {
                for m in 0..NUM_RX {
                    acc[m] += r[m];
                }
            }
            let w = (hi - lo) as f64;
            acc.map(|a| a / w)
        })
        .collect()
}

/// Noise variance per antenna per resource element for the SRS just estimated.
///
/// The reference is the per-PRB mean of the column estimate, so the residual
/// `y - h_prb * p` keeps 11 of 12 degrees of freedom per PRB; the sum is
/// rescaled accordingly. Assumes the channel is flat within a PRB.
pub fn estimate_noise(
    rx_grids: &[ResourceGrid],
    pattern: &SrsPattern,
    state: &ChannelState,
) -> Result<f64> {
    check_pattern(rx_grids, pattern)?;
    let user = pattern.user_id;
    let mut resid = 0.0;
    let mut dof = 0usize;
    for prb in 0..pattern.n_srs_prb {
        let band = prb * SUBCARRIERS_PER_PRB..(prb + 1) * SUBCARRIERS_PER_PRB;
        for m in 0..NUM_RX {
            let mean = band
                .clone()
                .map(|s| state.h_est[s].column(user)[m])
                .sum::<C64>()
                / SUBCARRIERS_PER_PRB as f64;
            for s in band.clone() {
                let y = rx_grids[m].get(s, pattern.symbol_idx);
                resid += (y - mean * pattern.sequence[s]).norm_sqr();
            }
            dof += SUBCARRIERS_PER_PRB - 1;
        }
    }
    Ok(if dof == 0 { 0.0 } else { resid / dof as f64 })
}

/// Complex single-layer gain on the DMRS of one combined stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerGain {
    /// `mean(conj(p) * r)`.
    pub gain: C64,
    /// Residual variance of `r - gain * p`.
    pub noise_var: f64,
}

impl LayerGain {
    pub fn theta(&self) -> f64 {
        crate::linalg::wrap_angle(self.gain.arg())
    }

    pub fn sinr_db(&self) -> f64 {
        10.0 * (self.gain.norm_sqr() / self.noise_var.max(1e-30)).log10()
    }
}

pub fn estimate_layer_gain(rx_layer_symbols: &[C64], pattern: &DmrsPattern) -> Result<LayerGain> {
    let p = &pattern.sequence;
    if rx_layer_symbols.is_empty() {
        return Err(SimError::Config("no DMRS symbols to estimate from".into()));
    }
    if rx_layer_symbols.len() != p.len() {
        return Err(SimError::Length {
            expected: p.len(),
            got: rx_layer_symbols.len(),
        });
    }
    let n = p.len() as f64;
    let gain = rx_layer_symbols
        .iter()
        .zip(p)
        .map(|(r, p)| p.conj() * r)
        .sum::<C64>()
        / n;
    let resid: f64 = rx_layer_symbols
        .iter()
        .zip(p)
        .map(|(r, p)| (r - gain * p).norm_sqr())
        .sum();
    let noise_var = if p.len() > 1 { resid / (n - 1.0) } else { 0.0 };
    Ok(LayerGain { gain, noise_var })
}

/// Residual phase `arg(sum conj(p) r)` in (-pi, pi].
pub fn estimate_phase(rx_layer_symbols: &[C64], pattern: &DmrsPattern) -> Result<f64> {
    estimate_layer_gain(rx_layer_symbols, pattern).map(|g| g.theta())
}
