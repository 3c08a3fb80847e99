//! MRC and RZF combiners, in floating point and as a quantized integer path.
//!
//! The combiner is computed in `f64` whenever new CSI arrives; only the
//! per-resource-element matrix-vector product has an integer variant.

use crate::channel::NUM_USERS;
use crate::error::{Result, SimError};
use crate::estimation::ChannelState;
use crate::grid::PrbRange;
use crate::linalg::{CMat2, CVec2, C64};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinerKind {
    Mrc,
    Rzf,
}

/// Per-subcarrier `V^H` (K x M).
#[derive(Debug, Clone, PartialEq)]
pub struct Combiner {
    pub v_herm: Vec<CMat2>,
    pub kind: CombinerKind,
    pub sigma: f64,
    /// CSI timestamp of each user's column used to build this combiner.
    pub source_slot: [u64; NUM_USERS],
    pub valid_prbs: PrbRange,
}

impl Combiner {
    pub fn covers(&self, k: usize) -> bool {
        k < self.v_herm.len() && self.valid_prbs.subcarriers().contains(&k)
    }

    pub fn apply_one(&self, k: usize, y: &CVec2) -> Result<CVec2> {
        if !self.covers(k) {
            return Err(SimError::StaleCsi { user: usize::MAX });
        }
        Ok(self.v_herm[k].mul_vec(y))
    }
}

fn source_slots(state: &ChannelState) -> Result<[u64; NUM_USERS]> {
    let mut out = [0; NUM_USERS];
    for (u, o) in out.iter_mut().enumerate() {
        *o = state.last_update_slot[u].ok_or(SimError::StaleCsi { user: u })?;
    }
    Ok(out)
}

pub fn compute_mrc(state: &ChannelState) -> Result<Combiner> {
    let source_slot = source_slots(state)?;
    let v_herm = state
        .h_est
        .iter()
        .enumerate()
        .map(|(k, h)| if state.covers(k) { h.herm() } else { CMat2::ZERO })
        .collect();
    Ok(Combiner {
        v_herm,
        kind: CombinerKind::Mrc,
        sigma: 0.0,
        source_slot,
        valid_prbs: state.valid_prbs,
    })
}

/// `(H^H H + sigma I)^{-1} H^H` via the closed-form 2x2 inverse.
pub fn rzf_matrix(h: &CMat2, sigma: f64) -> Option<CMat2> {
    let hh = h.herm();
    let gram = hh * *h + CMat2::diag(C64::new(sigma, 0.0), C64::new(sigma, 0.0));
    let det = gram.det();
    if sigma == 0.0 && det.norm() < 1e-12 * gram.trace().norm() {
        return None;
    }
    if det.norm() == 0.0 {
        return None;
    }
    Some(gram.adjugate().scale(det.inv()) * hh)
}

pub fn compute_rzf(state: &ChannelState, sigma: f64) -> Result<Combiner> {
    if !(sigma >= 0.0) {
        return Err(SimError::validation("sigma", "must be nonnegative"));
    }
    let source_slot = source_slots(state)?;
    let mut v_herm = Vec::with_capacity(state.h_est.len());
    for (k, h) in state.h_est.iter().enumerate() {
        if !state.covers(k) {
            v_herm.push(CMat2::ZERO);
            continue;
        }
        v_herm.push(rzf_matrix(h, sigma).ok_or(SimError::Singular { subcarrier: k })?);
    }
    Ok(Combiner {
        v_herm,
        kind: CombinerKind::Rzf,
        sigma,
        source_slot,
        valid_prbs: state.valid_prbs,
    })
}

/// `x(s) = V^H(s) y(s)` for each `(subcarrier, y)` pair.
pub fn apply_combiner(comb: &Combiner, rx_vectors: &[(usize, CVec2)]) -> Result<Vec<CVec2>> {
    rx_vectors.iter().map(|(k, y)| comb.apply_one(*k, y)).collect()
}

pub type CInt = Complex<i32>;

/// Integer combiner: `V^H ~= 2^scale_exponent * entries / 2^frac_bits`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedCombiner {
    pub entries: Vec<[[CInt; 2]; 2]>,
    pub frac_bits: u32,
    pub word_bits: u32,
    pub scale_exponent: i32,
    /// Components clipped during quantization.
    pub saturations: usize,
    pub kind: CombinerKind,
    pub valid_prbs: PrbRange,
}

impl FixedCombiner {
    pub fn dequantize(&self) -> Vec<CMat2> {
        let step = 2f64.powi(self.scale_exponent - self.frac_bits as i32);
        self.entries
            .iter()
            .map(|e| {
                let c = |q: CInt| C64::new(q.re as f64 * step, q.im as f64 * step);
                CMat2([[c(e[0][0]), c(e[0][1])], [c(e[1][0]), c(e[1][1])]])
            })
            .collect()
    }
}

pub(crate) fn word_limits(word_bits: u32) -> (i64, i64) {
    let max = (1i64 << (word_bits - 1)) - 1;
    (-max - 1, max)
}

fn saturate(v: i128, lo: i64, hi: i64, count: &mut usize) -> i32 {
    if v > hi as i128 {
        *count += 1;
        hi as i32
    } else if v < lo as i128 {
        *count += 1;
        lo as i32
    } else {
        v as i32
    }
}

fn check_format(word_bits: u32, frac_bits: u32) -> Result<()> {
    if ![8, 16, 32].contains(&word_bits) {
        return Err(SimError::validation("fixed_word_bits", "must be 8, 16 or 32"));
    }
    if frac_bits >= word_bits {
        return Err(SimError::validation(
            "fixed_frac_bits",
            "must be smaller than the word size",
        ));
    }
    Ok(())
}

/// Round-to-nearest quantization with saturation.
///
/// `scale_exponent` is the smallest nonnegative shift that keeps the largest
/// component inside the word, so a combiner that already fits keeps the plain
/// Q(frac_bits) format and one that does not ends up using at least half of
/// the range.
pub fn quantize_combiner(comb: &Combiner, word_bits: u32, frac_bits: u32) -> Result<FixedCombiner> {
    check_format(word_bits, frac_bits)?;
    let (lo, hi) = word_limits(word_bits);
    let peak = comb.v_herm.iter().map(CMat2::max_component).fold(0.0, f64::max);
    let mut scale_exponent = 0i32;
    while (peak * 2f64.powi(frac_bits as i32 - scale_exponent)).round() > hi as f64 {
        scale_exponent += 1;
    }
    let factor = 2f64.powi(frac_bits as i32 - scale_exponent);
    let mut saturations = 0;
    let mut q = |x: f64| saturate((x * factor).round() as i128, lo, hi, &mut saturations);
    let entries = comb
        .v_herm
        .iter()
        .map(|m| {
            let mut e = [[CInt::new(0, 0); 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    e[i][j] = CInt::new(q(m.0[i][j].re), q(m.0[i][j].im));
                }
            }
            e
        })
        .collect();
    Ok(FixedCombiner {
        entries,
        frac_bits,
        word_bits,
        scale_exponent,
        saturations,
        kind: comb.kind,
        valid_prbs: comb.valid_prbs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedOutput {
    pub values: Vec<[CInt; 2]>,
    pub saturations: usize,
}

/// Integer multiply-accumulate with a wide accumulator, one rounding shift at
/// the output and saturation to the word range.
pub fn apply_combiner_fixed(fix: &FixedCombiner, rx_int: &[(usize, [CInt; 2])]) -> Result<FixedOutput> {
    let (lo, hi) = word_limits(fix.word_bits);
    let shift = fix.frac_bits as i32 - fix.scale_exponent;
    let round = |acc: i128| -> i128 {
        if shift > 0 {
            (acc + (1i128 << (shift - 1))) >> shift
        } else {
            acc << (-shift)
        }
    };
    let mut saturations = 0;
    let mut values = Vec::with_capacity(rx_int.len());
    for &(k, y) in rx_int {
        if k >= fix.entries.len() || !fix.valid_prbs.subcarriers().contains(&k) {
            return Err(SimError::StaleCsi { user: usize::MAX });
        }
        let e = &fix.entries[k];
        let mut out = [CInt::new(0, 0); 2];
        for (row, o) in e.iter().zip(out.iter_mut()) {
            let (mut re, mut im) = (0i128, 0i128);
            for (v, x) in row.iter().zip(&y) {
                let (vr, vi, xr, xi) = (v.re as i128, v.im as i128, x.re as i128, x.im as i128);
                re += vr * xr - vi * xi;
                im += vr * xi + vi * xr;
            }
            *o = CInt::new(
                saturate(round(re), lo, hi, &mut saturations),
                saturate(round(im), lo, hi, &mut saturations),
            );
        }
        values.push(out);
    }
    Ok(FixedOutput { values, saturations })
}

/// Converts float samples to integers at `scale` counts per unit amplitude.
pub fn quantize_samples(values: &[CVec2], scale: f64, word_bits: u32) -> (Vec<[CInt; 2]>, usize) {
    let (lo, hi) = word_limits(word_bits);
    let mut sat = 0;
    let out = values
        .iter()
        .map(|v| {
            v.map(|c| {
                CInt::new(
                    saturate((c.re * scale).round() as i128, lo, hi, &mut sat),
                    saturate((c.im * scale).round() as i128, lo, hi, &mut sat),
                )
            })
        })
        .collect();
    (out, sat)
}

pub fn dequantize_samples(values: &[[CInt; 2]], scale: f64) -> Vec<CVec2> {
    values
        .iter()
        .map(|v| v.map(|c| C64::new(c.re as f64 / scale, c.im as f64 / scale)))
        .collect()
}
