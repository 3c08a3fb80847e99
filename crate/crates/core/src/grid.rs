//! Resource grid and CP-OFDM modulation.
//!
//! Conventions:
//! - the `n_sc` active subcarriers are centred on DC, subcarrier `n_sc / 2`
//!   lands on bin 0 and the DC bin carries data;
//! - both transforms are unitary (scaled by `1/sqrt(fft_size)`), so grid and
//!   time-domain energies are equal;
//! - the first symbol of every slot carries the long cyclic prefix.

use crate::error::{Result, SimError};
use crate::linalg::C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::sync::Arc;

pub const SUBCARRIERS_PER_PRB: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformConfig {
    pub n_prb: usize,
    pub n_sc: usize,
    pub fft_size: usize,
    pub scs_hz: f64,
    pub fs_sps: f64,
    /// Bookkeeping only; no RF stage.
    pub fc_hz: f64,
    pub symbols_per_slot: usize,
    pub slots_per_frame: usize,
    pub slot_duration_s: f64,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        WaveformConfig {
            n_prb: 24,
            n_sc: 288,
            fft_size: 512,
            scs_hz: 30_000.0,
            fs_sps: 15_360_000.0,
            fc_hz: 3_319_680_000.0,
            symbols_per_slot: 14,
            slots_per_frame: 20,
            slot_duration_s: 0.0005,
        }
    }
}

impl WaveformConfig {
    /// Numerology-1 waveform with `n_prb` resource blocks and an FFT size.
    pub fn with_size(n_prb: usize, fft_size: usize) -> Self {
        let scs_hz = 30_000.0;
        WaveformConfig {
            n_prb,
            n_sc: n_prb * SUBCARRIERS_PER_PRB,
            fft_size,
            scs_hz,
            fs_sps: fft_size as f64 * scs_hz,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sc != SUBCARRIERS_PER_PRB * self.n_prb {
            return Err(SimError::validation("waveform.n_sc", "must equal 12 * n_prb"));
        }
        if (self.fs_sps - self.fft_size as f64 * self.scs_hz).abs() > 1e-6 {
            return Err(SimError::validation(
                "waveform.fs_sps",
                "must equal fft_size * scs_hz",
            ));
        }
        if self.fft_size < self.n_sc || self.n_sc == 0 {
            return Err(SimError::validation(
                "waveform.fft_size",
                "must be at least n_sc",
            ));
        }
        if !self.fft_size.is_multiple_of(128) {
            return Err(SimError::validation(
                "waveform.fft_size",
                "must be a multiple of 128",
            ));
        }
        if (self.slots_per_frame as f64 * self.slot_duration_s - 0.010).abs() > 1e-12 {
            return Err(SimError::validation(
                "waveform.slots_per_frame",
                "slots_per_frame * slot_duration_s must be 10 ms",
            ));
        }
        if self.symbols_per_slot != 14 {
            return Err(SimError::validation(
                "waveform.symbols_per_slot",
                "only normal cyclic prefix (14 symbols) is supported",
            ));
        }
        let expected = (self.fs_sps * self.slot_duration_s).round() as usize;
        if self.samples_per_slot() != expected {
            return Err(SimError::validation(
                "waveform",
                format!(
                    "cyclic prefix budget gives {} samples per slot, expected {expected}",
                    self.samples_per_slot()
                ),
            ));
        }
        Ok(())
    }

    /// Cyclic prefix length of an OFDM symbol within a slot.
    pub fn cp_len(&self, symbol: usize) -> usize {
        let base = self.fft_size * 144 / 2048;
        if symbol == 0 {
            base + self.fft_size * 32 / 2048
        } else {
            base
        }
    }

    pub fn samples_per_slot(&self) -> usize {
        (0..self.symbols_per_slot)
            .map(|l| self.cp_len(l) + self.fft_size)
            .sum()
    }

    /// FFT bin carrying active subcarrier `k`.
    pub fn bin_of(&self, k: usize) -> usize {
        (k + self.fft_size - self.n_sc / 2) % self.fft_size
    }
}

/// Contiguous block of PRBs `[start, start + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrbRange {
    pub start: usize,
    pub len: usize,
}

impl PrbRange {
    pub fn new(start: usize, len: usize) -> Self {
        PrbRange { start, len }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, prb: usize) -> bool {
        prb >= self.start && prb < self.end()
    }

    pub fn intersects(&self, other: &PrbRange) -> bool {
        self.start < other.end() && other.start < self.end()
    }

    pub fn subcarriers(&self) -> std::ops::Range<usize> {
        self.start * SUBCARRIERS_PER_PRB..self.end() * SUBCARRIERS_PER_PRB
    }
}

/// One slot of frequency-domain resource elements.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    n_sc: usize,
    n_sym: usize,
    /// Symbol-major: element `(k, l)` lives at `l * n_sc + k`.
    data: Vec<C64>,
    pub frame_idx: usize,
    pub slot_idx: usize,
}

impl ResourceGrid {
    pub fn zeros(n_sc: usize, n_sym: usize, frame_idx: usize, slot_idx: usize) -> Self {
        ResourceGrid {
            n_sc,
            n_sym,
            data: vec![C64::new(0.0, 0.0); n_sc * n_sym],
            frame_idx,
            slot_idx,
        }
    }

    pub fn n_sc(&self) -> usize {
        self.n_sc
    }

    pub fn n_sym(&self) -> usize {
        self.n_sym
    }

    pub fn get(&self, k: usize, l: usize) -> C64 {
        self.data[l * self.n_sc + k]
    }

    pub fn set(&mut self, k: usize, l: usize, v: C64) {
        self.data[l * self.n_sc + k] = v;
    }

    pub fn symbol(&self, l: usize) -> &[C64] {
        &self.data[l * self.n_sc..(l + 1) * self.n_sc]
    }

    pub fn symbol_mut(&mut self, l: usize) -> &mut [C64] {
        &mut self.data[l * self.n_sc..(l + 1) * self.n_sc]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|c| c.norm_sqr() != 0.0).count()
    }

    pub fn matches(&self, config: &WaveformConfig) -> bool {
        self.n_sc == config.n_sc && self.n_sym == config.symbols_per_slot
    }

    /// Reads the elements at `positions`.
    pub fn extract(&self, positions: &[(usize, usize)]) -> Result<Vec<C64>> {
        positions
            .iter()
            .map(|&(k, l)| {
                self.check_bounds(k, l)?;
                Ok(self.get(k, l))
            })
            .collect()
    }

    fn check_bounds(&self, k: usize, l: usize) -> Result<()> {
        if k >= self.n_sc || l >= self.n_sym {
            return Err(SimError::Index(format!(
                "resource element ({k}, {l}) outside {}x{} grid",
                self.n_sc, self.n_sym
            )));
        }
        Ok(())
    }
}

pub fn build_grid(config: &WaveformConfig, frame_idx: usize, slot_idx: usize) -> Result<ResourceGrid> {
    if slot_idx >= config.slots_per_frame {
        return Err(SimError::Index(format!(
            "slot {slot_idx} outside 0..{}",
            config.slots_per_frame
        )));
    }
    Ok(ResourceGrid::zeros(
        config.n_sc,
        config.symbols_per_slot,
        frame_idx,
        slot_idx,
    ))
}

/// Writes `values` at `positions`. The grid is left untouched on error.
pub fn map_symbols(
    mut grid: ResourceGrid,
    positions: &[(usize, usize)],
    values: &[C64],
) -> Result<ResourceGrid> {
    if positions.len() != values.len() {
        return Err(SimError::Length {
            expected: positions.len(),
            got: values.len(),
        });
    }
    let mut seen = HashSet::with_capacity(positions.len());
    for &(k, l) in positions {
        grid.check_bounds(k, l)?;
        if !seen.insert((k, l)) {
            return Err(SimError::Collision {
                subcarrier: k,
                symbol: l,
            });
        }
    }
    for (&(k, l), &v) in positions.iter().zip(values) {
        grid.set(k, l, v);
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    pub samples: Vec<C64>,
}

impl TimeSignal {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// CP-OFDM modulator/demodulator with cached FFT plans.
pub struct OfdmModem {
    config: WaveformConfig,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl OfdmModem {
    pub fn new(config: &WaveformConfig) -> Result<Self> {
        config.validate()?;
        let mut planner = FftPlanner::new();
        Ok(OfdmModem {
            config: config.clone(),
            forward: planner.plan_fft_forward(config.fft_size),
            inverse: planner.plan_fft_inverse(config.fft_size),
            scale: 1.0 / (config.fft_size as f64).sqrt(),
        })
    }

    pub fn modulate(&self, grid: &ResourceGrid) -> Result<TimeSignal> {
        let cfg = &self.config;
        if !grid.matches(cfg) {
            return Err(SimError::Config(format!(
                "grid is {}x{}, waveform expects {}x{}",
                grid.n_sc(),
                grid.n_sym(),
                cfg.n_sc,
                cfg.symbols_per_slot
            )));
        }
        let n = cfg.fft_size;
        let mut out = Vec::with_capacity(cfg.samples_per_slot());
        let mut buf = vec![C64::new(0.0, 0.0); n];
        for l in 0..cfg.symbols_per_slot {
            buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
            for (k, &v) in grid.symbol(l).iter().enumerate() {
                buf[cfg.bin_of(k)] = v;
            }
            self.inverse.process(&mut buf);
            buf.iter_mut().for_each(|b| *b *= self.scale);
            let cp = cfg.cp_len(l);
            out.extend_from_slice(&buf[n - cp..]);
            out.extend_from_slice(&buf);
        }
        Ok(TimeSignal { samples: out })
    }

    pub fn demodulate(
        &self,
        signal: &TimeSignal,
        frame_idx: usize,
        slot_idx: usize,
    ) -> Result<ResourceGrid> {
        let cfg = &self.config;
        let expected = cfg.samples_per_slot();
        if signal.len() != expected {
            return Err(SimError::Length {
                expected,
                got: signal.len(),
            });
        }
        let n = cfg.fft_size;
        let mut grid = ResourceGrid::zeros(cfg.n_sc, cfg.symbols_per_slot, frame_idx, slot_idx);
        let mut buf = vec![C64::new(0.0, 0.0); n];
        let mut pos = 0;
        for l in 0..cfg.symbols_per_slot {
            pos += cfg.cp_len(l);
            buf.copy_from_slice(&signal.samples[pos..pos + n]);
            pos += n;
            self.forward.process(&mut buf);
            for (k, v) in grid.symbol_mut(l).iter_mut().enumerate() {
                *v = buf[cfg.bin_of(k)] * self.scale;
            }
        }
        Ok(grid)
    }
}

pub fn ofdm_modulate(grid: &ResourceGrid, config: &WaveformConfig) -> Result<TimeSignal> {
    OfdmModem::new(config)?.modulate(grid)
}

pub fn ofdm_demodulate(signal: &TimeSignal, config: &WaveformConfig) -> Result<ResourceGrid> {
    OfdmModem::new(config)?.demodulate(signal, 0, 0)
}
