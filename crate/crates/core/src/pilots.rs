//! Sounding (SRS) and demodulation (DMRS) reference signals.

use crate::error::{Result, SimError};
use crate::grid::{PrbRange, SUBCARRIERS_PER_PRB};
use crate::linalg::C64;
use crate::sequence::{c_init, GoldSequence};

/// OFDM symbol carrying SRS: the last symbol of the slot.
pub const SRS_SYMBOL: usize = 13;
/// OFDM symbol carrying DMRS within a PUSCH allocation.
pub const DMRS_SYMBOL: usize = 2;
pub const DMRS_STRIDE: usize = 2;

const SRS_TAG: u32 = 0x5253;
const DMRS_TAG: u32 = 0x444d;

#[derive(Debug, Clone, PartialEq)]
pub struct SrsPattern {
    pub user_id: usize,
    pub n_srs_prb: usize,
    pub symbol_idx: usize,
    pub sequence: Vec<C64>,
}

impl SrsPattern {
    /// Resource elements as `(subcarrier, symbol)`, starting at subcarrier 0.
    pub fn positions(&self) -> Vec<(usize, usize)> {
        (0..self.sequence.len()).map(|k| (k, self.symbol_idx)).collect()
    }

    pub fn prbs(&self) -> PrbRange {
        PrbRange::new(0, self.n_srs_prb)
    }
}

/// Pseudorandom unit-modulus QPSK sounding sequence of `length` subcarriers.
pub fn gen_srs(user_id: usize, length: usize, seed: u64) -> Result<SrsPattern> {
    if length == 0 || !length.is_multiple_of(SUBCARRIERS_PER_PRB) {
        return Err(SimError::Config(format!(
            "SRS length {length} is not a positive multiple of {SUBCARRIERS_PER_PRB}"
        )));
    }
    let sequence = GoldSequence::new(c_init(user_id, SRS_TAG, seed)).qpsk(length);
    Ok(SrsPattern {
        user_id,
        n_srs_prb: length / SUBCARRIERS_PER_PRB,
        symbol_idx: SRS_SYMBOL,
        sequence,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmrsPattern {
    pub user_id: usize,
    pub allocation: PrbRange,
    pub symbol_idx: usize,
    pub subcarrier_stride: usize,
    pub sequence: Vec<C64>,
}

impl DmrsPattern {
    pub fn subcarriers(&self) -> impl Iterator<Item = usize> + '_ {
        self.allocation.subcarriers().step_by(self.subcarrier_stride)
    }

    pub fn positions(&self) -> Vec<(usize, usize)> {
        self.subcarriers().map(|k| (k, self.symbol_idx)).collect()
    }
}

/// DMRS on every other subcarrier of the pilot symbol inside `allocation`.
///
/// The sequence is indexed by absolute subcarrier, so any allocation sees the
/// same pilot value on a given subcarrier.
pub fn gen_dmrs(user_id: usize, allocation: PrbRange, seed: u64) -> Result<DmrsPattern> {
    if allocation.is_empty() {
        return Err(SimError::Config("empty DMRS allocation".into()));
    }
    let first = allocation.start * SUBCARRIERS_PER_PRB / DMRS_STRIDE;
    let count = allocation.len * SUBCARRIERS_PER_PRB / DMRS_STRIDE;
    let full = GoldSequence::new(c_init(user_id, DMRS_TAG, seed)).qpsk(first + count);
    Ok(DmrsPattern {
        user_id,
        allocation,
        symbol_idx: DMRS_SYMBOL,
        subcarrier_stride: DMRS_STRIDE,
        sequence: full[first..].to_vec(),
    })
}
