//! Per-user transmit chain and the gNB per-slot receive procedure.

pub mod fec;
mod gnb;
mod ue;

pub use gnb::{
    decode_pucch, evm_percent, FixedFormat, GnbConfig, GnbReceiver, RxReport, SrsUpdate, StreamSymbols,
    UserRxReport,
};
pub use ue::{data_positions, ue_tx_slot, UeTxSlot};

use crate::error::{Result, SimError};
use crate::linalg::C64;
use crate::sequence::{c_init, GoldSequence};
use std::f64::consts::FRAC_1_SQRT_2;

/// MCS index of the fixed QPSK rate-1/2 format.
pub const MCS: usize = 4;

const SCRAMBLE_TAG: u32 = 0x5343;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportBlock {
    pub payload: Vec<u8>,
    pub user_id: usize,
    pub crc_bits: usize,
    pub coded_bits: usize,
    pub mcs: usize,
}

impl TransportBlock {
    pub fn new(payload: Vec<u8>, user_id: usize) -> Self {
        let coded_bits = fec::coded_bits(payload.len());
        TransportBlock {
            payload,
            user_id,
            crc_bits: fec::CRC_BITS,
            coded_bits,
            mcs: MCS,
        }
    }

    pub fn symbols(&self) -> usize {
        self.coded_bits / 2
    }
}

/// Binary scrambling sequence of a user.
pub fn scrambling_bits(user_id: usize, seed: u64, n: usize) -> Vec<u8> {
    GoldSequence::new(c_init(user_id, SCRAMBLE_TAG, seed)).bits(n)
}

/// Gray-mapped unit-power QPSK: even bit on I, odd bit on Q, 0 -> +.
pub fn qpsk_map(bits: &[u8]) -> Vec<C64> {
    bits.chunks(2)
        .map(|b| {
            C64::new(
                FRAC_1_SQRT_2 * (1.0 - 2.0 * b[0] as f64),
                FRAC_1_SQRT_2 * (1.0 - 2.0 * b[1] as f64),
            )
        })
        .collect()
}

/// Max-log LLRs `2 * component / noise_var` (positive favours bit 0).
pub fn qpsk_llrs(symbols: &[C64], noise_var: f64) -> Vec<f64> {
    let s = 2.0 / noise_var.max(1e-12);
    symbols.iter().flat_map(|z| [s * z.re, s * z.im]).collect()
}

/// CRC, convolutional code, scrambling and QPSK mapping.
///
/// `max_symbols` is the number of data resource elements of the allocation.
pub fn encode_transport_block(
    payload: &[u8],
    user_id: usize,
    seed: u64,
    max_symbols: usize,
) -> Result<Vec<C64>> {
    if payload.is_empty() {
        return Err(SimError::Config("empty transport block".into()));
    }
    let capacity = fec::max_payload_bytes(max_symbols);
    if payload.len() > capacity {
        return Err(SimError::Capacity {
            payload_bytes: payload.len(),
            capacity_bytes: capacity,
        });
    }
    let mut bits = fec::encode_codeword(payload);
    let scr = scrambling_bits(user_id, seed, bits.len());
    for (b, s) in bits.iter_mut().zip(scr) {
        *b ^= s;
    }
    Ok(qpsk_map(&bits))
}

/// Descrambling (LLR sign flips), Viterbi decoding and CRC check.
pub fn decode_transport_block(llrs: &[f64], user_id: usize, seed: u64) -> Result<(Vec<u8>, bool)> {
    let scr = scrambling_bits(user_id, seed, llrs.len());
    let descrambled: Vec<f64> = llrs
        .iter()
        .zip(scr)
        .map(|(&l, s)| if s == 1 { -l } else { l })
        .collect();
    fec::decode_codeword(&descrambled)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_count_for_100_bytes() {
        let payload = vec![7u8; 100];
        let syms = encode_transport_block(&payload, 0, 1, 2880).unwrap();
        assert_eq!(syms.len(), 822);
        let tb = TransportBlock::new(payload, 0);
        assert_eq!(tb.coded_bits, (800 + 16 + 6) * 2);
        assert_eq!(tb.symbols(), 822);
        assert_eq!(tb.mcs, 4);
        let p: f64 = syms.iter().map(|z| z.norm_sqr()).sum::<f64>() / syms.len() as f64;
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_payload_unscrambled_is_zero_path() {
        let payload = vec![0u8; 100];
        let bits = fec::encode_codeword(&payload);
        // the payload span of a zero-state encoder fed zeros stays on the zero path
        assert!(bits[..1600].iter().all(|&b| b == 0));
        let syms = qpsk_map(&bits);
        let zero = C64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2);
        assert!(syms[..800].iter().all(|&z| z == zero));
    }

    #[test]
    fn loopback() {
        let payload: Vec<u8> = (0..100).map(|i| (i * 13 + 5) as u8).collect();
        for user in 0..2 {
            let syms = encode_transport_block(&payload, user, 42, 1440).unwrap();
            let (out, ok) = decode_transport_block(&qpsk_llrs(&syms, 0.1), user, 42).unwrap();
            assert!(ok);
            assert_eq!(out, payload);
            // wrong descrambler breaks the CRC
            let (_, ok) = decode_transport_block(&qpsk_llrs(&syms, 0.1), 1 - user, 42).unwrap();
            assert!(!ok);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(encode_transport_block(&[], 0, 1, 100), Err(SimError::Config(_))));
        assert!(matches!(
            encode_transport_block(&[0u8; 200], 0, 1, 1440),
            Err(SimError::Capacity { payload_bytes: 200, capacity_bytes: 177 })
        ));
        assert!(matches!(decode_transport_block(&[0.0; 7], 0, 1), Err(SimError::Length { .. })));
    }

    #[test]
    fn zero_llrs_fail() {
        let (_, ok) = decode_transport_block(&vec![0.0; fec::coded_bits(100)], 0, 1).unwrap();
        assert!(!ok);
    }
}
