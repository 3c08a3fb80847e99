//! Transport-block codec: CRC-16, rate-1/2 K=7 convolutional code
//! (generators 133/171 octal, zero tail) and a soft-input Viterbi decoder.

use crate::error::{Result, SimError};
use crc::{Crc, CRC_16_IBM_3740};

pub const CRC_BITS: usize = 16;
pub const CONSTRAINT_LEN: usize = 7;
pub const TAIL_BITS: usize = CONSTRAINT_LEN - 1;
const G0: u32 = 0o133;
const G1: u32 = 0o171;
const N_STATES: usize = 1 << TAIL_BITS;

const CRC16: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub fn crc16(payload: &[u8]) -> u16 {
    CRC16.checksum(payload)
}

/// Coded bits for a payload of `payload_bytes`.
pub fn coded_bits(payload_bytes: usize) -> usize {
    2 * (8 * payload_bytes + CRC_BITS + TAIL_BITS)
}

/// Largest payload whose QPSK codeword fits in `symbols` resource elements.
pub fn max_payload_bytes(symbols: usize) -> usize {
    symbols.saturating_sub(CRC_BITS + TAIL_BITS) / 8
}

pub(crate) fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1))
        .collect()
}

pub(crate) fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | b))
        .collect()
}

#[inline]
fn branch_bits(state: usize, input: u8) -> (u8, u8) {
    let reg = ((input as u32) << TAIL_BITS) | state as u32;
    (((reg & G0).count_ones() & 1) as u8, ((reg & G1).count_ones() & 1) as u8)
}

#[inline]
fn next_state(state: usize, input: u8) -> usize {
    ((input as usize) << (TAIL_BITS - 1)) | (state >> 1)
}

pub fn conv_encode(bits: &[u8]) -> Vec<u8> {
    let mut state = 0usize;
    let mut out = Vec::with_capacity(2 * (bits.len() + TAIL_BITS));
    for &b in bits.iter().chain(std::iter::repeat_n(&0u8, TAIL_BITS)) {
        let (c0, c1) = branch_bits(state, b);
        out.push(c0);
        out.push(c1);
        state = next_state(state, b);
    }
    out
}

/// Max-log Viterbi over LLRs (positive favours bit 0). Returns the
/// information bits with the tail removed.
pub fn viterbi_decode(llrs: &[f64]) -> Result<Vec<u8>> {
    if !llrs.len().is_multiple_of(2) || llrs.len() < 2 * TAIL_BITS {
        return Err(SimError::Length {
            expected: 2 * TAIL_BITS,
            got: llrs.len(),
        });
    }
    let steps = llrs.len() / 2;
    let mut metric = vec![f64::NEG_INFINITY; N_STATES];
    metric[0] = 0.0;
    let mut next = vec![0.0; N_STATES];
    // bit s of decisions[t] = chosen predecessor's low bit for state s
    let mut decisions = vec![0u64; steps];
    let sign = |bit: u8, llr: f64| if bit == 0 { llr } else { -llr };

    for t in 0..steps {
        let (l0, l1) = (llrs[2 * t], llrs[2 * t + 1]);
        let mut dec = 0u64;
        for (ns, slot) in next.iter_mut().enumerate() {
            let input = (ns >> (TAIL_BITS - 1)) as u8;
            let base = (ns << 1) & (N_STATES - 1);
            let mut best = f64::NEG_INFINITY;
            let mut choice = 0u64;
            for low in 0..2 {
                let ps = base | low;
                let (c0, c1) = branch_bits(ps, input);
                let m = metric[ps] + sign(c0, l0) + sign(c1, l1);
                if m > best {
                    best = m;
                    choice = low as u64;
                }
            }
            *slot = best;
            dec |= choice << ns;
        }
        decisions[t] = dec;
        std::mem::swap(&mut metric, &mut next);
    }

    let mut state = 0usize;
    let mut bits = vec![0u8; steps];
    for t in (0..steps).rev() {
        bits[t] = (state >> (TAIL_BITS - 1)) as u8;
        let low = ((decisions[t] >> state) & 1) as usize;
        state = ((state << 1) & (N_STATES - 1)) | low;
    }
    bits.truncate(steps - TAIL_BITS);
    Ok(bits)
}

/// Payload bits, CRC, then convolutional encoding.
pub fn encode_codeword(payload: &[u8]) -> Vec<u8> {
    let mut bits = bytes_to_bits(payload);
    bits.extend(bytes_to_bits(&crc16(payload).to_be_bytes()));
    conv_encode(&bits)
}

/// Inverse of [`encode_codeword`]: `(payload, crc_ok)`.
pub fn decode_codeword(llrs: &[f64]) -> Result<(Vec<u8>, bool)> {
    let overhead = 2 * (CRC_BITS + TAIL_BITS);
    if llrs.len() < overhead || !(llrs.len() - overhead).is_multiple_of(16) {
        return Err(SimError::Length {
            expected: overhead + 16 * ((llrs.len().saturating_sub(overhead)) / 16),
            got: llrs.len(),
        });
    }
    let bits = viterbi_decode(llrs)?;
    let (data, crc_bits) = bits.split_at(bits.len() - CRC_BITS);
    let payload = bits_to_bytes(data);
    let rx_crc = u16::from_be_bytes([
        bits_to_bytes(&crc_bits[..8])[0],
        bits_to_bytes(&crc_bits[8..])[0],
    ]);
    let ok = crc16(&payload) == rx_crc;
    Ok((payload, ok))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn to_llr(bits: &[u8]) -> Vec<f64> {
        bits.iter().map(|&b| if b == 0 { 4.0 } else { -4.0 }).collect()
    }

    #[test]
    fn encoder_impulse_response_matches_generators() {
        let out = conv_encode(&[1]);
        let g0: Vec<u8> = out.iter().step_by(2).copied().collect();
        let g1: Vec<u8> = out.iter().skip(1).step_by(2).copied().collect();
        assert_eq!(g0, vec![1, 0, 1, 1, 0, 1, 1]);
        assert_eq!(g1, vec![1, 1, 1, 1, 0, 0, 1]);
    }

    #[test]
    fn crc_check_value() {
        // CRC-16/IBM-3740 (CCITT-FALSE) check value
        assert_eq!(crc16(b"123456789"), 0x29b1);
    }

    #[test]
    fn clean_round_trip() {
        let payload: Vec<u8> = (0..100u8).map(|i| i.wrapping_mul(37)).collect();
        let cw = encode_codeword(&payload);
        assert_eq!(cw.len(), coded_bits(100));
        assert_eq!(cw.len(), 2 * 822);
        let (out, ok) = decode_codeword(&to_llr(&cw)).unwrap();
        assert!(ok);
        assert_eq!(out, payload);
    }

    #[test]
    fn corrects_a_few_errors() {
        let payload = vec![0xa5u8; 40];
        let cw = encode_codeword(&payload);
        let mut llr = to_llr(&cw);
        for i in [3, 50, 200, 401, 600] {
            llr[i] = -llr[i];
        }
        let (out, ok) = decode_codeword(&llr).unwrap();
        assert!(ok);
        assert_eq!(out, payload);
    }

    #[test]
    fn zero_llrs_fail_crc() {
        let (_, ok) = decode_codeword(&vec![0.0; coded_bits(100)]).unwrap();
        assert!(!ok);
    }

    #[test]
    fn bad_lengths() {
        assert!(decode_codeword(&[0.0; 10]).is_err());
        assert!(decode_codeword(&vec![1.0; coded_bits(3) + 2]).is_err());
    }

    #[test]
    fn capacity_arithmetic() {
        assert_eq!(max_payload_bytes(822), 100);
        assert_eq!(max_payload_bytes(1440), 177);
        assert_eq!(max_payload_bytes(2880), 357);
        assert_eq!(max_payload_bytes(10), 0);
    }
}
