//! Length-31 Gold sequence generator used for pilots and scrambling.

use crate::linalg::C64;
use std::f64::consts::FRAC_1_SQRT_2;

const NC: usize = 1600;

/// Binary pseudorandom sequence built from two length-31 m-sequences.
#[derive(Debug, Clone)]
pub struct GoldSequence {
    x1: u32,
    x2: u32,
}

impl GoldSequence {
    pub fn new(c_init: u32) -> Self {
        let mut g = GoldSequence {
            x1: 1,
            x2: c_init & 0x7fff_ffff,
        };
        for _ in 0..NC {
            g.step();
        }
        g
    }

    fn step(&mut self) -> u8 {
        let out = ((self.x1 ^ self.x2) & 1) as u8;
        let f1 = ((self.x1 >> 3) ^ self.x1) & 1;
        let f2 = ((self.x2 >> 3) ^ (self.x2 >> 2) ^ (self.x2 >> 1) ^ self.x2) & 1;
        self.x1 = (self.x1 >> 1) | (f1 << 30);
        self.x2 = (self.x2 >> 1) | (f2 << 30);
        out
    }

    pub fn bits(&mut self, n: usize) -> Vec<u8> {
        (0..n).map(|_| self.step()).collect()
    }

    /// Unit-modulus QPSK symbols from consecutive bit pairs.
    pub fn qpsk(&mut self, n: usize) -> Vec<C64> {
        (0..n)
            .map(|_| {
                let b0 = self.step();
                let b1 = self.step();
                C64::new(
                    FRAC_1_SQRT_2 * (1.0 - 2.0 * b0 as f64),
                    FRAC_1_SQRT_2 * (1.0 - 2.0 * b1 as f64),
                )
            })
            .collect()
    }
}

/// Mixes a user index, a purpose tag and a seed into a 31-bit initializer.
pub(crate) fn c_init(user_id: usize, tag: u32, seed: u64) -> u32 {
    let mut h = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((user_id as u64) << 32)
        .wrapping_add(tag as u64);
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    let v = (h as u32) & 0x7fff_ffff;
    // an all-zero x2 register would make the output equal x1 alone
    if v == 0 {
        1
    } else {
        v
    }
}
