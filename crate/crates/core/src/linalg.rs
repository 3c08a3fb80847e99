//! Fixed-size 2x2 complex algebra.
//!
//! The system is two receive antennas by two single-antenna users, so every
//! per-subcarrier operator is a 2x2 complex matrix.

use num_complex::Complex64;
use std::ops::{Add, Mul};

pub type C64 = Complex64;

/// Receive or transmit vector on one subcarrier.
pub type CVec2 = [C64; 2];

/// Row-major 2x2 complex matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CMat2(pub [[C64; 2]; 2]);

impl CMat2 {
    pub const ZERO: CMat2 = CMat2([[C64::new(0.0, 0.0); 2]; 2]);

    pub fn identity() -> Self {
        Self::diag(C64::new(1.0, 0.0), C64::new(1.0, 0.0))
    }

    pub fn diag(a: C64, b: C64) -> Self {
        let z = C64::new(0.0, 0.0);
        CMat2([[a, z], [z, b]])
    }

    pub fn from_columns(c0: CVec2, c1: CVec2) -> Self {
        CMat2([[c0[0], c1[0]], [c0[1], c1[1]]])
    }

    pub fn column(&self, k: usize) -> CVec2 {
        [self.0[0][k], self.0[1][k]]
    }

    pub fn set_column(&mut self, k: usize, col: CVec2) {
        self.0[0][k] = col[0];
        self.0[1][k] = col[1];
    }

    pub fn row(&self, k: usize) -> CVec2 {
        self.0[k]
    }

    /// Conjugate transpose.
    pub fn herm(&self) -> Self {
        let m = &self.0;
        CMat2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn det(&self) -> C64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    /// Adjugate, so that `self * adj = det * I`.
    pub fn adjugate(&self) -> Self {
        let m = &self.0;
        CMat2([[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]])
    }

    pub fn scale(&self, s: C64) -> Self {
        let m = &self.0;
        CMat2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn mul_vec(&self, v: &CVec2) -> CVec2 {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    /// Largest real or imaginary component magnitude.
    pub fn max_component(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .map(|c| c.re.abs().max(c.im.abs()))
            .fold(0.0, f64::max)
    }

    pub fn entries(&self) -> impl Iterator<Item = &C64> {
        self.0.iter().flatten()
    }
}

impl Mul for CMat2 {
    type Output = CMat2;

    fn mul(self, rhs: CMat2) -> CMat2 {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = CMat2::ZERO;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        out
    }
}

impl Add for CMat2 {
    type Output = CMat2;

    fn add(self, rhs: CMat2) -> CMat2 {
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] += rhs.0[i][j];
            }
        }
        out
    }
}

/// Inner product `a^H b`.
pub fn dot_h(a: &CVec2, b: &CVec2) -> C64 {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

pub fn norm_sqr(a: &CVec2) -> f64 {
    a[0].norm_sqr() + a[1].norm_sqr()
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut t = theta.rem_euclid(TAU);
    if t > PI {
        t -= TAU;
    }
    t
}

/// Absolute angular distance on the circle, in [0, pi].
pub fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn adjugate_gives_det_identity() {
        let m = CMat2([[c(1.0, 2.0), c(-0.5, 0.1)], [c(0.3, -1.0), c(2.0, 0.0)]]);
        let p = m * m.adjugate();
        let d = m.det();
        assert!((p.0[0][0] - d).norm() < 1e-12);
        assert!((p.0[1][1] - d).norm() < 1e-12);
        assert!(p.0[0][1].norm() < 1e-12);
        assert!(p.0[1][0].norm() < 1e-12);
    }

    #[test]
    fn herm_of_product_reverses() {
        let a = CMat2([[c(1.0, 2.0), c(0.0, 1.0)], [c(3.0, 0.0), c(-1.0, -1.0)]]);
        let b = CMat2([[c(0.5, 0.0), c(2.0, -1.0)], [c(0.0, 0.0), c(1.0, 4.0)]]);
        let lhs = (a * b).herm();
        let rhs = b.herm() * a.herm();
        for (x, y) in lhs.entries().zip(rhs.entries()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!(wrap_angle(0.0).abs() < 1e-15);
        assert!((circular_distance(PI - 0.01, -PI + 0.01) - 0.02).abs() < 1e-12);
    }
}
