//! Fixed-size 2-vectors and 2×2 matrices for the bivariate normal and
//! inverse-Wishart pieces of the base measure.

use core::ops::{Add, Mul, Sub};

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2(pub [f64; 2]);

/// Row-major 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Vec2 {
    pub const ZERO: Vec2 = Vec2([0.0, 0.0]);

    pub fn new(x: f64, y: f64) -> Self {
        Vec2([x, y])
    }

    pub fn dot(&self, other: &Vec2) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1]
    }

    pub fn scale(&self, s: f64) -> Vec2 {
        Vec2([self.0[0] * s, self.0[1] * s])
    }

    pub fn outer(&self, other: &Vec2) -> Mat2 {
        let [a, b] = self.0;
        let [c, d] = other.0;
        Mat2([[a * c, a * d], [b * c, b * d]])
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2([self.0[0] + o.0[0], self.0[1] + o.0[1]])
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2([self.0[0] - o.0[0], self.0[1] - o.0[1]])
    }
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn diag(a: f64, b: f64) -> Self {
        Mat2([[a, 0.0], [0.0, b]])
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2([[self.0[0][0], self.0[1][0]], [self.0[0][1], self.0[1][1]]])
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let m = &self.0;
        Some(Mat2([
            [m[1][1] / d, -m[0][1] / d],
            [-m[1][0] / d, m[0][0] / d],
        ]))
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        let m = &self.0;
        Mat2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn mul_vec(&self, v: &Vec2) -> Vec2 {
        let m = &self.0;
        Vec2([
            m[0][0] * v.0[0] + m[0][1] * v.0[1],
            m[1][0] * v.0[0] + m[1][1] * v.0[1],
        ])
    }

    /// `v' M v`
    pub fn quad_form(&self, v: &Vec2) -> f64 {
        v.dot(&self.mul_vec(v))
    }

    /// Average of the matrix and its transpose.
    pub fn symmetrize(&self) -> Mat2 {
        let off = 0.5 * (self.0[0][1] + self.0[1][0]);
        Mat2([[self.0[0][0], off], [off, self.0[1][1]]])
    }

    pub fn is_spd(&self) -> bool {
        let m = &self.0;
        m[0][0] > 0.0
            && m[1][1] > 0.0
            && (m[0][1] - m[1][0]).abs() <= 1e-12 * (m[0][0].abs() + m[1][1].abs())
            && self.det() > 0.0
    }

    /// Lower Cholesky factor of an SPD matrix.
    pub fn cholesky(&self) -> Option<Mat2> {
        if !self.is_spd() {
            return None;
        }
        let m = &self.0;
        let l00 = m[0][0].sqrt();
        let l10 = m[1][0] / l00;
        let r = m[1][1] - l10 * l10;
        if r <= 0.0 {
            return None;
        }
        Some(Mat2([[l00, 0.0], [l10, r.sqrt()]]))
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs() {
        let m = Mat2([[2.0, 0.6], [0.6, 1.5]]);
        let l = m.cholesky().unwrap();
        let back = l * l.transpose();
        for i in 0..2 {
            for j in 0..2 {
                assert!((back.0[i][j] - m.0[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_is_not_spd() {
        let m = Mat2([[0.019, 0.019], [0.019, 0.019]]);
        assert!(m.cholesky().is_none());
        assert!(m.inverse().is_none() || m.det().abs() < 1e-18);
    }

    #[test]
    fn inverse_roundtrip() {
        let m = Mat2([[3.0, 1.0], [1.0, 2.0]]);
        let p = m * m.inverse().unwrap();
        assert!((p.0[0][0] - 1.0).abs() < 1e-15 && p.0[0][1].abs() < 1e-15);
    }
}
