//! Run settings and Metropolis-Hastings plumbing shared by all samplers.

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::distributions::sample_normal;
use crate::error::{Error, Result};
use crate::rng::RngHandle;

/// How the `(θ, φ)` random-walk proposal for each atom is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomProposal {
    /// Covariance `c·(n_l·I(θ) + Σ⁻¹)⁻¹` built from the gamma Fisher
    /// information at the current point, with the Hastings correction for
    /// the position-dependent scale.
    #[default]
    Curvature,
    /// Per-atom covariance `c·S²` estimated from the chain during adaptation.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    /// Multiplier `c` on the proposal covariance.
    pub step_scale: f64,
    /// Proposal covariances stop adapting at this iteration.
    pub adapt_until: usize,
    pub seed: u64,
    pub atom_proposal: AtomProposal,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self {
            iterations: 12_000,
            burn_in: 2_000,
            thinning: 5,
            step_scale: 1.5,
            adapt_until: 1_000,
            seed: 1,
            atom_proposal: AtomProposal::Curvature,
        }
    }
}

impl McmcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config("burn_in must be smaller than iterations".into()));
        }
        if self.adapt_until > self.burn_in {
            return Err(Error::Config("adapt_until must not exceed burn_in".into()));
        }
        if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
            return Err(Error::Config("step_scale must be positive".into()));
        }
        Ok(())
    }

    /// Whether iteration `i` (zero-based) is recorded.
    pub fn is_retained(&self, i: usize) -> bool {
        i >= self.burn_in && (i - self.burn_in + 1).is_multiple_of(self.thinning)
    }

    pub fn n_retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thinning
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceCounter {
    pub accepted: u64,
    pub proposed: u64,
}

impl AcceptanceCounter {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        if accepted {
            self.accepted += 1;
        }
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Metropolis-Hastings accept step on a log ratio.
pub fn accept(rng: &mut RngHandle, ln_ratio: f64) -> bool {
    if ln_ratio >= 0.0 {
        return true;
    }
    if ln_ratio.is_nan() {
        return false;
    }
    crate::distributions::open01(rng).ln() < ln_ratio
}

/// Lower Cholesky factor of a small dense SPD matrix.
pub fn cholesky<const N: usize>(m: &[[f64; N]; N]) -> Option<[[f64; N]; N]> {
    let mut l = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Random-walk proposal whose covariance tracks the chain's running
/// covariance until it is frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveProposal<const N: usize> {
    scale: f64,
    mean: [f64; N],
    comoment: [[f64; N]; N],
    count: u64,
    chol: [[f64; N]; N],
    frozen: bool,
}

const REFRESH_EVERY: u64 = 50;

impl<const N: usize> AdaptiveProposal<N> {
    /// `initial` is the covariance used before enough samples are seen; it is
    /// not multiplied by `scale`.
    pub fn new(initial: [[f64; N]; N], scale: f64) -> Self {
        let chol = cholesky(&initial).expect("initial proposal covariance must be SPD");
        Self { scale, mean: [0.0; N], comoment: [[0.0; N]; N], count: 0, chol, frozen: false }
    }

    pub fn observe(&mut self, x: &[f64; N]) {
        if self.frozen {
            return;
        }
        self.count += 1;
        let n = self.count as f64;
        let mut delta = [0.0; N];
        for i in 0..N {
            delta[i] = x[i] - self.mean[i];
            self.mean[i] += delta[i] / n;
        }
        for i in 0..N {
            for j in 0..N {
                self.comoment[i][j] += delta[i] * (x[j] - self.mean[j]);
            }
        }
        if self.count >= 20 * N as u64 && self.count.is_multiple_of(REFRESH_EVERY) {
            self.refresh();
        }
    }

    fn refresh(&mut self) {
        let n = self.count as f64;
        let mut cov = [[0.0; N]; N];
        for i in 0..N {
            for j in 0..N {
                cov[i][j] = self.scale * self.comoment[i][j] / (n - 1.0);
            }
            cov[i][i] += 1e-10;
        }
        if let Some(c) = cholesky(&cov) {
            self.chol = c;
        }
    }

    /// Drop the running moments (e.g. those from the burn-in transient); the
    /// current proposal stays until enough new samples arrive.
    pub fn restart(&mut self) {
        self.mean = [0.0; N];
        self.comoment = [[0.0; N]; N];
        self.count = 0;
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn propose(&self, rng: &mut RngHandle, x: &[f64; N]) -> [f64; N] {
        let mut z = [0.0; N];
        for zi in z.iter_mut() {
            *zi = sample_normal(rng, 0.0, 1.0);
        }
        let mut out = *x;
        for i in 0..N {
            for k in 0..=i {
                out[i] += self.chol[i][k] * z[k];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retention_count_matches() {
        let s = McmcSettings { iterations: 105, burn_in: 5, thinning: 7, ..Default::default() };
        let kept = (0..s.iterations).filter(|&i| s.is_retained(i)).count();
        assert_eq!(kept, s.n_retained());
        assert_eq!(kept, 14);
    }

    #[test]
    fn settings_validation() {
        let ok = McmcSettings::default();
        assert!(ok.validate().is_ok());
        assert!(McmcSettings { thinning: 0, ..ok }.validate().is_err());
        assert!(McmcSettings { burn_in: ok.iterations, ..ok }.validate().is_err());
        assert!(McmcSettings { adapt_until: ok.burn_in + 1, ..ok }.validate().is_err());
    }

    #[test]
    fn cholesky_3x3() {
        let m = [[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]];
        let l = cholesky(&m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l[i][k] * l[j][k]).sum();
                assert!((s - m[i][j]).abs() < 1e-12);
            }
        }
        assert!(cholesky(&[[1.0, 2.0], [2.0, 1.0]]).is_none());
    }

    #[test]
    fn adaptation_learns_scale() {
        let mut rng = RngHandle::new(1);
        let mut p = AdaptiveProposal::<2>::new([[1.0, 0.0], [0.0, 1.0]], 1.0);
        for _ in 0..20_000 {
            let x = [sample_normal(&mut rng, 0.0, 3.0), sample_normal(&mut rng, 0.0, 0.1)];
            p.observe(&x);
        }
        p.freeze();
        assert!((p.chol[0][0] - 3.0).abs() < 0.1);
        assert!((p.chol[1][1] - 0.1).abs() < 0.01);
    }
}
