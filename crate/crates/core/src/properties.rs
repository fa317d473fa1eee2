//! Prior dependence induced by the Kotz bivariate beta sticks: closed forms
//! for the correlation of sticks, weights, mixing distributions and survival
//! times, each with a Monte Carlo oracle.
//!
//! Every closed form is built from three moments of the stick pair
//! (`E ζ = α/(α+1)`, `E ζ² = α/(α+2)`, `E ζ_C ζ_T`) and the factor
//! `K = Σ_l E[w_lC w_lT]`.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::distributions::{open01, sample_gamma, sample_mvnormal2, KotzBeta};
use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};
use crate::rng::RngHandle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KotzParams {
    pub alpha: f64,
    pub b: f64,
}

impl KotzParams {
    pub fn new(alpha: f64, b: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::domain("KotzParams", "alpha must be positive"));
        }
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::domain("KotzParams", "b must lie in (0, 1)"));
        }
        Ok(Self { alpha, b })
    }

    fn sampler(&self) -> KotzBeta {
        KotzBeta::new(self.alpha, self.b).expect("validated parameters")
    }
}

fn denom(p: KotzParams) -> f64 {
    let a = p.alpha;
    (a + 1.0 - p.b) * (a + 1.0) * (a + 1.0) * (a + 2.0)
}

/// `E[ζ_C ζ_T]`.
pub fn e_zeta_pair(p: KotzParams) -> f64 {
    let a = p.alpha;
    a * a * (a + 2.0 - p.b) / ((a + 1.0 - p.b) * (a + 1.0) * (a + 2.0))
}

/// `E[(1-ζ_C)(1-ζ_T)]`.
pub fn e_one_minus_pair(p: KotzParams) -> f64 {
    let a = p.alpha;
    ((a + 1.0 - p.b) * (a + 2.0) + a * a * p.b) / denom(p)
}

pub fn cov_zeta(p: KotzParams) -> f64 {
    p.alpha * p.alpha * p.b / denom(p)
}

pub fn cor_zeta(p: KotzParams) -> f64 {
    p.alpha * p.b / (p.alpha + 1.0 - p.b)
}

/// `Cov(w_lC, w_lT)`; `l` is one-based.
pub fn cov_weights(l: usize, p: KotzParams) -> f64 {
    assert!(l >= 1, "weight index is one-based");
    if l == 1 {
        return cov_zeta(p);
    }
    let a = p.alpha;
    let k = (l - 1) as i32;
    e_one_minus_pair(p) * e_zeta_pair(p).powi(k) - (a + 1.0).powi(-2) * (a / (a + 1.0)).powi(2 * k)
}

/// `Var(w_l)`, the same in both groups.
pub fn var_weight(l: usize, alpha: f64) -> f64 {
    assert!(l >= 1, "weight index is one-based");
    let a = alpha;
    let k = (l - 1) as i32;
    2.0 / ((a + 1.0) * (a + 2.0)) * (a / (a + 2.0)).powi(k) - (a + 1.0).powi(-2) * (a / (a + 1.0)).powi(2 * k)
}

pub fn cor_weights(l: usize, p: KotzParams) -> f64 {
    if l == 1 {
        return cor_zeta(p);
    }
    cov_weights(l, p) / var_weight(l, p.alpha)
}

/// `K = Σ_l E[w_lC w_lT]`.
pub fn k_factor(p: KotzParams) -> f64 {
    let (a, b) = (p.alpha, p.b);
    ((a - 2.0) * b + a + 2.0) / (a * (2.0 * a - 3.0 * b + 5.0) - 2.0 * b + 2.0)
}

pub fn cor_g(p: KotzParams) -> f64 {
    (p.alpha + 1.0) * k_factor(p)
}

pub fn cov_g(p: KotzParams, g0b: f64) -> f64 {
    g0b * (1.0 - g0b) * k_factor(p)
}

/// `E exp(t'(θ, φ))` for `(θ, φ) ~ N(μ, Σ)`.
pub fn lognormal_moment(t: Vec2, mu: &Vec2, sigma: &Mat2) -> f64 {
    (t.dot(mu) + 0.5 * sigma.quad_form(&t)).exp()
}

const T1: Vec2 = Vec2([1.0, -2.0]);
const T2: Vec2 = Vec2([2.0, -2.0]);
const T3: Vec2 = Vec2([1.0, -1.0]);

/// Variance of the kernel mean `e^{θ-φ}` under the base measure.
pub fn var_kernel_mean(mu: &Vec2, sigma: &Mat2) -> f64 {
    lognormal_moment(T2, mu, sigma) - lognormal_moment(T3, mu, sigma).powi(2)
}

pub fn cov_t(p: KotzParams, mu: &Vec2, sigma: &Mat2) -> f64 {
    var_kernel_mean(mu, sigma) * k_factor(p)
}

pub fn var_t(mu: &Vec2, sigma: &Mat2) -> f64 {
    lognormal_moment(T1, mu, sigma) + var_kernel_mean(mu, sigma)
}

pub fn cor_t(p: KotzParams, mu: &Vec2, sigma: &Mat2) -> f64 {
    cov_t(p, mu, sigma) / var_t(mu, sigma)
}

// ---------------------------------------------------------------------------
// Monte Carlo oracles

/// Running means and co-moments of a pair, mergeable across batches.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairMoments {
    pub n: f64,
    mx: f64,
    my: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl PairMoments {
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        let dx = x - self.mx;
        let dy = y - self.my;
        self.mx += dx / self.n;
        self.my += dy / self.n;
        self.sxx += dx * (x - self.mx);
        self.syy += dy * (y - self.my);
        self.sxy += dx * (y - self.my);
    }

    pub fn merge(&mut self, o: &PairMoments) {
        if o.n == 0.0 {
            return;
        }
        let n = self.n + o.n;
        let dx = o.mx - self.mx;
        let dy = o.my - self.my;
        let f = self.n * o.n / n;
        self.sxx += o.sxx + dx * dx * f;
        self.syy += o.syy + dy * dy * f;
        self.sxy += o.sxy + dx * dy * f;
        self.mx += dx * o.n / n;
        self.my += dy * o.n / n;
        self.n = n;
    }

    pub fn mean_x(&self) -> f64 {
        self.mx
    }

    pub fn var_x(&self) -> f64 {
        self.sxx / (self.n - 1.0)
    }

    pub fn var_y(&self) -> f64 {
        self.syy / (self.n - 1.0)
    }

    pub fn cov(&self) -> f64 {
        self.sxy / (self.n - 1.0)
    }

    pub fn cor(&self) -> f64 {
        self.sxy / (self.sxx * self.syy).sqrt()
    }
}

/// A Monte Carlo estimate with its batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub se: f64,
}

impl McEstimate {
    /// `|estimate - target| <= k·se`.
    pub fn agrees(&self, target: f64, k: f64) -> bool {
        (self.estimate - target).abs() <= k * self.se
    }
}

pub const N_BATCHES: usize = 100;

/// Pair draws split into equal batches.
#[derive(Debug, Clone)]
pub struct BatchedPairs {
    pub batches: Vec<PairMoments>,
}

impl BatchedPairs {
    /// Runs `draw` `n` times, spreading the draws over [`N_BATCHES`] batches.
    pub fn collect(n: usize, mut draw: impl FnMut() -> (f64, f64)) -> Self {
        let nb = N_BATCHES.min(n.max(1));
        let mut batches = alloc::vec![PairMoments::default(); nb];
        for i in 0..n {
            let (x, y) = draw();
            batches[i * nb / n].push(x, y);
        }
        Self { batches }
    }

    pub fn pooled(&self) -> PairMoments {
        let mut all = PairMoments::default();
        for b in &self.batches {
            all.merge(b);
        }
        all
    }

    /// Statistic on the pooled draws with the spread of per-batch values as its error.
    pub fn estimate(&self, stat: impl Fn(&PairMoments) -> f64) -> McEstimate {
        let k = self.batches.len() as f64;
        let vals: Vec<f64> = self.batches.iter().map(&stat).collect();
        let m = vals.iter().sum::<f64>() / k;
        let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0);
        McEstimate { estimate: stat(&self.pooled()), se: (v / k).sqrt() }
    }
}

/// `n` draws of `(ζ_C, ζ_T)`.
pub fn mc_zeta(rng: &mut RngHandle, p: KotzParams, n: usize) -> BatchedPairs {
    let kotz = p.sampler();
    BatchedPairs::collect(n, || {
        let d = kotz.sample(rng);
        (d.zeta_c, d.zeta_t)
    })
}

/// `n` draws of `(w_lC, w_lT)` from the untruncated stick-breaking prior.
pub fn mc_weights(rng: &mut RngHandle, p: KotzParams, l: usize, n: usize) -> BatchedPairs {
    assert!(l >= 1, "weight index is one-based");
    let kotz = p.sampler();
    BatchedPairs::collect(n, || {
        let (mut rc, mut rt) = (1.0, 1.0);
        for _ in 1..l {
            let d = kotz.sample(rng);
            rc *= d.zeta_c;
            rt *= d.zeta_t;
        }
        let d = kotz.sample(rng);
        (rc * (1.0 - d.zeta_c), rt * (1.0 - d.zeta_t))
    })
}

/// Remaining stick length below which the rest of a realization cannot move `G(B)`.
const NEGLIGIBLE_REMAINDER: f64 = 1e-15;

/// `n` prior realizations of `(G_C(B), G_T(B))` at truncation `truncation`,
/// where `B` has base probability `g0b`. Each shared atom falls in `B`
/// independently with probability `g0b`; the last weight is the remainder.
pub fn mc_g(rng: &mut RngHandle, p: KotzParams, g0b: f64, truncation: usize, n: usize) -> BatchedPairs {
    let kotz = p.sampler();
    BatchedPairs::collect(n, || {
        let (mut rc, mut rt) = (1.0, 1.0);
        let (mut gc, mut gt) = (0.0, 0.0);
        for _ in 1..truncation {
            let d = kotz.sample(rng);
            if open01(rng) < g0b {
                gc += rc * (1.0 - d.zeta_c);
                gt += rt * (1.0 - d.zeta_t);
            }
            rc *= d.zeta_c;
            rt *= d.zeta_t;
            if rc < NEGLIGIBLE_REMAINDER && rt < NEGLIGIBLE_REMAINDER {
                break;
            }
        }
        if open01(rng) < g0b {
            gc += rc;
            gt += rt;
        }
        (gc, gt)
    })
}

/// `n` prior replicates of `(T_C, T_T)`: one truncated realization of the
/// pair of mixing distributions, then one survival time from each.
///
/// Component labels are found by inverting each group's cumulative weights
/// against a uniform, so sticks are only broken until both labels are known.
pub fn mc_t(
    rng: &mut RngHandle,
    p: KotzParams,
    mu: &Vec2,
    sigma: &Mat2,
    truncation: usize,
    n: usize,
) -> Result<BatchedPairs> {
    if !sigma.is_spd() {
        return Err(Error::domain("mc_t", "sigma must be symmetric positive definite"));
    }
    let kotz = p.sampler();
    let mut failure = None;
    let pairs = BatchedPairs::collect(n, || {
        let (uc, ut) = (open01(rng), open01(rng));
        let (mut rc, mut rt) = (1.0, 1.0);
        let (mut cc, mut ct) = (0.0, 0.0);
        let (mut lc, mut lt) = (None, None);
        for l in 0..truncation - 1 {
            if lc.is_some() && lt.is_some() {
                break;
            }
            let d = kotz.sample(rng);
            cc += rc * (1.0 - d.zeta_c);
            ct += rt * (1.0 - d.zeta_t);
            rc *= d.zeta_c;
            rt *= d.zeta_t;
            if lc.is_none() && uc < cc {
                lc = Some(l);
            }
            if lt.is_none() && ut < ct {
                lt = Some(l);
            }
        }
        let lc = lc.unwrap_or(truncation - 1);
        let lt = lt.unwrap_or(truncation - 1);
        let mut time = |rng: &mut RngHandle, atom: Vec2| {
            sample_gamma(rng, atom.0[0].exp(), atom.0[1].exp()).unwrap_or_else(|e| {
                failure = Some(e);
                f64::NAN
            })
        };
        let atom_c = sample_mvnormal2(rng, mu, sigma).expect("checked covariance");
        let atom_t = if lt == lc { atom_c } else { sample_mvnormal2(rng, mu, sigma).expect("checked covariance") };
        let tc = time(rng, atom_c);
        let tt = time(rng, atom_t);
        (tc, tt)
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(pairs),
    }
}

// ---------------------------------------------------------------------------
// Property table

/// One comparison of a closed form against its oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyRow {
    pub formula: String,
    pub alpha: f64,
    pub b: f64,
    pub analytic: f64,
    pub mc_estimate: f64,
    pub mc_se: f64,
    pub pass: bool,
}

impl PropertyRow {
    fn new(formula: impl Into<String>, p: KotzParams, analytic: f64, mc: McEstimate, k: f64) -> Self {
        Self {
            formula: formula.into(),
            alpha: p.alpha,
            b: p.b,
            analytic,
            mc_estimate: mc.estimate,
            mc_se: mc.se,
            pass: mc.agrees(analytic, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropertySettings {
    pub alphas: Vec<f64>,
    pub bs: Vec<f64>,
    pub weight_indices: Vec<usize>,
    /// Draws for stick and weight oracles.
    pub n_sticks: usize,
    /// Prior realizations for the mixing-distribution and survival-time oracles.
    pub n_prior: usize,
    pub truncation: usize,
    pub g0b: f64,
    pub mu: Vec2,
    pub sigma: Mat2,
    pub tolerance_se: f64,
    pub seed: u64,
}

impl Default for PropertySettings {
    fn default() -> Self {
        Self {
            alphas: alloc::vec![0.25, 1.0, 4.0, 16.0],
            bs: alloc::vec![0.1, 0.5, 0.9],
            weight_indices: alloc::vec![1, 2, 5],
            n_sticks: 1_000_000,
            n_prior: 100_000,
            truncation: 500,
            g0b: 0.5,
            mu: Vec2::new(1.0, 0.0),
            sigma: Mat2::diag(0.1, 0.1),
            tolerance_se: 3.0,
            seed: 2024,
        }
    }
}

impl PropertySettings {
    pub fn validate(&self) -> Result<()> {
        for &a in &self.alphas {
            for &b in &self.bs {
                KotzParams::new(a, b)?;
            }
        }
        if self.weight_indices.contains(&0) {
            return Err(Error::Config("weight indices are one-based".into()));
        }
        if self.n_sticks < 2 * N_BATCHES || self.n_prior < 2 * N_BATCHES {
            return Err(Error::Config(alloc::format!("need at least {} draws per oracle", 2 * N_BATCHES)));
        }
        if self.truncation < 2 {
            return Err(Error::Config("truncation must be at least 2".into()));
        }
        if !(self.g0b > 0.0 && self.g0b < 1.0) {
            return Err(Error::Config("g0b must lie in (0, 1)".into()));
        }
        if !self.sigma.is_spd() {
            return Err(Error::Config("sigma must be symmetric positive definite".into()));
        }
        Ok(())
    }
}

/// Rows for one `(α, b)` grid point, using its own random stream.
pub fn property_rows(p: KotzParams, s: &PropertySettings, rng: &mut RngHandle) -> Result<Vec<PropertyRow>> {
    let k = s.tolerance_se;
    let mut rows = Vec::new();
    let z = mc_zeta(rng, p, s.n_sticks);
    rows.push(PropertyRow::new("cor_zeta", p, cor_zeta(p), z.estimate(PairMoments::cor), k));
    for &l in &s.weight_indices {
        let w = mc_weights(rng, p, l, s.n_sticks);
        rows.push(PropertyRow::new(alloc::format!("cov_weights_{l}"), p, cov_weights(l, p), w.estimate(PairMoments::cov), k));
        rows.push(PropertyRow::new(alloc::format!("var_weight_{l}"), p, var_weight(l, p.alpha), w.estimate(PairMoments::var_x), k));
        rows.push(PropertyRow::new(alloc::format!("cor_weights_{l}"), p, cor_weights(l, p), w.estimate(PairMoments::cor), k));
    }
    let g = mc_g(rng, p, s.g0b, s.truncation, s.n_prior);
    rows.push(PropertyRow::new("cov_g", p, cov_g(p, s.g0b), g.estimate(PairMoments::cov), k));
    rows.push(PropertyRow::new("cor_g", p, cor_g(p), g.estimate(PairMoments::cor), k));
    let t = mc_t(rng, p, &s.mu, &s.sigma, s.truncation, s.n_prior)?;
    rows.push(PropertyRow::new("cov_t", p, cov_t(p, &s.mu, &s.sigma), t.estimate(PairMoments::cov), k));
    rows.push(PropertyRow::new("cor_t", p, cor_t(p, &s.mu, &s.sigma), t.estimate(PairMoments::cor), k));
    Ok(rows)
}

/// Grid points in row-major order (α outer, b inner) with their stream indices.
pub fn property_grid(s: &PropertySettings) -> Result<Vec<(u64, KotzParams)>> {
    s.validate()?;
    let mut out = Vec::new();
    for &a in &s.alphas {
        for &b in &s.bs {
            out.push((out.len() as u64, KotzParams::new(a, b)?));
        }
    }
    Ok(out)
}

/// The full table, sequentially. Grid point `i` uses sub-stream `i` of the seed.
pub fn property_table(s: &PropertySettings) -> Result<Vec<PropertyRow>> {
    let root = RngHandle::new(s.seed);
    let mut rows = Vec::new();
    for (i, p) in property_grid(s)? {
        rows.extend(property_rows(p, s, &mut root.substream(i))?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kp(a: f64, b: f64) -> KotzParams {
        KotzParams::new(a, b).unwrap()
    }

    #[test]
    fn cor_zeta_values_and_limits() {
        assert!((cor_zeta(kp(1.0, 0.5)) - 1.0 / 3.0).abs() < 1e-15);
        assert!(cor_zeta(kp(1.0, 1e-9)) < 1e-8);
        assert!(cor_zeta(kp(1e-9, 0.5)) < 1e-8);
        assert!(cor_zeta(kp(1e6, 1.0 - 1e-6)) > 1.0 - 1e-5);
        // covariance over the Beta(α, 1) variance
        let p = kp(2.3, 0.4);
        let var = p.alpha / ((p.alpha + 1.0).powi(2) * (p.alpha + 2.0));
        assert!((cov_zeta(p) / var - cor_zeta(p)).abs() < 1e-14);
    }

    #[test]
    fn first_weight_matches_sticks() {
        let p = kp(3.0, 0.7);
        assert_eq!(cor_weights(1, p), cor_zeta(p));
        assert_eq!(cov_weights(1, p), cov_zeta(p));
        let var = p.alpha / ((p.alpha + 1.0).powi(2) * (p.alpha + 2.0));
        assert!((var_weight(1, p.alpha) - var).abs() < 1e-15);
    }

    #[test]
    fn pair_moments_follow_from_cov() {
        // E[(1-ζ_C)(1-ζ_T)] = Cov + (1/(α+1))², E[ζ_C ζ_T] = Cov + (α/(α+1))²
        let p = kp(1.7, 0.35);
        let a = p.alpha;
        assert!((e_one_minus_pair(p) - cov_zeta(p) - (a + 1.0).powi(-2)).abs() < 1e-15);
        assert!((e_zeta_pair(p) - cov_zeta(p) - (a / (a + 1.0)).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn k_is_geometric_sum() {
        for (a, b) in [(0.25, 0.1), (1.0, 0.5), (16.0, 0.9)] {
            let p = kp(a, b);
            let k = e_one_minus_pair(p) / (1.0 - e_zeta_pair(p));
            assert!((k - k_factor(p)).abs() < 1e-13);
            let direct: f64 = (1..4000).map(|l| cov_weights(l, p) + (a + 1.0).powi(-2) * (a / (a + 1.0)).powi(2 * (l as i32 - 1))).sum();
            assert!((direct - k_factor(p)).abs() < 1e-10);
        }
    }

    #[test]
    fn cor_g_limits() {
        for a in [0.25, 1.0, 4.0, 16.0] {
            let lim = (a + 1.0) / (2.0 * a + 1.0);
            assert!((cor_g(kp(a, 1e-12)) - lim).abs() < 1e-10);
            for b in [0.1, 0.5, 0.9] {
                let c = cor_g(kp(a, b));
                assert!(c > 0.5 && c < 1.0);
            }
        }
        assert!((cor_g(kp(1e9, 1e-9)) - 0.5).abs() < 1e-6);
        assert!((cor_g(kp(1e-9, 0.5)) - 1.0).abs() < 1e-6);
        assert!((cor_g(kp(1e9, 0.3)) - 0.65).abs() < 1e-6);
    }

    #[test]
    fn cov_g_symmetric_in_base_mass() {
        let p = kp(2.0, 0.5);
        for g in [0.1, 0.3, 0.45] {
            assert!((cov_g(p, g) - cov_g(p, 1.0 - g)).abs() < 1e-16);
        }
    }

    #[test]
    fn cor_t_reduces_to_k_without_kernel_variance() {
        // E e^{θ-2φ} → 0 as the rate location grows
        let p = kp(2.0, 0.5);
        let sigma = Mat2::diag(0.2, 0.2);
        let mu = Vec2::new(60.0, 40.0);
        assert!((cor_t(p, &mu, &sigma) - k_factor(p)).abs() < 1e-8);
    }

    #[test]
    fn weight_correlation_inside_unit_interval() {
        for i in 0..20 {
            for j in 0..20 {
                let p = kp(0.05 * 1.4f64.powi(i), 0.025 + 0.05 * j as f64);
                for l in [1, 2, 5, 10] {
                    let c = cor_weights(l, p);
                    assert!(c > 0.0 && c < 1.0, "l={l} {p:?} {c}");
                }
            }
        }
    }

    #[test]
    fn pair_moments_merge_matches_single_pass() {
        let xs: Vec<(f64, f64)> = (0..50).map(|i| ((i as f64).sin(), (i as f64 * 0.3).cos() + 1e6)).collect();
        let mut all = PairMoments::default();
        let (mut a, mut b) = (PairMoments::default(), PairMoments::default());
        for (i, (x, y)) in xs.iter().enumerate() {
            all.push(*x, *y);
            if i < 17 { a.push(*x, *y) } else { b.push(*x, *y) }
        }
        a.merge(&b);
        assert!((a.cov() - all.cov()).abs() < 1e-9);
        assert!((a.cor() - all.cor()).abs() < 1e-9);
    }

    #[test]
    fn cor_zeta_mc() {
        let p = kp(1.0, 0.5);
        let est = mc_zeta(&mut RngHandle::new(1), p, 200_000).estimate(PairMoments::cor);
        assert!(est.agrees(1.0 / 3.0, 3.0), "{est:?}");
    }

    #[test]
    fn cov_weights_mc_at_l3() {
        let p = kp(2.0, 0.5);
        let w = mc_weights(&mut RngHandle::new(2), p, 3, 200_000);
        let est = w.estimate(PairMoments::cov);
        assert!(est.agrees(cov_weights(3, p), 3.0), "{est:?} vs {}", cov_weights(3, p));
    }

    #[test]
    fn cor_g_mc() {
        let p = kp(2.0, 0.5);
        let est = mc_g(&mut RngHandle::new(3), p, 0.5, 500, 20_000).estimate(PairMoments::cor);
        assert!(est.agrees(cor_g(p), 3.0), "{est:?} vs {}", cor_g(p));
    }
}
