//! Densities, survival functions and samplers used by every other module.
//!
//! All randomness in the crate flows through the samplers here, each taking
//! an explicit [`RngHandle`]. Base gamma, beta and normal variates come from
//! `rand_distr`; the truncated beta, Kotz bivariate beta and 2×2
//! inverse-Wishart are built on top of them.

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use rand::RngCore;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};
use crate::rng::RngHandle;
use crate::special::{self, ln_1m_exp, ln_add_exp, ln_beta, ln_gamma, ln_inc_beta_both};

/// Intervals narrower than this are treated as a single point.
pub const DEGENERATE_WIDTH: f64 = 1e-14;

const ONE_MINUS_EPS: f64 = 1.0 - f64::EPSILON / 2.0;

fn check_pos(op: &'static str, name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(op, alloc::format!("{name} must be positive and finite, got {v}")))
    }
}

/// Clamp into the open unit interval.
#[inline]
pub fn clamp_open01(x: f64) -> f64 {
    if x <= 0.0 {
        f64::MIN_POSITIVE
    } else if x >= 1.0 {
        ONE_MINUS_EPS
    } else {
        x
    }
}

/// Uniform draw on the open interval (0, 1).
#[inline]
pub fn open01(rng: &mut RngHandle) -> f64 {
    let bits = rng.next_u64() >> 11;
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

// ---------------------------------------------------------------------------
// Gamma kernel

/// Log density of Gamma(shape, rate) at `t`.
pub fn gamma_log_pdf(t: f64, shape: f64, rate: f64) -> Result<f64> {
    check_pos("gamma_log_pdf", "t", t)?;
    check_pos("gamma_log_pdf", "shape", shape)?;
    check_pos("gamma_log_pdf", "rate", rate)?;
    Ok(gamma_ln_pdf_unchecked(t, shape, rate))
}

#[inline]
pub fn gamma_ln_pdf_unchecked(t: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() + (shape - 1.0) * t.ln() - rate * t - ln_gamma(shape)
}

fn check_survival_args(op: &'static str, t: f64, shape: f64, rate: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(Error::domain(op, alloc::format!("t must be nonnegative, got {t}")));
    }
    check_pos(op, "shape", shape)?;
    check_pos(op, "rate", rate)
}

/// Gamma survival `1 - F(t)`, the upper regularized incomplete gamma.
pub fn gamma_survival(t: f64, shape: f64, rate: f64) -> Result<f64> {
    check_survival_args("gamma_survival", t, shape, rate)?;
    Ok(special::reg_gamma_q(shape, rate * t))
}

pub fn gamma_cdf(t: f64, shape: f64, rate: f64) -> Result<f64> {
    check_survival_args("gamma_cdf", t, shape, rate)?;
    Ok(special::reg_gamma_p(shape, rate * t))
}

#[inline]
pub fn gamma_ln_survival_unchecked(t: f64, shape: f64, rate: f64) -> f64 {
    special::ln_reg_gamma_q(shape, rate * t)
}

#[inline]
pub fn beta_ln_pdf(x: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)
}

pub fn mvnormal2_ln_pdf(x: &Vec2, mean: &Vec2, cov: &Mat2) -> f64 {
    let Some(prec) = cov.inverse() else {
        return f64::NEG_INFINITY;
    };
    let d = *x - *mean;
    -special::LN_2PI - 0.5 * cov.det().ln() - 0.5 * prec.quad_form(&d)
}

// ---------------------------------------------------------------------------
// Plain samplers

pub fn sample_uniform(rng: &mut RngHandle, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * open01(rng)
}

pub fn sample_normal(rng: &mut RngHandle, mean: f64, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + sd * z
}

/// Gamma with shape/rate parameterization.
pub fn sample_gamma(rng: &mut RngHandle, shape: f64, rate: f64) -> Result<f64> {
    check_pos("sample_gamma", "shape", shape)?;
    check_pos("sample_gamma", "rate", rate)?;
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::domain("sample_gamma", alloc::format!("{e}")))?;
    Ok(g.sample(rng).max(f64::MIN_POSITIVE))
}

/// Inverse gamma with shape/scale parameterization (mean `scale / (shape - 1)`).
pub fn sample_inverse_gamma(rng: &mut RngHandle, shape: f64, scale: f64) -> Result<f64> {
    check_pos("sample_inverse_gamma", "shape", shape)?;
    check_pos("sample_inverse_gamma", "scale", scale)?;
    Ok(scale / sample_gamma(rng, shape, 1.0)?)
}

pub fn sample_beta(rng: &mut RngHandle, a: f64, b: f64) -> Result<f64> {
    check_pos("sample_beta", "a", a)?;
    check_pos("sample_beta", "b", b)?;
    let d = Beta::new(a, b).map_err(|e| Error::domain("sample_beta", alloc::format!("{e}")))?;
    Ok(clamp_open01(d.sample(rng)))
}

pub fn sample_weibull(rng: &mut RngHandle, shape: f64, scale: f64) -> f64 {
    scale * (-open01(rng).ln()).powf(1.0 / shape)
}

pub fn sample_mvnormal2(rng: &mut RngHandle, mean: &Vec2, cov: &Mat2) -> Result<Vec2> {
    let l = cov
        .cholesky()
        .ok_or_else(|| Error::domain("sample_mvnormal2", "covariance not positive-definite"))?;
    let z = Vec2([sample_normal(rng, 0.0, 1.0), sample_normal(rng, 0.0, 1.0)]);
    Ok(*mean + l.mul_vec(&z))
}

/// Inverse-Wishart on 2×2 matrices with mean `scale / (df - 3)`.
///
/// Draws the Wishart precision by the Bartlett decomposition and inverts it.
pub fn sample_inverse_wishart2(rng: &mut RngHandle, df: f64, scale: &Mat2) -> Result<Mat2> {
    if !(df > 1.0) || !df.is_finite() {
        return Err(Error::domain("sample_inverse_wishart2", "degrees of freedom must exceed 1"));
    }
    let prec_scale = scale
        .inverse()
        .filter(|m| m.is_spd())
        .ok_or_else(|| Error::domain("sample_inverse_wishart2", "scale not positive-definite"))?;
    let l = prec_scale
        .cholesky()
        .ok_or_else(|| Error::domain("sample_inverse_wishart2", "scale not positive-definite"))?;
    let c0 = (2.0 * sample_gamma(rng, 0.5 * df, 1.0)?).sqrt();
    let c1 = (2.0 * sample_gamma(rng, 0.5 * (df - 1.0), 1.0)?).sqrt();
    let n = sample_normal(rng, 0.0, 1.0);
    let a = Mat2([[c0, 0.0], [n, c1]]);
    let la = l * a;
    let wishart = la * la.transpose();
    wishart
        .inverse()
        .map(|m| m.symmetrize())
        .ok_or_else(|| Error::domain("sample_inverse_wishart2", "singular draw"))
}

/// Index drawn with probability proportional to `exp(ln_w[i])`.
///
/// Max-subtraction keeps this valid when every weight underflows.
pub fn sample_categorical_ln(rng: &mut RngHandle, ln_w: &[f64]) -> usize {
    let m = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        // Degenerate: no finite weight. Uniform choice keeps the chain moving.
        return ((open01(rng) * ln_w.len() as f64) as usize).min(ln_w.len() - 1);
    }
    let total: f64 = ln_w.iter().map(|w| (w - m).exp()).sum();
    let mut u = open01(rng) * total;
    for (i, w) in ln_w.iter().enumerate() {
        let p = (w - m).exp();
        if u < p {
            return i;
        }
        u -= p;
    }
    // Rounding can leave u marginally positive; fall back to the last positive entry.
    ln_w.iter().rposition(|w| w.is_finite()).unwrap_or(0)
}

// ---------------------------------------------------------------------------
// Kotz bivariate beta

/// One draw of the Kotz bivariate beta with its latent factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivBetaDraw {
    pub zeta_c: f64,
    pub zeta_t: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl BivBetaDraw {
    pub fn from_uvw(u: f64, v: f64, w: f64) -> Self {
        Self { zeta_c: u * w, zeta_t: v * w, u, v, w }
    }
}

/// Reusable sampler for `(UW, VW)` with `U, V ~ Beta(α, 1-b)`, `W ~ Beta(1+α-b, b)`.
#[derive(Debug, Clone)]
pub struct KotzBeta {
    uv: Beta<f64>,
    w: Beta<f64>,
}

impl KotzBeta {
    pub fn new(alpha: f64, b: f64) -> Result<Self> {
        check_pos("sample_kotz_bivariate_beta", "alpha", alpha)?;
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::domain("sample_kotz_bivariate_beta", "b must lie in (0, 1)"));
        }
        let err = |e: rand_distr::BetaError| {
            Error::domain("sample_kotz_bivariate_beta", alloc::format!("{e}"))
        };
        Ok(Self {
            uv: Beta::new(alpha, 1.0 - b).map_err(err)?,
            w: Beta::new(1.0 + alpha - b, b).map_err(err)?,
        })
    }

    pub fn sample(&self, rng: &mut RngHandle) -> BivBetaDraw {
        let u = clamp_open01(self.uv.sample(rng));
        let v = clamp_open01(self.uv.sample(rng));
        let w = clamp_open01(self.w.sample(rng));
        BivBetaDraw::from_uvw(u, v, w)
    }
}

pub fn sample_kotz_bivariate_beta(rng: &mut RngHandle, alpha: f64, b: f64) -> Result<BivBetaDraw> {
    Ok(KotzBeta::new(alpha, b)?.sample(rng))
}

// ---------------------------------------------------------------------------
// Truncated beta

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TruncationFlag {
    Clean,
    /// Interval narrower than [`DEGENERATE_WIDTH`]; the midpoint was returned.
    DegenerateInterval,
    /// Restricted mass not representable; the point of the interval nearest
    /// the mode was returned.
    MassUnderflow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedBetaDraw {
    pub value: f64,
    pub flag: TruncationFlag,
}

fn beta_mode(a: f64, b: f64) -> f64 {
    match (a > 1.0, b > 1.0) {
        (true, true) => (a - 1.0) / (a + b - 2.0),
        (false, true) => 0.0,
        (true, false) => 1.0,
        (false, false) => {
            if a < b {
                0.0
            } else {
                1.0
            }
        }
    }
}

/// Beta(a, b) restricted to `(lo, hi)`, by inversion of the restricted cdf.
///
/// The cdf is inverted in log space on whichever tail the interval sits in,
/// so intervals carrying far less than `1e-300` of the mass still produce
/// exact draws.
pub fn sample_truncated_beta(
    rng: &mut RngHandle,
    a: f64,
    b: f64,
    lo: f64,
    hi: f64,
) -> Result<TruncatedBetaDraw> {
    check_pos("sample_truncated_beta", "a", a)?;
    check_pos("sample_truncated_beta", "b", b)?;
    if !(lo >= 0.0 && hi <= 1.0 && lo < hi) {
        return Err(Error::domain(
            "sample_truncated_beta",
            alloc::format!("empty interval ({lo}, {hi})"),
        ));
    }
    let finish = |x: f64, flag| TruncatedBetaDraw {
        value: clamp_open01(x.max(lo).min(hi)),
        flag,
    };
    if hi - lo < DEGENERATE_WIDTH {
        return Ok(finish(0.5 * (lo + hi), TruncationFlag::DegenerateInterval));
    }
    if lo <= 0.0 && hi >= 1.0 {
        return Ok(finish(sample_beta(rng, a, b)?, TruncationFlag::Clean));
    }

    let (lf_lo, ls_lo) = ln_inc_beta_both(lo, a, b);
    let (lf_hi, ls_hi) = ln_inc_beta_both(hi, a, b);
    let u = open01(rng);
    let half = -core::f64::consts::LN_2;
    let lower_tail = lf_hi <= half || ls_lo > half;

    // In the chosen tail the log-cdf (or log-survival) is increasing in a log
    // coordinate: y = ln x for the lower tail, z = ln(1 - x) for the upper.
    let (near, far) = if lower_tail { (lf_hi, lf_lo) } else { (ls_lo, ls_hi) };
    if !near.is_finite() {
        return Ok(finish(beta_mode(a, b), TruncationFlag::MassUnderflow));
    }
    let r = far - near;
    if r >= 0.0 {
        return Ok(finish(0.5 * (lo + hi), TruncationFlag::DegenerateInterval));
    }
    let target = near + ln_add_exp(r, u.ln() + ln_1m_exp(r));

    let ln_b = ln_beta(a, b);
    let x = if lower_tail {
        let g = |y: f64| {
            let x = y.exp();
            let (lf, _) = ln_inc_beta_both(x, a, b);
            let ln_dens = (a - 1.0) * y + (b - 1.0) * (-x).ln_1p() - ln_b;
            (lf - target, (ln_dens + y - lf).exp())
        };
        let y_hi = hi.ln();
        let y_lo = if lo > 0.0 { lo.ln() } else { descend(y_hi, |y| g(y).0) };
        solve_increasing(g, y_lo, y_hi).exp()
    } else {
        let g = |z: f64| {
            let x = -z.exp_m1();
            let (_, ls) = ln_inc_beta_both(x, a, b);
            let ln_dens = (a - 1.0) * x.ln() + (b - 1.0) * z - ln_b;
            (ls - target, (ln_dens + z - ls).exp())
        };
        let z_hi = (-lo).ln_1p();
        let z_lo = if hi < 1.0 { (-hi).ln_1p() } else { descend(z_hi, |z| g(z).0) };
        -solve_increasing(g, z_lo, z_hi).exp_m1()
    };
    Ok(finish(x, TruncationFlag::Clean))
}

/// Walk down from `start` with doubling steps until `g` is negative.
fn descend(start: f64, g: impl Fn(f64) -> f64) -> f64 {
    let mut step = 1.0;
    let mut y = start - step;
    while g(y) >= 0.0 && y > -1e4 {
        step *= 2.0;
        y = start - step;
    }
    y
}

/// Root of an increasing function on `[lo, hi]` by Newton steps safeguarded
/// with bisection. `g` returns `(value, derivative)`.
fn solve_increasing(g: impl Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64) -> f64 {
    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (v, d) = g(y);
        if !v.is_finite() {
            // Underflowed log-cdf: we are below the root.
            lo = y;
            y = 0.5 * (lo + hi);
            continue;
        }
        if v.abs() < 1e-14 {
            return y;
        }
        if v < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let newton = y - v / d;
        y = if d > 0.0 && d.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-15 * (1.0 + y.abs()) {
            return y;
        }
    }
    y
}
