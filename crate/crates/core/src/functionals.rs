//! Survival functionals of a single mixture draw and their posterior summaries.
//!
//! A draw is first reduced to a [`MixtureView`]: component weights (either
//! the group weights `p_l`, or `p_l N(x₀; β_l, κ²_l)` renormalized for a
//! covariate value) and the gamma kernels. Every functional is then a
//! closed-form sum over components.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AtomParams, Group, MixtureState};
use crate::quadrature::integrate_to_inf;
use crate::special::{ln_gamma, ln_reg_gamma_both, ln_reg_gamma_q, ln_sum_exp, normal_ln_pdf};

/// Mixture survival below this value leaves a functional undefined.
pub const SURVIVAL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    Density,
    Survival,
    Hazard,
    Mrl,
    MeanRegression,
    MrlRegression,
    ProbMrlOrder,
}

impl FunctionalKind {
    pub fn name(self) -> &'static str {
        match self {
            FunctionalKind::Density => "density",
            FunctionalKind::Survival => "survival",
            FunctionalKind::Hazard => "hazard",
            FunctionalKind::Mrl => "mrl",
            FunctionalKind::MeanRegression => "mean_regression",
            FunctionalKind::MrlRegression => "mrl_regression",
            FunctionalKind::ProbMrlOrder => "prob_mrl_order",
        }
    }

    /// Whether the grid runs over covariate values rather than times.
    pub fn grid_is_covariate(self) -> bool {
        matches!(self, FunctionalKind::MeanRegression | FunctionalKind::MrlRegression)
    }
}

/// What to evaluate. For the regression kinds `grid` holds covariate values
/// and `covariate_values` is ignored; `mrl_regression` is evaluated at `at_time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalRequest {
    pub kind: FunctionalKind,
    pub grid: Vec<f64>,
    #[serde(default)]
    pub covariate_values: Option<Vec<f64>>,
    #[serde(default)]
    pub group: Option<Group>,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
    #[serde(default)]
    pub at_time: f64,
}

pub fn default_quantiles() -> Vec<f64> {
    vec![0.025, 0.5, 0.975]
}

impl FunctionalRequest {
    pub fn new(kind: FunctionalKind, grid: Vec<f64>) -> Self {
        Self { kind, grid, covariate_values: None, group: None, quantiles: default_quantiles(), at_time: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("grid must be strictly increasing".into()));
        }
        if !self.kind.grid_is_covariate() && self.grid.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("time grid must be nonnegative".into()));
        }
        if self.quantiles.windows(2).any(|w| !(w[0] <= w[1]))
            || self.quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0))
        {
            return Err(Error::Config("quantiles must be sorted and inside (0, 1)".into()));
        }
        Ok(())
    }
}

/// Pointwise posterior summary of one functional curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub kind: FunctionalKind,
    pub group: Option<Group>,
    pub covariate: Option<f64>,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub quantiles: Vec<(f64, Vec<f64>)>,
    /// First requested grid value dropped because some draw's survival fell
    /// below [`SURVIVAL_FLOOR`] there.
    pub undefined_from: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Component {
    weight: f64,
    ln_weight: f64,
    a: f64,
    r: f64,
    ln_norm: f64,
    mean: f64,
}

/// A draw reduced to normalized component weights and gamma kernels.
#[derive(Debug, Clone)]
pub struct MixtureView {
    comps: Vec<Component>,
}

/// Group slot of `group` in a draw with `n_groups` weight vectors.
pub fn group_slot(n_groups: usize, group: Option<Group>) -> usize {
    if n_groups > 1 {
        group.map_or(0, Group::index)
    } else {
        0
    }
}

impl MixtureView {
    fn from_ln_weights(draw: &MixtureState, ln_w: Vec<f64>) -> Self {
        // Canonical component order makes every functional bitwise invariant
        // to relabelling the atoms.
        let mut pairs: Vec<(&AtomParams, f64)> =
            draw.atoms.iter().zip(ln_w).filter(|(_, lw)| lw.is_finite()).collect();
        pairs.sort_by(|(a, wa), (b, wb)| {
            a.theta
                .total_cmp(&b.theta)
                .then(a.phi.total_cmp(&b.phi))
                .then(wa.total_cmp(wb))
                .then(a.beta.total_cmp(&b.beta))
                .then(a.kappa2.total_cmp(&b.kappa2))
        });
        let lws: Vec<f64> = pairs.iter().map(|(_, lw)| *lw).collect();
        let total = ln_sum_exp(&lws);
        let comps = pairs
            .into_iter()
            .map(|(atom, lw)| {
                let a = atom.theta.exp();
                let r = atom.phi.exp();
                let ln_weight = lw - total;
                Component {
                    weight: ln_weight.exp(),
                    ln_weight,
                    a,
                    r,
                    ln_norm: a * atom.phi - ln_gamma(a),
                    mean: a / r,
                }
            })
            .collect();
        Self { comps }
    }

    /// Weights `p_l` of one group, no covariate factor.
    pub fn marginal(draw: &MixtureState, group: Option<Group>) -> Self {
        let s = group_slot(draw.n_groups(), group);
        let ln_w = draw.sticks.weights[s].iter().map(|p| p.ln()).collect();
        Self::from_ln_weights(draw, ln_w)
    }

    /// Covariate-dependent weights `∝ p_l N(x₀; β_l, κ²_l)`.
    pub fn conditional(draw: &MixtureState, group: Option<Group>, x0: f64) -> Self {
        let s = group_slot(draw.n_groups(), group);
        let ln_w = draw
            .sticks
            .weights[s]
            .iter()
            .zip(&draw.atoms)
            .map(|(p, a)| p.ln() + normal_ln_pdf(x0, a.beta, a.kappa2))
            .collect();
        Self::from_ln_weights(draw, ln_w)
    }

    pub fn new(draw: &MixtureState, group: Option<Group>, x0: Option<f64>) -> Self {
        match x0 {
            Some(x) => Self::conditional(draw, group, x),
            None => Self::marginal(draw, group),
        }
    }

    /// Normalized component weights in canonical order (by shape, then rate), zero-weight atoms removed.
    pub fn weights(&self) -> Vec<f64> {
        self.comps.iter().map(|c| c.weight).collect()
    }

    pub fn density(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self
                .comps
                .iter()
                .map(|c| {
                    if c.a < 1.0 {
                        f64::INFINITY
                    } else if c.a == 1.0 {
                        c.weight * c.r
                    } else {
                        0.0
                    }
                })
                .sum();
        }
        let ln_t = t.ln();
        self.comps
            .iter()
            .map(|c| (c.ln_weight + c.ln_norm + (c.a - 1.0) * ln_t - c.r * t).exp())
            .sum()
    }

    pub fn survival(&self, t: f64) -> f64 {
        self.ln_survival(t).exp()
    }

    pub fn ln_survival(&self, t: f64) -> f64 {
        let terms: Vec<f64> =
            self.comps.iter().map(|c| c.ln_weight + ln_reg_gamma_q(c.a, c.r * t)).collect();
        ln_sum_exp(&terms).min(0.0)
    }

    pub fn hazard(&self, t: f64) -> Result<f64> {
        let s = self.survival(t);
        if s < SURVIVAL_FLOOR {
            return Err(Error::TailUndefined { t });
        }
        Ok(self.density(t) / s)
    }

    /// Mixture mean `Σ q_l e^{θ_l-φ_l}`.
    pub fn mean(&self) -> f64 {
        self.comps.iter().map(|c| c.weight * c.mean).sum()
    }

    /// Mean residual life as the survival-weighted sum of component mrl
    /// functions, each in closed form `(a/r)·Q(a+1, rt)/Q(a, rt) - t`.
    pub fn mrl(&self, t: f64) -> Result<f64> {
        let x: Vec<(f64, f64)> = self
            .comps
            .iter()
            .map(|c| {
                let lq = ln_reg_gamma_q(c.a, c.r * t);
                (c.ln_weight + lq, lq)
            })
            .collect();
        let ln_s: Vec<f64> = x.iter().map(|p| p.0).collect();
        let total = ln_sum_exp(&ln_s);
        if !(total.exp() >= SURVIVAL_FLOOR) {
            return Err(Error::TailUndefined { t });
        }
        let mut m = 0.0;
        for (c, (lw, lq)) in self.comps.iter().zip(x) {
            if lw == f64::NEG_INFINITY {
                continue;
            }
            let ratio = (ln_reg_gamma_q(c.a + 1.0, c.r * t) - lq).exp();
            let ml = (c.mean * ratio - t).max(0.0);
            m += (lw - total).exp() * ml;
        }
        Ok(m)
    }

    /// `∫₀ᵗ S(u) du` in closed form: `Σ q_l [t·Q(a, rt) + (a/r)·P(a+1, rt)]`.
    pub fn integrated_survival(&self, t: f64) -> f64 {
        self.comps
            .iter()
            .map(|c| {
                let q = ln_reg_gamma_q(c.a, c.r * t).exp();
                let p1 = ln_reg_gamma_both(c.a + 1.0, c.r * t).0.exp();
                c.weight * (t * q + c.mean * p1)
            })
            .sum()
    }

    /// Mean residual life as `(E T - ∫₀ᵗ S) / S(t)`.
    pub fn mrl_integral_form(&self, t: f64) -> Result<f64> {
        let s = self.survival(t);
        if s < SURVIVAL_FLOOR {
            return Err(Error::TailUndefined { t });
        }
        Ok((self.mean() - self.integrated_survival(t)) / s)
    }

    /// Smallest `t` with `S(t) <= p`, by bisection.
    pub fn survival_quantile(&self, p: f64) -> f64 {
        let mut hi = self.mean().max(1e-12);
        while self.survival(hi) > p && hi < 1e300 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.survival(mid) > p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

pub fn conditional_density(draw: &MixtureState, t: f64, x0: f64, group: Option<Group>) -> f64 {
    MixtureView::conditional(draw, group, x0).density(t)
}

pub fn conditional_survival(draw: &MixtureState, t: f64, x0: f64, group: Option<Group>) -> f64 {
    MixtureView::conditional(draw, group, x0).survival(t)
}

pub fn conditional_hazard(draw: &MixtureState, t: f64, x0: f64, group: Option<Group>) -> Result<f64> {
    MixtureView::conditional(draw, group, x0).hazard(t)
}

pub fn conditional_mrl(draw: &MixtureState, t: f64, x0: f64, group: Option<Group>) -> Result<f64> {
    MixtureView::conditional(draw, group, x0).mrl(t)
}

pub fn mean_regression(draw: &MixtureState, x0: f64, group: Option<Group>) -> f64 {
    MixtureView::conditional(draw, group, x0).mean()
}

/// Density, survival and mrl at `t` without covariate factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalValues {
    pub density: f64,
    pub survival: f64,
    pub mrl: Option<f64>,
}

pub fn marginal_functionals(draw: &MixtureState, t: f64, group: Option<Group>) -> MarginalValues {
    let v = MixtureView::marginal(draw, group);
    MarginalValues { density: v.density(t), survival: v.survival(t), mrl: v.mrl(t).ok() }
}

/// Value of one functional for one draw at one grid point, `None` where undefined.
pub fn evaluate(
    draw: &MixtureState,
    kind: FunctionalKind,
    point: f64,
    x0: Option<f64>,
    group: Option<Group>,
    at_time: f64,
) -> Option<f64> {
    match kind {
        FunctionalKind::MeanRegression => Some(MixtureView::conditional(draw, group, point).mean()),
        FunctionalKind::MrlRegression => MixtureView::conditional(draw, group, point).mrl(at_time).ok(),
        _ => {
            let v = MixtureView::new(draw, group, x0);
            match kind {
                FunctionalKind::Density => Some(v.density(point)),
                FunctionalKind::Survival => Some(v.survival(point)),
                FunctionalKind::Hazard => v.hazard(point).ok(),
                FunctionalKind::Mrl => v.mrl(point).ok(),
                _ => None,
            }
        }
    }
}

/// One draw's curve over the request grid.
pub fn curve(draw: &MixtureState, req: &FunctionalRequest, x0: Option<f64>) -> Vec<Option<f64>> {
    if req.kind.grid_is_covariate() {
        return req
            .grid
            .iter()
            .map(|&x| evaluate(draw, req.kind, x, None, req.group, req.at_time))
            .collect();
    }
    let v = MixtureView::new(draw, req.group, x0);
    req.grid
        .iter()
        .map(|&t| match req.kind {
            FunctionalKind::Density => Some(v.density(t)),
            FunctionalKind::Survival => Some(v.survival(t)),
            FunctionalKind::Hazard => v.hazard(t).ok(),
            FunctionalKind::Mrl => v.mrl(t).ok(),
            _ => None,
        })
        .collect()
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise mean and quantiles of curves (one row per draw).
///
/// The summary stops at the first grid point where any draw is undefined.
pub fn summarize_curves(
    kind: FunctionalKind,
    group: Option<Group>,
    covariate: Option<f64>,
    grid: &[f64],
    rows: &[Vec<Option<f64>>],
    quantiles: &[f64],
) -> CurveSummary {
    let n = rows.len() as f64;
    let cut = (0..grid.len())
        .find(|&k| rows.iter().any(|r| r[k].is_none()))
        .unwrap_or(grid.len());
    let mut mean = Vec::with_capacity(cut);
    let mut qs: Vec<(f64, Vec<f64>)> = quantiles.iter().map(|&q| (q, Vec::with_capacity(cut))).collect();
    let mut col = Vec::with_capacity(rows.len());
    for k in 0..cut {
        col.clear();
        col.extend(rows.iter().map(|r| r[k].unwrap_or(f64::NAN)));
        mean.push(col.iter().sum::<f64>() / n);
        col.sort_by(f64::total_cmp);
        for (q, out) in qs.iter_mut() {
            out.push(quantile_sorted(&col, *q));
        }
    }
    CurveSummary {
        kind,
        group,
        covariate,
        grid: grid[..cut].to_vec(),
        mean,
        quantiles: qs,
        undefined_from: grid.get(cut).copied(),
    }
}

/// Posterior summaries for a request: one curve per covariate value, or a
/// single marginal curve.
pub fn summarize(draws: &[MixtureState], req: &FunctionalRequest) -> Result<Vec<CurveSummary>> {
    req.validate()?;
    if draws.is_empty() {
        return Err(Error::Config("cannot summarize an empty chain".into()));
    }
    if req.kind == FunctionalKind::ProbMrlOrder {
        let p = prob_mrl_order(draws, &req.grid, None);
        return Ok(vec![CurveSummary {
            kind: req.kind,
            group: None,
            covariate: None,
            grid: req.grid.clone(),
            mean: p,
            quantiles: Vec::new(),
            undefined_from: None,
        }]);
    }
    let xs: Vec<Option<f64>> = match (&req.covariate_values, req.kind.grid_is_covariate()) {
        (Some(v), false) => v.iter().map(|&x| Some(x)).collect(),
        _ => vec![None],
    };
    Ok(xs
        .into_iter()
        .map(|x0| {
            let rows: Vec<_> = draws.iter().map(|d| curve(d, req, x0)).collect();
            summarize_curves(req.kind, req.group, x0, &req.grid, &rows, &req.quantiles)
        })
        .collect())
}

/// Posterior probability that the C-group mrl exceeds the T-group mrl at each
/// grid time. Draws undefined at a time are left out there; NaN if none remain.
pub fn prob_mrl_order(draws: &[MixtureState], grid: &[f64], x0: Option<f64>) -> Vec<f64> {
    let mut hits = vec![0usize; grid.len()];
    let mut total = vec![0usize; grid.len()];
    for d in draws {
        let c = MixtureView::new(d, Some(Group::C), x0);
        let t = MixtureView::new(d, Some(Group::T), x0);
        for (k, &g) in grid.iter().enumerate() {
            if let (Ok(mc), Ok(mt)) = (c.mrl(g), t.mrl(g)) {
                total[k] += 1;
                hits[k] += (mc > mt) as usize;
            }
        }
    }
    hits.iter()
        .zip(&total)
        .map(|(&h, &n)| if n == 0 { f64::NAN } else { h as f64 / n as f64 })
        .collect()
}

/// Survival from an mrl curve: `S(t) = m(t₀)/m(t)·exp(-∫_{t₀}^t 1/m)`, with
/// the integral by the trapezoid rule. Exact survival when the grid starts at 0.
pub fn inversion_survival(grid: &[f64], mrl: &[f64]) -> Result<Vec<f64>> {
    if grid.len() != mrl.len() || grid.is_empty() {
        return Err(Error::domain("inversion_survival", "grid and mrl lengths differ"));
    }
    if let Some(m) = mrl.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(Error::domain("inversion_survival", alloc::format!("mrl must be positive, got {m}")));
    }
    let mut out = Vec::with_capacity(grid.len());
    let mut integral = 0.0;
    out.push(1.0);
    for k in 1..grid.len() {
        integral += 0.5 * (grid[k] - grid[k - 1]) * (1.0 / mrl[k] + 1.0 / mrl[k - 1]);
        out.push(mrl[0] / mrl[k] * (-integral).exp());
    }
    Ok(out)
}

/// `n` times on `[0, hi]`, quadratically clustered at 0 where gamma
/// components with shape below one make `1/m` non-smooth. Suited to
/// [`inversion_survival`].
pub fn inversion_grid(hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|k| {
            let u = k as f64 / (n - 1) as f64;
            hi * u * u
        })
        .collect()
}

/// Mean residual life of an arbitrary survival function by quadrature,
/// `∫_t^∞ S / S(t)`; undefined where `S(t) < floor`.
pub fn mrl_by_quadrature(survival: impl Fn(f64) -> f64, t: f64, floor: f64) -> Result<f64> {
    let s = survival(t);
    if !(s >= floor) {
        return Err(Error::TailUndefined { t });
    }
    Ok(integrate_to_inf(survival, t, 1e-14 * s, 1e-10) / s)
}

/// `n` equally spaced times from 0 to the `p` upper quantile of the
/// posterior predictive (averaged over up to 200 evenly spaced draws).
pub fn default_time_grid(draws: &[MixtureState], group: Option<Group>, x0: Option<f64>, n: usize, p: f64) -> Vec<f64> {
    let step = (draws.len() / 200).max(1);
    let views: Vec<MixtureView> = draws.iter().step_by(step).map(|d| MixtureView::new(d, group, x0)).collect();
    let s = |t: f64| views.iter().map(|v| v.survival(t)).sum::<f64>() / views.len() as f64;
    let mut hi = views.iter().map(MixtureView::mean).fold(1e-12, f64::max);
    while s(hi) > 1.0 - p && hi < 1e300 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if s(mid) > 1.0 - p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let n = n.max(2);
    (0..n).map(|i| hi * i as f64 / (n - 1) as f64).collect()
}
