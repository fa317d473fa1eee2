//! Exponentiated-Weibull regression baseline.
//!
//! `S(t | x) = 1 - [1 - exp(-t^α e^{β₀+β₁x})]^θ` with `x` the group
//! indicator (0 for C, 1 for T). Sampled by an adaptive four-dimensional
//! random walk on `(ln α, ln θ, β₀, β₁)`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::dpmm::acceptance_warning;
use crate::error::{Error, Result};
use crate::functionals::mrl_by_quadrature;
use crate::mcmc::{accept, AcceptanceCounter, AdaptiveProposal, McmcSettings};
use crate::model::{ChainMeta, ChainOutput, Dataset, Group, Observation};
use crate::rng::RngHandle;
use crate::special::{ln_1m_exp, normal_ln_pdf};

/// Survival below which the EWM mean residual life is not evaluated.
pub const EWM_TAIL_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwmParams {
    /// Weibull power.
    pub alpha_w: f64,
    /// Exponentiation power.
    pub theta_w: f64,
    pub beta0: f64,
    pub beta1: f64,
}

impl EwmParams {
    pub fn new(alpha_w: f64, theta_w: f64, beta0: f64, beta1: f64) -> Result<Self> {
        let p = Self { alpha_w, theta_w, beta0, beta1 };
        if !p.is_valid() {
            return Err(Error::domain("EwmParams", "powers must be positive and coefficients finite"));
        }
        Ok(p)
    }

    pub fn is_valid(&self) -> bool {
        self.alpha_w > 0.0
            && self.theta_w > 0.0
            && self.alpha_w.is_finite()
            && self.theta_w.is_finite()
            && self.beta0.is_finite()
            && self.beta1.is_finite()
    }

    fn ln_z(&self, t: f64, x: f64) -> f64 {
        self.alpha_w * t.ln() + self.beta0 + self.beta1 * x
    }

    fn to_unconstrained(self) -> [f64; 4] {
        [self.alpha_w.ln(), self.theta_w.ln(), self.beta0, self.beta1]
    }

    fn from_unconstrained(v: &[f64; 4]) -> Self {
        Self { alpha_w: v[0].exp(), theta_w: v[1].exp(), beta0: v[2], beta1: v[3] }
    }
}

/// Covariate value of a row: the group indicator.
pub fn group_indicator(o: &Observation) -> f64 {
    if o.group == Some(Group::T) {
        1.0
    } else {
        0.0
    }
}

pub fn ewm_ln_survival(p: &EwmParams, t: f64, x: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let z = p.ln_z(t, x).exp();
    // ln S = ln(1 - exp(θ ln(1 - e^{-z})))
    ln_1m_exp(p.theta_w * ln_1m_exp(-z))
}

pub fn ewm_survival(p: &EwmParams, t: f64, x: f64) -> f64 {
    ewm_ln_survival(p, t, x).exp()
}

pub fn ewm_ln_density(p: &EwmParams, t: f64, x: f64) -> f64 {
    if t <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let ln_z = p.ln_z(t, x);
    let z = ln_z.exp();
    p.theta_w.ln() + p.alpha_w.ln() + ln_z - t.ln() + (p.theta_w - 1.0) * ln_1m_exp(-z) - z
}

/// Log density for observed rows, log survival for censored rows.
pub fn ewm_log_likelihood(p: &EwmParams, o: &Observation) -> f64 {
    let x = group_indicator(o);
    if o.censored {
        ewm_ln_survival(p, o.time, x)
    } else {
        ewm_ln_density(p, o.time, x)
    }
}

/// Mean residual life by quadrature on the survival function.
pub fn ewm_mrl(p: &EwmParams, t: f64, x: f64) -> Result<f64> {
    mrl_by_quadrature(|u| ewm_survival(p, u, x), t, EWM_TAIL_FLOOR)
}

/// Normal priors on the coefficients, exponential priors (given by their
/// means) on the two powers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EwmPriors {
    pub beta0_mean: f64,
    pub beta0_sd: f64,
    pub beta1_mean: f64,
    pub beta1_sd: f64,
    pub alpha_mean: f64,
    pub theta_mean: f64,
}

impl Default for EwmPriors {
    fn default() -> Self {
        Self { beta0_mean: -10.0, beta0_sd: 10.0, beta1_mean: 0.0, beta1_sd: 10.0, alpha_mean: 1.1, theta_mean: 0.9 }
    }
}

impl EwmPriors {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.beta0_sd) && pos(self.beta1_sd) && pos(self.alpha_mean) && pos(self.theta_mean))
            || !self.beta0_mean.is_finite()
            || !self.beta1_mean.is_finite()
        {
            return Err(Error::Config("EWM prior spreads and means must be positive and finite".into()));
        }
        Ok(())
    }

    /// Log prior density of the parameters (not of the unconstrained coordinates).
    pub fn ln_density(&self, p: &EwmParams) -> f64 {
        normal_ln_pdf(p.beta0, self.beta0_mean, self.beta0_sd * self.beta0_sd)
            + normal_ln_pdf(p.beta1, self.beta1_mean, self.beta1_sd * self.beta1_sd)
            - p.alpha_w / self.alpha_mean
            - self.alpha_mean.ln()
            - p.theta_w / self.theta_mean
            - self.theta_mean.ln()
    }

    pub fn center(&self) -> EwmParams {
        EwmParams { alpha_w: self.alpha_mean, theta_w: self.theta_mean, beta0: self.beta0_mean, beta1: self.beta1_mean }
    }
}

/// Outcome of quantile elicitation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elicitation {
    pub priors: EwmPriors,
    /// Point estimates solving the quantile system, when one was found.
    pub solution: Option<EwmParams>,
    pub note: Option<String>,
}

/// `ln(-ln(1 - p^{1/θ}))`, the value of `α ln t + β₀` at which `F(t) = p`.
fn g_p(p: f64, theta: f64) -> f64 {
    let ln_u = p.ln() / theta;
    (-ln_1m_exp(ln_u)).ln()
}

/// Solve `F(q_p) = p` at `x = 0` for `p ∈ {0.1, 0.5, 0.9}`.
///
/// `θ` is found by bisection in `ln θ` on `[1e-3, 1e3]` from the ratio of
/// log-quantile gaps, then `α` and `β₀` follow linearly.
pub fn solve_quantiles(q10: f64, q50: f64, q90: f64) -> Option<EwmParams> {
    if !(q10 > 0.0 && q10 < q50 && q50 < q90 && q90.is_finite()) {
        return None;
    }
    let target = (q90.ln() - q50.ln()) / (q50.ln() - q10.ln());
    let ratio = |ln_th: f64| {
        let th = ln_th.exp();
        let (g1, g5, g9) = (g_p(0.1, th), g_p(0.5, th), g_p(0.9, th));
        (g9 - g5) / (g5 - g1) - target
    };
    let (mut lo, mut hi) = ((1e-3f64).ln(), (1e3f64).ln());
    let (flo, fhi) = (ratio(lo), ratio(hi));
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let th = (0.5 * (lo + hi)).exp();
    let alpha = (g_p(0.9, th) - g_p(0.5, th)) / (q90.ln() - q50.ln());
    let beta0 = g_p(0.5, th) - alpha * q50.ln();
    EwmParams::new(alpha, th, beta0, 0.0).ok()
}

/// Priors centered at the quantile solution with the default spreads; the
/// default priors when the system has no solution in bounds.
pub fn elicit_priors(q10: f64, q50: f64, q90: f64) -> Elicitation {
    let base = EwmPriors::default();
    match solve_quantiles(q10, q50, q90) {
        Some(s) => Elicitation {
            priors: EwmPriors { beta0_mean: s.beta0, alpha_mean: s.alpha_w, theta_mean: s.theta_w, ..base },
            solution: Some(s),
            note: None,
        },
        None => Elicitation {
            priors: base,
            solution: None,
            note: Some(alloc::format!(
                "no EWM solution for quantiles ({q10}, {q50}, {q90}) with θ in [1e-3, 1e3]; default priors used"
            )),
        },
    }
}

/// Empirical 10%, 50% and 90% quantiles of the recorded times.
pub fn data_quantiles(data: &Dataset) -> Option<(f64, f64, f64)> {
    let mut t: Vec<f64> = data.rows.iter().map(|r| r.time).collect();
    if t.len() < 3 {
        return None;
    }
    t.sort_by(f64::total_cmp);
    let q = |p: f64| crate::functionals::quantile_sorted(&t, p);
    Some((q(0.1), q(0.5), q(0.9)))
}

fn ln_target(priors: &EwmPriors, rows: &[Observation], v: &[f64; 4]) -> f64 {
    let p = EwmParams::from_unconstrained(v);
    if !p.is_valid() {
        return f64::NEG_INFINITY;
    }
    let ll: f64 = rows.iter().map(|o| ewm_log_likelihood(&p, o)).sum();
    // Jacobian of the log transforms on α and θ
    ll + priors.ln_density(&p) + v[0] + v[1]
}

/// Adaptive random-walk Metropolis for the EWM posterior.
pub fn run_chain_ewm(
    data: &Dataset,
    priors: &EwmPriors,
    settings: &McmcSettings,
    rng: &mut RngHandle,
) -> Result<ChainOutput<EwmParams>> {
    settings.validate()?;
    priors.validate()?;
    let rows = &data.rows;
    let mut x = priors.center().to_unconstrained();
    let mut lp = ln_target(priors, rows, &x);
    if !lp.is_finite() {
        return Err(Error::Config("EWM log posterior is not finite at the prior center".into()));
    }
    let init = [[0.02, 0.0, 0.0, 0.0], [0.0, 0.02, 0.0, 0.0], [0.0, 0.0, 0.2, 0.0], [0.0, 0.0, 0.0, 0.2]];
    let mut prop = AdaptiveProposal::new(init, settings.step_scale * 2.38 * 2.38 / 4.0);
    let mut counter = AcceptanceCounter::default();
    let mut draws = Vec::with_capacity(settings.n_retained());
    for it in 0..settings.iterations {
        if it == settings.adapt_until / 2 {
            prop.restart();
        }
        if it == settings.adapt_until {
            prop.freeze();
        }
        let y = prop.propose(rng, &x);
        let ly = ln_target(priors, rows, &y);
        let ok = accept(rng, ly - lp);
        counter.record(ok);
        if ok {
            x = y;
            lp = ly;
        }
        prop.observe(&x);
        if settings.is_retained(it) {
            draws.push(EwmParams::from_unconstrained(&x));
        }
    }
    let mut acceptance = BTreeMap::new();
    acceptance.insert(String::from("ewm"), counter.rate());
    let warnings = acceptance.iter().filter_map(|(k, v)| acceptance_warning(k, *v)).collect();
    Ok(ChainOutput {
        meta: ChainMeta {
            model: "ewm".into(),
            seed: rng.seed(),
            chain: 0,
            iterations: settings.iterations,
            burn_in: settings.burn_in,
            thinning: settings.thinning,
            truncation: 0,
            acceptance,
            dataset_hash: None,
            has_covariate: false,
            degenerate_draws: 0,
            warnings,
        },
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::inversion_survival;
    use crate::quadrature::integrate_to_inf;

    fn p() -> EwmParams {
        EwmParams::new(1.6, 2.5, -3.0, 0.4).unwrap()
    }

    #[test]
    fn survival_basics() {
        let p = p();
        assert_eq!(ewm_survival(&p, 0.0, 1.0), 1.0);
        let w = EwmParams { theta_w: 1.0, ..p };
        for t in [0.1, 1.0, 3.0] {
            let z = t.powf(w.alpha_w) * (w.beta0 + w.beta1).exp();
            assert!((ewm_survival(&w, t, 1.0) - (-z).exp()).abs() < 1e-14);
        }
        let mut prev = 1.0;
        for i in 0..1000 {
            let s = ewm_survival(&p, i as f64 * 0.02, 0.0);
            assert!((0.0..=1.0).contains(&s) && s <= prev);
            prev = s;
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let p = p();
        for x in [0.0, 1.0] {
            let m = integrate_to_inf(|t| ewm_ln_density(&p, t, x).exp(), 0.0, 1e-13, 1e-11);
            assert!((m - 1.0).abs() < 1e-4, "{m}");
        }
    }

    #[test]
    fn hazard_is_minus_log_survival_slope() {
        let p = p();
        for t in [0.3, 1.0, 2.5] {
            let h = 1e-5;
            let fd = -(ewm_ln_survival(&p, t + h, 0.0) - ewm_ln_survival(&p, t - h, 0.0)) / (2.0 * h);
            let an = (ewm_ln_density(&p, t, 0.0) - ewm_ln_survival(&p, t, 0.0)).exp();
            assert!((fd - an).abs() < 1e-6 * an.max(1.0));
        }
    }

    #[test]
    fn censored_row_uses_survival() {
        let p = p();
        // median at x = 0
        let q = (g_p(0.5, p.theta_w) - p.beta0) / p.alpha_w;
        let o = Observation::censored_at(q.exp());
        assert!((ewm_log_likelihood(&p, &o) - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn elicitation_recovers_params() {
        let truth = EwmParams::new(1.3, 2.2, -4.0, 0.0).unwrap();
        let q = |pr: f64| ((g_p(pr, truth.theta_w) - truth.beta0) / truth.alpha_w).exp();
        let s = solve_quantiles(q(0.1), q(0.5), q(0.9)).unwrap();
        assert!((s.alpha_w - truth.alpha_w).abs() < 1e-6);
        assert!((s.theta_w - truth.theta_w).abs() < 1e-6);
        assert!((s.beta0 - truth.beta0).abs() < 1e-6);
    }

    #[test]
    fn exponential_quantiles_give_unit_theta() {
        let q = |pr: f64| -(1.0f64 - pr).ln() * 5.0;
        let s = solve_quantiles(q(0.1), q(0.5), q(0.9)).unwrap();
        assert!((s.theta_w - 1.0).abs() < 1e-6);
        assert!((s.alpha_w - 1.0).abs() < 1e-6);
    }

    #[test]
    fn failed_elicitation_falls_back() {
        let e = elicit_priors(3.0, 2.0, 1.0);
        assert_eq!(e.priors, EwmPriors::default());
        assert!(e.note.is_some());
        let d = EwmPriors::default();
        assert_eq!((d.alpha_mean, d.theta_mean, d.beta0_mean, d.beta0_sd), (1.1, 0.9, -10.0, 10.0));
    }

    #[test]
    fn mrl_round_trip() {
        let p = EwmParams::new(2.0, 3.0, -2.0, 0.0).unwrap();
        let s = |t: f64| ewm_survival(&p, t, 0.0);
        let mut hi = 1.0;
        while s(hi) > 1e-3 {
            hi *= 1.1;
        }
        let grid: Vec<f64> = (0..2000).map(|i| hi * i as f64 / 1999.0).collect();
        let m: Vec<f64> = grid.iter().map(|&t| ewm_mrl(&p, t, 0.0).unwrap()).collect();
        let inv = inversion_survival(&grid, &m).unwrap();
        for (t, v) in grid.iter().zip(&inv) {
            assert!((v - s(*t)).abs() < 1e-4);
        }
    }
}
