//! Synthetic populations with exact truth functionals.
//!
//! Two component families: the joint gamma × normal kernel used for
//! covariate regression, and Weibull `(shape, scale)` with survival
//! `exp(-(t/scale)^shape)` for the two-group studies.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::distributions::{open01, sample_gamma, sample_normal, sample_uniform, sample_weibull};
use crate::error::{Error, Result};
use crate::model::{validate_dataset, Dataset, Group, Observation};
use crate::rng::RngHandle;
use crate::special::{ln_gamma, ln_reg_gamma_q, ln_sum_exp, normal_ln_pdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `Γ(t; shape, rate) × N(x; mean, sd²)`.
    GammaNormal { shape: f64, rate: f64, mean: f64, sd: f64 },
    Weibull { shape: f64, scale: f64 },
}

impl Family {
    fn is_valid(&self) -> bool {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        match *self {
            Family::GammaNormal { shape, rate, mean, sd } => pos(shape) && pos(rate) && mean.is_finite() && pos(sd),
            Family::Weibull { shape, scale } => pos(shape) && pos(scale),
        }
    }

    fn ln_density(&self, t: f64) -> f64 {
        match *self {
            Family::GammaNormal { shape, rate, .. } => {
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * t.ln() - rate * t
            }
            Family::Weibull { shape, scale } => {
                let z = t / scale;
                (shape / scale).ln() + (shape - 1.0) * z.ln() - z.powf(shape)
            }
        }
    }

    fn ln_survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            Family::GammaNormal { shape, rate, .. } => ln_reg_gamma_q(shape, rate * t),
            Family::Weibull { shape, scale } => -(t / scale).powf(shape),
        }
    }

    /// `ln ∫_t^∞ S(u) du`.
    fn ln_tail_integral(&self, t: f64) -> f64 {
        match *self {
            Family::GammaNormal { shape, rate, .. } => {
                // ∫_t^∞ Q(a, ru) du = (a/r) Q(a+1, rt) - t Q(a, rt)
                let m = shape / rate;
                let hi = m.ln() + ln_reg_gamma_q(shape + 1.0, rate * t);
                let lo = if t > 0.0 { t.ln() + ln_reg_gamma_q(shape, rate * t) } else { f64::NEG_INFINITY };
                hi + crate::special::ln_1m_exp((lo - hi).min(0.0))
            }
            Family::Weibull { shape, scale } => {
                let k = 1.0 / shape;
                scale.ln() + ln_gamma(1.0 + k) + ln_reg_gamma_q(k, (t / scale).powf(shape))
            }
        }
    }

    fn mean_time(&self) -> f64 {
        match *self {
            Family::GammaNormal { shape, rate, .. } => shape / rate,
            Family::Weibull { shape, scale } => scale * ln_gamma(1.0 + 1.0 / shape).exp(),
        }
    }

    fn ln_covariate_density(&self, x: f64) -> f64 {
        match *self {
            Family::GammaNormal { mean, sd, .. } => normal_ln_pdf(x, mean, sd * sd),
            Family::Weibull { .. } => 0.0,
        }
    }

    fn sample(&self, rng: &mut RngHandle) -> (f64, Option<f64>) {
        match *self {
            Family::GammaNormal { shape, rate, mean, sd } => {
                let t = sample_gamma(rng, shape, rate).expect("validated population");
                (t, Some(sample_normal(rng, mean, sd)))
            }
            Family::Weibull { shape, scale } => (sample_weibull(rng, shape, scale), None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationComponent {
    pub weight: f64,
    #[serde(flatten)]
    pub family: Family,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePopulation {
    pub components: Vec<PopulationComponent>,
}

impl MixturePopulation {
    pub fn new(components: Vec<PopulationComponent>) -> Result<Self> {
        let pop = Self { components };
        pop.validate()?;
        Ok(pop)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Config("population has no components".into()));
        }
        if self.components.iter().any(|c| !(c.weight > 0.0) || !c.family.is_valid()) {
            return Err(Error::Config("population component outside its family domain".into()));
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(alloc::format!("population weights sum to {total}")));
        }
        Ok(())
    }

    pub fn has_covariate(&self) -> bool {
        self.components.iter().any(|c| matches!(c.family, Family::GammaNormal { .. }))
    }

    fn gamma_normal(a: &[f64], b: &[f64], m: &[f64], s: &[f64], q: &[f64]) -> Self {
        let components = (0..q.len())
            .map(|i| PopulationComponent {
                weight: q[i],
                family: Family::GammaNormal { shape: a[i], rate: b[i], mean: m[i], sd: s[i] },
            })
            .collect();
        Self { components }
    }

    fn weibull(parts: &[(f64, f64, f64)]) -> Self {
        let components = parts
            .iter()
            .map(|&(weight, shape, scale)| PopulationComponent { weight, family: Family::Weibull { shape, scale } })
            .collect();
        Self { components }
    }

    /// Six-component joint population for the covariate regression study.
    pub fn regression() -> Self {
        Self::gamma_normal(
            &[45.0, 3.0, 125.0, 0.4, 0.5, 4.0],
            &[3.0, 0.2, 3.8, 0.2, 0.3, 5.0],
            &[-12.0, -8.0, 0.0, 12.0, 18.0, 21.0],
            &[6.0, 5.0, 4.0, 5.0, 3.0, 2.0],
            &[0.28, 0.1, 0.25, 0.21, 0.11, 0.05],
        )
    }

    /// First two-group study, group C.
    pub fn sim1_c() -> Self {
        Self::weibull(&[(0.7, 2.0, 8.0), (0.1, 3.0, 10.0), (0.05, 4.0, 30.0), (0.15, 8.0, 40.0)])
    }

    pub fn sim1_t() -> Self {
        Self::weibull(&[(0.5, 2.0, 8.0), (0.05, 3.0, 10.0), (0.025, 4.0, 30.0), (0.425, 8.0, 40.0)])
    }

    /// Second two-group study, group C.
    pub fn sim2_c() -> Self {
        Self::weibull(&[(0.5, 2.0, 4.0), (0.05, 0.6, 4.0), (0.025, 5.0, 15.0), (0.425, 8.0, 30.0)])
    }

    pub fn sim2_t() -> Self {
        Self::weibull(&[(0.02, 0.6, 1.0), (0.02, 2.0, 4.0), (0.66, 5.0, 15.0), (0.2, 2.0, 8.0), (0.1, 4.0, 30.0)])
    }

    /// Log component weights, conditioned on the covariate when given.
    fn ln_weights(&self, x0: Option<f64>) -> Vec<f64> {
        let mut lw: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + x0.map_or(0.0, |x| c.family.ln_covariate_density(x)))
            .collect();
        let total = ln_sum_exp(&lw);
        for w in &mut lw {
            *w -= total;
        }
        lw
    }

    /// Draw one `(component, time, covariate)`.
    pub fn sample(&self, rng: &mut RngHandle) -> (usize, f64, Option<f64>) {
        let u = open01(rng);
        let mut acc = 0.0;
        let mut k = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                k = i;
                break;
            }
        }
        let (t, x) = self.components[k].family.sample(rng);
        (k, t, x)
    }

    pub fn truth(&self, t: f64, x0: Option<f64>) -> TruthValues {
        true_functionals(self, t, x0)
    }

    /// `E[T | x₀]`, or the marginal mean.
    pub fn mean(&self, x0: Option<f64>) -> f64 {
        self.ln_weights(x0)
            .iter()
            .zip(&self.components)
            .map(|(lw, c)| lw.exp() * c.family.mean_time())
            .sum()
    }

    /// Smallest `t` with survival at most `p`, by bisection.
    pub fn survival_quantile(&self, p: f64, x0: Option<f64>) -> f64 {
        let s = |t: f64| self.truth(t, x0).survival;
        let mut hi = self.mean(x0).max(1e-12);
        while s(hi) > p && hi < 1e300 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if s(mid) > p { lo = mid } else { hi = mid }
            if hi - lo <= 1e-13 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Exact density, survival and mean residual life of a population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthValues {
    pub density: f64,
    pub survival: f64,
    /// `None` where the survival underflows.
    pub mrl: Option<f64>,
}

/// Truth at time `t`, conditional on covariate `x0` for joint populations.
pub fn true_functionals(pop: &MixturePopulation, t: f64, x0: Option<f64>) -> TruthValues {
    let lw = pop.ln_weights(x0);
    let density = if t > 0.0 {
        pop.components.iter().zip(&lw).map(|(c, w)| (w + c.family.ln_density(t)).exp()).sum()
    } else {
        0.0
    };
    let ln_s: Vec<f64> = pop.components.iter().zip(&lw).map(|(c, w)| w + c.family.ln_survival(t)).collect();
    let ln_tail: Vec<f64> = pop.components.iter().zip(&lw).map(|(c, w)| w + c.family.ln_tail_integral(t)).collect();
    let ls = ln_sum_exp(&ln_s).min(0.0);
    let mrl = if ls.is_finite() { Some((ln_sum_exp(&ln_tail) - ls).exp()) } else { None };
    TruthValues { density, survival: ls.exp(), mrl }
}

/// `n` subjects from the six-component joint population, one covariate each.
pub fn gen_regression(rng: &mut RngHandle, n: usize) -> Result<Dataset> {
    gen_single(rng, &MixturePopulation::regression(), n)
}

/// `n` subjects from any single population.
pub fn gen_single(rng: &mut RngHandle, pop: &MixturePopulation, n: usize) -> Result<Dataset> {
    pop.validate()?;
    let rows = (0..n)
        .map(|_| {
            let (_, t, x) = pop.sample(rng);
            let o = Observation::observed(t);
            match x {
                Some(x) => o.with_covariate(x),
                None => o,
            }
        })
        .collect();
    validate_dataset(rows)
}

/// Fully observed two-group sample: `n_c` rows from `pc`, then `n_t` from `pt`.
pub fn gen_two_group(
    rng: &mut RngHandle,
    pc: &MixturePopulation,
    pt: &MixturePopulation,
    n_c: usize,
    n_t: usize,
) -> Result<Dataset> {
    pc.validate()?;
    pt.validate()?;
    let mut rows = Vec::with_capacity(n_c + n_t);
    for (pop, n, g) in [(pc, n_c, Group::C), (pt, n_t, Group::T)] {
        for _ in 0..n {
            rows.push(Observation::observed(pop.sample(rng).1).in_group(g));
        }
    }
    validate_dataset(rows)
}

pub fn gen_sim1(rng: &mut RngHandle, n_c: usize, n_t: usize) -> Result<Dataset> {
    gen_two_group(rng, &MixturePopulation::sim1_c(), &MixturePopulation::sim1_t(), n_c, n_t)
}

pub fn gen_sim2(rng: &mut RngHandle, n_c: usize, n_t: usize) -> Result<Dataset> {
    gen_two_group(rng, &MixturePopulation::sim2_c(), &MixturePopulation::sim2_t(), n_c, n_t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "snake_case")]
pub enum Censoring {
    None,
    Uniform { lo: f64, hi: f64 },
    Fixed { at: f64 },
}

/// Right censor each row whose drawn censoring time falls below its event time.
pub fn apply_censoring(rng: &mut RngHandle, data: &Dataset, mechanism: Censoring) -> Result<Dataset> {
    match mechanism {
        Censoring::Uniform { lo, hi } if !(lo < hi && lo >= 0.0) => {
            return Err(Error::Config(alloc::format!("censoring interval [{lo}, {hi}] is empty")))
        }
        Censoring::Fixed { at } if !(at > 0.0) => {
            return Err(Error::Config("fixed censoring time must be positive".into()))
        }
        _ => {}
    }
    let mut out = data.clone();
    for r in &mut out.rows {
        let c = match mechanism {
            Censoring::None => continue,
            Censoring::Uniform { lo, hi } => sample_uniform(rng, lo, hi).max(f64::MIN_POSITIVE),
            Censoring::Fixed { at } => at,
        };
        if !r.censored && c < r.time {
            r.time = c;
            r.censored = true;
        }
    }
    if matches!(mechanism, Censoring::None) {
        return Ok(out);
    }
    validate_dataset(out.rows)
}

/// Equally spaced grid of `n` points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::inversion_survival;
    use crate::quadrature::{integrate, integrate_to_inf};

    #[test]
    fn presets_are_valid() {
        for p in [
            MixturePopulation::regression(),
            MixturePopulation::sim1_c(),
            MixturePopulation::sim1_t(),
            MixturePopulation::sim2_c(),
            MixturePopulation::sim2_t(),
        ] {
            p.validate().unwrap();
        }
    }

    #[test]
    fn exponential_population_has_constant_mrl() {
        let p = MixturePopulation::weibull(&[(1.0, 1.0, 3.0)]);
        for t in [0.0, 1.0, 10.0, 100.0] {
            assert!((p.truth(t, None).mrl.unwrap() - 3.0).abs() < 1e-10);
        }
        let g = MixturePopulation::gamma_normal(&[1.0], &[0.5], &[0.0], &[1.0], &[1.0]);
        assert!((g.truth(7.0, Some(1.0)).mrl.unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn sim1_mrl_at_zero_is_weibull_mean() {
        let p = MixturePopulation::sim1_c();
        let mean = 0.7 * 8.0 * ln_gamma(1.5).exp()
            + 0.1 * 10.0 * ln_gamma(1.0 + 1.0 / 3.0).exp()
            + 0.05 * 30.0 * ln_gamma(1.25).exp()
            + 0.15 * 40.0 * ln_gamma(1.125).exp();
        let tv = p.truth(0.0, None);
        assert_eq!(tv.survival, 1.0);
        assert!((tv.mrl.unwrap() - mean).abs() < 1e-12 * mean);
    }

    #[test]
    fn mrl_matches_quadrature() {
        for (p, x0) in [(MixturePopulation::sim2_t(), None), (MixturePopulation::regression(), Some(3.0))] {
            for t in [0.5, 5.0, 20.0] {
                let tv = p.truth(t, x0);
                let q = integrate_to_inf(|u| p.truth(u, x0).survival, t, 1e-14, 1e-11) / tv.survival;
                assert!((tv.mrl.unwrap() - q).abs() < 1e-8 * q, "t={t}: {:?} vs {q}", tv.mrl);
            }
        }
    }

    #[test]
    fn density_and_survival_agree() {
        let p = MixturePopulation::sim2_c();
        for t in [1.0, 4.0, 12.0, 30.0] {
            let f = integrate(|u| p.truth(u, None).density, 0.0, t, 1e-13, 1e-12);
            assert!((1.0 - f - p.truth(t, None).survival).abs() < 1e-8);
        }
    }

    #[test]
    fn truth_round_trips_through_inversion() {
        let p = MixturePopulation::sim1_t();
        let hi = p.survival_quantile(1e-3, None);
        let grid = linspace(0.0, hi, 2000);
        let m: Vec<f64> = grid.iter().map(|&t| p.truth(t, None).mrl.unwrap()).collect();
        let s = inversion_survival(&grid, &m).unwrap();
        for (t, sv) in grid.iter().zip(&s) {
            assert!((sv - p.truth(*t, None).survival).abs() < 1e-4);
        }
    }

    #[test]
    fn regression_covariate_mean() {
        let d = gen_regression(&mut RngHandle::new(5), 200_000).unwrap();
        let q = [0.28, 0.1, 0.25, 0.21, 0.11, 0.05];
        let m = [-12.0, -8.0, 0.0, 12.0, 18.0, 21.0];
        let s = [6.0f64, 5.0, 4.0, 5.0, 3.0, 2.0];
        let mean: f64 = q.iter().zip(&m).map(|(a, b)| a * b).sum();
        let second: f64 = (0..6).map(|i| q[i] * (m[i] * m[i] + s[i] * s[i])).sum();
        let sd = (second - mean * mean).sqrt();
        let xbar = d.rows.iter().map(|r| r.covariate.unwrap()).sum::<f64>() / d.n() as f64;
        assert!((xbar - mean).abs() < 3.0 * sd / (d.n() as f64).sqrt());
        assert!(d.rows.iter().all(|r| r.time > 0.0));
    }

    #[test]
    fn sim_sizes_and_groups() {
        let d = gen_sim1(&mut RngHandle::new(7), 250, 100).unwrap();
        assert_eq!(d.n(), 350);
        assert_eq!(d.group_rows[0].len(), 250);
        assert_eq!(d.group_rows[1].len(), 100);
        assert!(!d.has_covariate);
    }

    #[test]
    fn first_component_median() {
        let p = MixturePopulation::sim1_c();
        let mut rng = RngHandle::new(11);
        let mut ts: Vec<f64> = (0..200_000).map(|_| p.sample(&mut rng)).filter(|s| s.0 == 0).map(|s| s.1).collect();
        ts.sort_by(f64::total_cmp);
        let med = ts[ts.len() / 2];
        let truth = 8.0 * core::f64::consts::LN_2.sqrt();
        // sd of the sample median ≈ 1/(2 f(med) √n)
        let f = 2.0 / 8.0 * (truth / 8.0) * 0.5;
        assert!((med - truth).abs() < 4.0 / (2.0 * f * (ts.len() as f64).sqrt()));
    }

    #[test]
    fn censoring_mechanisms() {
        let mut rng = RngHandle::new(3);
        let d = gen_single(&mut rng, &MixturePopulation::weibull(&[(1.0, 1.0, 1.0)]), 100_000).unwrap();
        assert_eq!(apply_censoring(&mut rng, &d, Censoring::None).unwrap(), d);
        let all = apply_censoring(&mut rng, &d, Censoring::Fixed { at: 1e-12 }).unwrap();
        assert!(all.rows.iter().all(|r| r.censored && r.time <= 1e-12));
        // P(C < T) for C ~ U(0, 2), T ~ Exp(1): (1 - e^{-2})/2
        let u = apply_censoring(&mut rng, &d, Censoring::Uniform { lo: 0.0, hi: 2.0 }).unwrap();
        let frac = u.rows.iter().filter(|r| r.censored).count() as f64 / u.n() as f64;
        let p = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((frac - p).abs() < 3.0 * (p * (1.0 - p) / u.n() as f64).sqrt());
        assert!(apply_censoring(&mut rng, &d, Censoring::Uniform { lo: 2.0, hi: 1.0 }).is_err());
    }
}
