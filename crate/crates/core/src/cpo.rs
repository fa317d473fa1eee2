//! Conditional predictive ordinates and their log-average summary.
//!
//! Both estimators are ratios of posterior averages,
//! `CPO_i ≈ Σ_j e^{a_ij} / Σ_j e^{b_ij}`:
//!
//! * EWM harmonic mean: `a = 0`, `b = -ln f(t_i | draw j)`, so
//!   `CPO_i = (M⁻¹ Σ_j 1/f_ij)⁻¹`.
//! * Mixture models: `a = ln Σ_l p_ls k_l(t_i) - ln k_{w_i}(t_i)` and
//!   `b = -ln k_{w_i}(t_i)`, with `k_{w_i}` the kernel of the component the
//!   observation is allocated to in draw `j`.
//!
//! Censored rows use survival in place of density throughout. With one
//! component the mixture ratio is identically one and both estimators agree.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::distributions::{gamma_ln_pdf_unchecked, gamma_ln_survival_unchecked};
use crate::error::{Error, Result};
use crate::ewm::{ewm_log_likelihood, EwmParams};
use crate::model::{AtomParams, Dataset, Group, MixtureState, Observation};
use crate::special::{ln_sum_exp, normal_ln_pdf};

/// Relative change of the running estimate over the last decile of draws
/// above which a CPO is flagged unstable.
pub const INSTABILITY_THRESHOLD: f64 = 0.01;

/// Streaming `ln Σ e^{x}`.
#[derive(Debug, Clone, Copy)]
struct LnSum {
    max: f64,
    sum: f64,
}

impl LnSum {
    fn new() -> Self {
        Self { max: f64::NEG_INFINITY, sum: 0.0 }
    }

    fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpoRow {
    pub group: Option<Group>,
    pub row: usize,
    pub time: f64,
    pub censored: bool,
    pub cpo: f64,
    pub log_cpo: f64,
    pub unstable: bool,
    /// Draws skipped because the likelihood of this row was zero.
    pub zero_likelihood_draws: usize,
    /// `ln CPO` from the first 10%, 20%, ..., 100% of the draws.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAlpml {
    pub group: Option<Group>,
    pub n: usize,
    /// Rows left out of the average because their CPO was zero or flagged.
    pub excluded: usize,
    pub alpml: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpoReport {
    pub model: String,
    pub rows: Vec<CpoRow>,
    pub groups: Vec<GroupAlpml>,
    /// Mean of log CPO over all rows (each group weighted by its size).
    pub alpml_weighted: f64,
    /// Unweighted mean of the per-group values.
    pub alpml_group_mean: f64,
    pub n_unstable: usize,
    pub note: Option<String>,
}

/// One row's ratio estimate from per-draw `(a, b)` terms.
fn ratio_estimate(terms: impl ExactSizeIterator<Item = (f64, f64)>) -> (f64, Vec<f64>, usize) {
    let m = terms.len();
    let mut num = LnSum::new();
    let mut den = LnSum::new();
    let mut trace = Vec::with_capacity(10);
    let mut next = 1;
    let mut skipped = 0;
    for (j, (a, b)) in terms.enumerate() {
        if b.is_finite() && a.is_finite() {
            num.add(a);
            den.add(b);
        } else {
            skipped += 1;
        }
        while next <= 10 && j + 1 >= (m * next).div_ceil(10) {
            trace.push(num.value() - den.value());
            next += 1;
        }
    }
    (num.value() - den.value(), trace, skipped)
}

fn unstable(trace: &[f64]) -> bool {
    match trace {
        [.., a, b] => !(a.is_finite() && b.is_finite()) || ((b - a).exp() - 1.0).abs() > INSTABILITY_THRESHOLD,
        _ => false,
    }
}

fn build_row(data: &Dataset, i: usize, ln_cpo: f64, trace: Vec<f64>, skipped: usize) -> CpoRow {
    let o = &data.rows[i];
    let unstable = skipped > 0 || unstable(&trace) || !ln_cpo.is_finite();
    CpoRow {
        group: o.group,
        row: i,
        time: o.time,
        censored: o.censored,
        cpo: ln_cpo.exp(),
        log_cpo: ln_cpo,
        unstable,
        zero_likelihood_draws: skipped,
        trace,
    }
}

/// Harmonic-mean CPO for every row under EWM posterior draws.
pub fn cpo_ewm(draws: &[EwmParams], data: &Dataset) -> Result<CpoReport> {
    if draws.is_empty() {
        return Err(Error::Config("CPO needs at least one draw".into()));
    }
    let rows = (0..data.n())
        .map(|i| {
            let o = &data.rows[i];
            let (l, tr, sk) = ratio_estimate(draws.iter().map(|p| (0.0, -ewm_log_likelihood(p, o))));
            build_row(data, i, l, tr, sk)
        })
        .collect();
    Ok(report("ewm", data, rows))
}

/// Log kernel of one atom at one row: gamma density (or survival when
/// censored), times the covariate density when the fit used covariates.
fn ln_kernel(a: &AtomParams, o: &Observation, with_cov: bool) -> f64 {
    let (shape, rate) = (a.theta.exp(), a.phi.exp());
    let lt = if o.censored {
        gamma_ln_survival_unchecked(o.time, shape, rate)
    } else {
        gamma_ln_pdf_unchecked(o.time, shape, rate)
    };
    match (with_cov, o.covariate) {
        (true, Some(x)) => lt + normal_ln_pdf(x, a.beta, a.kappa2),
        _ => lt,
    }
}

/// Slot and within-slot position of every row in a draw with `n_slots` groups.
fn positions(data: &Dataset, n_slots: usize) -> Vec<(usize, usize)> {
    let mut pos = vec![(0, 0); data.n()];
    if n_slots == 1 {
        for (i, p) in pos.iter_mut().enumerate() {
            *p = (0, i);
        }
    } else {
        for (s, rows) in data.group_rows.iter().enumerate() {
            for (k, &i) in rows.iter().enumerate() {
                pos[i] = (s, k);
            }
        }
    }
    pos
}

/// Mixture-model CPO from stored weights, atoms and allocations.
///
/// `with_covariate` should match how the chain was fitted.
pub fn cpo_mixture(draws: &[MixtureState], data: &Dataset, with_covariate: bool, model: &str) -> Result<CpoReport> {
    let first = draws.first().ok_or_else(|| Error::Config("CPO needs at least one draw".into()))?;
    let n_slots = first.n_groups();
    if n_slots > 1 && n_slots != data.n_groups() {
        return Err(Error::Config("chain and dataset disagree on the number of groups".into()));
    }
    let pos = positions(data, n_slots);
    for d in draws {
        if d.n_groups() != n_slots || (0..n_slots).any(|s| d.config[s].len() != pos.iter().filter(|p| p.0 == s).count()) {
            return Err(Error::Config("stored allocations do not match the dataset".into()));
        }
    }
    let mut rows = Vec::with_capacity(data.n());
    let mut ln_k = Vec::new();
    let mut terms = Vec::with_capacity(draws.len());
    for (i, &(s, k)) in pos.iter().enumerate() {
        let o = &data.rows[i];
        terms.clear();
        for d in draws {
            ln_k.clear();
            ln_k.extend(d.sticks.weights[s].iter().zip(&d.atoms).map(|(p, a)| p.ln() + ln_kernel(a, o, with_covariate)));
            let mix = ln_sum_exp(&ln_k);
            let focal = ln_kernel(&d.atoms[d.config[s][k]], o, with_covariate);
            terms.push((mix - focal, -focal));
        }
        let (l, tr, sk) = ratio_estimate(terms.iter().copied());
        rows.push(build_row(data, i, l, tr, sk));
    }
    Ok(report(model, data, rows))
}

pub fn cpo_ddpmm(draws: &[MixtureState], data: &Dataset, with_covariate: bool) -> Result<CpoReport> {
    cpo_mixture(draws, data, with_covariate, "ddpmm")
}

fn report(model: &str, data: &Dataset, rows: Vec<CpoRow>) -> CpoReport {
    let mut r = CpoReport {
        model: model.into(),
        rows,
        groups: Vec::new(),
        alpml_weighted: f64::NAN,
        alpml_group_mean: f64::NAN,
        n_unstable: 0,
        note: None,
    };
    r.n_unstable = r.rows.iter().filter(|x| x.unstable).count();
    if r.n_unstable > 0 {
        r.note = Some(alloc::format!(
            "{} unstable CPO value(s); refit without those rows for a direct estimate",
            r.n_unstable
        ));
    }
    let (groups, w, m) = alpml_parts(&r.rows, data);
    r.groups = groups;
    r.alpml_weighted = w;
    r.alpml_group_mean = m;
    r
}

/// `ALPML_s = n_s⁻¹ Σ ln CPO_is` over rows with a positive, finite CPO.
pub fn alpml(report: &CpoReport) -> Vec<GroupAlpml> {
    report.groups.clone()
}

fn alpml_parts(rows: &[CpoRow], data: &Dataset) -> (Vec<GroupAlpml>, f64, f64) {
    let mut groups = Vec::new();
    let mut all = (0.0, 0usize);
    for (g, idx) in data.groups.iter().zip(&data.group_rows) {
        let mut sum = 0.0;
        let mut used = 0;
        for &i in idx {
            let l = rows[i].log_cpo;
            if l.is_finite() {
                sum += l;
                used += 1;
            }
        }
        all.0 += sum;
        all.1 += used;
        groups.push(GroupAlpml {
            group: *g,
            n: idx.len(),
            excluded: idx.len() - used,
            alpml: if used > 0 { sum / used as f64 } else { f64::NAN },
        });
    }
    let present: Vec<f64> = groups.iter().filter(|g| g.n > 0).map(|g| g.alpml).collect();
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    (groups, all.0 / all.1 as f64, mean)
}
