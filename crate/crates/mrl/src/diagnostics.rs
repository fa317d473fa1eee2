//! Chain diagnostics: effective sample size and trace summaries.

use std::collections::BTreeMap;

use mrl_core::ewm::EwmParams;
use mrl_core::functionals::quantile_sorted;
use mrl_core::MixtureState;
use serde::{Deserialize, Serialize};

/// Effective sample size by Geyer's initial monotone positive sequence.
pub fn ess(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0 = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return n as f64;
    }
    let acf = |k: usize| x[..n - k].iter().zip(&x[k..]).map(|(a, b)| (a - mean) * (b - mean)).sum::<f64>() / n as f64 / c0;
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while k + 1 < n {
        let pair = acf(k) + acf(k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        k += 2;
    }
    // sum = 1 + 2 Σ ρ_k  (ρ_0 = 1 counted once)
    let tau = 2.0 * sum - 1.0;
    (n as f64 / tau.max(1.0 / n as f64)).min(n as f64 * (n as f64).log10().max(1.0))
}

/// Split potential scale reduction over equal-length chains.
pub fn split_rhat(chains: &[&[f64]]) -> Option<f64> {
    let half = chains.iter().map(|c| c.len() / 2).min()?;
    if half < 2 {
        return None;
    }
    let parts: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[c.len() - half..]]).collect();
    let m = parts.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = parts.iter().map(|p| p.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|v| (v - grand) * (v - grand)).sum::<f64>();
    let w = parts
        .iter()
        .zip(&means)
        .map(|(p, mu)| p.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if !(w > 0.0) {
        return None;
    }
    Some((((n - 1.0) / n * w + b / n) / w).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
    /// Sum of per-chain effective sample sizes.
    pub ess: f64,
    pub rhat: Option<f64>,
}

/// Summary of a scalar traced across `chains` (merge order, equal lengths).
pub fn summarize_trace(chains: &[Vec<f64>]) -> TraceSummary {
    let all: Vec<f64> = chains.concat();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let sd = (all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
    TraceSummary {
        mean,
        sd,
        q025: quantile_sorted(&sorted, 0.025),
        q500: quantile_sorted(&sorted, 0.5),
        q975: quantile_sorted(&sorted, 0.975),
        ess: chains.iter().map(|c| ess(c)).sum(),
        rhat: if chains.len() > 1 { split_rhat(&refs) } else { None },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub model: String,
    pub chains: usize,
    pub draws: usize,
    pub dataset_hash: Option<String>,
    /// Per-chain MH acceptance rates by block.
    pub acceptance: Vec<BTreeMap<String, f64>>,
    pub warnings: Vec<String>,
    pub traces: BTreeMap<String, TraceSummary>,
    /// Largest `|Σ_l w_l − 1|` over recorded draws and groups.
    pub max_weight_sum_error: Option<f64>,
}

fn occupied(d: &MixtureState) -> f64 {
    let mut used = vec![false; d.truncation()];
    for labels in &d.config {
        for &l in labels {
            used[l] = true;
        }
    }
    used.iter().filter(|&&u| u).count() as f64
}

/// Scalar traces of mixture draws, keyed by name.
pub fn mixture_traces(draws: &[MixtureState], two_group: bool) -> BTreeMap<String, Vec<f64>> {
    let mut t: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut push = |k: &str, v: f64| t.entry(k.to_string()).or_default().push(v);
    for d in draws {
        let h = &d.hyper;
        push("alpha", h.alpha);
        if two_group {
            push("b", h.b);
        }
        push("mu_theta", h.mu.0[0]);
        push("mu_phi", h.mu.0[1]);
        push("lambda", h.lambda);
        push("tau2", h.tau2);
        push("rho", h.rho);
        push("occupied_components", occupied(d));
    }
    t
}

pub fn ewm_traces(draws: &[EwmParams]) -> BTreeMap<String, Vec<f64>> {
    let mut t: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for d in draws {
        for (k, v) in [("alpha_w", d.alpha_w), ("theta_w", d.theta_w), ("beta0", d.beta0), ("beta1", d.beta1)] {
            t.entry(k.to_string()).or_default().push(v);
        }
    }
    t
}

pub fn max_weight_sum_error(draws: &[MixtureState]) -> f64 {
    draws
        .iter()
        .flat_map(|d| d.sticks.weights.iter().map(|w| (w.iter().sum::<f64>() - 1.0).abs()))
        .fold(0.0, f64::max)
}

/// Summaries of per-chain traces (each map from one chain, merge order).
pub fn summarize_traces(per_chain: &[BTreeMap<String, Vec<f64>>]) -> BTreeMap<String, TraceSummary> {
    let Some(first) = per_chain.first() else { return BTreeMap::new() };
    first
        .keys()
        .map(|k| {
            let chains: Vec<Vec<f64>> = per_chain.iter().map(|m| m[k].clone()).collect();
            (k.clone(), summarize_trace(&chains))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use mrl_core::RngHandle;

    fn normal_ar1(rng: &mut RngHandle, phi: f64, n: usize) -> Vec<f64> {
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                x = phi * x + mrl_core::distributions::sample_normal(rng, 0.0, 1.0);
                x
            })
            .collect()
    }

    #[test]
    fn ess_of_white_noise_is_near_n() {
        let x = normal_ar1(&mut RngHandle::new(1), 0.0, 20_000);
        let e = ess(&x);
        assert!((e / 20_000.0 - 1.0).abs() < 0.1, "{e}");
    }

    #[test]
    fn ess_of_ar1_matches_theory() {
        // ESS/n = (1 - φ)/(1 + φ)
        let phi = 0.8;
        let x = normal_ar1(&mut RngHandle::new(2), phi, 200_000);
        let ratio = ess(&x) / 200_000.0;
        let expect = (1.0 - phi) / (1.0 + phi);
        assert!((ratio / expect - 1.0).abs() < 0.15, "{ratio} vs {expect}");
    }

    #[test]
    fn rhat_flags_disagreeing_chains() {
        let mut rng = RngHandle::new(3);
        let a = normal_ar1(&mut rng, 0.0, 2000);
        let b = normal_ar1(&mut rng, 0.0, 2000);
        let r = split_rhat(&[&a, &b]).unwrap();
        assert!((r - 1.0).abs() < 0.02, "{r}");
        let shifted: Vec<f64> = b.iter().map(|v| v + 3.0).collect();
        assert!(split_rhat(&[&a, &shifted]).unwrap() > 1.5);
    }

    #[test]
    fn trace_summary_quantiles() {
        let chains = vec![(0..=100).map(f64::from).collect::<Vec<_>>()];
        let s = summarize_trace(&chains);
        assert_eq!(s.mean, 50.0);
        assert_eq!(s.q500, 50.0);
        assert!((s.q025 - 2.5).abs() < 1e-12);
        assert!(s.rhat.is_none());
    }
}
