//! Two-group dependent DP mixture: common atoms, and stick fractions
//! `(ζ_C, ζ_T) = (UW, VW)` coupled through a Kotz bivariate beta.
//!
//! The stick fractions are updated by slice sampling, which turns each of
//! `U`, `V`, `W` into a beta draw restricted to an interval. `(α, b)` move
//! jointly by random-walk Metropolis-Hastings on `(log α, logit b)`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::distributions::{open01, sample_truncated_beta, KotzBeta, TruncationFlag};
use crate::dpmm::{
    acceptance_warning, initial_atoms, initial_labels, prepare, update_atoms_pooled,
    update_config_grouped, update_hypers, AtomMh, DpmmPriorConfig, GroupData,
};
use crate::error::{Error, Result};
use crate::mcmc::{accept, AcceptanceCounter, AdaptiveProposal, McmcSettings};
use crate::model::{cluster_counts, ChainMeta, ChainOutput, Dataset, MixtureState, StickState};
use crate::rng::RngHandle;
use crate::special::ln_beta;

/// Slice variables of the last stick update, kept in log form because
/// `(1 - UW)^M` underflows for well-populated components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceLatents {
    pub ln_nu: Vec<f64>,
    pub ln_gamma: Vec<f64>,
}

/// Upper bound on `ζ` implied by a slice variable: `1 - ν^{1/M}`, or 1 when `M = 0`.
pub fn slice_bound(ln_slice: f64, count: usize) -> f64 {
    if count == 0 {
        1.0
    } else {
        -(ln_slice / count as f64).exp_m1()
    }
}

#[derive(Debug, Clone)]
pub struct DdpSampler {
    data: Vec<GroupData>,
    has_covariate: bool,
    prior: DpmmPriorConfig,
    settings: McmcSettings,
    mh: AtomMh,
    ab_proposal: AdaptiveProposal<2>,
    ab_counter: AcceptanceCounter,
    degenerate_draws: u64,
    fixed_alpha_b: Option<(f64, f64)>,
}

impl DdpSampler {
    /// `data` must carry a group column; an empty dataset gives a prior-only sampler.
    pub fn new(data: &Dataset, prior: DpmmPriorConfig, settings: McmcSettings) -> Result<Self> {
        prior.validate()?;
        settings.validate()?;
        let groups = if data.n_groups() == 2 {
            prepare(data)
        } else if data.n() == 0 {
            let empty = GroupData { t: Vec::new(), ln_t: Vec::new(), censored: Vec::new(), x: None };
            vec![empty.clone(), empty]
        } else {
            return Err(Error::Config("the dependent model needs a two-group dataset".into()));
        };
        Ok(Self {
            data: groups,
            has_covariate: data.has_covariate,
            prior,
            settings,
            mh: AtomMh::new(settings.atom_proposal, settings.step_scale, prior.truncation),
            ab_proposal: AdaptiveProposal::new([[0.1, 0.0], [0.0, 0.4]], settings.step_scale),
            ab_counter: AcceptanceCounter::default(),
            degenerate_draws: 0,
            fixed_alpha_b: None,
        })
    }

    /// Hold `(α, b)` at the given values instead of sampling them.
    pub fn with_fixed_alpha_b(mut self, alpha: f64, b: f64) -> Result<Self> {
        KotzBeta::new(alpha, b)?;
        self.fixed_alpha_b = Some((alpha, b));
        Ok(self)
    }

    pub fn prior(&self) -> &DpmmPriorConfig {
        &self.prior
    }

    pub fn degenerate_draws(&self) -> u64 {
        self.degenerate_draws
    }

    pub fn init_state(&mut self, rng: &mut RngHandle) -> MixtureState {
        let l = self.prior.truncation;
        let mut hyper = self.prior.prior_means();
        if let Some((a, b)) = self.fixed_alpha_b {
            hyper.alpha = a;
            hyper.b = b;
        }
        let config = initial_labels(&self.data, l);
        let atoms = initial_atoms(&self.data, &config, &hyper, l, rng);
        let kotz = KotzBeta::new(hyper.alpha, hyper.b).expect("prior means are in range");
        let draws: Vec<_> = (0..l - 1).map(|_| kotz.sample(rng)).collect();
        let mut sticks = StickState::from_zeta(vec![
            draws.iter().map(|d| d.zeta_c).collect(),
            draws.iter().map(|d| d.zeta_t).collect(),
        ])
        .expect("Kotz draws lie in (0, 1)");
        sticks.latent_uvw = draws.iter().map(|d| [d.u, d.v, d.w]).collect();
        let mut state = MixtureState { atoms, sticks, config, hyper, imputed_times: BTreeMap::new() };
        self.update_zeta_slice(&mut state, rng);
        state
    }

    pub fn update_shared_atoms(&mut self, state: &mut MixtureState, rng: &mut RngHandle) {
        update_atoms_pooled(state, &self.data, &mut self.mh, rng);
    }

    pub fn update_config_grouped(&self, state: &mut MixtureState, rng: &mut RngHandle) {
        update_config_grouped(state, &self.data, rng);
    }

    /// Slice update of every `(U_l, V_l, W_l)` in index order, then both weight vectors.
    pub fn update_zeta_slice(&mut self, state: &mut MixtureState, rng: &mut RngHandle) -> SliceLatents {
        let counts = cluster_counts(state);
        let (mc, mt) = (&counts[0], &counts[1]);
        let alpha = state.hyper.alpha;
        let b = state.hyper.b;
        let k = state.truncation() - 1;
        let mut rest_c: usize = mc.iter().sum();
        let mut rest_t: usize = mt.iter().sum();
        let mut latents = SliceLatents { ln_nu: vec![0.0; k], ln_gamma: vec![0.0; k] };

        for l in 0..k {
            rest_c -= mc[l];
            rest_t -= mt[l];
            let [mut u, mut v, mut w] = state.sticks.latent_uvw[l];
            let ln_nu = open01(rng).ln() + mc[l] as f64 * (-u * w).ln_1p();
            let ln_gam = open01(rng).ln() + mt[l] as f64 * (-v * w).ln_1p();
            latents.ln_nu[l] = ln_nu;
            latents.ln_gamma[l] = ln_gam;
            let bound_c = slice_bound(ln_nu, mc[l]);
            let bound_t = slice_bound(ln_gam, mt[l]);

            u = self.restricted_beta(rng, rest_c as f64 + alpha, 1.0 - b, bound_c / w, u);
            v = self.restricted_beta(rng, rest_t as f64 + alpha, 1.0 - b, bound_t / w, v);
            let w_hi = (bound_c / u).min(bound_t / v);
            w = self.restricted_beta(rng, (rest_c + rest_t) as f64 + alpha + 1.0 - b, b, w_hi, w);

            state.sticks.latent_uvw[l] = [u, v, w];
            state.sticks.zeta[0][l] = (u * w).max(f64::MIN_POSITIVE);
            state.sticks.zeta[1][l] = (v * w).max(f64::MIN_POSITIVE);
        }
        state.sticks.refresh_weights();
        latents
    }

    fn restricted_beta(&mut self, rng: &mut RngHandle, a: f64, b: f64, hi: f64, current: f64) -> f64 {
        match sample_truncated_beta(rng, a, b, 0.0, hi.min(1.0)) {
            Ok(d) => {
                if d.flag != TruncationFlag::Clean {
                    self.degenerate_draws += 1;
                }
                d.value
            }
            Err(_) => {
                self.degenerate_draws += 1;
                current
            }
        }
    }

    /// Log of the `(α, b)` full conditional on the `(log α, logit b)` scale,
    /// including the Jacobian `α b (1-b)`.
    pub fn ln_alpha_b_target(&self, state: &MixtureState, ln_alpha: f64, logit_b: f64) -> f64 {
        let alpha = ln_alpha.exp();
        let b = 1.0 / (1.0 + (-logit_b).exp());
        let one_m_b = 1.0 / (1.0 + logit_b.exp());
        if !(alpha > 0.0 && alpha.is_finite() && b > 0.0 && one_m_b > 0.0) {
            return f64::NEG_INFINITY;
        }
        let mut s = [0.0; 6];
        for [u, v, w] in &state.sticks.latent_uvw {
            s[0] += u.ln() + v.ln();
            s[1] += (-u).ln_1p() + (-v).ln_1p();
            s[2] += w.ln();
            s[3] += (-w).ln_1p();
        }
        let k = state.sticks.latent_uvw.len() as f64;
        let ln_prior = (self.prior.a_alpha - 1.0) * ln_alpha - self.prior.b_alpha * alpha;
        let ln_lik = (alpha - 1.0) * s[0] - b * s[1] - 2.0 * k * ln_beta(alpha, one_m_b)
            + (alpha - b) * s[2]
            + (b - 1.0) * s[3]
            - k * ln_beta(1.0 + alpha - b, b);
        ln_prior + ln_lik + ln_alpha + b.ln() + one_m_b.ln()
    }

    pub fn update_alpha_b(&mut self, state: &mut MixtureState, rng: &mut RngHandle) {
        let h = &state.hyper;
        let cur = [h.alpha.ln(), (h.b / (1.0 - h.b)).ln()];
        let prop = self.ab_proposal.propose(rng, &cur);
        let ln_ratio = self.ln_alpha_b_target(state, prop[0], prop[1])
            - self.ln_alpha_b_target(state, cur[0], cur[1]);
        let ok = accept(rng, ln_ratio);
        if ok {
            let b = 1.0 / (1.0 + (-prop[1]).exp());
            if b > 0.0 && b < 1.0 {
                state.hyper.alpha = prop[0].exp();
                state.hyper.b = b;
            }
        }
        self.ab_counter.record(ok);
        self.ab_proposal.observe(&[state.hyper.alpha.ln(), (state.hyper.b / (1.0 - state.hyper.b)).ln()]);
    }

    pub fn update_hypers(&self, state: &mut MixtureState, rng: &mut RngHandle) {
        update_hypers(state, &self.prior, rng);
    }

    pub fn sweep(&mut self, state: &mut MixtureState, rng: &mut RngHandle) {
        self.update_shared_atoms(state, rng);
        self.update_config_grouped(state, rng);
        self.update_zeta_slice(state, rng);
        if self.fixed_alpha_b.is_none() {
            self.update_alpha_b(state, rng);
        }
        self.update_hypers(state, rng);
    }

    /// Forget the running moments gathered so far, keeping the current proposal.
    pub fn restart_adaptation(&mut self) {
        self.mh.restart();
        self.ab_proposal.restart();
    }

    pub fn freeze_adaptation(&mut self) {
        self.mh.freeze();
        self.ab_proposal.freeze();
    }

    pub fn acceptance(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            (String::from("theta_phi"), self.mh.counter.rate()),
            (String::from("alpha_b"), self.ab_counter.rate()),
        ])
        .into_iter()
        .filter(|(_, r)| !r.is_nan())
        .collect()
    }

    pub fn run(mut self, rng: &mut RngHandle) -> ChainOutput<MixtureState> {
        let mut state = self.init_state(rng);
        let mut draws = Vec::with_capacity(self.settings.n_retained());
        for it in 0..self.settings.iterations {
            if it == self.settings.adapt_until / 2 {
                self.restart_adaptation();
            }
            if it == self.settings.adapt_until {
                self.freeze_adaptation();
            }
            self.sweep(&mut state, rng);
            if self.settings.is_retained(it) {
                draws.push(state.clone());
            }
        }
        let acceptance = self.acceptance();
        let mut warnings: Vec<String> =
            acceptance.iter().filter_map(|(k, v)| acceptance_warning(k, *v)).collect();
        if self.degenerate_draws > 0 {
            warnings.push(alloc::format!(
                "{} restricted beta draws used a numerical fallback",
                self.degenerate_draws
            ));
        }
        ChainOutput {
            meta: ChainMeta {
                model: "ddpmm".into(),
                seed: rng.seed(),
                chain: 0,
                iterations: self.settings.iterations,
                burn_in: self.settings.burn_in,
                thinning: self.settings.thinning,
                truncation: self.prior.truncation,
                acceptance,
                dataset_hash: None,
                has_covariate: self.has_covariate,
                degenerate_draws: self.degenerate_draws,
                warnings,
            },
            draws,
        }
    }
}

pub fn run_chain_ddp(
    data: &Dataset,
    prior: &DpmmPriorConfig,
    settings: &McmcSettings,
    rng: &mut RngHandle,
) -> Result<ChainOutput<MixtureState>> {
    Ok(DdpSampler::new(data, *prior, *settings)?.run(rng))
}
