//! Multi-chain fitting and chain files.

use std::path::Path;

use clap::ValueEnum;
use mrl_core::ewm::{data_quantiles, elicit_priors, run_chain_ewm, EwmParams};
use mrl_core::{dpmm, ddp, ChainMeta, ChainOutput, Dataset, MixtureState, RngHandle};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::diagnostics::{self, ChainDiagnostics};
use crate::error::{CliError, Result};
use crate::io::{self, ChainHeader, CHAIN_FORMAT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// Single-group mixture over (time, covariate); groups are pooled.
    Dpmm,
    /// Two-group dependent mixture.
    Ddpmm,
    /// Exponentiated-Weibull regression on the group indicator.
    Ewm,
}

impl FitModel {
    pub fn name(self) -> &'static str {
        match self {
            FitModel::Dpmm => "dpmm",
            FitModel::Ddpmm => "ddpmm",
            FitModel::Ewm => "ewm",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [FitModel::Dpmm, FitModel::Ddpmm, FitModel::Ewm].into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Draws {
    Mixture(Vec<MixtureState>),
    Ewm(Vec<EwmParams>),
}

impl Draws {
    pub fn len(&self) -> usize {
        match self {
            Draws::Mixture(d) => d.len(),
            Draws::Ewm(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub header: ChainHeader,
    pub draws: Draws,
    pub diagnostics: ChainDiagnostics,
}

fn check_model(data: &Dataset, model: FitModel) -> Result<()> {
    match model {
        FitModel::Ddpmm if data.n() > 0 && !data.is_two_group() => Err(CliError::Precondition(
            "ddpmm needs a dataset whose group column holds both C and T".into(),
        )),
        FitModel::Ewm if data.n() == 0 => Err(CliError::Precondition("ewm needs at least one observation".into())),
        _ => Ok(()),
    }
}

fn run_one(data: &Dataset, model: FitModel, cfg: &RunConfig, rng: &mut RngHandle) -> Result<(ChainMeta, Draws)> {
    Ok(match model {
        FitModel::Dpmm => {
            let out = dpmm::run_chain(data, &cfg.prior, &cfg.mcmc, rng)?;
            (out.meta, Draws::Mixture(out.draws))
        }
        FitModel::Ddpmm => {
            let out = ddp::run_chain_ddp(data, &cfg.prior, &cfg.mcmc, rng)?;
            (out.meta, Draws::Mixture(out.draws))
        }
        FitModel::Ewm => {
            let mut priors = cfg.ewm.priors;
            let mut note = None;
            if cfg.ewm.elicit {
                match data_quantiles(data) {
                    Some((q10, q50, q90)) => {
                        let e = elicit_priors(q10, q50, q90);
                        priors = e.priors;
                        note = e.note;
                    }
                    None => note = Some("too few observed times to elicit EWM priors; defaults kept".into()),
                }
            }
            let mut out: ChainOutput<EwmParams> = run_chain_ewm(data, &priors, &cfg.mcmc, rng)?;
            out.meta.warnings.extend(note);
            (out.meta, Draws::Ewm(out.draws))
        }
    })
}

/// Runs `chains` independent chains concurrently (chain `i` on sub-stream `i`
/// of the configured seed) and merges them in chain order.
pub fn fit(data: &Dataset, model: FitModel, cfg: &RunConfig, chains: usize) -> Result<Fit> {
    if chains == 0 {
        return Err(CliError::Usage("--chains must be at least 1".into()));
    }
    cfg.validate()?;
    check_model(data, model)?;
    let root = RngHandle::new(cfg.mcmc.seed);
    let results: Vec<Result<(ChainMeta, Draws)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..chains)
            .map(|i| {
                let mut rng = root.substream(i as u64);
                s.spawn(move || run_one(data, model, cfg, &mut rng))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    let hash = io::dataset_hash(data);
    let mut metas = Vec::with_capacity(chains);
    let mut parts = Vec::with_capacity(chains);
    for (i, r) in results.into_iter().enumerate() {
        let (mut meta, draws) = r?;
        meta.seed = cfg.mcmc.seed;
        meta.chain = i as u32;
        meta.dataset_hash = Some(hash.clone());
        metas.push(meta);
        parts.push(draws);
    }
    Ok(merge(metas, parts))
}

fn merge(metas: Vec<ChainMeta>, parts: Vec<Draws>) -> Fit {
    let mut meta = metas[0].clone();
    let keys: std::collections::BTreeSet<&String> = metas.iter().flat_map(|m| m.acceptance.keys()).collect();
    meta.acceptance = keys
        .into_iter()
        .map(|key| {
            let rates: Vec<f64> = metas.iter().filter_map(|m| m.acceptance.get(key).copied()).collect();
            (key.clone(), rates.iter().sum::<f64>() / rates.len() as f64)
        })
        .collect();
    meta.degenerate_draws = metas.iter().map(|m| m.degenerate_draws).sum();
    let multi = metas.len() > 1;
    meta.warnings = metas
        .iter()
        .flat_map(|m| m.warnings.iter().map(move |w| if multi { format!("chain {}: {w}", m.chain) } else { w.clone() }))
        .collect();
    let two_group = meta.model == "ddpmm";
    let (draws, traces, weight_err) = match &parts[0] {
        Draws::Mixture(_) => {
            let per: Vec<Vec<MixtureState>> = parts
                .into_iter()
                .map(|p| match p {
                    Draws::Mixture(d) => d,
                    Draws::Ewm(_) => unreachable!("chains share a model"),
                })
                .collect();
            let traces: Vec<_> = per.iter().map(|d| diagnostics::mixture_traces(d, two_group)).collect();
            let all = per.concat();
            let err = diagnostics::max_weight_sum_error(&all);
            (Draws::Mixture(all), traces, Some(err))
        }
        Draws::Ewm(_) => {
            let per: Vec<Vec<EwmParams>> = parts
                .into_iter()
                .map(|p| match p {
                    Draws::Ewm(d) => d,
                    Draws::Mixture(_) => unreachable!("chains share a model"),
                })
                .collect();
            let traces: Vec<_> = per.iter().map(|d| diagnostics::ewm_traces(d)).collect();
            (Draws::Ewm(per.concat()), traces, None)
        }
    };
    let diagnostics = ChainDiagnostics {
        model: meta.model.clone(),
        chains: metas.len(),
        draws: draws.len(),
        dataset_hash: meta.dataset_hash.clone(),
        acceptance: metas.iter().map(|m| m.acceptance.clone()).collect(),
        warnings: meta.warnings.clone(),
        traces: diagnostics::summarize_traces(&traces),
        max_weight_sum_error: weight_err,
    };
    let header = ChainHeader { format: CHAIN_FORMAT.into(), meta, chains: metas, draws: draws.len() };
    Fit { header, draws, diagnostics }
}

pub fn write_fit(chain_path: &Path, diagnostics_path: &Path, fit: &Fit) -> Result<()> {
    match &fit.draws {
        Draws::Mixture(d) => io::write_chain(chain_path, &fit.header, d)?,
        Draws::Ewm(d) => io::write_chain(chain_path, &fit.header, d)?,
    }
    io::write_json(diagnostics_path, &fit.diagnostics)
}

/// Reads a chain file, choosing the draw type from the header's model.
pub fn read_fit_chain(path: &Path) -> Result<(ChainHeader, Draws)> {
    let header = io::read_chain_header(path)?;
    match FitModel::from_name(&header.meta.model) {
        Some(FitModel::Ewm) => {
            let (h, d) = io::read_chain(path)?;
            Ok((h, Draws::Ewm(d)))
        }
        Some(_) => {
            let (h, d) = io::read_chain(path)?;
            Ok((h, Draws::Mixture(d)))
        }
        None => Err(CliError::format(path, format!("unknown model `{}`", header.meta.model))),
    }
}
