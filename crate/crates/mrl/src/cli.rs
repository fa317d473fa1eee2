//! Subcommands: simulate, fit, functionals, compare, properties.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mrl_core::cpo::{cpo_ddpmm, cpo_ewm, cpo_mixture, CpoReport};
use mrl_core::ewm::{ewm_ln_density, ewm_ln_survival, ewm_mrl, EwmParams};
use mrl_core::functionals::{
    default_time_grid, prob_mrl_order, summarize, summarize_curves, CurveSummary, FunctionalKind, FunctionalRequest,
};
use mrl_core::properties::{property_grid, property_rows, PropertyRow};
use mrl_core::simulation::{
    apply_censoring, gen_regression, gen_sim1, gen_sim2, linspace, Censoring, MixturePopulation,
};
use mrl_core::{Dataset, Group, MixtureState, RngHandle};
use serde::{Deserialize, Serialize};

use crate::config::{Preset, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{self, TruthRow};
use crate::runner::{self, Draws, FitModel};

#[derive(Debug, Parser)]
#[command(name = "mrl", version, about = "Nonparametric Bayesian mean residual life regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset and its true functionals.
    Simulate(SimulateArgs),
    /// Run MCMC and write a chain file plus diagnostics.
    Fit(FitArgs),
    /// Posterior summaries of functionals from a chain file.
    Functionals(FunctionalsArgs),
    /// CPO and ALPML for one or more chains fitted to the same dataset.
    Compare(CompareArgs),
    /// Closed-form prior correlations against Monte Carlo.
    Properties(PropertiesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// Six-component gamma-by-normal population with one covariate.
    Regression,
    /// Two-group Weibull mixtures, first study.
    Sim1,
    /// Two-group Weibull mixtures, second study.
    Sim2,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Sample size of a single-group scenario.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n_c: Option<usize>,
    #[arg(long)]
    pub n_t: Option<usize>,
    /// `none`, `uniform:LO:HI` or `fixed:AT`.
    #[arg(long, default_value = "none", value_parser = parse_censoring)]
    pub censoring: Censoring,
    /// Points per truth curve.
    #[arg(long, default_value_t = 200)]
    pub truth_points: usize,
    /// Output directory for data.csv and truth.csv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn parse_censoring(s: &str) -> std::result::Result<Censoring, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |v: &str| v.parse::<f64>().map_err(|_| format!("bad number `{v}`"));
    let c = match parts.as_slice() {
        ["none"] => Censoring::None,
        ["uniform", lo, hi] => Censoring::Uniform { lo: num(lo)?, hi: num(hi)? },
        ["fixed", at] => Censoring::Fixed { at: num(at)? },
        _ => return Err("expected none, uniform:LO:HI or fixed:AT".into()),
    };
    match c {
        Censoring::Uniform { lo, hi } if !(0.0 <= lo && lo < hi) => Err("need 0 <= LO < HI".into()),
        Censoring::Fixed { at } if !(at > 0.0) => Err("need AT > 0".into()),
        c => Ok(c),
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset CSV; omitted means no observations (prior-only run).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: FitModel,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thinning: Option<usize>,
    #[arg(long)]
    pub adapt_until: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Chain JSON-lines output.
    #[arg(long)]
    pub out: PathBuf,
    /// Diagnostics JSON; defaults to the chain path with `.diagnostics.json`.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupArg {
    C,
    T,
    /// Both groups of a two-group chain.
    Both,
}

#[derive(Debug, Args)]
pub struct FunctionalsArgs {
    #[arg(long)]
    pub chain: PathBuf,
    /// Functional kinds (repeatable).
    #[arg(long = "kind", value_enum, required = true)]
    pub kinds: Vec<KindArg>,
    /// `LO:HI:N` equally spaced points, or a comma list.
    #[arg(long)]
    pub grid: Option<String>,
    /// Points of the default time grid (0 to the 99% predictive quantile).
    #[arg(long, default_value_t = 200)]
    pub grid_points: usize,
    /// Covariate values for conditional time functionals (comma list).
    #[arg(long)]
    pub covariates: Option<String>,
    #[arg(long, value_enum)]
    pub group: Option<GroupArg>,
    /// Comma list of quantile levels; an empty string gives mean curves only.
    #[arg(long, default_value = "0.025,0.5,0.975")]
    pub quantiles: String,
    /// Time at which `mrl-regression` is evaluated.
    #[arg(long, default_value_t = 0.0)]
    pub at_time: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Density,
    Survival,
    Hazard,
    Mrl,
    MeanRegression,
    MrlRegression,
}

impl KindArg {
    fn kind(self) -> FunctionalKind {
        match self {
            KindArg::Density => FunctionalKind::Density,
            KindArg::Survival => FunctionalKind::Survival,
            KindArg::Hazard => FunctionalKind::Hazard,
            KindArg::Mrl => FunctionalKind::Mrl,
            KindArg::MeanRegression => FunctionalKind::MeanRegression,
            KindArg::MrlRegression => FunctionalKind::MrlRegression,
        }
    }
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// The dataset every chain was fitted to.
    #[arg(long)]
    pub data: PathBuf,
    /// Chain files (repeatable).
    #[arg(long = "chain", required = true)]
    pub chains: Vec<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PropertiesArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_sticks: Option<usize>,
    #[arg(long)]
    pub n_prior: Option<usize>,
    #[arg(long)]
    pub truncation: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value = "properties.csv")]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a).map(|_| ()),
        Command::Fit(a) => fit(&a).map(|_| ()),
        Command::Functionals(a) => functionals(&a).map(|_| ()),
        Command::Compare(a) => compare(&a).map(|_| ()),
        Command::Properties(a) => properties(&a).map(|_| ()),
    }
}

fn announce(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

// ---------------------------------------------------------------------------
// simulate

fn truth_curves(
    rows: &mut Vec<TruthRow>,
    pop: &MixturePopulation,
    group: Option<Group>,
    x0: Option<f64>,
    points: usize,
) {
    let hi = pop.survival_quantile(0.01, x0);
    for t in linspace(0.0, hi, points.max(2)) {
        let v = pop.truth(t, x0);
        for (name, value) in [("density", Some(v.density)), ("survival", Some(v.survival)), ("mrl", v.mrl)] {
            rows.push(TruthRow { functional: name.into(), group, covariate: x0, grid: t, value });
        }
    }
}

/// Covariate values used for conditional truth curves of the regression scenario.
pub const REGRESSION_COVARIATES: [f64; 6] = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0];

pub fn simulate(a: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let mut rng = RngHandle::new(a.seed);
    let mut truth = Vec::new();
    let data = match a.scenario {
        Scenario::Regression => {
            let pop = MixturePopulation::regression();
            for x in REGRESSION_COVARIATES {
                truth_curves(&mut truth, &pop, None, Some(x), a.truth_points);
            }
            for x in linspace(-15.0, 20.0, a.truth_points.max(2)) {
                truth.push(TruthRow {
                    functional: "mean_regression".into(),
                    group: None,
                    covariate: None,
                    grid: x,
                    value: Some(pop.mean(Some(x))),
                });
            }
            gen_regression(&mut rng, a.n.unwrap_or(1500))?
        }
        Scenario::Sim1 | Scenario::Sim2 => {
            if a.n.is_some() {
                return Err(CliError::Usage("two-group scenarios take --n-c and --n-t, not --n".into()));
            }
            let (pc, pt, nt) = if a.scenario == Scenario::Sim1 {
                (MixturePopulation::sim1_c(), MixturePopulation::sim1_t(), 100)
            } else {
                (MixturePopulation::sim2_c(), MixturePopulation::sim2_t(), 250)
            };
            truth_curves(&mut truth, &pc, Some(Group::C), None, a.truth_points);
            truth_curves(&mut truth, &pt, Some(Group::T), None, a.truth_points);
            let (n_c, n_t) = (a.n_c.unwrap_or(250), a.n_t.unwrap_or(nt));
            if a.scenario == Scenario::Sim1 {
                gen_sim1(&mut rng, n_c, n_t)?
            } else {
                gen_sim2(&mut rng, n_c, n_t)?
            }
        }
    };
    let data = apply_censoring(&mut rng, &data, a.censoring)?;
    let data_path = a.out.join("data.csv");
    let truth_path = a.out.join("truth.csv");
    io::write_dataset(&data_path, &data)?;
    io::write_truth(&truth_path, &truth)?;
    let written = vec![data_path, truth_path];
    announce(&written);
    Ok(written)
}

// ---------------------------------------------------------------------------
// fit

pub fn fit_config(a: &FitArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::resolve(a.config.as_deref(), a.preset)?;
    let m = &mut cfg.mcmc;
    if let Some(v) = a.iterations {
        m.iterations = v;
    }
    if let Some(v) = a.burn_in {
        m.burn_in = v;
    }
    if let Some(v) = a.thinning {
        m.thinning = v;
    }
    if let Some(v) = a.seed {
        m.seed = v;
    }
    match a.adapt_until {
        Some(v) => m.adapt_until = v,
        None => m.adapt_until = m.adapt_until.min(m.burn_in),
    }
    if a.iterations.is_some() && a.burn_in.is_none() && m.burn_in >= m.iterations {
        m.burn_in = m.iterations / 5;
        m.adapt_until = m.adapt_until.min(m.burn_in);
    }
    if let Some(l) = a.truncation {
        cfg.prior.truncation = l;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(path: Option<&Path>) -> Result<Dataset> {
    match path {
        Some(p) => io::read_dataset(p),
        None => Ok(mrl_core::model::validate_dataset(Vec::new())?),
    }
}

pub fn diagnostics_path(chain: &Path) -> PathBuf {
    let stem = chain.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "chain".into());
    chain.with_file_name(format!("{stem}.diagnostics.json"))
}

pub fn fit(a: &FitArgs) -> Result<Vec<PathBuf>> {
    let cfg = fit_config(a)?;
    let data = load_data(a.data.as_deref())?;
    let result = runner::fit(&data, a.model, &cfg, a.chains)?;
    for w in &result.diagnostics.warnings {
        eprintln!("warning: {w}");
    }
    let diag = a.diagnostics.clone().unwrap_or_else(|| diagnostics_path(&a.out));
    runner::write_fit(&a.out, &diag, &result)?;
    let written = vec![a.out.clone(), diag];
    announce(&written);
    Ok(written)
}

// ---------------------------------------------------------------------------
// functionals

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<f64>().map_err(|_| CliError::Usage(format!("bad {what} value `{v}`"))))
        .collect()
}

/// `LO:HI:N` or a comma list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if let [lo, hi, n] = parts.as_slice() {
        let bad = || CliError::Usage(format!("bad grid `{s}`"));
        let lo: f64 = lo.parse().map_err(|_| bad())?;
        let hi: f64 = hi.parse().map_err(|_| bad())?;
        let n: usize = n.parse().map_err(|_| bad())?;
        if n < 2 || !(lo < hi) {
            return Err(bad());
        }
        return Ok(linspace(lo, hi, n));
    }
    let v = parse_list(s, "grid")?;
    if v.is_empty() {
        return Err(CliError::Usage("empty grid".into()));
    }
    Ok(v)
}

fn groups_for(header_model: &str, arg: Option<GroupArg>) -> Result<Vec<Option<Group>>> {
    let two = header_model != "dpmm";
    Ok(match (two, arg) {
        (false, None) => vec![None],
        (false, Some(_)) => return Err(CliError::Usage("a dpmm chain has no groups".into())),
        (true, None | Some(GroupArg::Both)) => vec![Some(Group::C), Some(Group::T)],
        (true, Some(GroupArg::C)) => vec![Some(Group::C)],
        (true, Some(GroupArg::T)) => vec![Some(Group::T)],
    })
}

fn ewm_curve(p: &EwmParams, kind: FunctionalKind, grid: &[f64], x: f64) -> Vec<Option<f64>> {
    grid.iter()
        .map(|&t| match kind {
            FunctionalKind::Density => Some(if t > 0.0 { ewm_ln_density(p, t, x).exp() } else { 0.0 }),
            FunctionalKind::Survival => Some(ewm_ln_survival(p, t, x).exp()),
            FunctionalKind::Hazard => {
                let ls = ewm_ln_survival(p, t, x);
                (t > 0.0 && ls.exp() >= mrl_core::ewm::EWM_TAIL_FLOOR).then(|| (ewm_ln_density(p, t, x) - ls).exp())
            }
            FunctionalKind::Mrl => ewm_mrl(p, t, x).ok(),
            _ => None,
        })
        .collect()
}

/// Default EWM time grid: 0 to the largest per-group 99% quantile of the posterior mean parameters.
fn ewm_default_grid(draws: &[EwmParams], n: usize) -> Vec<f64> {
    let m = draws.len() as f64;
    let mean = EwmParams {
        alpha_w: draws.iter().map(|d| d.alpha_w).sum::<f64>() / m,
        theta_w: draws.iter().map(|d| d.theta_w).sum::<f64>() / m,
        beta0: draws.iter().map(|d| d.beta0).sum::<f64>() / m,
        beta1: draws.iter().map(|d| d.beta1).sum::<f64>() / m,
    };
    let hi = [0.0, 1.0]
        .iter()
        .map(|&x| {
            // S(t) = 0.01  <=>  z = -ln(1 - 0.99^{1/θ}),  t = (z e^{-β0-β1 x})^{1/α}
            let z = -(1.0 - 0.99f64.powf(1.0 / mean.theta_w)).ln();
            (z.ln() - mean.beta0 - mean.beta1 * x).exp().powf(1.0 / mean.alpha_w)
        })
        .fold(0.0, f64::max);
    linspace(0.0, hi, n.max(2))
}

fn mixture_curves(a: &FunctionalsArgs, draws: &[MixtureState], model: &str, quantiles: &[f64]) -> Result<Vec<CurveSummary>> {
    let groups = groups_for(model, a.group)?;
    let covariates = a.covariates.as_deref().map(|s| parse_list(s, "covariate")).transpose()?;
    let user_grid = a.grid.as_deref().map(parse_grid).transpose()?;
    let mut out = Vec::new();
    let mut mrl_grid = None;
    for &g in &groups {
        for kind in a.kinds.iter().map(|k| k.kind()) {
            let grid = match (&user_grid, kind.grid_is_covariate()) {
                (Some(g), _) => g.clone(),
                (None, true) => {
                    return Err(CliError::Usage(format!("{} needs --grid over covariate values", kind.name())))
                }
                (None, false) => default_time_grid(draws, g, None, a.grid_points, 0.99),
            };
            if kind == FunctionalKind::Mrl && mrl_grid.is_none() {
                mrl_grid = Some(grid.clone());
            }
            let req = FunctionalRequest {
                kind,
                grid,
                covariate_values: covariates.clone(),
                group: g,
                quantiles: quantiles.to_vec(),
                at_time: a.at_time,
            };
            out.extend(summarize(draws, &req)?);
        }
    }
    if groups.len() == 2 {
        let grid = match (mrl_grid, &user_grid) {
            (Some(g), _) => g,
            (None, Some(g)) if !a.kinds.iter().all(|k| k.kind().grid_is_covariate()) => g.clone(),
            _ => default_time_grid(draws, Some(Group::C), None, a.grid_points, 0.99),
        };
        let xs: Vec<Option<f64>> = match &covariates {
            Some(v) => v.iter().map(|&x| Some(x)).collect(),
            None => vec![None],
        };
        for x0 in xs {
            out.push(CurveSummary {
                kind: FunctionalKind::ProbMrlOrder,
                group: None,
                covariate: x0,
                grid: grid.clone(),
                mean: prob_mrl_order(draws, &grid, x0),
                quantiles: Vec::new(),
                undefined_from: None,
            });
        }
    }
    Ok(out)
}

fn ewm_curves(a: &FunctionalsArgs, draws: &[EwmParams], quantiles: &[f64]) -> Result<Vec<CurveSummary>> {
    if a.covariates.is_some() {
        return Err(CliError::Usage("ewm chains take no --covariates".into()));
    }
    let groups = groups_for("ewm", a.group)?;
    let grid = match &a.grid {
        Some(s) => parse_grid(s)?,
        None => ewm_default_grid(draws, a.grid_points),
    };
    let mut out = Vec::new();
    for g in groups {
        let x = if g == Some(Group::T) { 1.0 } else { 0.0 };
        for kind in a.kinds.iter().map(|k| k.kind()) {
            if kind.grid_is_covariate() {
                return Err(CliError::Usage(format!("{} is not available for ewm chains", kind.name())));
            }
            let rows: Vec<_> = draws.iter().map(|p| ewm_curve(p, kind, &grid, x)).collect();
            out.push(summarize_curves(kind, g, None, &grid, &rows, quantiles));
        }
    }
    Ok(out)
}

pub fn functionals(a: &FunctionalsArgs) -> Result<Vec<PathBuf>> {
    let quantiles = parse_list(&a.quantiles, "quantile")?;
    if quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0)) || quantiles.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(CliError::Usage("quantiles must increase strictly inside (0, 1)".into()));
    }
    let (header, draws) = runner::read_fit_chain(&a.chain)?;
    if draws.is_empty() {
        return Err(CliError::Precondition(format!("{} holds no draws", a.chain.display())));
    }
    let curves = match &draws {
        Draws::Mixture(d) => mixture_curves(a, d, &header.meta.model, &quantiles)?,
        Draws::Ewm(d) => ewm_curves(a, d, &quantiles)?,
    };
    let mut written = Vec::new();
    for c in &curves {
        if let Some(t) = c.undefined_from {
            eprintln!("note: {} truncated at {} (survival underflow)", io::curve_stem(c), t);
        }
        written.extend(io::write_curve(&a.out, c)?);
    }
    announce(&written);
    Ok(written)
}

// ---------------------------------------------------------------------------
// compare

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub chain: String,
    pub report: String,
    pub n: usize,
    pub draws: usize,
    /// Mean log CPO over all rows.
    pub alpml: f64,
    /// Mean of the per-group ALPML values.
    pub alpml_group_mean: f64,
    pub groups: Vec<mrl_core::cpo::GroupAlpml>,
    pub n_unstable: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub dataset_hash: String,
    pub models: Vec<ModelSummary>,
}

pub fn compare(a: &CompareArgs) -> Result<CompareSummary> {
    let data = io::read_dataset(&a.data)?;
    let hash = io::dataset_hash(&data);
    let headers: Vec<_> = a.chains.iter().map(|p| io::read_chain_header(p)).collect::<Result<_>>()?;
    for (p, h) in a.chains.iter().zip(&headers) {
        let ch = h.meta.dataset_hash.as_deref().unwrap_or("<none>");
        if ch != hash {
            return Err(CliError::Precondition(format!(
                "{} was fitted to dataset {ch}, but {} hashes to {hash}; comparisons must share data",
                p.display(),
                a.data.display()
            )));
        }
    }
    let mut models = Vec::new();
    let mut written = Vec::new();
    let mut used = std::collections::BTreeMap::<String, usize>::new();
    for path in &a.chains {
        let (header, draws) = runner::read_fit_chain(path)?;
        if draws.is_empty() {
            return Err(CliError::Precondition(format!("{} holds no draws", path.display())));
        }
        let report: CpoReport = match &draws {
            Draws::Ewm(d) => cpo_ewm(d, &data)?,
            Draws::Mixture(d) if header.meta.model == "ddpmm" => cpo_ddpmm(d, &data, header.meta.has_covariate)?,
            Draws::Mixture(d) => cpo_mixture(d, &data, header.meta.has_covariate, &header.meta.model)?,
        };
        let k = used.entry(report.model.clone()).or_default();
        let name = if *k == 0 { format!("cpo_{}.csv", report.model) } else { format!("cpo_{}_{}.csv", report.model, k) };
        *k += 1;
        let out = a.out.join(&name);
        io::write_cpo(&out, &report)?;
        written.push(out);
        models.push(ModelSummary {
            model: report.model.clone(),
            chain: path.display().to_string(),
            report: name,
            n: report.rows.len(),
            draws: draws.len(),
            alpml: report.alpml_weighted,
            alpml_group_mean: report.alpml_group_mean,
            groups: report.groups.clone(),
            n_unstable: report.n_unstable,
            note: report.note.clone(),
        });
    }
    let summary = CompareSummary { dataset_hash: hash, models };
    let sp = a.out.join("summary.json");
    io::write_json(&sp, &summary)?;
    written.push(sp);
    announce(&written);
    for m in &summary.models {
        println!("{:<8} ALPML {:>10.4}  unstable CPOs {}", m.model, m.alpml, m.n_unstable);
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// properties

/// Runs the grid on `threads` workers; output order and values do not depend on it.
pub fn property_table_parallel(s: &mrl_core::properties::PropertySettings, threads: usize) -> Result<Vec<PropertyRow>> {
    let grid = property_grid(s)?;
    let root = RngHandle::new(s.seed);
    let threads = threads.clamp(1, grid.len().max(1));
    let mut slots: Vec<Option<Result<Vec<PropertyRow>>>> = (0..grid.len()).map(|_| None).collect();
    std::thread::scope(|sc| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                let grid = &grid;
                let root = &root;
                sc.spawn(move || {
                    grid.iter()
                        .skip(w)
                        .step_by(threads)
                        .map(|&(i, p)| (i as usize, property_rows(p, s, &mut root.substream(i)).map_err(CliError::from)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("property worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    let mut rows = Vec::new();
    for s in slots {
        rows.extend(s.expect("every grid point assigned")?);
    }
    Ok(rows)
}

pub fn properties(a: &PropertiesArgs) -> Result<Vec<PropertyRow>> {
    let mut cfg = RunConfig::resolve(a.config.as_deref(), None)?;
    let p = &mut cfg.properties;
    if let Some(v) = a.seed {
        p.seed = v;
    }
    if let Some(v) = a.n_sticks {
        p.n_sticks = v;
    }
    if let Some(v) = a.n_prior {
        p.n_prior = v;
    }
    if let Some(v) = a.truncation {
        p.truncation = v;
    }
    p.validate()?;
    let threads = a.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let rows = property_table_parallel(p, threads)?;
    io::write_properties(&a.out, &rows)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    println!("wrote {} ({} rows, {} outside {} MC SE)", a.out.display(), rows.len(), failed, p.tolerance_se);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn censoring_specs() {
        assert_eq!(parse_censoring("none").unwrap(), Censoring::None);
        assert_eq!(parse_censoring("uniform:0:5").unwrap(), Censoring::Uniform { lo: 0.0, hi: 5.0 });
        assert_eq!(parse_censoring("fixed:2.5").unwrap(), Censoring::Fixed { at: 2.5 });
        for bad in ["uniform:5:1", "fixed:-1", "gauss", "uniform:1"] {
            assert!(parse_censoring(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("-10, -5,0").unwrap(), vec![-10.0, -5.0, 0.0]);
        assert!(parse_grid("1:0:3").is_err());
        assert!(parse_grid("").is_err());
        assert!(parse_list("", "q").unwrap().is_empty());
    }

    #[test]
    fn parallel_table_matches_sequential() {
        let s = mrl_core::properties::PropertySettings {
            alphas: vec![1.0, 4.0],
            bs: vec![0.5],
            n_sticks: 2_000,
            n_prior: 400,
            truncation: 50,
            ..Default::default()
        };
        let seq = mrl_core::properties::property_table(&s).unwrap();
        assert_eq!(property_table_parallel(&s, 2).unwrap(), seq);
        assert_eq!(property_table_parallel(&s, 1).unwrap(), seq);
    }

    #[test]
    fn diagnostics_path_sits_next_to_chain() {
        assert_eq!(diagnostics_path(Path::new("out/c.jsonl")), PathBuf::from("out/c.diagnostics.json"));
    }
}
