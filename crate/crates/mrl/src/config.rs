//! Run configuration: one TOML file layered over a prior preset, then flag overrides.

use std::path::Path;

use clap::ValueEnum;
use mrl_core::dpmm::DpmmPriorConfig;
use mrl_core::ewm::EwmPriors;
use mrl_core::mcmc::McmcSettings;
use mrl_core::properties::PropertySettings;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Built-in prior sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Six-component regression example, L = 80.
    #[default]
    Regression,
    /// First two-group Weibull-mixture study, L = 40.
    Sim1,
    /// Second two-group Weibull-mixture study, L = 40.
    Sim2,
}

impl Preset {
    pub fn prior(self) -> DpmmPriorConfig {
        match self {
            Preset::Regression => DpmmPriorConfig::regression(),
            Preset::Sim1 => DpmmPriorConfig::simulation1(),
            Preset::Sim2 => DpmmPriorConfig::simulation2(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    preset: Option<Preset>,
    #[serde(default)]
    mcmc: Option<toml::Table>,
    #[serde(default)]
    prior: Option<toml::Table>,
    #[serde(default)]
    ewm: Option<toml::Table>,
    #[serde(default)]
    properties: Option<toml::Table>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EwmConfig {
    #[serde(flatten)]
    pub priors: EwmPriors,
    /// Center the priors on values matching the data's 10/50/90% quantiles.
    pub elicit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub mcmc: McmcSettings,
    pub prior: DpmmPriorConfig,
    pub ewm: EwmConfig,
    pub properties: PropertySettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_toml("", Path::new("<default>")).expect("empty config is valid")
    }
}

/// `base` with every key of `overlay` replaced.
fn layer<T: Serialize + for<'de> Deserialize<'de>>(base: &T, overlay: Option<toml::Table>, what: &str, origin: &Path) -> Result<T> {
    let Some(overlay) = overlay else {
        let v = toml::Value::try_from(base).map_err(|e| CliError::format(origin, format!("[{what}]: {e}")))?;
        return v.try_into().map_err(|e| CliError::format(origin, format!("[{what}]: {e}")));
    };
    let mut table = match toml::Value::try_from(base) {
        Ok(toml::Value::Table(t)) => t,
        _ => return Err(CliError::format(origin, format!("[{what}] defaults are not a table"))),
    };
    for (k, v) in overlay {
        if !table.contains_key(&k) {
            return Err(CliError::Usage(format!("{}: unknown key `{k}` in [{what}]", origin.display())));
        }
        table.insert(k, v);
    }
    toml::Value::Table(table).try_into().map_err(|e| CliError::Usage(format!("{}: [{what}]: {e}", origin.display())))
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("{}: {e}", origin.display())))?;
        let preset = raw.preset.unwrap_or_default();
        Ok(Self {
            preset,
            mcmc: layer(&McmcSettings::default(), raw.mcmc, "mcmc", origin)?,
            prior: layer(&preset.prior(), raw.prior, "prior", origin)?,
            ewm: layer(&EwmConfig::default(), raw.ewm, "ewm", origin)?,
            properties: layer(&PropertySettings::default(), raw.properties, "properties", origin)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// The config file when given, else the defaults; `preset` replaces the
    /// file's preset but keeps its explicit `[prior]` keys.
    pub fn resolve(path: Option<&Path>, preset: Option<Preset>) -> Result<Self> {
        let (text, origin) = match path {
            Some(p) => (std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?, p.to_path_buf()),
            None => (String::new(), "<default>".into()),
        };
        let mut raw: toml::Table = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", origin.display())))?;
        if let Some(p) = preset {
            raw.insert("preset".into(), toml::Value::try_from(p).expect("preset serializes"));
        }
        Self::from_toml(&toml::to_string(&raw).expect("table serializes"), &origin)
    }

    pub fn validate(&self) -> Result<()> {
        self.mcmc.validate()?;
        self.prior.validate()?;
        self.ewm.priors.validate()?;
        self.properties.validate()?;
        Ok(())
    }
}

/// Commented template for a preset, suitable as a starting config file.
pub fn template(preset: Preset) -> String {
    let p = preset.prior();
    let m = McmcSettings::default();
    let e = EwmPriors::default();
    let name = toml::Value::try_from(preset).expect("preset serializes");
    let v2 = |v: mrl_core::Vec2| format!("[{:?}, {:?}]", v.0[0], v.0[1]);
    let m2 = |m: mrl_core::Mat2| format!("[[{:?}, {:?}], [{:?}, {:?}]]", m.0[0][0], m.0[0][1], m.0[1][0], m.0[1][1]);
    format!(
        r#"# mrl run configuration. Keys left out fall back to the preset.
preset = {name}

[mcmc]
iterations = {it}
burn_in = {bi}
thinning = {th}
# multiplier c on the random-walk proposal covariances
step_scale = {ss:?}
# proposal covariances are frozen from this iteration on (must not exceed burn_in)
adapt_until = {au}
seed = {seed}
# "curvature" (Fisher-information scaled) or "adaptive" (chain covariance)
atom_proposal = "curvature"

[prior]
# truncation level L of the stick-breaking representation
truncation = {l}
# alpha ~ Gamma(a_alpha, rate b_alpha)
a_alpha = {aa:?}
b_alpha = {ba:?}
# (theta, phi) ~ N2(mu, Sigma) with mu ~ N2(a_mu, B_mu)
a_mu = {amu}
b_mu = {bmu}
# Sigma ~ inverse Wishart(a_Sigma, B_Sigma); prior mean B_Sigma / (a_Sigma - 3)
a_sigma = {asg:?}
b_sigma = {bsg}
# beta ~ N(lambda, tau2), lambda ~ N(a_lambda, b_lambda), tau2 ~ IG(a_tau, b_tau)
a_lambda = {al:?}
b_lambda = {bl:?}
a_tau = {at:?}
b_tau = {bt:?}
# kappa2 ~ IG(a_kappa, rho), rho ~ Gamma(a_rho, rate b_rho); a_kappa is a modelling choice
a_kappa = {ak:?}
a_rho = {ar:?}
b_rho = {br:?}

[ewm]
# beta0, beta1 ~ normal; both powers ~ exponential with the given means
beta0_mean = {b0m:?}
beta0_sd = {b0s:?}
beta1_mean = {b1m:?}
beta1_sd = {b1s:?}
alpha_mean = {am:?}
theta_mean = {tm:?}
# recenter the priors on the data's 10/50/90% quantiles before fitting
elicit = false
"#,
        it = m.iterations,
        bi = m.burn_in,
        th = m.thinning,
        ss = m.step_scale,
        au = m.adapt_until,
        seed = m.seed,
        l = p.truncation,
        aa = p.a_alpha,
        ba = p.b_alpha,
        amu = v2(p.a_mu),
        bmu = m2(p.b_mu),
        asg = p.a_sigma,
        bsg = m2(p.b_sigma),
        al = p.a_lambda,
        bl = p.b_lambda,
        at = p.a_tau,
        bt = p.b_tau,
        ak = p.a_kappa,
        ar = p.a_rho,
        br = p.b_rho,
        b0m = e.beta0_mean,
        b0s = e.beta0_sd,
        b1m = e.beta1_mean,
        b1s = e.beta1_sd,
        am = e.alpha_mean,
        tm = e.theta_mean,
    )
}
