//! Data model and sampler state shared by the DPMM and DDP samplers.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec2};

/// Experimental group of a two-group study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    C,
    T,
}

impl Group {
    pub fn index(self) -> usize {
        match self {
            Group::C => 0,
            Group::T => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Group> {
        match i {
            0 => Some(Group::C),
            1 => Some(Group::T),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Group::C => "C",
            Group::T => "T",
        }
    }

    pub fn swap(self) -> Group {
        match self {
            Group::C => Group::T,
            Group::T => Group::C,
        }
    }
}

/// One subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time: f64,
    /// True when the subject was right censored at `time`.
    pub censored: bool,
    pub covariate: Option<f64>,
    pub group: Option<Group>,
}

impl Observation {
    pub fn observed(time: f64) -> Self {
        Self { time, censored: false, covariate: None, group: None }
    }

    pub fn with_covariate(mut self, x: f64) -> Self {
        self.covariate = Some(x);
        self
    }

    pub fn in_group(mut self, g: Group) -> Self {
        self.group = Some(g);
        self
    }

    pub fn censored_at(time: f64) -> Self {
        Self { time, censored: true, covariate: None, group: None }
    }
}

/// Kernel parameters of one mixture component: `Γ(e^θ, e^φ) × N(β, κ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomParams {
    pub theta: f64,
    pub phi: f64,
    pub beta: f64,
    pub kappa2: f64,
}

impl AtomParams {
    pub fn shape(&self) -> f64 {
        self.theta.exp()
    }

    pub fn rate(&self) -> f64 {
        self.phi.exp()
    }

    /// Mean of the gamma kernel, `e^{θ-φ}`.
    pub fn mean_time(&self) -> f64 {
        (self.theta - self.phi).exp()
    }

    pub fn location(&self) -> Vec2 {
        Vec2::new(self.theta, self.phi)
    }

    pub fn is_valid(&self) -> bool {
        self.theta.is_finite() && self.phi.is_finite() && self.beta.is_finite() && self.kappa2 > 0.0
    }
}

/// Stick-breaking fractions and weights, one row per group.
///
/// `zeta[s]` has `L - 1` entries, `weights[s]` has `L`. `latent_uvw` holds
/// the Kotz factors `(U, V, W)` per stick and is empty for single-group fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickState {
    pub zeta: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub latent_uvw: Vec<[f64; 3]>,
    pub weights: Vec<Vec<f64>>,
}

impl StickState {
    pub fn from_zeta(zeta: Vec<Vec<f64>>) -> Result<Self> {
        let weights = zeta.iter().map(|z| stick_break(z)).collect::<Result<Vec<_>>>()?;
        Ok(Self { zeta, latent_uvw: Vec::new(), weights })
    }

    pub fn truncation(&self) -> usize {
        self.weights.first().map_or(0, |w| w.len())
    }

    pub fn n_groups(&self) -> usize {
        self.weights.len()
    }

    /// Recompute weights from `zeta` after an in-place update.
    pub fn refresh_weights(&mut self) {
        for (w, z) in self.weights.iter_mut().zip(&self.zeta) {
            stick_break_into(z, w);
        }
    }

    /// `Σ ln ζ` for group `s`, i.e. the log of the remainder weight.
    pub fn ln_remainder(&self, s: usize) -> f64 {
        self.zeta[s].iter().map(|z| z.ln()).sum()
    }
}

/// Hyperparameters shared by all atoms, plus the fixed κ² prior shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperstate {
    pub mu: Vec2,
    pub sigma: Mat2,
    pub lambda: f64,
    pub tau2: f64,
    pub rho: f64,
    pub alpha: f64,
    pub b: f64,
    pub a_kappa: f64,
}

impl Hyperstate {
    pub fn is_valid(&self) -> bool {
        self.sigma.is_spd()
            && self.tau2 > 0.0
            && self.rho > 0.0
            && self.alpha > 0.0
            && self.b > 0.0
            && self.b < 1.0
            && self.a_kappa > 0.0
    }
}

/// Full sampler state. Labels are zero-based atom indices, stored per group
/// in the row order given by [`Dataset::group_rows`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureState {
    pub atoms: Vec<AtomParams>,
    pub sticks: StickState,
    pub config: Vec<Vec<usize>>,
    pub hyper: Hyperstate,
    /// Latent event times for censored rows. Censoring is handled through the
    /// survival factor in the likelihood, so this stays empty by default.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub imputed_times: BTreeMap<usize, f64>,
}

impl MixtureState {
    pub fn truncation(&self) -> usize {
        self.atoms.len()
    }

    pub fn n_groups(&self) -> usize {
        self.sticks.n_groups()
    }

    pub fn weights(&self, group: usize) -> &[f64] {
        &self.sticks.weights[group]
    }
}

/// Occupancy counts `M_ls`, one vector of length `L` per group.
pub fn cluster_counts(state: &MixtureState) -> Vec<Vec<usize>> {
    let l = state.truncation();
    state
        .config
        .iter()
        .map(|labels| {
            let mut m = vec![0usize; l];
            for &w in labels {
                m[w] += 1;
            }
            m
        })
        .collect()
}

/// Truncated stick-breaking: `p_1 = 1-ζ_1`, `p_l = (1-ζ_l)∏_{r<l} ζ_r`,
/// with the remainder `∏ ζ_r` as the last weight.
pub fn stick_break(zeta: &[f64]) -> Result<Vec<f64>> {
    if let Some(z) = zeta.iter().find(|z| !(**z > 0.0 && **z < 1.0)) {
        return Err(Error::domain(
            "stick_break",
            alloc::format!("stick fraction {z} outside (0, 1)"),
        ));
    }
    let mut w = vec![0.0; zeta.len() + 1];
    stick_break_into(zeta, &mut w);
    Ok(w)
}

pub(crate) fn stick_break_into(zeta: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), zeta.len() + 1);
    let mut rest = 1.0;
    for (o, z) in out.iter_mut().zip(zeta) {
        *o = (1.0 - z) * rest;
        rest *= z;
    }
    out[zeta.len()] = rest;
}

/// Inverse of [`stick_break`]: `ζ_l = 1 - p_l / ∏_{r<l} ζ_r`.
pub fn zeta_from_weights(weights: &[f64]) -> Vec<f64> {
    let mut rest = 1.0;
    let mut out = Vec::with_capacity(weights.len().saturating_sub(1));
    for &p in &weights[..weights.len().saturating_sub(1)] {
        let z = 1.0 - p / rest;
        out.push(z);
        rest *= z;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IssueKind {
    NonPositiveTime,
    NonFiniteValue,
    MixedCovariate,
    MixedGroup,
    UnknownGroup(String),
    BadStatus(String),
    Parse(String),
}

/// One problem found in an input row (zero-based row index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub row: usize,
    pub kind: IssueKind,
}

impl core::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match &self.kind {
            IssueKind::NonPositiveTime => write!(f, "row {}: time must be positive", self.row),
            IssueKind::NonFiniteValue => write!(f, "row {}: non-finite value", self.row),
            IssueKind::MixedCovariate => {
                write!(f, "row {}: covariate missing while other rows have one", self.row)
            }
            IssueKind::MixedGroup => {
                write!(f, "row {}: group missing while other rows have one", self.row)
            }
            IssueKind::UnknownGroup(g) => write!(f, "row {}: unknown group label {g:?}", self.row),
            IssueKind::BadStatus(s) => write!(f, "row {}: status must be 0 or 1, got {s:?}", self.row),
            IssueKind::Parse(m) => write!(f, "row {}: {m}", self.row),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub censored: usize,
}

/// A validated dataset.
///
/// `group_rows[s]` lists the row indices of group slot `s`. Datasets without
/// a group column have a single slot; two-group data has slots C then T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<Observation>,
    pub has_covariate: bool,
    pub groups: Vec<Option<Group>>,
    pub group_rows: Vec<Vec<usize>>,
    /// Pairs of rows sharing an identical time, status and covariate.
    pub duplicates: Vec<(usize, usize)>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_rows.len()
    }

    pub fn is_two_group(&self) -> bool {
        self.groups.iter().any(|g| g.is_some())
    }

    pub fn summary(&self) -> Vec<(Option<Group>, GroupSummary)> {
        self.groups
            .iter()
            .zip(&self.group_rows)
            .map(|(g, rows)| {
                let censored = rows.iter().filter(|&&i| self.rows[i].censored).count();
                (*g, GroupSummary { n: rows.len(), censored })
            })
            .collect()
    }

    /// The same rows seen as one pooled group, for single-group fits.
    pub fn pooled(&self) -> Dataset {
        Dataset {
            rows: self.rows.clone(),
            has_covariate: self.has_covariate,
            groups: vec![None],
            group_rows: vec![(0..self.rows.len()).collect()],
            duplicates: self.duplicates.clone(),
        }
    }

    /// Drop the covariate column.
    pub fn without_covariate(&self) -> Dataset {
        let mut d = self.clone();
        for r in &mut d.rows {
            r.covariate = None;
        }
        d.has_covariate = false;
        d
    }

    /// Rows of group slot `s` in slot order.
    pub fn group_obs(&self, s: usize) -> impl Iterator<Item = &Observation> + '_ {
        self.group_rows[s].iter().map(move |&i| &self.rows[i])
    }
}

/// Check rows and build a [`Dataset`].
///
/// Every violation is reported with its row index. Exact duplicate rows are
/// accepted and listed in [`Dataset::duplicates`].
pub fn validate_dataset(rows: Vec<Observation>) -> Result<Dataset> {
    let mut issues = Vec::new();
    let with_cov = rows.iter().filter(|r| r.covariate.is_some()).count();
    let has_covariate = with_cov > 0;
    let mixed_cov = has_covariate && with_cov < rows.len();
    let with_group = rows.iter().filter(|r| r.group.is_some()).count();
    let mixed_group = with_group > 0 && with_group < rows.len();

    for (i, r) in rows.iter().enumerate() {
        if !r.time.is_finite() || r.covariate.is_some_and(|x| !x.is_finite()) {
            issues.push(ValidationIssue { row: i, kind: IssueKind::NonFiniteValue });
        } else if r.time <= 0.0 {
            issues.push(ValidationIssue { row: i, kind: IssueKind::NonPositiveTime });
        }
        if mixed_cov && r.covariate.is_none() {
            issues.push(ValidationIssue { row: i, kind: IssueKind::MixedCovariate });
        }
        if mixed_group && r.group.is_none() {
            issues.push(ValidationIssue { row: i, kind: IssueKind::MixedGroup });
        }
    }
    if !issues.is_empty() {
        return Err(Error::Validation(issues));
    }

    let (groups, group_rows) = if with_group > 0 {
        let mut gr = vec![Vec::new(), Vec::new()];
        for (i, r) in rows.iter().enumerate() {
            gr[r.group.map_or(0, Group::index)].push(i);
        }
        (vec![Some(Group::C), Some(Group::T)], gr)
    } else {
        (vec![None], vec![(0..rows.len()).collect()])
    };

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&rows[a], &rows[b]);
        x.time
            .total_cmp(&y.time)
            .then(x.censored.cmp(&y.censored))
            .then(x.group.cmp(&y.group))
            .then(x.covariate.unwrap_or(0.0).total_cmp(&y.covariate.unwrap_or(0.0)))
            .then(a.cmp(&b))
    });
    let mut duplicates = Vec::new();
    for w in order.windows(2) {
        let (a, b) = (&rows[w[0]], &rows[w[1]]);
        if a.time == b.time && a.censored == b.censored && a.covariate == b.covariate && a.group == b.group {
            duplicates.push((w[0].min(w[1]), w[0].max(w[1])));
        }
    }

    Ok(Dataset { rows, has_covariate, groups, group_rows, duplicates })
}

/// Run bookkeeping stored in the chain header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub model: String,
    pub seed: u64,
    pub chain: u32,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub truncation: usize,
    /// Acceptance rate per Metropolis-Hastings block.
    pub acceptance: BTreeMap<String, f64>,
    #[serde(default)]
    pub dataset_hash: Option<String>,
    #[serde(default)]
    pub has_covariate: bool,
    /// Count of truncated-beta draws that hit a numerical fallback.
    #[serde(default)]
    pub degenerate_draws: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Post burn-in, thinned draws of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput<D> {
    pub meta: ChainMeta,
    pub draws: Vec<D>,
}
