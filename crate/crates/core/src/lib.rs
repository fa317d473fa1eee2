//! Bayesian nonparametric mean residual life regression.
//!
//! Gamma-by-normal Dirichlet process mixtures over joint (survival time,
//! covariate) data, a two-group dependent extension whose stick-breaking
//! fractions are coupled through a Kotz bivariate beta, posterior simulation
//! under right censoring, posterior functionals (density, survival, hazard,
//! mean residual life, mean regression) and CPO-based model comparison
//! against an exponentiated-Weibull regression baseline.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the chain
//! runner and the command line live in the companion `mrl` crate.

#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cpo;
pub mod ddp;
pub mod distributions;
pub mod dpmm;
pub mod error;
pub mod ewm;
pub mod functionals;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod properties;
pub mod quadrature;
pub mod rng;
pub mod simulation;
pub mod special;

pub use error::{Error, Result};
pub use linalg::{Mat2, Vec2};
pub use model::{
    AtomParams, ChainMeta, ChainOutput, Dataset, Group, Hyperstate, MixtureState, Observation,
    StickState,
};
pub use rng::RngHandle;
