//! Random-forest regression for nonlinear autoregressive time series.
//!
//! Data come from `Y_t = f(Y_{t−1}, …, Y_{t−p}) + ε_t` ([`nlar`]). Trees
//! ([`builder`], [`partition`]) obey a minimum leaf size `k`, a split-forcing
//! size `m` and a balance fraction `α`; forests ([`forest`]) average trees
//! grown on the full sample. [`oracle`] estimates the partition-optimal
//! counterparts by Monte Carlo, and [`experiments`] runs the simulation
//! studies end to end.

pub mod builder;
pub mod error;
pub mod experiments;
pub mod forest;
pub mod nlar;
pub mod noise;
pub mod oracle;
pub mod partition;
pub mod rng;
pub mod util;

pub use builder::{grow_tree, BuildConfig, SplitRule};
pub use error::{Error, Result};
pub use forest::{fit_forest, tree_predict, Forest};
pub use nlar::{make_dataset, simulate, Dataset, RegressionFunction, SimulationSpec};
pub use noise::{NoiseKind, NoiseModel};
pub use oracle::OracleConfig;
pub use partition::{validate_akm, validate_k_valid, Split, Tree};
pub use rng::RandomStream;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
