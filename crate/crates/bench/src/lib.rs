//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use rfnlar::nlar::simulate_dataset;
use rfnlar::{Dataset, NoiseModel, RegressionFunction, SimulationSpec};

pub fn spec(f: &str, t: usize, seed: u64) -> SimulationSpec {
    SimulationSpec::new(
        RegressionFunction::by_name(f).expect("builtin function"),
        NoiseModel::laplace(1.0).expect("valid scale"),
        t,
        seed,
    )
}

pub fn dataset(f: &str, t: usize, seed: u64) -> Arc<Dataset> {
    Arc::new(simulate_dataset(&spec(f, t, seed)).expect("simulation succeeds"))
}
