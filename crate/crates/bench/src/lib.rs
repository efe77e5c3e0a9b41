//! Shared fixtures for the benchmarks.

use optdesign::generators::{grid, latin_hypercube, DomainBox};
use optdesign::{CandidateSet, ModelSpec, NoisePrecision};

/// Exponential model at `p = (1, 3)` on a `k`-level grid.
pub fn exponential_pool(k: usize) -> (ModelSpec, CandidateSet, NoisePrecision) {
    let model = ModelSpec::exponential(&[1.0, 3.0]).expect("valid parameters");
    let pool = model.attach(grid(model.domain(), &[k]).expect("grid")).expect("blocks");
    (model, pool, NoisePrecision::identity(1))
}

/// Chebyshev model of total degree `degree` in `n` variables on `k` LHS points.
pub fn chebyshev_pool(n: usize, degree: usize, k: usize, seed: u64) -> (ModelSpec, CandidateSet, NoisePrecision) {
    let model = ModelSpec::chebyshev(n, degree).expect("valid model");
    let points = latin_hypercube(n, k, seed, &DomainBox::symmetric(n)).expect("lhs");
    let pool = model
        .attach(CandidateSet::new(points, format!("LHS({k})")).expect("pool"))
        .expect("blocks");
    let m = model.m();
    (model, pool, NoisePrecision::identity(m))
}
