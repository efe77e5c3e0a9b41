use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design::DesignPoint;
use crate::error::{DesignError, Result};
use crate::generators::candidates::DomainBox;

/// `K` points with exactly one point per equal-width bin in every dimension,
/// uniformly jittered inside the bin.
pub fn latin_hypercube(n: usize, k: usize, seed: u64, domain: &DomainBox) -> Result<Vec<DesignPoint>> {
    if k == 0 {
        return Err(DesignError::InvalidArgument("Latin hypercube needs K >= 1".into()));
    }
    if n != domain.dim() {
        return Err(DesignError::Shape(format!(
            "{n}-dimensional sample requested for a {}-dimensional domain",
            domain.dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kf = k as f64;
    let mut columns = Vec::with_capacity(n);
    for _ in 0..n {
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let col: Vec<f64> = perm
            .into_iter()
            .map(|bin| {
                let u: f64 = rng.random();
                let v = (bin as f64 + u) / kf;
                // Keep rounding from pushing a value into the next bin.
                let hi = ((bin + 1) as f64 / kf).next_down();
                v.min(hi).max(bin as f64 / kf)
            })
            .collect();
        columns.push(col);
    }
    Ok((0..k)
        .map(|i| {
            let u: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            domain.map_unit(&u)
        })
        .collect())
}
