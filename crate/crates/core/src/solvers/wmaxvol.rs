//! Weighted block-greedy MaxVol. Blocks are appended one at a time (repeats
//! allowed) by maximizing `det(I_m + A_i G⁻¹ A_iᵀ)`, where `G` is the Gram
//! matrix of everything selected so far; pick counts become weights.

use std::io::Write;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{delta_from_values, whitened_block, AssemblyOptions, Design, NoisePrecision};
use crate::error::{DesignError, Result};
use crate::generators::CandidateSet;
use crate::io::fmt_f64;
use crate::linalg::{symmetrize, SymFactor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WmaxvolOptions {
    pub n_iter: usize,
    pub seed: u64,
    pub init_retry_limit: usize,
    pub recompute_period: usize,
    pub assembly: AssemblyOptions,
    /// Record `Δ` and `q` of the running design after every pick.
    pub record_trace: bool,
}

impl Default for WmaxvolOptions {
    fn default() -> Self {
        Self {
            n_iter: 1000,
            seed: 0,
            init_retry_limit: 100,
            recompute_period: 100,
            assembly: AssemblyOptions::unscaled(),
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WmaxvolTraceRow {
    pub iter: usize,
    pub picked_index: usize,
    pub delta_metric: f64,
    /// `NaN` when every pool point is in the support.
    pub q_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmaxvolResult {
    pub design: Design,
    /// Pool index of every design point, ascending.
    pub indices: Vec<usize>,
    /// Unnormalized tallies behind `design.weights`.
    pub tallies: Vec<usize>,
    /// Randomly drawn starting blocks.
    pub initial: Vec<usize>,
    pub trace: Vec<WmaxvolTraceRow>,
}

/// Running state of the greedy selection, exposed for inspection.
#[derive(Debug, Clone)]
pub struct WmaxvolState {
    blocks: Vec<DMatrix<f64>>,
    stacked: DMatrix<f64>,
    m: usize,
    p: usize,
    gram: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    /// `A G⁻¹`, updated in place after every pick.
    coeff: DMatrix<f64>,
    initial: Vec<usize>,
    picks: Vec<usize>,
    recompute_period: usize,
    since_recompute: usize,
}

impl WmaxvolState {
    /// Draws `⌊P/m⌋ + 1` distinct blocks until their Gram matrix is nonsingular.
    pub fn new(pool: &CandidateSet, noise: &NoisePrecision, opts: &WmaxvolOptions) -> Result<Self> {
        let blocks = whiten_pool(pool, noise, &opts.assembly)?;
        let (k, m, p) = (blocks.len(), blocks[0].nrows(), blocks[0].ncols());
        if opts.n_iter == 0 {
            return Err(DesignError::InvalidArgument("n_iter must be >= 1".into()));
        }
        if k * m <= p {
            return Err(DesignError::InvalidArgument(format!(
                "pool of {k} blocks with {m} rows cannot exceed {p} parameters"
            )));
        }
        let mut total = DMatrix::zeros(p, p);
        for a in &blocks {
            total.gemm_tr(1.0, a, a, 1.0);
        }
        if SymFactor::new(&total).is_err() {
            return Err(DesignError::RankDeficient(format!(
                "stacked blocks of {} do not have full column rank {p}",
                pool.provenance()
            )));
        }
        let l = (p / m + 1).min(k);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.init_retry_limit.max(1) {
            let initial = rand::seq::index::sample(&mut rng, k, l).into_vec();
            if let Ok(state) = Self::from_blocks(blocks.clone(), &initial, opts.recompute_period) {
                return Ok(state);
            }
        }
        Err(DesignError::Initialization {
            attempts: opts.init_retry_limit.max(1),
        })
    }

    /// Starts from the given initial blocks.
    pub fn with_initial(
        pool: &CandidateSet,
        noise: &NoisePrecision,
        assembly: &AssemblyOptions,
        initial: &[usize],
        recompute_period: usize,
    ) -> Result<Self> {
        Self::from_blocks(whiten_pool(pool, noise, assembly)?, initial, recompute_period)
    }

    fn from_blocks(blocks: Vec<DMatrix<f64>>, initial: &[usize], recompute_period: usize) -> Result<Self> {
        let (m, p) = (blocks[0].nrows(), blocks[0].ncols());
        let k = blocks.len();
        if initial.iter().any(|&i| i >= k) {
            return Err(DesignError::InvalidArgument("initial block index out of range".into()));
        }
        let mut stacked = DMatrix::zeros(k * m, p);
        for (i, a) in blocks.iter().enumerate() {
            stacked.rows_mut(i * m, m).copy_from(a);
        }
        let mut gram = DMatrix::zeros(p, p);
        for &i in initial {
            gram.gemm_tr(1.0, &blocks[i], &blocks[i], 1.0);
        }
        let gram_inv = SymFactor::new(&gram)?.inverse();
        let coeff = &stacked * &gram_inv;
        Ok(Self {
            blocks,
            stacked,
            m,
            p,
            gram,
            gram_inv,
            coeff,
            initial: initial.to_vec(),
            picks: Vec::new(),
            recompute_period: recompute_period.max(1),
            since_recompute: 0,
        })
    }

    pub fn n_params(&self) -> usize {
        self.p
    }

    pub fn initial(&self) -> &[usize] {
        &self.initial
    }

    pub fn picks(&self) -> &[usize] {
        &self.picks
    }

    /// Number of blocks in the Gram matrix, initial ones included.
    pub fn total_selected(&self) -> usize {
        self.initial.len() + self.picks.len()
    }

    /// `(A_i G⁻¹ A_iᵀ)` for block `i`.
    fn projected(&self, i: usize) -> DMatrix<f64> {
        let d = self.coeff.rows(i * self.m, self.m);
        d * self.blocks[i].transpose()
    }

    /// Selection scores `det(I_m + A_i G⁻¹ A_iᵀ)` for every block.
    pub fn scores(&self) -> Vec<f64> {
        (0..self.blocks.len())
            .map(|i| {
                let mut s = self.projected(i);
                if self.m == 1 {
                    return 1.0 + s[(0, 0)];
                }
                for r in 0..self.m {
                    s[(r, r)] += 1.0;
                }
                s.determinant()
            })
            .collect()
    }

    /// `d(x_i)` against the normalized information `G / s`.
    pub fn sensitivities(&self) -> Vec<f64> {
        let s = self.total_selected() as f64;
        (0..self.blocks.len()).map(|i| s * self.projected(i).trace()).collect()
    }

    /// `G / s`, the information matrix of the running design.
    pub fn information(&self) -> DMatrix<f64> {
        &self.gram / self.total_selected() as f64
    }

    /// `μ_i = A_iᵀ A_i`.
    pub fn atom(&self, i: usize) -> DMatrix<f64> {
        self.blocks[i].transpose() * &self.blocks[i]
    }

    /// Picks the best-scoring block (lowest index on ties) and updates the state.
    pub fn step(&mut self) -> Result<usize> {
        let scores = self.scores();
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        self.append(best)?;
        Ok(best)
    }

    /// Appends block `j` with a rank-`m` Woodbury update of `G⁻¹` and `A G⁻¹`.
    pub fn append(&mut self, j: usize) -> Result<()> {
        let (m, a_j) = (self.m, &self.blocks[j]);
        let d_j = self.coeff.rows(j * m, m).into_owned();
        let mut s = &d_j * a_j.transpose();
        for r in 0..m {
            s[(r, r)] += 1.0;
        }
        symmetrize(&mut s);
        let s_inv = SymFactor::new(&s)?.inverse();
        let x = &self.coeff * a_j.transpose();
        let correction = &s_inv * &d_j;
        self.coeff -= &x * &correction;
        self.gram_inv -= d_j.transpose() * &correction;
        self.gram.gemm_tr(1.0, a_j, a_j, 1.0);
        self.picks.push(j);
        self.since_recompute += 1;
        if self.since_recompute >= self.recompute_period {
            self.recompute()?;
        }
        Ok(())
    }

    /// Rebuilds `G⁻¹` and `A G⁻¹` from scratch.
    pub fn recompute(&mut self) -> Result<()> {
        symmetrize(&mut self.gram);
        self.gram_inv = SymFactor::new(&self.gram)?.inverse();
        self.coeff = &self.stacked * &self.gram_inv;
        self.since_recompute = 0;
        Ok(())
    }

    /// Rows of all selected blocks, initial first, then picks in order.
    pub fn selected_matrix(&self) -> DMatrix<f64> {
        let all: Vec<usize> = self.initial.iter().chain(&self.picks).copied().collect();
        let mut out = DMatrix::zeros(all.len() * self.m, self.p);
        for (r, &i) in all.iter().enumerate() {
            out.rows_mut(r * self.m, self.m).copy_from(&self.blocks[i]);
        }
        out
    }

    /// `C = A Ã⁺` from the incrementally maintained state.
    pub fn tracked_c(&self) -> DMatrix<f64> {
        &self.coeff * self.selected_matrix().transpose()
    }

    /// `C = A Ã⁺` from an SVD pseudo-inverse.
    pub fn exact_c(&self) -> Result<DMatrix<f64>> {
        let pinv = self
            .selected_matrix()
            .pseudo_inverse(1e-12)
            .map_err(|e| DesignError::Singular(e.to_string()))?;
        Ok(&self.stacked * pinv)
    }

    /// Pool indices picked at least once, ascending.
    pub fn support(&self) -> Vec<usize> {
        let mut s = self.picks.clone();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// `Δ` over the picked support and `q` over the rest of the pool.
    pub fn delta_q(&self) -> (f64, f64) {
        let d = self.sensitivities();
        let support = self.support();
        let in_support: Vec<f64> = support.iter().map(|&i| d[i]).collect();
        let delta = delta_from_values(&in_support, self.p);
        let outside: Vec<f64> = (0..d.len()).filter(|i| support.binary_search(i).is_err()).map(|i| d[i]).collect();
        let q = if outside.is_empty() {
            f64::NAN
        } else {
            outside.iter().filter(|&&v| v > self.p as f64).count() as f64 / outside.len() as f64
        };
        (delta, q)
    }

    /// Tallies over the picked support, plus one for picked initial blocks.
    pub fn tallies(&self) -> (Vec<usize>, Vec<usize>) {
        let support = self.support();
        let tallies = support
            .iter()
            .map(|&i| self.picks.iter().filter(|&&j| j == i).count() + usize::from(self.initial.contains(&i)))
            .collect();
        (support, tallies)
    }
}

fn whiten_pool(pool: &CandidateSet, noise: &NoisePrecision, assembly: &AssemblyOptions) -> Result<Vec<DMatrix<f64>>> {
    assembly.validate()?;
    let blocks = pool
        .require_blocks()?
        .iter()
        .map(|b| whitened_block(b, noise, assembly))
        .collect::<Result<Vec<_>>>()?;
    let (m, p) = (blocks[0].nrows(), blocks[0].ncols());
    if blocks.iter().any(|b| b.nrows() != m || b.ncols() != p) {
        return Err(DesignError::Shape("pool blocks differ in shape".into()));
    }
    Ok(blocks)
}

/// Runs `n_iter + 1` greedy picks and returns the tally-weighted design.
pub fn wmaxvol(pool: &CandidateSet, noise: &NoisePrecision, opts: &WmaxvolOptions) -> Result<WmaxvolResult> {
    let mut state = WmaxvolState::new(pool, noise, opts)?;
    let mut trace = Vec::new();
    for iter in 0..=opts.n_iter {
        let picked_index = state.step()?;
        if opts.record_trace {
            let (delta_metric, q_metric) = state.delta_q();
            trace.push(WmaxvolTraceRow { iter, picked_index, delta_metric, q_metric });
        }
    }
    finish(pool, state, trace)
}

fn finish(pool: &CandidateSet, state: WmaxvolState, trace: Vec<WmaxvolTraceRow>) -> Result<WmaxvolResult> {
    let (indices, tallies) = state.tallies();
    let total: usize = tallies.iter().sum();
    let weights = tallies.iter().map(|&t| t as f64 / total as f64).collect();
    let points = indices.iter().map(|&i| pool.points()[i].clone()).collect();
    Ok(WmaxvolResult {
        design: Design::new(points, weights)?,
        indices,
        tallies,
        initial: state.initial.clone(),
        trace,
    })
}

/// Writes `iter,picked_index,delta_metric,q_metric` rows.
pub fn write_wmaxvol_trace<W: Write>(mut out: W, trace: &[WmaxvolTraceRow]) -> Result<()> {
    let io = |e| DesignError::io("<wmaxvol trace>", e);
    writeln!(out, "iter,picked_index,delta_metric,q_metric").map_err(io)?;
    for r in trace {
        writeln!(out, "{},{},{},{}", r.iter, r.picked_index, fmt_f64(r.delta_metric), fmt_f64(r.q_metric))
            .map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{grid, latin_hypercube, DomainBox};
    use crate::linalg::rel_diff;
    use crate::models::ModelSpec;

    fn exp_grid(k: usize) -> CandidateSet {
        let model = ModelSpec::exponential(&[1.0, 3.0]).unwrap();
        model.attach(grid(&DomainBox::symmetric(1), &[k]).unwrap()).unwrap()
    }

    #[test]
    fn grid_eleven_weights() {
        let r = wmaxvol(&exp_grid(11), &NoisePrecision::identity(1), &WmaxvolOptions::default()).unwrap();
        let xs: Vec<f64> = r.design.points().iter().map(|p| p.coords()[0]).collect();
        assert_eq!(xs, vec![0.6, 1.0]);
        for w in r.design.weights() {
            assert!((w - 0.5).abs() <= 2.0 / 1000.0);
        }
        let sum: f64 = r.design.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn univariate_pick_is_max_sensitivity() {
        let pool = exp_grid(31);
        let mut state = WmaxvolState::new(&pool, &NoisePrecision::identity(1), &WmaxvolOptions::default()).unwrap();
        for _ in 0..200 {
            let d = state.sensitivities();
            let arg = (0..d.len()).fold(0, |b, i| if d[i] > d[b] { i } else { b });
            assert_eq!(state.step().unwrap(), arg);
        }
    }

    #[test]
    fn fast_update_matches_pseudo_inverse() {
        let model = ModelSpec::chebyshev(2, 2).unwrap();
        let pts = latin_hypercube(2, 40, 3, &DomainBox::symmetric(2)).unwrap();
        let pool = model.attach(CandidateSet::new(pts, "LHS(40)").unwrap()).unwrap();
        let opts = WmaxvolOptions { recompute_period: 1000, ..WmaxvolOptions::default() };
        let mut state = WmaxvolState::new(&pool, &NoisePrecision::identity(3), &opts).unwrap();
        for k in 1..=300 {
            state.step().unwrap();
            if k % 50 == 0 {
                assert!(rel_diff(&state.tracked_c(), &state.exact_c().unwrap()) < 1e-8);
            }
        }
    }

    #[test]
    fn initialization_failure() {
        // Every block is the same rank-one row: no nonsingular start exists.
        let pool = CandidateSet::new(vec![0.0.into(); 4], "dup")
            .unwrap()
            .with_blocks(vec![crate::design::JacobianBlock::from_row_slice(1, 2, &[1.0, 1.0]).unwrap(); 4])
            .unwrap();
        let err = wmaxvol(&pool, &NoisePrecision::identity(1), &WmaxvolOptions::default()).unwrap_err();
        assert!(matches!(err, DesignError::RankDeficient(_)));
    }

    #[test]
    fn trace_layout() {
        let opts = WmaxvolOptions { n_iter: 5, record_trace: true, ..WmaxvolOptions::default() };
        let r = wmaxvol(&exp_grid(11), &NoisePrecision::identity(1), &opts).unwrap();
        assert_eq!(r.trace.len(), 6);
        let mut buf = Vec::new();
        write_wmaxvol_trace(&mut buf, &r.trace).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("iter,picked_index,delta_metric,q_metric\n0,"));
    }
}
