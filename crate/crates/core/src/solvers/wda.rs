//! Convex weight optimization over a fixed pool by vertex-direction steps
//! with away steps and exact line search. The stopping rule is the
//! equivalence-theorem gap `max_i d(x_i) − P ≤ P·tol`.

use std::f64::consts::LN_10;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::{whitened_block, AssemblyOptions, Design, NoisePrecision};
use crate::error::{DesignError, Result};
use crate::generators::CandidateSet;
use crate::io::fmt_f64;
use crate::linalg::{sym_eigenvalues, symmetrize, SymFactor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WdaOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub prune_threshold: f64,
    /// Starting weights over the pool; uniform when absent.
    pub init_weights: Option<Vec<f64>>,
    pub assembly: AssemblyOptions,
    /// Rebuild `I` from the weights every this many steps.
    pub recompute_period: usize,
    pub record_trace: bool,
}

impl Default for WdaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 50_000,
            prune_threshold: 1e-4,
            init_weights: None,
            assembly: AssemblyOptions::unscaled(),
            recompute_period: 50,
            record_trace: false,
        }
    }
}

impl WdaOptions {
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(DesignError::InvalidArgument("wda tol must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.prune_threshold) {
            return Err(DesignError::InvalidArgument("prune_threshold must lie in [0, 1)".into()));
        }
        if let Some(w) = &self.init_weights {
            if w.len() != k {
                return Err(DesignError::Shape(format!("{} initial weights for {k} candidates", w.len())));
            }
            let sum: f64 = w.iter().sum();
            if w.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(DesignError::InvalidArgument("initial weights must lie on the simplex".into()));
            }
        }
        self.assembly.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WdaTraceRow {
    pub iter: usize,
    pub phi: f64,
    pub kw_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WdaResult {
    /// Pruned design over the pool points.
    pub design: Design,
    /// Pool index of every design point.
    pub indices: Vec<usize>,
    /// Weights over the whole pool before pruning.
    pub pool_weights: Vec<f64>,
    pub phi: f64,
    /// `max_i d(x_i) − P` over the pool for the returned design.
    pub kw_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<WdaTraceRow>,
}

/// Derivative of `t ↦ ln det((1−t)I + tμ)` in the eigenbasis of `I⁻¹μ`.
fn toward_slope(t: f64, eig: &[f64], zeros: usize) -> f64 {
    let base = 1.0 - t;
    eig.iter().map(|l| (l - 1.0) / (base + t * l)).sum::<f64>() - zeros as f64 / base
}

/// Derivative of `t ↦ ln det((1+t)I − tμ)`.
fn away_slope(t: f64, eig: &[f64], zeros: usize) -> f64 {
    let base = 1.0 + t;
    eig.iter().map(|l| (1.0 - l) / (base - t * l)).sum::<f64>() + zeros as f64 / base
}

/// Root of a decreasing function on `[lo, hi]`.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

struct Pool {
    a: Vec<DMatrix<f64>>,
    p: usize,
}

impl Pool {
    fn information(&self, w: &[f64]) -> DMatrix<f64> {
        let mut info = DMatrix::zeros(self.p, self.p);
        for (wi, a) in w.iter().zip(&self.a) {
            if *wi > 0.0 {
                info.gemm_tr(*wi, a, a, 1.0);
            }
        }
        symmetrize(&mut info);
        info
    }

    fn sensitivities(&self, factor: &SymFactor) -> Vec<f64> {
        self.a
            .iter()
            .map(|a| factor.whiten(&a.transpose()).norm_squared())
            .collect()
    }

    /// Nonzero spectrum of `I⁻¹μ_j` and the count of zero eigenvalues.
    fn spectrum(&self, factor: &SymFactor, j: usize) -> (Vec<f64>, usize) {
        let v = factor.whiten(&self.a[j].transpose());
        let gram = v.transpose() * &v;
        let scale = gram.amax().max(f64::MIN_POSITIVE);
        let eig: Vec<f64> = sym_eigenvalues(&gram).into_iter().filter(|l| *l > 1e-13 * scale).collect();
        let zeros = self.p - eig.len().min(self.p);
        (eig, zeros)
    }
}

fn phi_of(factor: &SymFactor) -> f64 {
    -factor.ln_det() / LN_10
}

/// Solves the weight problem over `pool`, which must have blocks attached.
pub fn wda(pool: &CandidateSet, noise: &NoisePrecision, opts: &WdaOptions) -> Result<WdaResult> {
    let blocks = pool.require_blocks()?;
    let k = blocks.len();
    opts.validate(k)?;
    let a = blocks
        .iter()
        .map(|b| whitened_block(b, noise, &opts.assembly))
        .collect::<Result<Vec<_>>>()?;
    let p = a[0].ncols();
    if a.iter().any(|b| b.ncols() != p) {
        return Err(DesignError::Shape("pool blocks differ in parameter count".into()));
    }
    let pool_data = Pool { a, p };
    let pf = p as f64;
    let lambda = opts.assembly.regularization;

    let mut w = opts.init_weights.clone().unwrap_or_else(|| vec![1.0 / k as f64; k]);
    let add_reg = |mut m: DMatrix<f64>| {
        for i in 0..p {
            m[(i, i)] += lambda;
        }
        m
    };
    let mut info = add_reg(pool_data.information(&w));
    let mut factor = SymFactor::new(&info).map_err(|e| {
        DesignError::SingularStart(format!(
            "initial information matrix over {} is singular ({e})",
            pool.provenance()
        ))
    })?;

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..=opts.max_iter {
        iterations = iter;
        let d = pool_data.sensitivities(&factor);
        let (jmax, dmax) = d
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let gap = dmax - pf;
        if opts.record_trace {
            trace.push(WdaTraceRow { iter, phi: phi_of(&factor), kw_gap: gap });
        }
        if gap <= pf * opts.tol {
            converged = true;
            break;
        }
        if iter == opts.max_iter {
            break;
        }
        let (jmin, dmin) = (0..k)
            .filter(|&i| w[i] > 0.0)
            .fold((usize::MAX, f64::INFINITY), |acc, i| if d[i] < acc.1 { (i, d[i]) } else { acc });

        let away = jmin != usize::MAX && pf - dmin > gap && w[jmin] < 1.0;
        if away {
            let j = jmin;
            let (eig, zeros) = pool_data.spectrum(&factor, j);
            let t_max = w[j] / (1.0 - w[j]);
            let slope = |t: f64| away_slope(t, &eig, zeros);
            let limit_slope = slope(t_max);
            let drop = limit_slope.is_finite() && limit_slope >= 0.0;
            let t = if drop { t_max } else { bisect(0.0, t_max, slope) };
            for wi in w.iter_mut() {
                *wi *= 1.0 + t;
            }
            w[j] = if drop { 0.0 } else { (w[j] - t).max(0.0) };
            info *= 1.0 + t;
            info.gemm_tr(-t, &pool_data.a[j], &pool_data.a[j], 1.0);
            for i in 0..p {
                info[(i, i)] -= t * lambda;
            }
        } else {
            let j = jmax;
            let (eig, zeros) = pool_data.spectrum(&factor, j);
            let t = if eig.len() == 1 && lambda == 0.0 {
                (dmax - pf) / (pf * (dmax - 1.0))
            } else {
                let hi = 1.0 - 1e-12;
                if toward_slope(hi, &eig, zeros) >= 0.0 {
                    hi
                } else {
                    bisect(0.0, hi, |t| toward_slope(t, &eig, zeros))
                }
            };
            for wi in w.iter_mut() {
                *wi *= 1.0 - t;
            }
            w[j] += t;
            info *= 1.0 - t;
            info.gemm_tr(t, &pool_data.a[j], &pool_data.a[j], 1.0);
            for i in 0..p {
                info[(i, i)] += t * lambda;
            }
        }
        if (iter + 1) % opts.recompute_period.max(1) == 0 {
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= sum);
            info = add_reg(pool_data.information(&w));
        }
        symmetrize(&mut info);
        factor = match SymFactor::new(&info) {
            Ok(f) => f,
            Err(_) => {
                info = add_reg(pool_data.information(&w));
                SymFactor::new(&info)?
            }
        };
    }

    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    let pool_weights = w.clone();
    let mut kept: Vec<usize> = (0..k).filter(|&i| w[i] > opts.prune_threshold).collect();
    if kept.is_empty() {
        return Err(DesignError::EmptyDesign);
    }
    let mut pruned = vec![0.0; k];
    let kept_sum: f64 = kept.iter().map(|&i| w[i]).sum();
    for &i in &kept {
        pruned[i] = w[i] / kept_sum;
    }
    let final_factor = match SymFactor::new(&add_reg(pool_data.information(&pruned))) {
        Ok(f) => f,
        Err(_) => {
            kept = (0..k).filter(|&i| w[i] > 0.0).collect();
            pruned = w.clone();
            SymFactor::new(&add_reg(pool_data.information(&pruned)))?
        }
    };
    let phi = phi_of(&final_factor);
    let kw_gap = pool_data
        .sensitivities(&final_factor)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
        - pf;
    let points = kept.iter().map(|&i| pool.points()[i].clone()).collect();
    let mut weights: Vec<f64> = kept.iter().map(|&i| pruned[i]).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|v| *v /= total);
    Ok(WdaResult {
        design: Design::new(points, weights)?,
        indices: kept,
        pool_weights,
        phi,
        kw_gap,
        iterations,
        converged,
        trace,
    })
}

/// Writes `iter,phi,kw_gap` rows.
pub fn write_wda_trace<W: Write>(mut out: W, trace: &[WdaTraceRow]) -> Result<()> {
    let io = |e| DesignError::io("<wda trace>", e);
    writeln!(out, "iter,phi,kw_gap").map_err(io)?;
    for row in trace {
        writeln!(out, "{},{},{}", row.iter, fmt_f64(row.phi), fmt_f64(row.kw_gap)).map_err(io)?;
    }
    Ok(())
}
