//! Continuous refinement of points and weights by projected gradient descent.
//!
//! Weights live on the simplex (sort-and-shift projection), coordinates in the
//! model's box (clipping). Linear constraints `c(x) ≥ 0` enter through an
//! exterior quadratic penalty.

use std::f64::consts::LN_10;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::{whitened_block, AssemblyOptions, Design, DesignPoint, NoisePrecision, POINT_EQ_TOL};
use crate::error::{DesignError, Result};
use crate::linalg::{symmetrize, SymFactor};
use crate::models::ModelSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Relative finite-difference step for `∂J/∂x`.
    pub fd_step: f64,
    pub weight_zero_tol: f64,
    pub regularization: f64,
    pub scale_by_parameters: bool,
    /// Points closer than this fraction of the box width (in every coordinate) merge.
    pub merge_tol: f64,
    pub penalty_rounds: usize,
    pub penalty_start: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 2000,
            fd_step: 1e-6,
            weight_zero_tol: 1e-6,
            regularization: 1e-8,
            scale_by_parameters: true,
            merge_tol: 1e-3,
            penalty_rounds: 3,
            penalty_start: 1e2,
        }
    }
}

impl RefineOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.fd_step > 0.0) {
            return Err(DesignError::InvalidArgument("refine tol and fd_step must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.weight_zero_tol) || !(self.merge_tol >= 0.0) {
            return Err(DesignError::InvalidArgument("weight_zero_tol in [0, 1) and merge_tol >= 0 required".into()));
        }
        if !(self.regularization >= 0.0) {
            return Err(DesignError::InvalidArgument("regularization must be >= 0".into()));
        }
        Ok(())
    }

    /// The information-matrix assembly used by the refiner for `model`.
    pub fn assembly(&self, model: &ModelSpec) -> AssemblyOptions {
        let base = if self.scale_by_parameters {
            AssemblyOptions::scaled(model.parameters())
        } else {
            AssemblyOptions::unscaled()
        };
        base.with_regularization(self.regularization)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineResult {
    pub design: Design,
    pub phi: f64,
    pub stationarity: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Starting coordinates of points whose weight vanished or that merged into another.
    pub dropped_points: Vec<DesignPoint>,
}

/// Flat JSON form of a [`RefineResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRecord {
    pub points: Vec<DesignPoint>,
    pub weights: Vec<f64>,
    pub phi: f64,
    pub stationarity: f64,
    pub converged: bool,
    pub dropped_points: Vec<DesignPoint>,
}

impl From<&RefineResult> for RefineRecord {
    fn from(r: &RefineResult) -> Self {
        Self {
            points: r.design.points().to_vec(),
            weights: r.design.weights().to_vec(),
            phi: r.phi,
            stationarity: r.stationarity,
            converged: r.converged,
            dropped_points: r.dropped_points.clone(),
        }
    }
}

/// Removes points with weight `≤ wtol`, merges coordinate duplicates and renormalizes.
pub fn prune(design: &Design, wtol: f64) -> Result<Design> {
    if !(0.0..1.0).contains(&wtol) {
        return Err(DesignError::InvalidArgument("wtol must lie in [0, 1)".into()));
    }
    let mut points: Vec<DesignPoint> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (x, &w) in design.points().iter().zip(design.weights()) {
        match points.iter().position(|p| p.approx_eq(x, POINT_EQ_TOL)) {
            Some(i) => weights[i] += w,
            None => {
                points.push(x.clone());
                weights.push(w);
            }
        }
    }
    let keep: Vec<usize> = (0..points.len()).filter(|&i| weights[i] > wtol).collect();
    if keep.is_empty() {
        return Err(DesignError::EmptyDesign);
    }
    let total: f64 = keep.iter().map(|&i| weights[i]).sum();
    Design::new(
        keep.iter().map(|&i| points[i].clone()).collect(),
        keep.iter().map(|&i| weights[i] / total).collect(),
    )
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumulative += uj;
        let t = (cumulative - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    let sum: f64 = w.iter().sum();
    if sum > 0.0 {
        w.iter_mut().for_each(|x| *x /= sum);
    }
    w
}

/// `Φ` and its gradient with respect to weights and coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionGradient {
    pub phi: f64,
    /// `∂Φ/∂wᵢ = −d(xᵢ)/ln 10`.
    pub weights: Vec<f64>,
    /// `∂Φ/∂xᵢ` by central differences of the Jacobian.
    pub coords: Vec<Vec<f64>>,
}

struct Problem<'a> {
    model: &'a ModelSpec,
    noise: &'a NoisePrecision,
    assembly: AssemblyOptions,
    fd_step: f64,
    penalty: f64,
}

impl Problem<'_> {
    fn block(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        whitened_block(&self.model.jacobian_at(x)?, self.noise, &self.assembly)
    }

    fn information(&self, w: &[f64], blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
        let p = blocks[0].ncols();
        let mut info = DMatrix::zeros(p, p);
        for (wi, a) in w.iter().zip(blocks) {
            if *wi != 0.0 {
                info.gemm_tr(*wi, a, a, 1.0);
            }
        }
        for i in 0..p {
            info[(i, i)] += self.assembly.regularization;
        }
        symmetrize(&mut info);
        info
    }

    fn penalty_value(&self, xs: &[Vec<f64>]) -> f64 {
        if self.penalty == 0.0 {
            return 0.0;
        }
        xs.iter()
            .flat_map(|x| self.model.constraint_values(x))
            .map(|c| c.min(0.0).powi(2))
            .sum::<f64>()
            * self.penalty
    }

    /// Objective including the penalty; `+∞` when `I` is singular.
    fn objective(&self, w: &[f64], xs: &[Vec<f64>]) -> Result<f64> {
        let blocks = xs.iter().map(|x| self.block(x)).collect::<Result<Vec<_>>>()?;
        Ok(match SymFactor::new(&self.information(w, &blocks)) {
            Ok(f) => -f.ln_det() / LN_10 + self.penalty_value(xs),
            Err(_) => f64::INFINITY,
        })
    }

    fn gradient(&self, w: &[f64], xs: &[Vec<f64>]) -> Result<CriterionGradient> {
        let blocks = xs.iter().map(|x| self.block(x)).collect::<Result<Vec<_>>>()?;
        let factor = SymFactor::new(&self.information(w, &blocks))?;
        let inv = factor.inverse();
        let phi = -factor.ln_det() / LN_10 + self.penalty_value(xs);
        let mut gw = Vec::with_capacity(w.len());
        let mut gx = Vec::with_capacity(w.len());
        for (i, x) in xs.iter().enumerate() {
            let a = &blocks[i];
            let b = a * &inv;
            gw.push(-(b.component_mul(a)).sum() / LN_10);
            let mut gi = vec![0.0; x.len()];
            if w[i] != 0.0 {
                for (k, g) in gi.iter_mut().enumerate() {
                    let h = self.fd_step * (1.0 + x[k].abs());
                    let mut hi = x.clone();
                    let mut lo = x.clone();
                    hi[k] += h;
                    lo[k] -= h;
                    let da = (self.block(&hi)? - self.block(&lo)?) / (2.0 * h);
                    *g = -w[i] * 2.0 * b.component_mul(&da).sum() / LN_10;
                }
            }
            if self.penalty != 0.0 {
                for (c, con) in self.model.constraints().iter().enumerate() {
                    let v = self.model.constraint_values(x)[c];
                    if v < 0.0 {
                        for (k, g) in gi.iter_mut().enumerate() {
                            *g += 2.0 * self.penalty * v * con.coeffs[k];
                        }
                    }
                }
            }
            gx.push(gi);
        }
        Ok(CriterionGradient { phi, weights: gw, coords: gx })
    }
}

/// `Φ` and its gradient at `design` under the refiner's assembly.
pub fn criterion_gradient(
    model: &ModelSpec,
    design: &Design,
    noise: &NoisePrecision,
    opts: &RefineOptions,
) -> Result<CriterionGradient> {
    let problem = Problem { model, noise, assembly: opts.assembly(model), fd_step: opts.fd_step, penalty: 0.0 };
    let xs: Vec<Vec<f64>> = design.points().iter().map(|p| p.coords().to_vec()).collect();
    problem.gradient(design.weights(), &xs)
}

struct Iterate {
    w: Vec<f64>,
    xs: Vec<Vec<f64>>,
    origin: Vec<DesignPoint>,
}

impl Iterate {
    fn flatten(&self) -> Vec<f64> {
        self.w.iter().copied().chain(self.xs.iter().flatten().copied()).collect()
    }
}

fn flatten_grad(g: &CriterionGradient) -> Vec<f64> {
    g.weights.iter().copied().chain(g.coords.iter().flatten().copied()).collect()
}

fn project(model: &ModelSpec, w: &[f64], xs: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let w = project_simplex(w);
    let xs = xs
        .iter()
        .map(|x| {
            let mut x = x.clone();
            model.domain().clamp(&mut x);
            x
        })
        .collect();
    (w, xs)
}

fn projected_step(model: &ModelSpec, it: &Iterate, g: &CriterionGradient, t: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let w: Vec<f64> = it.w.iter().zip(&g.weights).map(|(w, d)| w - t * d).collect();
    let xs: Vec<Vec<f64>> = it
        .xs
        .iter()
        .zip(&g.coords)
        .map(|(x, d)| x.iter().zip(d).map(|(v, dv)| v - t * dv).collect())
        .collect();
    project(model, &w, &xs)
}

fn stationarity(model: &ModelSpec, it: &Iterate, g: &CriterionGradient) -> f64 {
    let (w, xs) = projected_step(model, it, g, 1.0);
    let z = it.flatten();
    let moved: Vec<f64> = w.into_iter().chain(xs.into_iter().flatten()).collect();
    z.iter().zip(&moved).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Zeroes vanishing weights and merges near-coincident points.
/// Returns whether the iterate changed shape.
fn consolidate(model: &ModelSpec, it: &mut Iterate, opts: &RefineOptions, dropped: &mut Vec<DesignPoint>) -> bool {
    let widths: Vec<f64> = model.domain().lower().iter().zip(model.domain().upper()).map(|(l, u)| u - l).collect();
    let mut changed = false;
    let mut i = 0;
    while i < it.w.len() {
        let mut merged = false;
        for j in 0..it.w.len() {
            if j == i {
                continue;
            }
            let close = it.xs[i].iter().zip(&it.xs[j]).zip(&widths).all(|((a, b), wd)| (a - b).abs() <= opts.merge_tol * wd);
            if close && (it.w[j] > it.w[i] || (it.w[j] == it.w[i] && j < i)) {
                it.w[j] += it.w[i];
                merged = true;
                break;
            }
        }
        if merged || (it.w[i] <= opts.weight_zero_tol && it.w.len() > 1) {
            if !merged {
                let lost = it.w[i];
                let rest = 1.0 - lost;
                if rest <= 0.0 {
                    i += 1;
                    continue;
                }
                it.w.iter_mut().for_each(|v| *v /= rest);
            }
            it.w.remove(i);
            it.xs.remove(i);
            dropped.push(it.origin.remove(i));
            changed = true;
        } else {
            i += 1;
        }
    }
    if changed {
        let sum: f64 = it.w.iter().sum();
        it.w.iter_mut().for_each(|v| *v /= sum);
    }
    changed
}

/// Locally minimizes `Φ` over coordinates and weights, starting from `init`.
pub fn refine(model: &ModelSpec, init: &Design, noise: &NoisePrecision, opts: &RefineOptions) -> Result<RefineResult> {
    opts.validate()?;
    if !model.is_evaluable() {
        return Err(DesignError::Capability("phase 2 requires an evaluable model".into()));
    }
    if init.dim() != model.n() {
        return Err(DesignError::Shape(format!(
            "design has {} coordinates, model has {} inputs",
            init.dim(),
            model.n()
        )));
    }
    for x in init.points() {
        if !model.is_feasible(x.coords(), 1e-9) {
            return Err(DesignError::Infeasible(format!("initial point {:?} violates the domain or constraints", x.coords())));
        }
    }

    let mut it = Iterate {
        w: init.weights().to_vec(),
        xs: init.points().iter().map(|p| p.coords().to_vec()).collect(),
        origin: init.points().to_vec(),
    };
    let mut dropped = Vec::new();
    let rounds = if model.constraints().is_empty() { 1 } else { opts.penalty_rounds.max(1) };
    let mut penalty = if model.constraints().is_empty() { 0.0 } else { opts.penalty_start };
    let mut iterations = 0;
    let mut stat = f64::INFINITY;
    let mut converged = false;

    for _ in 0..rounds {
        let problem = Problem { model, noise, assembly: opts.assembly(model), fd_step: opts.fd_step, penalty };
        let mut g = problem.gradient(&it.w, &it.xs).map_err(|e| e.in_stage("refine"))?;
        let mut t = 1.0 / flatten_grad(&g).iter().map(|v| v.abs()).fold(1e-12, f64::max);
        converged = false;
        while iterations < opts.max_iter {
            stat = stationarity(model, &it, &g);
            if stat <= opts.tol {
                converged = true;
                break;
            }
            iterations += 1;
            let z = it.flatten();
            let gz = flatten_grad(&g);
            let mut accepted = None;
            let mut step = t;
            for _ in 0..60 {
                let (w, xs) = projected_step(model, &it, &g, step);
                let cand = Iterate { w, xs, origin: Vec::new() };
                let f = problem.objective(&cand.w, &cand.xs)?;
                let dz: f64 = cand.flatten().iter().zip(&z).zip(&gz).map(|((a, b), gi)| gi * (a - b)).sum();
                if f.is_finite() && f <= g.phi + 1e-4 * dz {
                    accepted = Some(cand);
                    break;
                }
                step *= 0.5;
            }
            let Some(cand) = accepted else { break };
            let s: Vec<f64> = cand.flatten().iter().zip(&z).map(|(a, b)| a - b).collect();
            it.w = cand.w;
            it.xs = cand.xs;
            let reshaped = consolidate(model, &mut it, opts, &mut dropped);
            let g_new = problem.gradient(&it.w, &it.xs)?;
            if reshaped {
                t = 1.0 / flatten_grad(&g_new).iter().map(|v| v.abs()).fold(1e-12, f64::max);
            } else {
                let y: Vec<f64> = flatten_grad(&g_new).iter().zip(&gz).map(|(a, b)| a - b).collect();
                let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                let ss: f64 = s.iter().map(|v| v * v).sum();
                t = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { (step * 2.0).min(1e12) };
            }
            g = g_new;
        }
        if !converged {
            stat = stationarity(model, &it, &g);
            converged = stat <= opts.tol;
        }
        penalty *= 10.0;
    }

    let feasible = it.xs.iter().all(|x| model.is_feasible(x, 1e-6));
    let design = Design::new(it.xs.iter().map(|x| DesignPoint::new(x.clone())).collect(), it.w.clone())?;
    let phi = Problem { model, noise, assembly: opts.assembly(model), fd_step: opts.fd_step, penalty: 0.0 }
        .objective(&it.w, &it.xs)?;
    if !phi.is_finite() {
        return Err(DesignError::Singular("refined design is singular despite regularization".into()));
    }
    Ok(RefineResult {
        design,
        phi,
        stationarity: stat,
        converged: converged && feasible,
        iterations,
        dropped_points: dropped,
    })
}
