//! Noisy observations and least-squares re-estimation of parameters.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::design::{DesignPoint, POINT_EQ_TOL};
use crate::error::{DesignError, Result};
use crate::models::ModelSpec;

const STEP_TOL: f64 = 1e-10;
const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 500;

/// An observed output vector and how many replicate runs it stands for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub point: DesignPoint,
    pub y: Vec<f64>,
    pub repetitions: usize,
}

/// `y = f(x; p) + ε` with `ε ~ N(0, diag(σ²))`, using the model's own parameters.
pub fn simulate_observation(model: &ModelSpec, x: &DesignPoint, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with(model, x, &mut rng)
}

pub fn simulate_with(model: &ModelSpec, x: &DesignPoint, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let mut y = model.evaluate(x.coords(), model.parameters())?;
    for (v, &s) in y.iter_mut().zip(model.sigma()) {
        if s > 0.0 {
            let noise = Normal::new(0.0, s).map_err(|e| DesignError::InvalidArgument(e.to_string()))?;
            *v += noise.sample(rng);
        }
    }
    Ok(y)
}

/// Integer repetitions summing to `total`, proportional to `weights`
/// (floors, then the largest remainders get the leftover runs; ties go to
/// the lower index).
pub fn realize_repetitions(weights: &[f64], total: usize) -> Vec<usize> {
    let mut reps: Vec<usize> = weights.iter().map(|w| (w * total as f64).floor() as usize).collect();
    let assigned: usize = reps.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = weights[a] * total as f64 - reps[a] as f64;
        let rb = weights[b] * total as f64 - reps[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        reps[i] += 1;
    }
    reps
}

/// Number of distinct points times outputs: the count of independent
/// equations available for `P` unknowns.
pub fn effective_observations(model: &ModelSpec, experiments: &[Experiment]) -> usize {
    let mut distinct: Vec<&DesignPoint> = Vec::new();
    for e in experiments.iter().filter(|e| e.repetitions > 0) {
        if !distinct.iter().any(|p| p.approx_eq(&e.point, POINT_EQ_TOL)) {
            distinct.push(&e.point);
        }
    }
    distinct.len() * model.m()
}

fn residuals(model: &ModelSpec, experiments: &[Experiment], p: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let m = model.m();
    let rows = experiments.len() * m;
    let mut r = DVector::zeros(rows);
    let mut jac = DMatrix::zeros(rows, model.n_params());
    for (k, e) in experiments.iter().enumerate() {
        let scale = (e.repetitions as f64).sqrt();
        let f = model.evaluate(e.point.coords(), p)?;
        let j = model.jacobian(e.point.coords(), p)?;
        for o in 0..m {
            r[k * m + o] = scale * (e.y[o] - f[o]);
            for c in 0..model.n_params() {
                jac[(k * m + o, c)] = scale * j.matrix()[(o, c)];
            }
        }
    }
    Ok((r, jac))
}

/// Gauss–Newton on the repetition-weighted residual sum of squares, with
/// Levenberg damping whenever the plain step fails to decrease it.
pub fn estimate_parameters(model: &ModelSpec, experiments: &[Experiment], p0: &[f64]) -> Result<Vec<f64>> {
    if p0.len() != model.n_params() {
        return Err(DesignError::Shape(format!(
            "{} starting values for {} parameters",
            p0.len(),
            model.n_params()
        )));
    }
    if experiments.iter().any(|e| e.y.len() != model.m()) {
        return Err(DesignError::Shape("observation length differs from model outputs".into()));
    }
    let observations = effective_observations(model, experiments);
    if observations < model.n_params() {
        return Err(DesignError::Identifiability {
            observations,
            parameters: model.n_params(),
        });
    }

    let mut p = DVector::from_column_slice(p0);
    let (mut r, mut jac) = residuals(model, experiments, p.as_slice())?;
    let mut cost = r.norm_squared();
    let mut damping = 0.0f64;
    for _ in 0..MAX_ITER {
        let grad = jac.transpose() * &r;
        if grad.amax() <= GRAD_TOL || cost == 0.0 {
            return Ok(p.iter().copied().collect());
        }
        let normal = jac.transpose() * &jac;
        let diag_scale = normal.diagonal().amax().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        for _ in 0..40 {
            let mut lhs = normal.clone();
            for i in 0..lhs.nrows() {
                lhs[(i, i)] += damping * normal[(i, i)].max(1e-12 * diag_scale);
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&grad),
                None => {
                    damping = if damping == 0.0 { 1e-3 } else { damping * 10.0 };
                    continue;
                }
            };
            let trial = &p + &step;
            let trial_res = residuals(model, experiments, trial.as_slice());
            match trial_res {
                Ok((tr, tj)) if tr.norm_squared().is_finite() && tr.norm_squared() <= cost => {
                    let small = step.norm() <= STEP_TOL * (1.0 + p.norm());
                    p = trial;
                    cost = tr.norm_squared();
                    r = tr;
                    jac = tj;
                    damping *= 0.1;
                    if damping < 1e-12 {
                        damping = 0.0;
                    }
                    accepted = true;
                    if small {
                        return Ok(p.iter().copied().collect());
                    }
                    break;
                }
                _ => {
                    if step.norm() <= STEP_TOL * (1.0 + p.norm()) {
                        return Ok(p.iter().copied().collect());
                    }
                    damping = if damping == 0.0 { 1e-3 } else { damping * 10.0 };
                }
            }
        }
        if !accepted {
            if normal.clone().cholesky().is_none() {
                return Err(DesignError::RankDeficient(
                    "normal equations are singular at the current estimate".into(),
                ));
            }
            return Ok(p.iter().copied().collect());
        }
    }
    Ok(p.iter().copied().collect())
}
