//! Evaluable models, tabulated Jacobians, observation simulation and estimation.

pub mod chebyshev;
pub mod estimate;
pub mod exponential;
pub mod tabulated;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{DesignPoint, JacobianBlock};
use crate::error::{DesignError, Result};
use crate::generators::{CandidateSet, DomainBox};

pub use chebyshev::{cheb_basis, cheb_block};
pub use estimate::{estimate_parameters, realize_repetitions, simulate_observation, Experiment};
pub use exponential::{exp_eval, exp_jacobian, ExpOracle};
pub use tabulated::{JacobianTable, TableMeta};

/// Stored points of a tabulated model match a query within this tolerance.
pub const TABLE_MATCH_TOL: f64 = 1e-12;

/// Linear inequality `a·x + b ≥ 0` on the design variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl LinearConstraint {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + self.offset
    }
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    Exponential,
    Chebyshev { degree: usize, basis: Arc<Vec<Vec<usize>>> },
    Tabulated(Arc<JacobianTable>),
}

/// A model with its domain, current parameters and noise level.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    n: usize,
    m: usize,
    n_params: usize,
    domain: DomainBox,
    parameters: Vec<f64>,
    sigma: Vec<f64>,
    constraints: Vec<LinearConstraint>,
    kind: ModelKind,
}

impl ModelSpec {
    /// `f = p₁ e^{p₂x}` on `[-1, 1]`.
    pub fn exponential(parameters: &[f64]) -> Result<Self> {
        if parameters.len() != 2 {
            return Err(DesignError::Shape("exponential model has 2 parameters".into()));
        }
        if parameters.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(DesignError::InvalidArgument(
                "exponential model parameters must be positive".into(),
            ));
        }
        Ok(Self {
            n: 1,
            m: 1,
            n_params: 2,
            domain: DomainBox::symmetric(1),
            parameters: parameters.to_vec(),
            sigma: vec![0.0],
            constraints: Vec::new(),
            kind: ModelKind::Exponential,
        })
    }

    /// Linear model in the Chebyshev basis of total degree `≤ degree`, observed
    /// with its gradient; unit coefficients on `[-1, 1]ⁿ`.
    pub fn chebyshev(n: usize, degree: usize) -> Result<Self> {
        if n == 0 {
            return Err(DesignError::InvalidArgument("Chebyshev model needs n >= 1".into()));
        }
        let basis = cheb_basis(n, degree);
        let p = basis.len();
        Ok(Self {
            n,
            m: n + 1,
            n_params: p,
            domain: DomainBox::symmetric(n),
            parameters: vec![1.0; p],
            sigma: vec![0.0; n + 1],
            constraints: Vec::new(),
            kind: ModelKind::Chebyshev {
                degree,
                basis: Arc::new(basis),
            },
        })
    }

    /// Model known only through stored Jacobian blocks. The domain is the
    /// bounding box of the stored points.
    pub fn tabulated(table: JacobianTable) -> Result<Self> {
        let meta = table.meta().clone();
        let mut lower = vec![f64::INFINITY; meta.n];
        let mut upper = vec![f64::NEG_INFINITY; meta.n];
        for p in table.points() {
            for (i, &c) in p.coords().iter().enumerate() {
                lower[i] = lower[i].min(c);
                upper[i] = upper[i].max(c);
            }
        }
        for (l, u) in lower.iter_mut().zip(upper.iter_mut()) {
            if *l == *u {
                *l -= 0.5;
                *u += 0.5;
            }
        }
        Ok(Self {
            n: meta.n,
            m: meta.m,
            n_params: meta.n_params,
            domain: DomainBox::new(lower, upper)?,
            parameters: meta.parameters.clone(),
            sigma: vec![0.0; meta.m],
            constraints: Vec::new(),
            kind: ModelKind::Tabulated(Arc::new(table)),
        })
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Result<Self> {
        if domain.dim() != self.n {
            return Err(DesignError::Shape(format!(
                "{}-dimensional domain for a model with {} inputs",
                domain.dim(),
                self.n
            )));
        }
        self.domain = domain;
        Ok(self)
    }

    pub fn with_parameters(mut self, parameters: &[f64]) -> Result<Self> {
        if parameters.len() != self.n_params {
            return Err(DesignError::Shape(format!(
                "{} parameters given, model has {}",
                parameters.len(),
                self.n_params
            )));
        }
        if parameters.iter().any(|p| !p.is_finite()) {
            return Err(DesignError::InvalidArgument("parameters must be finite".into()));
        }
        if matches!(self.kind, ModelKind::Exponential) && parameters.iter().any(|p| *p <= 0.0) {
            return Err(DesignError::InvalidArgument(
                "exponential model parameters must be positive".into(),
            ));
        }
        self.parameters = parameters.to_vec();
        Ok(self)
    }

    /// Observation noise standard deviation, one value shared by all outputs or one per output.
    pub fn with_sigma(mut self, sigma: &[f64]) -> Result<Self> {
        let sigma = match sigma.len() {
            1 => vec![sigma[0]; self.m],
            len if len == self.m => sigma.to_vec(),
            len => {
                return Err(DesignError::Shape(format!(
                    "{len} noise levels for a model with {} outputs",
                    self.m
                )))
            }
        };
        if sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(DesignError::InvalidArgument("sigma must be finite and >= 0".into()));
        }
        self.sigma = sigma;
        Ok(self)
    }

    pub fn with_constraints(mut self, constraints: Vec<LinearConstraint>) -> Result<Self> {
        if constraints.iter().any(|c| c.coeffs.len() != self.n) {
            return Err(DesignError::Shape("constraint coefficient count differs from n".into()));
        }
        self.constraints = constraints;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn parameters(&self) -> &[f64] {
        &self.parameters
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    /// Whether `f` and `J` can be evaluated anywhere in the domain.
    pub fn is_evaluable(&self) -> bool {
        !matches!(self.kind, ModelKind::Tabulated(_))
    }

    pub fn name(&self) -> String {
        match &self.kind {
            ModelKind::Exponential => "exponential".into(),
            ModelKind::Chebyshev { degree, .. } => format!("chebyshev(n={}, d={degree})", self.n),
            ModelKind::Tabulated(_) => "tabulated".into(),
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(DesignError::Shape(format!(
                "point has {} coordinates, model has {} inputs",
                x.len(),
                self.n
            )));
        }
        Ok(())
    }

    fn check_params(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params {
            return Err(DesignError::Shape(format!(
                "{} parameters given, model has {}",
                p.len(),
                self.n_params
            )));
        }
        Ok(())
    }

    /// Model outputs `f(x; p)`.
    pub fn evaluate(&self, x: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        self.check_params(p)?;
        match &self.kind {
            ModelKind::Exponential => Ok(vec![exp_eval(x[0], p)]),
            ModelKind::Chebyshev { basis, .. } => {
                let block = cheb_block(x, basis);
                Ok((block.matrix() * nalgebra::DVector::from_column_slice(p)).iter().copied().collect())
            }
            ModelKind::Tabulated(_) => Err(DesignError::Capability(
                "tabulated model stores no outputs to evaluate".into(),
            )),
        }
    }

    /// `J_p(x; p)`, an `m×P` block.
    pub fn jacobian(&self, x: &[f64], p: &[f64]) -> Result<JacobianBlock> {
        self.check_point(x)?;
        self.check_params(p)?;
        match &self.kind {
            ModelKind::Exponential => Ok(exp_jacobian(x[0], p)),
            ModelKind::Chebyshev { basis, .. } => Ok(cheb_block(x, basis)),
            ModelKind::Tabulated(table) => table
                .lookup(x, TABLE_MATCH_TOL)
                .cloned()
                .ok_or_else(|| {
                    DesignError::Capability(format!(
                        "tabulated model has no Jacobian stored at {x:?}"
                    ))
                }),
        }
    }

    /// Jacobian at the model's current parameters.
    pub fn jacobian_at(&self, x: &[f64]) -> Result<JacobianBlock> {
        self.jacobian(x, &self.parameters)
    }

    pub fn blocks_for(&self, points: &[DesignPoint]) -> Result<Vec<JacobianBlock>> {
        points.par_iter().map(|x| self.jacobian_at(x.coords())).collect()
    }

    /// Attaches blocks at the current parameters to every candidate.
    pub fn attach(&self, set: CandidateSet) -> Result<CandidateSet> {
        let blocks = self.blocks_for(set.points())?;
        set.with_blocks(blocks)
    }

    /// Candidate pool stored in a tabulated model.
    pub fn table_candidates(&self) -> Result<CandidateSet> {
        match &self.kind {
            ModelKind::Tabulated(table) => table.to_candidates(format!("Table({})", table.len())),
            _ => Err(DesignError::Capability("model has no stored table".into())),
        }
    }

    /// Constraint values `c(x)`; all must be `≥ 0` for a feasible point.
    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|c| c.value(x)).collect()
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.domain.contains(x) && self.constraint_values(x).iter().all(|&c| c >= -tol)
    }
}
