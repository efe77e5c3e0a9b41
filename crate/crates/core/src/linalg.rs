//! Small dense helpers on top of nalgebra used by the design machinery.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{DesignError, Result};

/// Pivots of a Cholesky factor smaller than this fraction of the largest
/// diagonal entry mark the matrix as numerically singular.
pub const SINGULAR_RTOL: f64 = 1e-14;

/// Cholesky factorization `M = L Lᵀ` of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SymFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SymFactor {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let p = m.nrows();
        if p != m.ncols() {
            return Err(DesignError::Shape(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(DesignError::Singular("non-finite entries".into()));
        }
        let scale = (0..p).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Err(DesignError::Singular("zero matrix".into()));
        }
        let chol = Cholesky::new(m.clone())
            .ok_or_else(|| DesignError::Singular("factorization failed".into()))?;
        let l = chol.l_dirty();
        for i in 0..p {
            let piv = l[(i, i)] * l[(i, i)];
            if !(piv > SINGULAR_RTOL * scale) {
                return Err(DesignError::Singular(format!("pivot {i} is {piv:e}")));
            }
        }
        Ok(Self { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Natural log of the determinant as a sum of log pivots.
    pub fn ln_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// `L⁻¹ B`.
    pub fn whiten(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let l = self.chol.l_dirty();
        l.solve_lower_triangular(b)
            .expect("triangular solve with verified nonzero pivots")
    }

    /// `M⁻¹ B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

pub fn is_symmetric(m: &DMatrix<f64>, rtol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rtol * scale {
                return false;
            }
        }
    }
    true
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Returns `R` with `R Rᵀ = M` for a symmetric positive semi-definite `M`.
/// Eigenvalues within `psd_tol·‖M‖` below zero are clamped to zero.
pub fn psd_root(m: &DMatrix<f64>, psd_tol: f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = m.amax();
    let mut root = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -psd_tol * scale {
            return Err(DesignError::InvalidArgument(format!(
                "matrix is not positive semi-definite (eigenvalue {lambda:e})"
            )));
        }
        let s = lambda.max(0.0).sqrt();
        root.column_mut(j).scale_mut(s);
    }
    Ok(root)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Frobenius inner product `<A, B>`.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax()).max(f64::MIN_POSITIVE);
    (a - b).amax() / scale
}
