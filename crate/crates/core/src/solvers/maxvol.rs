//! Dominant-submatrix selection: square `maxvol` by row swaps and the greedy
//! rectangular expansion `rect_maxvol`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmatrixSelection {
    /// Selected rows, in selection order.
    pub indices: Vec<usize>,
    /// `|det Ã|` for square selections, `det(ÃᵀÃ)` for rectangular ones.
    pub objective: f64,
    /// All rows with the selected ones first.
    pub permutation: Vec<usize>,
    /// Objective after initialization and after every swap or expansion.
    pub history: Vec<f64>,
    pub converged: bool,
}

fn permutation(n: usize, selected: &[usize]) -> Vec<usize> {
    let mut perm = selected.to_vec();
    perm.extend((0..n).filter(|i| !selected.contains(i)));
    perm
}

fn rows(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), a.ncols(), |i, j| a[(idx[i], j)])
}

/// Row choice of Gaussian elimination with partial pivoting.
fn pivot_rows(a: &DMatrix<f64>) -> Result<Vec<usize>> {
    let (n, m) = a.shape();
    let mut work = a.clone();
    let scale = a.amax();
    let mut chosen = Vec::with_capacity(m);
    let mut used = vec![false; n];
    for col in 0..m {
        let (best, val) = (0..n)
            .filter(|&i| !used[i])
            .map(|i| (i, work[(i, col)].abs()))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best == usize::MAX || !(val > 1e-12 * scale) {
            return Err(DesignError::RankDeficient(format!(
                "matrix has rank {col} < {m} columns"
            )));
        }
        used[best] = true;
        chosen.push(best);
        let pivot = work[(best, col)];
        for i in 0..n {
            if used[i] {
                continue;
            }
            let f = work[(i, col)] / pivot;
            if f != 0.0 {
                for c in col..m {
                    work[(i, c)] -= f * work[(best, c)];
                }
            }
        }
    }
    Ok(chosen)
}

/// `B = A Ã⁻¹` for the current square selection.
fn coefficients(a: &DMatrix<f64>, sel: &[usize]) -> Result<DMatrix<f64>> {
    let sub = rows(a, sel);
    let lu = sub.transpose().lu();
    lu.solve(&a.transpose())
        .map(|bt| bt.transpose())
        .ok_or_else(|| DesignError::RankDeficient("selected submatrix is singular".into()))
}

/// Square `m×m` submatrix of the `n×m` matrix `a` that no single row swap
/// can enlarge in volume by more than `1 + delta`.
pub fn maxvol(a: &DMatrix<f64>, delta: f64, max_iter: usize) -> Result<SubmatrixSelection> {
    let (n, m) = a.shape();
    if m == 0 || n < m {
        return Err(DesignError::Shape(format!("maxvol needs n >= m >= 1, got {n}x{m}")));
    }
    if !(delta >= 0.0) {
        return Err(DesignError::InvalidArgument("delta must be >= 0".into()));
    }
    let mut sel = pivot_rows(a)?;
    let mut det = rows(a, &sel).determinant().abs();
    let mut history = vec![det];
    let mut converged = false;
    for _ in 0..max_iter.max(1) {
        let b = coefficients(a, &sel)?;
        let (mut bi, mut bj, mut bv) = (0, 0, 0.0);
        for i in 0..n {
            for j in 0..m {
                if b[(i, j)].abs() > bv {
                    (bi, bj, bv) = (i, j, b[(i, j)].abs());
                }
            }
        }
        if bv <= 1.0 + delta {
            converged = true;
            break;
        }
        sel[bj] = bi;
        det = rows(a, &sel).determinant().abs();
        history.push(det);
    }
    if !converged {
        let b = coefficients(a, &sel)?;
        converged = b.amax() <= 1.0 + delta;
    }
    Ok(SubmatrixSelection {
        permutation: permutation(n, &sel),
        indices: sel,
        objective: det,
        history,
        converged,
    })
}

/// `k×m` selection: [`maxvol`] followed by greedily appending the row with the
/// largest `‖C(i,:)‖²`, `C = A Ã⁺`, until `k` rows are chosen.
pub fn rect_maxvol(a: &DMatrix<f64>, k: usize, delta: f64) -> Result<SubmatrixSelection> {
    let (n, m) = a.shape();
    if k < m || k > n {
        return Err(DesignError::InvalidArgument(format!(
            "rect_maxvol needs m <= k <= n, got m={m}, k={k}, n={n}"
        )));
    }
    let square = maxvol(a, delta, 100 * n)?;
    let mut sel = square.indices.clone();
    let gram = |sel: &[usize]| {
        let sub = rows(a, sel);
        sub.transpose() * sub
    };
    let mut g = gram(&sel);
    let mut history = vec![g.determinant()];
    while sel.len() < k {
        let g_inv = g
            .clone()
            .try_inverse()
            .ok_or_else(|| DesignError::RankDeficient("selected rows lost rank".into()))?;
        // ‖C(i,:)‖² = a_i (ÃᵀÃ)⁻¹ a_iᵀ.
        let (best, _) = (0..n)
            .filter(|i| !sel.contains(i))
            .map(|i| {
                let r = a.row(i);
                (i, (r * &g_inv * r.transpose())[(0, 0)])
            })
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        sel.push(best);
        g = gram(&sel);
        history.push(g.determinant());
    }
    Ok(SubmatrixSelection {
        permutation: permutation(n, &sel),
        objective: *history.last().unwrap(),
        indices: sel,
        history,
        converged: square.converged,
    })
}
