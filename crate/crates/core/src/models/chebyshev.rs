//! Tensor-product Chebyshev basis with total degree at most `d`, observed
//! together with its gradient.

use nalgebra::DMatrix;

use crate::design::JacobianBlock;

/// Multi-indices `λ ∈ ℕⁿ` with `‖λ‖₁ ≤ d`, by total degree, then with larger
/// leading exponents first (`00, 10, 01, 20, 11, 02` for `n = d = 2`).
pub fn cheb_basis(n: usize, d: usize) -> Vec<Vec<usize>> {
    fn fill(prefix: &mut Vec<usize>, remaining_dims: usize, total: usize, out: &mut Vec<Vec<usize>>) {
        if remaining_dims == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for a in (0..=total).rev() {
            prefix.push(a);
            fill(prefix, remaining_dims - 1, total - a, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    for total in 0..=d {
        fill(&mut Vec::with_capacity(n), n, total, &mut out);
    }
    out
}

/// `T_0..T_d` and their derivatives at `x`.
pub fn cheb_values(x: f64, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut t = vec![0.0; d + 1];
    let mut dt = vec![0.0; d + 1];
    t[0] = 1.0;
    if d >= 1 {
        t[1] = x;
        dt[1] = 1.0;
    }
    for i in 1..d {
        t[i + 1] = 2.0 * x * t[i] - t[i - 1];
        dt[i + 1] = 2.0 * t[i] + 2.0 * x * dt[i] - dt[i - 1];
    }
    (t, dt)
}

/// `(n+1)×P` block: row 0 holds `φᵢ(x)`, row `j` holds `∂φᵢ/∂x_j`.
pub fn cheb_block(x: &[f64], basis: &[Vec<usize>]) -> JacobianBlock {
    let n = x.len();
    let d = basis.iter().flatten().copied().max().unwrap_or(0);
    let tables: Vec<(Vec<f64>, Vec<f64>)> = x.iter().map(|&v| cheb_values(v, d)).collect();
    let mut m = DMatrix::zeros(n + 1, basis.len());
    for (col, lambda) in basis.iter().enumerate() {
        m[(0, col)] = lambda.iter().enumerate().map(|(j, &l)| tables[j].0[l]).product();
        for k in 0..n {
            m[(k + 1, col)] = lambda
                .iter()
                .enumerate()
                .map(|(j, &l)| if j == k { tables[j].1[l] } else { tables[j].0[l] })
                .product();
        }
    }
    JacobianBlock::new(m).expect("finite Chebyshev values")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn basis_two_dims_degree_two() {
        let b = cheb_basis(2, 2);
        let expected = vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]];
        assert_eq!(b, expected);
    }

    #[test]
    fn basis_count_is_binomial() {
        for n in 1..=5 {
            for d in 0..=4 {
                let b = cheb_basis(n, d);
                assert_eq!(b.len(), binomial(n + d, n), "n = {n}, d = {d}");
                // Brute force: every index with ‖λ‖₁ ≤ d appears exactly once.
                let brute = (0..(d + 1).pow(n as u32))
                    .filter(|code| {
                        let mut c = *code;
                        let mut s = 0;
                        for _ in 0..n {
                            s += c % (d + 1);
                            c /= d + 1;
                        }
                        s <= d
                    })
                    .count();
                assert_eq!(b.len(), brute);
            }
        }
    }

    #[test]
    fn block_at_origin() {
        let block = cheb_block(&[0.0], &cheb_basis(1, 2));
        assert_eq!(block.matrix().as_slice(), &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0]);
        assert_eq!(cheb_values(0.5, 2).0[2], -0.5);
    }

    #[test]
    fn derivative_recurrence_matches_closed_form() {
        // T_n(cos θ) = cos nθ, T_n'(cos θ) = n sin nθ / sin θ.
        for &theta in &[0.3f64, 1.1, 2.0] {
            let x = theta.cos();
            let (t, dt) = cheb_values(x, 6);
            for k in 0..=6 {
                let kf = k as f64;
                assert!((t[k] - (kf * theta).cos()).abs() < 1e-13);
                assert!((dt[k] - kf * (kf * theta).sin() / theta.sin()).abs() < 1e-12);
            }
        }
    }
}
