//! The one-input exponential model `f(x; p) = p₁ e^{p₂ x}` and its known optimum.

use crate::design::{Design, DesignPoint, JacobianBlock};

pub fn exp_eval(x: f64, p: &[f64]) -> f64 {
    p[0] * (p[1] * x).exp()
}

/// `(∂f/∂p₁, ∂f/∂p₂) = (e^{p₂x}, p₁ x e^{p₂x})`.
pub fn exp_jacobian(x: f64, p: &[f64]) -> JacobianBlock {
    let e = (p[1] * x).exp();
    JacobianBlock::from_row_slice(1, 2, &[e, p[0] * x * e]).expect("1x2 block")
}

/// `det I` for a two-point design, unscaled and unregularized.
pub fn exp_two_point_det(x1: f64, x2: f64, w1: f64, w2: f64, p: &[f64]) -> f64 {
    w1 * w2 * p[0] * p[0] * (x1 - x2).powi(2) * (2.0 * p[1] * (x1 + x2)).exp()
}

/// Closed-form optimum on `[-1, 1]` for `p = (1, 3)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpOracle;

impl ExpOracle {
    pub const PARAMETERS: [f64; 2] = [1.0, 3.0];

    pub fn design(&self) -> Design {
        Design::new(
            vec![DesignPoint::from(2.0 / 3.0), DesignPoint::from(1.0)],
            vec![0.5, 0.5],
        )
        .expect("valid optimum")
    }

    /// `−det I(ξ*) = −e¹⁰/36`.
    pub fn neg_det(&self) -> f64 {
        -(10.0f64).exp() / 36.0
    }

    /// `Φ(ξ*) = −log₁₀(e¹⁰/36)`.
    pub fn phi(&self) -> f64 {
        -(-self.neg_det()).log10()
    }

    /// `d(x, ξ*)` in closed form.
    pub fn sensitivity(&self, x: f64) -> f64 {
        let e2 = (2.0f64).exp();
        (18.0 * x * x * (e2 + 1.0) - 12.0 * x * (3.0 * e2 + 2.0) + 2.0 * (9.0 * e2 + 4.0))
            * (6.0 * x - 6.0).exp()
    }
}
