//! Designs, Jacobian blocks, Fisher information assembly, the log-D criterion
//! and the sensitivity function used for Kiefer–Wolfowitz certification.
//!
//! Every information quantity is computed from the *whitened* block
//! `A(x) = Rᵀ J(x) S`, where `R Rᵀ = Σ⁻¹` and `S = diag(p)` when parameter
//! scaling is on. Then `μ(x) = Aᵀ A` and `d(x, ξ) = ‖L⁻¹ Aᵀ‖²_F` with
//! `I(ξ) = L Lᵀ`.

use std::f64::consts::LN_10;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};
use crate::generators::CandidateSet;
use crate::io::fmt_f64;
use crate::linalg::{is_symmetric, psd_root, symmetrize, SymFactor};

/// Tolerance on `|Σ w − 1|` for a valid design.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;
/// Two points closer than this (coordinate-wise) are the same point.
pub const POINT_EQ_TOL: f64 = 1e-12;
/// Default tolerance of [`kw_certificate`].
pub const DEFAULT_CERT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesignPoint(Vec<f64>);

impl DesignPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn approx_eq(&self, other: &DesignPoint, tol: f64) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| (a - b).abs() <= tol)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for DesignPoint {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl From<f64> for DesignPoint {
    fn from(v: f64) -> Self {
        Self(vec![v])
    }
}

/// A design `ξ = {X; w}`: support points with weights on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DesignRecord", into = "DesignRecord")]
pub struct Design {
    points: Vec<DesignPoint>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignRecord {
    points: Vec<DesignPoint>,
    weights: Vec<f64>,
}

impl TryFrom<DesignRecord> for Design {
    type Error = DesignError;

    fn try_from(r: DesignRecord) -> Result<Self> {
        Design::new(r.points, r.weights)
    }
}

impl From<Design> for DesignRecord {
    fn from(d: Design) -> Self {
        DesignRecord {
            points: d.points,
            weights: d.weights,
        }
    }
}

impl Design {
    pub fn new(points: Vec<DesignPoint>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(DesignError::EmptyDesign);
        }
        if points.len() != weights.len() {
            return Err(DesignError::Shape(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let n = points[0].dim();
        if points.iter().any(|p| p.dim() != n) {
            return Err(DesignError::Shape("design points differ in dimension".into()));
        }
        if points.iter().flat_map(|p| p.coords()).any(|c| !c.is_finite()) {
            return Err(DesignError::InvalidArgument("non-finite coordinate".into()));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(DesignError::InvalidArgument(
                "weights must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(DesignError::InvalidArgument(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        Ok(Self { points, weights })
    }

    /// Equal weights `1/N` on every point.
    pub fn uniform(points: Vec<DesignPoint>) -> Result<Self> {
        let n = points.len().max(1);
        let weights = vec![1.0 / n as f64; points.len()];
        Self::new(points, weights)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn points(&self) -> &[DesignPoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Indices of points carrying positive weight.
    pub fn support_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    pub fn contains_point(&self, x: &DesignPoint, tol: f64) -> bool {
        self.points.iter().any(|p| p.approx_eq(x, tol))
    }
}

/// `φ(x)ᵀ = J_p(x; p)`: rows are outputs, columns are parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBlock(DMatrix<f64>);

impl JacobianBlock {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(DesignError::InvalidArgument(
                "Jacobian block has non-finite entries".into(),
            ));
        }
        Ok(Self(matrix))
    }

    pub fn from_row_slice(m: usize, p: usize, data: &[f64]) -> Result<Self> {
        if data.len() != m * p {
            return Err(DesignError::Shape(format!(
                "expected {} entries for a {m}x{p} block, got {}",
                m * p,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(m, p, data))
    }

    pub fn outputs(&self) -> usize {
        self.0.nrows()
    }

    pub fn params(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Inverse observation covariance `Σ⁻¹`, stored with a square root factor.
#[derive(Debug, Clone)]
pub struct NoisePrecision {
    inv_cov: DMatrix<f64>,
    root: DMatrix<f64>,
    identity: bool,
}

impl NoisePrecision {
    pub fn new(inv_cov: DMatrix<f64>) -> Result<Self> {
        if inv_cov.nrows() != inv_cov.ncols() {
            return Err(DesignError::Shape("noise precision must be square".into()));
        }
        if !is_symmetric(&inv_cov, 1e-12) {
            return Err(DesignError::InvalidArgument(
                "noise precision is not symmetric".into(),
            ));
        }
        let root = psd_root(&inv_cov, 1e-10)?;
        let identity = inv_cov == DMatrix::identity(inv_cov.nrows(), inv_cov.nrows());
        Ok(Self {
            inv_cov,
            root,
            identity,
        })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            inv_cov: DMatrix::identity(m, m),
            root: DMatrix::identity(m, m),
            identity: true,
        }
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.inv_cov.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.inv_cov
    }
}

/// The Fisher information matrix `I(ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationMatrix(DMatrix<f64>);

impl InformationMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !is_symmetric(&matrix, 1e-10) {
            return Err(DesignError::Shape(
                "information matrix must be square and symmetric".into(),
            ));
        }
        Ok(Self(matrix))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn factor(&self) -> Result<SymFactor> {
        SymFactor::new(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    pub regularization: f64,
    pub scale_by_parameters: bool,
    pub parameters: Vec<f64>,
}

impl AssemblyOptions {
    /// No scaling, no regularization.
    pub fn unscaled() -> Self {
        Self {
            regularization: 0.0,
            scale_by_parameters: false,
            parameters: Vec::new(),
        }
    }

    /// Scale by `diag(p)`, no regularization (phase-1 default).
    pub fn scaled(parameters: &[f64]) -> Self {
        Self {
            regularization: 0.0,
            scale_by_parameters: true,
            parameters: parameters.to_vec(),
        }
    }

    pub fn with_regularization(mut self, lambda: f64) -> Self {
        self.regularization = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.regularization >= 0.0) || !self.regularization.is_finite() {
            return Err(DesignError::InvalidArgument(
                "regularization must be finite and >= 0".into(),
            ));
        }
        if self.parameters.iter().any(|p| !p.is_finite()) {
            return Err(DesignError::InvalidArgument(
                "scaling parameters must be finite".into(),
            ));
        }
        Ok(())
    }
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self::unscaled()
    }
}

/// Whitened block `Rᵀ J S` (m×P). `μ(x)` is its Gram matrix.
pub fn whitened_block(
    block: &JacobianBlock,
    noise: &NoisePrecision,
    opts: &AssemblyOptions,
) -> Result<DMatrix<f64>> {
    let (m, p) = (block.outputs(), block.params());
    if noise.dim() != m {
        return Err(DesignError::Shape(format!(
            "block has {m} outputs but noise precision is {}x{}",
            noise.dim(),
            noise.dim()
        )));
    }
    let mut a = if noise.identity {
        block.matrix().clone()
    } else {
        noise.root.transpose() * block.matrix()
    };
    if opts.scale_by_parameters {
        if opts.parameters.len() != p {
            return Err(DesignError::Shape(format!(
                "{} scaling parameters for a block with {p} columns",
                opts.parameters.len()
            )));
        }
        for (j, s) in opts.parameters.iter().enumerate() {
            a.column_mut(j).scale_mut(*s);
        }
    }
    Ok(a)
}

/// `μ(x) = S φ(x) Σ⁻¹ φᵀ(x) S`.
pub fn atom(
    block: &JacobianBlock,
    noise: &NoisePrecision,
    opts: &AssemblyOptions,
) -> Result<DMatrix<f64>> {
    let a = whitened_block(block, noise, opts)?;
    let mut mu = a.transpose() * &a;
    symmetrize(&mut mu);
    Ok(mu)
}

/// `I(ξ) = Σ wᵢ μ(xᵢ) + λ Id`.
pub fn assemble_information(
    design: &Design,
    blocks: &[JacobianBlock],
    noise: &NoisePrecision,
    opts: &AssemblyOptions,
) -> Result<InformationMatrix> {
    if design.len() != blocks.len() {
        return Err(DesignError::Shape(format!(
            "{} design points but {} Jacobian blocks",
            design.len(),
            blocks.len()
        )));
    }
    opts.validate()?;
    let p = blocks[0].params();
    if blocks.iter().any(|b| b.params() != p || b.outputs() != blocks[0].outputs()) {
        return Err(DesignError::Shape("Jacobian blocks differ in shape".into()));
    }
    let mut info = DMatrix::<f64>::zeros(p, p);
    for (w, block) in design.weights().iter().zip(blocks) {
        if *w == 0.0 {
            continue;
        }
        let a = whitened_block(block, noise, opts)?;
        info.gemm_tr(*w, &a, &a, 1.0);
    }
    for i in 0..p {
        info[(i, i)] += opts.regularization;
    }
    symmetrize(&mut info);
    Ok(InformationMatrix(info))
}

/// `Φ = −log₁₀ det I`, from the Cholesky pivots.
pub fn log_d_criterion(info: &InformationMatrix) -> Result<f64> {
    if !is_symmetric(info.matrix(), 1e-10) {
        return Err(DesignError::Shape("information matrix is not symmetric".into()));
    }
    let f = info.factor()?;
    Ok(-f.ln_det() / LN_10)
}

/// Like [`log_d_criterion`] but maps a singular matrix to `+∞`.
pub fn log_d_or_inf(info: &InformationMatrix) -> f64 {
    log_d_criterion(info).unwrap_or(f64::INFINITY)
}

/// Evaluates `d(x, ξ)` for many blocks against one factorized `I(ξ)`.
#[derive(Debug, Clone)]
pub struct SensitivityOracle<'a> {
    factor: SymFactor,
    noise: &'a NoisePrecision,
    opts: &'a AssemblyOptions,
}

impl<'a> SensitivityOracle<'a> {
    pub fn new(
        info: &InformationMatrix,
        noise: &'a NoisePrecision,
        opts: &'a AssemblyOptions,
    ) -> Result<Self> {
        Ok(Self {
            factor: info.factor()?,
            noise,
            opts,
        })
    }

    pub fn n_params(&self) -> usize {
        self.factor.dim()
    }

    pub fn at(&self, block: &JacobianBlock) -> Result<f64> {
        let a = whitened_block(block, self.noise, self.opts)?;
        if a.ncols() != self.factor.dim() {
            return Err(DesignError::Shape(format!(
                "block has {} parameters, information matrix is {}x{}",
                a.ncols(),
                self.factor.dim(),
                self.factor.dim()
            )));
        }
        Ok(self.factor.whiten(&a.transpose()).norm_squared())
    }

    pub fn at_all(&self, blocks: &[JacobianBlock]) -> Result<Vec<f64>> {
        blocks.iter().map(|b| self.at(b)).collect()
    }
}

/// `d(x, ξ) = tr(I⁻¹ μ(x))`.
pub fn sensitivity(
    block: &JacobianBlock,
    info: &InformationMatrix,
    noise: &NoisePrecision,
    opts: &AssemblyOptions,
) -> Result<f64> {
    SensitivityOracle::new(info, noise, opts)?.at(block)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub n_params: usize,
    pub tol: f64,
    /// `d` at every probe point, in probe order.
    pub d_values: Vec<f64>,
    /// `d` at every support point (positive weight), in design order.
    pub support_d: Vec<f64>,
    pub max_d: f64,
    pub argmax: DesignPoint,
    pub is_optimal: bool,
}

impl CertificateReport {
    /// `max d − P` over the probe: the equivalence-theorem gap.
    pub fn gap(&self) -> f64 {
        self.max_d - self.n_params as f64
    }
}

/// Checks `d ≤ P` over the probe and `d = P` on the support, both relative to `tol`.
pub fn kw_certificate(
    design: &Design,
    support_blocks: &[JacobianBlock],
    probe: &CandidateSet,
    noise: &NoisePrecision,
    opts: &AssemblyOptions,
    tol: f64,
) -> Result<CertificateReport> {
    let probe_blocks = probe.require_blocks()?;
    let info = assemble_information(design, support_blocks, noise, opts)?;
    let oracle = SensitivityOracle::new(&info, noise, opts)?;
    let p = oracle.n_params() as f64;

    let d_values = oracle.at_all(probe_blocks)?;
    let support = design.support_indices();
    let support_d = support
        .iter()
        .map(|&i| oracle.at(&support_blocks[i]))
        .collect::<Result<Vec<_>>>()?;

    let mut max_d = f64::NEG_INFINITY;
    let mut argmax = design.points()[support[0]].clone();
    for (x, &d) in probe.points().iter().zip(&d_values) {
        if d > max_d {
            max_d = d;
            argmax = x.clone();
        }
    }
    for (&i, &d) in support.iter().zip(&support_d) {
        if d > max_d {
            max_d = d;
            argmax = design.points()[i].clone();
        }
    }
    let is_optimal =
        max_d <= p * (1.0 + tol) && support_d.iter().all(|d| (d - p).abs() <= p * tol);
    Ok(CertificateReport {
        n_params: oracle.n_params(),
        tol,
        d_values,
        support_d,
        max_d,
        argmax,
        is_optimal,
    })
}

/// `Δ = max(d̄, P) − min(d̲, P)` from the support sensitivities.
pub fn delta_from_values(support_d: &[f64], n_params: usize) -> f64 {
    let p = n_params as f64;
    let hi = support_d.iter().copied().fold(p, f64::max);
    let lo = support_d.iter().copied().fold(p, f64::min);
    hi - lo
}

/// Fraction of outside points with `d > P`.
pub fn q_from_values(outside_d: &[f64], n_params: usize) -> Result<f64> {
    if outside_d.is_empty() {
        return Err(DesignError::DegeneratePool(
            "no pool points outside the design support".into(),
        ));
    }
    let p = n_params as f64;
    let above = outside_d.iter().filter(|&&d| d > p).count();
    Ok(above as f64 / outside_d.len() as f64)
}

pub fn delta_metric(
    design: &Design,
    support_blocks: &[JacobianBlock],
    noise: &NoisePrecision,
    opts: &AssemblyOptions,
) -> Result<f64> {
    let info = assemble_information(design, support_blocks, noise, opts)?;
    let oracle = SensitivityOracle::new(&info, noise, opts)?;
    let support_d = design
        .support_indices()
        .into_iter()
        .map(|i| oracle.at(&support_blocks[i]))
        .collect::<Result<Vec<_>>>()?;
    Ok(delta_from_values(&support_d, oracle.n_params()))
}

pub fn q_metric(
    design: &Design,
    support_blocks: &[JacobianBlock],
    pool: &CandidateSet,
    noise: &NoisePrecision,
    opts: &AssemblyOptions,
) -> Result<f64> {
    let pool_blocks = pool.require_blocks()?;
    let info = assemble_information(design, support_blocks, noise, opts)?;
    let oracle = SensitivityOracle::new(&info, noise, opts)?;
    let support: Vec<&DesignPoint> = design
        .support_indices()
        .into_iter()
        .map(|i| &design.points()[i])
        .collect();
    let outside_d = pool
        .points()
        .iter()
        .zip(pool_blocks)
        .filter(|(x, _)| !support.iter().any(|s| s.approx_eq(x, POINT_EQ_TOL)))
        .map(|(_, b)| oracle.at(b))
        .collect::<Result<Vec<_>>>()?;
    q_from_values(&outside_d, oracle.n_params())
}

/// Writes `x1,...,xn,d` rows, one per probe point.
pub fn write_sensitivity_csv<W: Write>(
    mut out: W,
    points: &[DesignPoint],
    d_values: &[f64],
) -> Result<()> {
    let n = points.first().map_or(0, DesignPoint::dim);
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.push("d".into());
    let io = |e| DesignError::io("<sensitivity csv>", e);
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for (x, d) in points.iter().zip(d_values) {
        let mut row: Vec<String> = x.coords().iter().map(|v| fmt_f64(*v)).collect();
        row.push(fmt_f64(*d));
        writeln!(out, "{}", row.join(",")).map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_block(v: f64) -> JacobianBlock {
        JacobianBlock::from_row_slice(1, 1, &[v]).unwrap()
    }

    fn exp_block(x: f64) -> JacobianBlock {
        let e = (3.0 * x).exp();
        JacobianBlock::from_row_slice(1, 2, &[e, x * e]).unwrap()
    }

    #[test]
    fn atom_scalar_square() {
        let mu = atom(&scalar_block(2.0), &NoisePrecision::identity(1), &AssemblyOptions::unscaled())
            .unwrap();
        assert_eq!(mu[(0, 0)], 4.0);
    }

    #[test]
    fn atom_exponential_at_origin_scaled() {
        let mu = atom(&exp_block(0.0), &NoisePrecision::identity(1), &AssemblyOptions::scaled(&[1.0, 3.0]))
            .unwrap();
        assert_eq!(mu, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn atom_identity_jacobian_returns_precision() {
        let block = JacobianBlock::new(DMatrix::identity(2, 2)).unwrap();
        let noise = NoisePrecision::diagonal(&[4.0, 9.0]).unwrap();
        let mu = atom(&block, &noise, &AssemblyOptions::unscaled()).unwrap();
        assert_relative_eq!(mu, DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]), epsilon = 1e-14);
    }

    #[test]
    fn atom_rejects_shape_mismatch() {
        let block = JacobianBlock::new(DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(
            atom(&block, &NoisePrecision::identity(3), &AssemblyOptions::unscaled()),
            Err(DesignError::Shape(_))
        ));
        assert!(matches!(
            atom(&block, &NoisePrecision::identity(2), &AssemblyOptions::scaled(&[1.0])),
            Err(DesignError::Shape(_))
        ));
    }

    #[test]
    fn assemble_closed_form_two_points() {
        let design = Design::new(vec![(-1.0).into(), 1.0.into()], vec![0.5, 0.5]).unwrap();
        let blocks = vec![exp_block(-1.0), exp_block(1.0)];
        let info = assemble_information(&design, &blocks, &NoisePrecision::identity(1), &AssemblyOptions::unscaled())
            .unwrap();
        let (em, ep) = ((-6.0f64).exp(), 6.0f64.exp());
        let m = info.matrix();
        assert_relative_eq!(m[(0, 0)], 0.5 * (em + ep), max_relative = 1e-14);
        assert_relative_eq!(m[(0, 1)], 0.5 * (ep - em), max_relative = 1e-14);
        assert_relative_eq!(m[(1, 1)], 0.5 * (em + ep), max_relative = 1e-14);
    }

    #[test]
    fn zero_weight_drops_a_point() {
        let design = Design::new(vec![0.2.into(), 0.9.into()], vec![1.0, 0.0]).unwrap();
        let opts = AssemblyOptions::unscaled().with_regularization(1e-8);
        let noise = NoisePrecision::identity(1);
        let info = assemble_information(&design, &[exp_block(0.2), exp_block(0.9)], &noise, &opts).unwrap();
        let mut expected = atom(&exp_block(0.2), &noise, &opts).unwrap();
        expected[(0, 0)] += 1e-8;
        expected[(1, 1)] += 1e-8;
        assert_relative_eq!(info.matrix().clone(), expected, max_relative = 1e-15);
    }

    #[test]
    fn assemble_rejects_length_mismatch() {
        let design = Design::new(vec![0.2.into(), 0.9.into()], vec![0.5, 0.5]).unwrap();
        let r = assemble_information(&design, &[exp_block(0.2)], &NoisePrecision::identity(1), &AssemblyOptions::unscaled());
        assert!(matches!(r, Err(DesignError::Shape(_))));
    }

    #[test]
    fn log_d_examples() {
        let info = InformationMatrix::new(DMatrix::from_diagonal_element(2, 2, 10.0)).unwrap();
        assert_relative_eq!(log_d_criterion(&info).unwrap(), -2.0, epsilon = 1e-14);

        let floor = InformationMatrix::new(DMatrix::from_diagonal_element(2, 2, 1e-8)).unwrap();
        assert_relative_eq!(log_d_criterion(&floor).unwrap(), 16.0, epsilon = 1e-12);

        let singular = InformationMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(log_d_criterion(&singular), Err(DesignError::Singular(_))));
        assert_eq!(log_d_or_inf(&singular), f64::INFINITY);
    }

    #[test]
    fn non_symmetric_information_is_a_shape_error() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(InformationMatrix::new(m), Err(DesignError::Shape(_))));
    }

    #[test]
    fn delta_and_q_arithmetic() {
        assert_relative_eq!(delta_from_values(&[2.2, 1.9], 2), 0.3, epsilon = 1e-15);
        assert_eq!(delta_from_values(&[2.0, 2.0], 2), 0.0);
        let mut outside = vec![1.0; 10];
        outside[3] = 2.5;
        assert_eq!(q_from_values(&outside, 2).unwrap(), 0.1);
        assert_eq!(q_from_values(&[3.0, 4.0], 2).unwrap(), 1.0);
        assert!(matches!(q_from_values(&[], 2), Err(DesignError::DegeneratePool(_))));
    }

    #[test]
    fn design_validation() {
        assert!(Design::new(vec![], vec![]).is_err());
        assert!(Design::new(vec![0.0.into()], vec![0.9]).is_err());
        assert!(Design::new(vec![0.0.into(), 1.0.into()], vec![1.2, -0.2]).is_err());
        let d = Design::new(vec![0.0.into(), 1.0.into()], vec![0.25, 0.75]).unwrap();
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, r#"{"points":[[0.0],[1.0]],"weights":[0.25,0.75]}"#);
        let back: Design = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<Design>(r#"{"points":[[0.0]],"weights":[0.5]}"#).is_err());
    }

    #[test]
    fn sensitivity_csv_layout() {
        let mut buf = Vec::new();
        write_sensitivity_csv(&mut buf, &[DesignPoint::new(vec![0.5, -1.0])], &[2.0]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x1,x2,d"));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(row, vec![0.5, -1.0, 2.0]);
    }
}
