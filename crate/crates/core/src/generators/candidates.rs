use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::design::{DesignPoint, JacobianBlock};
use crate::error::{DesignError, Result};
use crate::io::{fmt_f64, parse_f64, parse_flag};

/// Axis-aligned design domain `D = [lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxRecord", into = "BoxRecord")]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxRecord {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<BoxRecord> for DomainBox {
    type Error = DesignError;
    fn try_from(r: BoxRecord) -> Result<Self> {
        DomainBox::new(r.lower, r.upper)
    }
}

impl From<DomainBox> for BoxRecord {
    fn from(b: DomainBox) -> Self {
        BoxRecord {
            lower: b.lower,
            upper: b.upper,
        }
    }
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(DesignError::Shape(format!(
                "domain bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(DesignError::InvalidArgument(
                "domain requires finite lower < upper in every dimension".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            upper: vec![1.0; n],
        }
    }

    /// `[-1, 1]ⁿ`.
    pub fn symmetric(n: usize) -> Self {
        Self {
            lower: vec![-1.0; n],
            upper: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Affine image of a unit-cube point.
    pub fn map_unit(&self, u: &[f64]) -> DesignPoint {
        let coords = u
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, h))| (l + t * (h - l)).clamp(*l, *h))
            .collect();
        DesignPoint::new(coords)
    }

    /// Corner selected by a sign pattern (`false` = lower, `true` = upper).
    pub fn corner(&self, upper_side: impl Fn(usize) -> bool) -> DesignPoint {
        let coords = (0..self.dim())
            .map(|i| if upper_side(i) { self.upper[i] } else { self.lower[i] })
            .collect();
        DesignPoint::new(coords)
    }

    /// Centered sub-box whose volume is `fraction` times this box's volume.
    pub fn shrink(&self, fraction: f64) -> Self {
        let factor = fraction.powf(1.0 / self.dim() as f64);
        let (lower, upper) = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                let c = 0.5 * (l + u);
                let h = 0.5 * (u - l) * factor;
                (c - h, c + h)
            })
            .unzip();
        Self { lower, upper }
    }
}

/// A fixed pool of candidate experiments with optional precomputed blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    points: Vec<DesignPoint>,
    blocks: Option<Vec<JacobianBlock>>,
    feasible: Vec<bool>,
    provenance: String,
}

impl CandidateSet {
    pub fn new(points: Vec<DesignPoint>, provenance: impl Into<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(DesignError::EmptyCandidateSet(String::new()));
        }
        let n = points[0].dim();
        if points.iter().any(|p| p.dim() != n) {
            return Err(DesignError::Shape("candidate points differ in dimension".into()));
        }
        let feasible = vec![true; points.len()];
        Ok(Self {
            points,
            blocks: None,
            feasible,
            provenance: provenance.into(),
        })
    }

    pub fn with_feasibility(mut self, feasible: Vec<bool>) -> Result<Self> {
        if feasible.len() != self.points.len() {
            return Err(DesignError::Shape(format!(
                "{} feasibility flags for {} candidates",
                feasible.len(),
                self.points.len()
            )));
        }
        self.feasible = feasible;
        Ok(self)
    }

    pub fn with_blocks(mut self, blocks: Vec<JacobianBlock>) -> Result<Self> {
        if blocks.len() != self.points.len() {
            return Err(DesignError::Shape(format!(
                "{} blocks for {} candidates",
                blocks.len(),
                self.points.len()
            )));
        }
        self.blocks = Some(blocks);
        Ok(self)
    }

    pub fn without_blocks(mut self) -> Self {
        self.blocks = None;
        self
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

    pub fn blocks(&self) -> Option<&[JacobianBlock]> {
        self.blocks.as_deref()
    }

    pub fn require_blocks(&self) -> Result<&[JacobianBlock]> {
        self.blocks().ok_or_else(|| {
            DesignError::InvalidArgument(format!(
                "candidate set {} has no Jacobian blocks attached",
                self.provenance
            ))
        })
    }

    pub fn feasible(&self) -> &[bool] {
        &self.feasible
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn set_provenance(&mut self, provenance: impl Into<String>) {
        self.provenance = provenance.into();
    }

    /// Appends user-supplied points (no blocks; attach afterwards).
    pub fn with_extra_points(mut self, extra: Vec<DesignPoint>) -> Result<Self> {
        if extra.is_empty() {
            return Ok(self);
        }
        if extra.iter().any(|p| p.dim() != self.dim()) {
            return Err(DesignError::Shape("extra point has the wrong dimension".into()));
        }
        let added = extra.len();
        self.feasible.extend(std::iter::repeat_n(true, added));
        self.points.extend(extra);
        self.blocks = None;
        self.provenance = format!("{}+{added}", self.provenance);
        Ok(self)
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(DesignError::EmptyCandidateSet(self.provenance.clone()));
        }
        let points = indices.iter().map(|&i| self.points[i].clone()).collect();
        let feasible = indices.iter().map(|&i| self.feasible[i]).collect();
        let blocks = self
            .blocks
            .as_ref()
            .map(|b| indices.iter().map(|&i| b[i].clone()).collect());
        Ok(Self {
            points,
            blocks,
            feasible,
            provenance: self.provenance.clone(),
        })
    }

    /// Index of the candidate equal to `x` within `tol`, if any.
    pub fn position(&self, x: &DesignPoint, tol: f64) -> Option<usize> {
        self.points.iter().position(|p| p.approx_eq(x, tol))
    }

    /// CSV with a `#provenance=` line, a `x1,...,xn,feasible` header, one row per candidate.
    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut out = String::new();
        let _ = writeln!(out, "#provenance={}", self.provenance);
        let header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        let _ = writeln!(out, "{},feasible", header.join(","));
        for (p, f) in self.points.iter().zip(&self.feasible) {
            let row: Vec<String> = p.coords().iter().map(|v| fmt_f64(*v)).collect();
            let _ = writeln!(out, "{},{}", row.join(","), u8::from(*f));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut provenance = String::from("Imported");
        let mut header: Option<(usize, bool)> = None;
        let mut points = Vec::new();
        let mut feasible = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(p) = line.strip_prefix("#provenance=") {
                provenance = p.to_string();
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            match header {
                None => {
                    let has_flag = fields.last().map(|f| f.trim()) == Some("feasible");
                    let n = fields.len() - usize::from(has_flag);
                    for (i, f) in fields.iter().take(n).enumerate() {
                        if f.trim() != format!("x{}", i + 1) {
                            return Err(DesignError::Parse {
                                line: line_no,
                                message: format!("unexpected header column `{}`", f.trim()),
                            });
                        }
                    }
                    if n == 0 {
                        return Err(DesignError::Parse {
                            line: line_no,
                            message: "header has no coordinate columns".into(),
                        });
                    }
                    header = Some((n, has_flag));
                }
                Some((n, has_flag)) => {
                    let width = n + usize::from(has_flag);
                    if fields.len() != width {
                        return Err(DesignError::Parse {
                            line: line_no,
                            message: format!("expected {width} fields, got {}", fields.len()),
                        });
                    }
                    let coords = fields[..n]
                        .iter()
                        .map(|f| parse_f64(f, line_no))
                        .collect::<Result<Vec<_>>>()?;
                    points.push(DesignPoint::new(coords));
                    feasible.push(if has_flag { parse_flag(fields[n], line_no)? } else { true });
                }
            }
        }
        if points.is_empty() {
            return Err(DesignError::EmptyCandidateSet("no rows in CSV".into()));
        }
        CandidateSet::new(points, provenance)?.with_feasibility(feasible)
    }
}

/// Equidistant levels per dimension, Cartesian product with the first
/// coordinate varying slowest.
pub fn grid(domain: &DomainBox, counts: &[usize]) -> Result<CandidateSet> {
    if counts.len() != domain.dim() {
        return Err(DesignError::Shape(format!(
            "{} grid counts for a {}-dimensional domain",
            counts.len(),
            domain.dim()
        )));
    }
    if counts.contains(&0) {
        return Err(DesignError::InvalidArgument("grid counts must be >= 1".into()));
    }
    let levels: Vec<Vec<f64>> = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let (l, u) = (domain.lower()[i], domain.upper()[i]);
            if c == 1 {
                vec![0.5 * (l + u)]
            } else {
                let last = (c - 1) as f64;
                (0..c)
                    .map(|k| ((l * (last - k as f64) + u * k as f64) / last).clamp(l, u))
                    .collect()
            }
        })
        .collect();
    let total: usize = counts.iter().product();
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; counts.len()];
    for _ in 0..total {
        points.push(DesignPoint::new(
            idx.iter().enumerate().map(|(d, &k)| levels[d][k]).collect(),
        ));
        for d in (0..counts.len()).rev() {
            idx[d] += 1;
            if idx[d] < counts[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    CandidateSet::new(points, format!("Grid({total})"))
}

/// Keeps candidates whose status is `true`, in order.
pub fn feasible_filter(set: &CandidateSet, status: &[bool]) -> Result<CandidateSet> {
    if status.len() != set.len() {
        return Err(DesignError::Shape(format!(
            "{} status flags for {} candidates",
            status.len(),
            set.len()
        )));
    }
    let keep: Vec<usize> = (0..set.len()).filter(|&i| status[i]).collect();
    if keep.is_empty() {
        return Err(DesignError::EmptyCandidateSet(format!(
            "no feasible candidate in {}",
            set.provenance()
        )));
    }
    let mut out = set.select(&keep)?;
    out.set_provenance(format!("Feasible({})", set.provenance()));
    Ok(out)
}
