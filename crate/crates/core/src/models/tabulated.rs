//! Jacobian tables exported by external simulators.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::design::{DesignPoint, JacobianBlock};
use crate::error::{DesignError, Result};
use crate::generators::CandidateSet;
use crate::io::{fmt_f64, parse_f64, parse_flag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub n: usize,
    pub m: usize,
    pub n_params: usize,
    pub parameters: Vec<f64>,
}

/// Precomputed blocks at fixed points, with feasibility status per row.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianTable {
    meta: TableMeta,
    points: Vec<DesignPoint>,
    blocks: Vec<JacobianBlock>,
    feasible: Vec<bool>,
}

fn parse_err(line: usize, message: impl Into<String>) -> DesignError {
    DesignError::Parse {
        line,
        message: message.into(),
    }
}

impl JacobianTable {
    pub fn new(
        meta: TableMeta,
        points: Vec<DesignPoint>,
        blocks: Vec<JacobianBlock>,
        feasible: Vec<bool>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(DesignError::EmptyCandidateSet("Jacobian table has no rows".into()));
        }
        if points.len() != blocks.len() || points.len() != feasible.len() {
            return Err(DesignError::Shape(format!(
                "table has {} points, {} blocks, {} flags",
                points.len(),
                blocks.len(),
                feasible.len()
            )));
        }
        if meta.parameters.len() != meta.n_params {
            return Err(DesignError::Shape("parameter snapshot length differs from P".into()));
        }
        if points.iter().any(|p| p.dim() != meta.n)
            || blocks.iter().any(|b| b.outputs() != meta.m || b.params() != meta.n_params)
        {
            return Err(DesignError::Shape("table rows disagree with its header".into()));
        }
        Ok(Self {
            meta,
            points,
            blocks,
            feasible,
        })
    }

    /// Captures blocks and flags from a candidate set that has blocks attached.
    pub fn from_candidates(set: &CandidateSet, parameters: &[f64]) -> Result<Self> {
        let blocks = set.require_blocks()?.to_vec();
        let meta = TableMeta {
            n: set.dim(),
            m: blocks[0].outputs(),
            n_params: blocks[0].params(),
            parameters: parameters.to_vec(),
        };
        Self::new(meta, set.points().to_vec(), blocks, set.feasible().to_vec())
    }

    pub fn meta(&self) -> &TableMeta {
        &self.meta
    }

    pub fn points(&self) -> &[DesignPoint] {
        &self.points
    }

    pub fn blocks(&self) -> &[JacobianBlock] {
        &self.blocks
    }

    pub fn feasible(&self) -> &[bool] {
        &self.feasible
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Block stored at `x` (coordinate-wise within `tol`).
    pub fn lookup(&self, x: &[f64], tol: f64) -> Option<&JacobianBlock> {
        self.points
            .iter()
            .position(|p| p.coords().len() == x.len() && p.coords().iter().zip(x).all(|(a, b)| (a - b).abs() <= tol))
            .map(|i| &self.blocks[i])
    }

    pub fn to_candidates(&self, provenance: impl Into<String>) -> Result<CandidateSet> {
        CandidateSet::new(self.points.clone(), provenance)?
            .with_feasibility(self.feasible.clone())?
            .with_blocks(self.blocks.clone())
    }

    pub fn to_csv(&self) -> String {
        let TableMeta { n, m, n_params, parameters } = &self.meta;
        let mut out = String::new();
        let params: Vec<String> = parameters.iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(out, "#meta n={n} m={m} P={n_params} params={}", params.join(";"));
        let mut header: Vec<String> = (1..=*n).map(|i| format!("x{i}")).collect();
        header.push("feasible".into());
        for r in 1..=*m {
            for c in 1..=*n_params {
                header.push(format!("j_{r}_{c}"));
            }
        }
        let _ = writeln!(out, "{}", header.join(","));
        for ((x, b), f) in self.points.iter().zip(&self.blocks).zip(&self.feasible) {
            let mut row: Vec<String> = x.coords().iter().map(|v| fmt_f64(*v)).collect();
            row.push(u8::from(*f).to_string());
            for r in 0..*m {
                for c in 0..*n_params {
                    row.push(fmt_f64(b.matrix()[(r, c)]));
                }
            }
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (line_no, meta_line) = lines.next().ok_or_else(|| parse_err(1, "empty table"))?;
        let meta = parse_meta(meta_line, line_no)?;
        let (line_no, header) = lines.next().ok_or_else(|| parse_err(2, "missing column header"))?;
        let width = meta.n + 1 + meta.m * meta.n_params;
        let columns: Vec<&str> = header.split(',').map(str::trim).collect();
        if columns.len() != width {
            return Err(parse_err(
                line_no,
                format!("header has {} columns, expected {width}", columns.len()),
            ));
        }
        if columns[meta.n] != "feasible" {
            return Err(parse_err(line_no, "column after the coordinates must be `feasible`"));
        }

        let mut points = Vec::new();
        let mut blocks = Vec::new();
        let mut feasible = Vec::new();
        for (line_no, raw) in lines {
            if raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split(',').collect();
            if fields.len() != width {
                return Err(parse_err(
                    line_no,
                    format!("row has {} fields, expected {width}", fields.len()),
                ));
            }
            let coords = fields[..meta.n]
                .iter()
                .map(|f| parse_f64(f, line_no))
                .collect::<Result<Vec<_>>>()?;
            feasible.push(parse_flag(fields[meta.n], line_no)?);
            let values = fields[meta.n + 1..]
                .iter()
                .map(|f| parse_f64(f, line_no))
                .collect::<Result<Vec<_>>>()?;
            points.push(DesignPoint::new(coords));
            blocks.push(JacobianBlock::from_row_slice(meta.m, meta.n_params, &values)?);
        }
        Self::new(meta, points, blocks, feasible)
    }
}

fn parse_meta(line: &str, line_no: usize) -> Result<TableMeta> {
    let body = line
        .strip_prefix("#meta")
        .ok_or_else(|| parse_err(line_no, "first line must start with `#meta`"))?;
    let (mut n, mut m, mut p, mut params) = (None, None, None, None);
    for token in body.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| parse_err(line_no, format!("malformed meta entry `{token}`")))?;
        let as_int = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| parse_err(line_no, format!("`{key}` must be a positive integer")))
        };
        match key {
            "n" => n = Some(as_int(value)?),
            "m" => m = Some(as_int(value)?),
            "P" => p = Some(as_int(value)?),
            "params" => {
                params = Some(
                    value
                        .split(';')
                        .filter(|s| !s.is_empty())
                        .map(|s| parse_f64(s, line_no))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            other => return Err(parse_err(line_no, format!("unknown meta key `{other}`"))),
        }
    }
    let missing = |k: &str| parse_err(line_no, format!("meta line lacks `{k}`"));
    let meta = TableMeta {
        n: n.ok_or_else(|| missing("n"))?,
        m: m.ok_or_else(|| missing("m"))?,
        n_params: p.ok_or_else(|| missing("P"))?,
        parameters: params.ok_or_else(|| missing("params"))?,
    };
    if meta.n == 0 || meta.m == 0 || meta.n_params == 0 {
        return Err(parse_err(line_no, "n, m and P must be positive"));
    }
    if meta.parameters.len() != meta.n_params {
        return Err(parse_err(
            line_no,
            format!("{} parameter values for P={}", meta.parameters.len(), meta.n_params),
        ));
    }
    Ok(meta)
}
