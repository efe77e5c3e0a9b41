//! JSON run configuration. Unknown keys are rejected and every error names
//! the offending field path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};
use crate::generators::DomainBox;
use crate::models::LinearConstraint;
use crate::refine::RefineOptions;

fn config_err(path: &str, message: impl Into<String>) -> DesignError {
    DesignError::Config {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sigma {
    Shared(f64),
    PerOutput(Vec<f64>),
}

impl Default for Sigma {
    fn default() -> Self {
        Sigma::Shared(0.0)
    }
}

impl Sigma {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Sigma::Shared(s) => vec![*s],
            Sigma::PerOutput(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Exponential {
        #[serde(default = "default_exp_parameters")]
        parameters: Vec<f64>,
        #[serde(default)]
        sigma: Sigma,
        #[serde(default)]
        domain: Option<DomainBox>,
        #[serde(default)]
        constraints: Vec<LinearConstraint>,
    },
    Chebyshev {
        n: usize,
        degree: usize,
        #[serde(default)]
        parameters: Option<Vec<f64>>,
        #[serde(default)]
        sigma: Sigma,
        #[serde(default)]
        domain: Option<DomainBox>,
        #[serde(default)]
        constraints: Vec<LinearConstraint>,
    },
    Tabulated {
        path: PathBuf,
    },
}

fn default_exp_parameters() -> Vec<f64> {
    vec![1.0, 3.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorConfig {
    Grid {
        counts: Vec<usize>,
        #[serde(default)]
        extra_points: Vec<Vec<f64>>,
    },
    Sobol {
        count: usize,
        #[serde(default = "one")]
        skip: u64,
    },
    Factorial {
        count: usize,
        #[serde(default = "default_shrink")]
        shrink: f64,
    },
    Lhs {
        count: usize,
    },
    /// The points stored in a tabulated model.
    Table,
    /// Candidate CSV (`#provenance=`, `x1..xn[,feasible]`).
    File {
        path: PathBuf,
    },
}

fn one() -> u64 {
    1
}

fn default_shrink() -> f64 {
    crate::generators::DEFAULT_SHRINK
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "snake_case", deny_unknown_fields)]
pub enum Phase1Config {
    Wda {
        #[serde(default = "wda_tol")]
        tol: f64,
        #[serde(default = "wda_max_iter")]
        max_iter: usize,
        #[serde(default = "wda_prune")]
        prune_threshold: f64,
        #[serde(default = "yes")]
        scale_by_parameters: bool,
        #[serde(default)]
        record_trace: bool,
    },
    Wmaxvol {
        #[serde(default = "wmaxvol_iter")]
        n_iter: usize,
        #[serde(default = "retry")]
        init_retry_limit: usize,
        #[serde(default = "recompute")]
        recompute_period: usize,
        #[serde(default = "yes")]
        scale_by_parameters: bool,
        #[serde(default)]
        record_trace: bool,
    },
    /// Generated points with equal weights, no discrete optimization.
    Pattern,
}

fn wda_tol() -> f64 {
    1e-3
}
fn wda_max_iter() -> usize {
    50_000
}
fn wda_prune() -> f64 {
    1e-4
}
fn wmaxvol_iter() -> usize {
    1000
}
fn retry() -> usize {
    100
}
fn recompute() -> usize {
    100
}
fn yes() -> bool {
    true
}

impl Default for Phase1Config {
    fn default() -> Self {
        Phase1Config::Wda {
            tol: wda_tol(),
            max_iter: wda_max_iter(),
            prune_threshold: wda_prune(),
            scale_by_parameters: true,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Phase2Config {
    pub enabled: bool,
    pub tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
    pub weight_zero_tol: f64,
    pub regularization: f64,
    pub scale_by_parameters: bool,
    pub merge_tol: f64,
}

impl Default for Phase2Config {
    fn default() -> Self {
        let r = RefineOptions::default();
        Self {
            enabled: true,
            tol: r.tol,
            max_iter: r.max_iter,
            fd_step: r.fd_step,
            weight_zero_tol: r.weight_zero_tol,
            regularization: r.regularization,
            scale_by_parameters: r.scale_by_parameters,
            merge_tol: r.merge_tol,
        }
    }
}

impl Phase2Config {
    pub fn options(&self) -> RefineOptions {
        RefineOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            fd_step: self.fd_step,
            weight_zero_tol: self.weight_zero_tol,
            regularization: self.regularization,
            scale_by_parameters: self.scale_by_parameters,
            merge_tol: self.merge_tol,
            ..RefineOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeConfig {
    /// The phase-1 candidate pool.
    Pool,
    Grid { counts: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerificationConfig {
    pub probe: ProbeConfig,
    pub tol: f64,
    /// Fail the run when the certificate rejects the final design.
    pub require_optimal: bool,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self {
            probe: ProbeConfig::Pool,
            tol: crate::design::DEFAULT_CERT_TOL,
            require_optimal: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum MultistartConfig {
    /// Sobol generator called with skips `1 + k·count`.
    SobolSkip { runs: usize },
    /// Distinct corner combinations of the factorial generator.
    Factorial { runs: usize },
    /// Same configuration under seeds `seed, seed+1, ...`.
    Seeds { runs: usize },
    /// One run per candidate-pool parameterization.
    Pools { pools: Vec<PoolVariant> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolVariant {
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub feasibility_filter: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    /// Parameters that generate the simulated observations; the model's own by default.
    #[serde(default)]
    pub p_true: Option<Vec<f64>>,
    pub p0: Vec<f64>,
    pub rounds: usize,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// `Σ⁻¹`; identity when absent.
    #[serde(default)]
    pub noise_precision: Option<Vec<Vec<f64>>>,
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub feasibility_filter: bool,
    #[serde(default)]
    pub phase1: Phase1Config,
    #[serde(default)]
    pub phase2: Phase2Config,
    #[serde(default)]
    pub verification: VerificationConfig,
    #[serde(default)]
    pub multistart: Option<MultistartConfig>,
    #[serde(default)]
    pub validation: Option<ValidationConfig>,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(&path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err("<file>", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let ModelConfig::Tabulated { path } = &mut self.model {
            fix(path);
        }
        if let GeneratorConfig::File { path } = &mut self.generator {
            fix(path);
        }
        if let Some(MultistartConfig::Pools { pools }) = &mut self.multistart {
            for v in pools {
                if let GeneratorConfig::File { path } = &mut v.generator {
                    fix(path);
                }
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        validate_generator(&self.generator, "generator")?;
        match &self.phase1 {
            Phase1Config::Wda { tol, prune_threshold, .. } => {
                if !(*tol > 0.0) {
                    return Err(config_err("phase1.tol", "must be > 0"));
                }
                if !(0.0..1.0).contains(prune_threshold) {
                    return Err(config_err("phase1.prune_threshold", "must lie in [0, 1)"));
                }
            }
            Phase1Config::Wmaxvol { n_iter, .. } => {
                if *n_iter == 0 {
                    return Err(config_err("phase1.n_iter", "must be >= 1"));
                }
            }
            Phase1Config::Pattern => {}
        }
        if !(self.phase2.tol > 0.0) {
            return Err(config_err("phase2.tol", "must be > 0"));
        }
        if !(self.phase2.fd_step > 0.0) {
            return Err(config_err("phase2.fd_step", "must be > 0"));
        }
        if !(self.phase2.regularization >= 0.0) {
            return Err(config_err("phase2.regularization", "must be >= 0"));
        }
        if !(self.verification.tol > 0.0) {
            return Err(config_err("verification.tol", "must be > 0"));
        }
        if let ProbeConfig::Grid { counts } = &self.verification.probe {
            if counts.is_empty() || counts.contains(&0) {
                return Err(config_err("verification.probe.counts", "counts must be >= 1"));
            }
        }
        match &self.multistart {
            Some(MultistartConfig::SobolSkip { runs } | MultistartConfig::Factorial { runs } | MultistartConfig::Seeds { runs }) if *runs == 0 => {
                return Err(config_err("multistart.runs", "must be >= 1"));
            }
            Some(MultistartConfig::Pools { pools }) => {
                if pools.is_empty() {
                    return Err(config_err("multistart.pools", "needs at least one pool"));
                }
                for (i, v) in pools.iter().enumerate() {
                    validate_generator(&v.generator, &format!("multistart.pools[{i}].generator"))?;
                }
            }
            _ => {}
        }
        if let Some(v) = &self.validation {
            if v.rounds == 0 {
                return Err(config_err("validation.rounds", "must be >= 1"));
            }
        }
        if let Some(rows) = &self.noise_precision {
            if rows.iter().any(|r| r.len() != rows.len()) {
                return Err(config_err("noise_precision", "must be a square matrix"));
            }
        }
        Ok(())
    }
}

fn validate_generator(g: &GeneratorConfig, path: &str) -> Result<()> {
    match g {
        GeneratorConfig::Grid { counts, .. } => {
            if counts.is_empty() || counts.contains(&0) {
                return Err(config_err(&format!("{path}.counts"), "counts must be >= 1"));
            }
        }
        GeneratorConfig::Sobol { count, .. } | GeneratorConfig::Lhs { count } => {
            if *count == 0 {
                return Err(config_err(&format!("{path}.count"), "must be >= 1"));
            }
        }
        GeneratorConfig::Factorial { count, shrink } => {
            if *count == 0 {
                return Err(config_err(&format!("{path}.count"), "must be >= 1"));
            }
            if !(*shrink > 0.0 && *shrink < 1.0) {
                return Err(config_err(&format!("{path}.shrink"), "must lie in (0, 1)"));
            }
        }
        GeneratorConfig::Table | GeneratorConfig::File { .. } => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {"kind": "exponential", "parameters": [1, 3]},
        "generator": {"kind": "grid", "counts": [11]}
    }"#;

    #[test]
    fn minimal_config_defaults() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.phase1, Phase1Config::default());
        assert!(cfg.phase2.enabled);
        assert_eq!(cfg.seed, 0);
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_reports_path() {
        let text = r#"{
            "model": {"kind": "exponential"},
            "generator": {"kind": "grid", "counts": [11]},
            "phase2": {"tolerance": 1e-6}
        }"#;
        match RunConfig::from_json(text).unwrap_err() {
            DesignError::Config { path, message } => {
                assert_eq!(path, "phase2.tolerance");
                assert!(message.contains("tolerance"), "{message}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn semantic_errors_report_path() {
        let text = r#"{
            "model": {"kind": "exponential"},
            "generator": {"kind": "factorial", "count": 4, "shrink": 1.5}
        }"#;
        assert!(matches!(
            RunConfig::from_json(text),
            Err(DesignError::Config { path, .. }) if path == "generator.shrink"
        ));
        let text = r#"{
            "model": {"kind": "exponential"},
            "generator": {"kind": "grid", "counts": [11]},
            "phase1": {"solver": "wmaxvol", "n_iter": 0}
        }"#;
        assert!(matches!(
            RunConfig::from_json(text),
            Err(DesignError::Config { path, .. }) if path == "phase1.n_iter"
        ));
    }

    #[test]
    fn wrong_type_reports_nested_path() {
        let text = r#"{
            "model": {"kind": "exponential"},
            "generator": {"kind": "grid", "counts": ["eleven"]}
        }"#;
        match RunConfig::from_json(text).unwrap_err() {
            DesignError::Config { path, .. } => assert!(path.starts_with("generator"), "{path}"),
            other => panic!("{other}"),
        }
    }
}
