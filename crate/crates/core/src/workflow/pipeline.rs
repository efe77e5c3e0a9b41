//! Stage functions and the three drivers: a single pipeline run, multistart
//! and the estimate-redesign validation loop.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{
    assemble_information, delta_metric, kw_certificate, log_d_criterion, q_metric, write_sensitivity_csv,
    AssemblyOptions, CertificateReport, Design, DesignPoint, NoisePrecision,
};
use crate::error::{DesignError, Result};
use crate::generators::{
    factorial, factorial_multistart, feasible_filter, grid, latin_hypercube, sobol_in, CandidateSet,
};
use crate::io::{read_text, write_json, write_text};
use crate::models::estimate::{estimate_parameters, realize_repetitions, simulate_with, Experiment};
use crate::models::{JacobianTable, ModelSpec};
use crate::refine::{refine, RefineRecord, RefineResult};
use crate::solvers::{wda, wmaxvol, write_wda_trace, write_wmaxvol_trace, WdaOptions, WmaxvolOptions};

use super::config::{GeneratorConfig, ModelConfig, MultistartConfig, Phase1Config, ProbeConfig, RunConfig};

/// Constraint slack accepted by the feasibility filter.
const FEASIBILITY_TOL: f64 = 1e-12;
/// Validation loop stops once `‖p̂ₖ₊₁ − p̂ₖ‖∞` falls to this.
const LOOP_STEP_TOL: f64 = 1e-6;

fn config_err(path: &str, message: impl Into<String>) -> DesignError {
    DesignError::Config {
        path: path.into(),
        message: message.into(),
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

pub fn build_model(cfg: &ModelConfig) -> Result<ModelSpec> {
    let at = |e: DesignError| config_err("model", e.to_string());
    match cfg {
        ModelConfig::Exponential { parameters, sigma, domain, constraints } => {
            let mut m = ModelSpec::exponential(parameters).map_err(at)?;
            if let Some(d) = domain {
                m = m.with_domain(d.clone()).map_err(at)?;
            }
            m.with_sigma(&sigma.values())
                .and_then(|m| m.with_constraints(constraints.clone()))
                .map_err(at)
        }
        ModelConfig::Chebyshev { n, degree, parameters, sigma, domain, constraints } => {
            let mut m = ModelSpec::chebyshev(*n, *degree).map_err(at)?;
            if let Some(p) = parameters {
                m = m.with_parameters(p).map_err(at)?;
            }
            if let Some(d) = domain {
                m = m.with_domain(d.clone()).map_err(at)?;
            }
            m.with_sigma(&sigma.values())
                .and_then(|m| m.with_constraints(constraints.clone()))
                .map_err(at)
        }
        ModelConfig::Tabulated { path } => {
            let table = JacobianTable::from_csv(&read_text(path)?)?;
            ModelSpec::tabulated(table)
        }
    }
}

pub fn noise_precision(cfg: &RunConfig, model: &ModelSpec) -> Result<NoisePrecision> {
    match &cfg.noise_precision {
        None => Ok(NoisePrecision::identity(model.m())),
        Some(rows) => {
            if rows.len() != model.m() {
                return Err(config_err(
                    "noise_precision",
                    format!("{0}x{0} matrix for a model with {1} outputs", rows.len(), model.m()),
                ));
            }
            let k = rows.len();
            NoisePrecision::new(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
                .map_err(|e| config_err("noise_precision", e.to_string()))
        }
    }
}

/// Points of one generator call, without blocks or filtering.
pub fn generate_points(gen: &GeneratorConfig, model: &ModelSpec, seed: u64) -> Result<CandidateSet> {
    let domain = model.domain();
    match gen {
        GeneratorConfig::Grid { counts, extra_points } => {
            let set = grid(domain, counts)?;
            if extra_points.is_empty() {
                Ok(set)
            } else {
                set.with_extra_points(extra_points.iter().cloned().map(DesignPoint::new).collect())
            }
        }
        GeneratorConfig::Sobol { count, skip } => {
            CandidateSet::new(sobol_in(domain, *count, *skip)?, format!("Sobol({count})"))
        }
        GeneratorConfig::Factorial { count, shrink } => {
            CandidateSet::new(factorial(domain, *count, *shrink)?, format!("Factorial({count})"))
        }
        GeneratorConfig::Lhs { count } => CandidateSet::new(
            latin_hypercube(domain.dim(), *count, seed, domain)?,
            format!("LHS({count})"),
        ),
        GeneratorConfig::Table => model.table_candidates(),
        GeneratorConfig::File { path } => CandidateSet::from_csv(&read_text(path)?),
    }
}

/// Applies the optional feasibility filter and attaches Jacobian blocks.
pub fn finish_pool(set: CandidateSet, model: &ModelSpec, filter: bool) -> Result<CandidateSet> {
    let set = if filter {
        let status: Vec<bool> = set
            .points()
            .iter()
            .zip(set.feasible())
            .map(|(x, &ok)| ok && model.is_feasible(x.coords(), FEASIBILITY_TOL))
            .collect();
        feasible_filter(&set, &status)?
    } else {
        set
    };
    if set.blocks().is_some() {
        Ok(set)
    } else {
        model.attach(set)
    }
}

pub fn generate_pool(cfg: &RunConfig, model: &ModelSpec) -> Result<CandidateSet> {
    let set = generate_points(&cfg.generator, model, cfg.seed)?;
    finish_pool(set, model, cfg.feasibility_filter)
}

fn phase1_assembly(cfg: &RunConfig, model: &ModelSpec) -> AssemblyOptions {
    let scale = match &cfg.phase1 {
        Phase1Config::Wda { scale_by_parameters, .. } | Phase1Config::Wmaxvol { scale_by_parameters, .. } => {
            *scale_by_parameters
        }
        Phase1Config::Pattern => true,
    };
    if scale {
        AssemblyOptions::scaled(model.parameters())
    } else {
        AssemblyOptions::unscaled()
    }
}

/// Assembly behind every reported `Φ`: the refiner's, so phase-1 and phase-2
/// values are comparable.
pub fn report_assembly(cfg: &RunConfig, model: &ModelSpec) -> AssemblyOptions {
    cfg.phase2.options().assembly(model)
}

/// Assembly for the certificate: the refiner's scaling without regularization.
pub fn certificate_assembly(cfg: &RunConfig, model: &ModelSpec) -> AssemblyOptions {
    if cfg.phase2.scale_by_parameters {
        AssemblyOptions::scaled(model.parameters())
    } else {
        AssemblyOptions::unscaled()
    }
}

pub fn design_phi(model: &ModelSpec, design: &Design, noise: &NoisePrecision, opts: &AssemblyOptions) -> Result<f64> {
    let blocks = model.blocks_for(design.points())?;
    log_d_criterion(&assemble_information(design, &blocks, noise, opts)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase1Record {
    pub solver: String,
    pub points: Vec<DesignPoint>,
    pub weights: Vec<f64>,
    /// Pool index of every design point.
    pub indices: Vec<usize>,
    /// `Φ` under the reporting assembly.
    pub phi: f64,
    /// `Φ` under the solver's own assembly.
    pub native_phi: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Phase1Record {
    pub fn design(&self) -> Result<Design> {
        Design::new(self.points.clone(), self.weights.clone())
    }
}

#[derive(Debug, Clone)]
pub struct Phase1Outcome {
    pub record: Phase1Record,
    /// Trace CSV when the solver recorded one.
    pub trace_csv: Option<String>,
}

pub fn solve_phase1(
    cfg: &RunConfig,
    model: &ModelSpec,
    noise: &NoisePrecision,
    pool: &CandidateSet,
) -> Result<Phase1Outcome> {
    let native = phase1_assembly(cfg, model);
    let (solver, design, indices, native_phi, iterations, converged, trace_csv) = match &cfg.phase1 {
        Phase1Config::Wda { tol, max_iter, prune_threshold, record_trace, .. } => {
            let opts = WdaOptions {
                tol: *tol,
                max_iter: *max_iter,
                prune_threshold: *prune_threshold,
                assembly: native.clone(),
                record_trace: *record_trace,
                ..WdaOptions::default()
            };
            let r = wda(pool, noise, &opts)?;
            let trace = if *record_trace {
                let mut buf = Vec::new();
                write_wda_trace(&mut buf, &r.trace)?;
                Some(String::from_utf8(buf).expect("trace is ascii"))
            } else {
                None
            };
            ("wda", r.design, r.indices, r.phi, r.iterations, r.converged, trace)
        }
        Phase1Config::Wmaxvol { n_iter, init_retry_limit, recompute_period, record_trace, .. } => {
            let opts = WmaxvolOptions {
                n_iter: *n_iter,
                seed: cfg.seed,
                init_retry_limit: *init_retry_limit,
                recompute_period: *recompute_period,
                assembly: native.clone(),
                record_trace: *record_trace,
            };
            let r = wmaxvol(pool, noise, &opts)?;
            let trace = if *record_trace {
                let mut buf = Vec::new();
                write_wmaxvol_trace(&mut buf, &r.trace)?;
                Some(String::from_utf8(buf).expect("trace is ascii"))
            } else {
                None
            };
            let blocks: Vec<_> = r.indices.iter().map(|&i| pool.require_blocks().map(|b| b[i].clone())).collect::<Result<_>>()?;
            let phi = log_d_criterion(&assemble_information(&r.design, &blocks, noise, &native)?)?;
            ("wmaxvol", r.design, r.indices, phi, *n_iter + 1, true, trace)
        }
        Phase1Config::Pattern => {
            let design = Design::uniform(pool.points().to_vec())?;
            let phi = log_d_criterion(&assemble_information(&design, pool.require_blocks()?, noise, &native)?)?;
            ("pattern", design, (0..pool.len()).collect(), phi, 0, true, None)
        }
    };
    let support_blocks: Vec<_> = {
        let blocks = pool.require_blocks()?;
        indices.iter().map(|&i| blocks[i].clone()).collect()
    };
    let phi = log_d_criterion(&assemble_information(&design, &support_blocks, noise, &report_assembly(cfg, model))?)?;
    Ok(Phase1Outcome {
        record: Phase1Record {
            solver: solver.into(),
            points: design.points().to_vec(),
            weights: design.weights().to_vec(),
            indices,
            phi,
            native_phi,
            iterations,
            converged,
        },
        trace_csv,
    })
}

/// Phase 2 from `init`; `Ok(None)` when disabled.
pub fn refine_phase2(
    cfg: &RunConfig,
    model: &ModelSpec,
    noise: &NoisePrecision,
    init: &Design,
) -> Result<Option<RefineResult>> {
    if !cfg.phase2.enabled {
        return Ok(None);
    }
    refine(model, init, noise, &cfg.phase2.options()).map(Some)
}

/// Probe set of the certificate, with blocks.
pub fn probe_set(cfg: &RunConfig, model: &ModelSpec, pool: &CandidateSet) -> Result<CandidateSet> {
    match &cfg.verification.probe {
        ProbeConfig::Pool => Ok(pool.clone()),
        ProbeConfig::Grid { counts } => {
            if !model.is_evaluable() {
                return Err(DesignError::Capability(
                    "a grid probe needs an evaluable model; use the pool probe".into(),
                ));
            }
            model.attach(grid(model.domain(), counts)?)
        }
    }
}

pub fn certify(
    cfg: &RunConfig,
    model: &ModelSpec,
    noise: &NoisePrecision,
    probe: &CandidateSet,
    design: &Design,
) -> Result<CertificateReport> {
    let blocks = model.blocks_for(design.points())?;
    kw_certificate(design, &blocks, probe, noise, &certificate_assembly(cfg, model), cfg.verification.tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub probe: String,
    pub probe_size: usize,
    pub n_params: usize,
    pub tol: f64,
    pub max_d: f64,
    pub gap: f64,
    pub argmax: DesignPoint,
    pub support_d: Vec<f64>,
    pub is_optimal: bool,
}

impl CertificateSummary {
    pub fn new(report: &CertificateReport, probe: &CandidateSet) -> Self {
        Self {
            probe: probe.provenance().into(),
            probe_size: probe.len(),
            n_params: report.n_params,
            tol: report.tol,
            max_d: report.max_d,
            gap: report.gap(),
            argmax: report.argmax.clone(),
            support_d: report.support_d.clone(),
            is_optimal: report.is_optimal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSummary {
    pub provenance: String,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: String,
    pub n_params: usize,
    pub seed: u64,
    pub pool: PoolSummary,
    pub phase1: Phase1Record,
    /// Phase-1 design checked over the pool it was chosen from.
    pub phase1_certificate: CertificateSummary,
    pub phase2: Option<RefineRecord>,
    /// Why phase 2 did not run although enabled.
    pub phase2_skipped: Option<String>,
    /// Final design checked over the configured probe.
    pub certificate: CertificateSummary,
    /// `Φ` of the final design under the reporting assembly.
    pub final_phi: f64,
}

impl RunReport {
    pub fn final_design(&self) -> Result<Design> {
        match &self.phase2 {
            Some(r) => Design::new(r.points.clone(), r.weights.clone()),
            None => self.phase1.design(),
        }
    }
}

/// Wall times in milliseconds. Kept out of `report.json` so reports stay
/// byte-identical across runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub generate_ms: f64,
    pub phase1_ms: f64,
    pub phase2_ms: f64,
    pub verify_ms: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub timings: Timings,
}

/// Everything after pool generation, writing artifacts into `out` when given.
pub fn run_on_pool(
    cfg: &RunConfig,
    model: &ModelSpec,
    noise: &NoisePrecision,
    pool: &CandidateSet,
    out: Option<&Path>,
    mut timings: Timings,
) -> Result<RunOutcome> {
    if let Some(dir) = out {
        write_text(&dir.join("candidates.csv"), &pool.to_csv())?;
    }

    let t = Instant::now();
    let p1 = solve_phase1(cfg, model, noise, pool).map_err(|e| e.in_stage("phase 1"))?;
    timings.phase1_ms = elapsed_ms(t);
    let phase1_design = p1.record.design()?;
    if let Some(dir) = out {
        write_json(&dir.join("phase1_design.json"), &p1.record)?;
        if let Some(trace) = &p1.trace_csv {
            write_text(&dir.join("phase1_trace.csv"), trace)?;
        }
    }

    let t = Instant::now();
    let (phase2, phase2_skipped) = if cfg.phase2.enabled && !model.is_evaluable() {
        (None, Some(format!("the {} model cannot be evaluated off its stored points", model.name())))
    } else {
        let r = refine_phase2(cfg, model, noise, &phase1_design).map_err(|e| e.in_stage("phase 2"))?;
        (r.as_ref().map(RefineRecord::from), None)
    };
    timings.phase2_ms = elapsed_ms(t);
    if let (Some(dir), Some(r)) = (out, &phase2) {
        write_json(&dir.join("phase2_design.json"), r)?;
    }

    let t = Instant::now();
    let verify = |design: &Design, probe: &CandidateSet| certify(cfg, model, noise, probe, design);
    let phase1_cert = verify(&phase1_design, pool).map_err(|e| e.in_stage("verify"))?;
    let probe = probe_set(cfg, model, pool).map_err(|e| e.in_stage("verify"))?;
    let final_design = match &phase2 {
        Some(r) => Design::new(r.points.clone(), r.weights.clone())?,
        None => phase1_design,
    };
    let cert = verify(&final_design, &probe).map_err(|e| e.in_stage("verify"))?;
    timings.verify_ms = elapsed_ms(t);

    let report = RunReport {
        model: model.name(),
        n_params: model.n_params(),
        seed: cfg.seed,
        pool: PoolSummary {
            provenance: pool.provenance().into(),
            size: pool.len(),
        },
        final_phi: phase2.as_ref().map_or(p1.record.phi, |r| r.phi),
        phase1: p1.record,
        phase1_certificate: CertificateSummary::new(&phase1_cert, pool),
        phase2,
        phase2_skipped,
        certificate: CertificateSummary::new(&cert, &probe),
    };
    if let Some(dir) = out {
        let mut csv = Vec::new();
        write_sensitivity_csv(&mut csv, probe.points(), &cert.d_values)?;
        write_text(&dir.join("sensitivity.csv"), &String::from_utf8(csv).expect("csv is ascii"))?;
        write_json(&dir.join("certificate.json"), &report.certificate)?;
        write_json(&dir.join("report.json"), &report)?;
        write_json(&dir.join("timings.json"), &timings)?;
    }
    Ok(RunOutcome { report, timings })
}

fn check_optimal(cfg: &RunConfig, report: &RunReport) -> Result<()> {
    if cfg.verification.require_optimal && !report.certificate.is_optimal {
        return Err(DesignError::Verification(format!(
            "max d = {} exceeds P = {} at tol {}",
            report.certificate.max_d, report.n_params, report.certificate.tol
        )));
    }
    Ok(())
}

/// generate → filter → phase 1 → phase 2 → verify, writing into `out`.
pub fn run_pipeline_in(cfg: &RunConfig, out: Option<&Path>) -> Result<RunOutcome> {
    let model = build_model(&cfg.model)?;
    let noise = noise_precision(cfg, &model)?;
    let t = Instant::now();
    let pool = generate_pool(cfg, &model).map_err(|e| e.in_stage("generate"))?;
    let timings = Timings {
        generate_ms: elapsed_ms(t),
        ..Timings::default()
    };
    let outcome = run_on_pool(cfg, &model, &noise, &pool, out, timings)?;
    check_optimal(cfg, &outcome.report)?;
    Ok(outcome)
}

/// [`run_pipeline_in`] writing into the configured output directory.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutcome> {
    run_pipeline_in(cfg, Some(&cfg.output_dir))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartResult {
    pub index: usize,
    pub label: String,
    /// Final `Φ`, absent when the start failed.
    pub phi: Option<f64>,
    pub error: Option<String>,
    pub report: Option<RunReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistartReport {
    pub strategy: String,
    pub starts: Vec<StartResult>,
    pub best_index: usize,
    pub best_phi: f64,
}

impl MultistartReport {
    pub fn best(&self) -> &RunReport {
        self.starts[self.best_index].report.as_ref().expect("best start succeeded")
    }
}

struct StartSpec {
    label: String,
    cfg: RunConfig,
    /// Pre-generated points that replace the configured generator.
    points: Option<CandidateSet>,
}

fn start_specs(cfg: &RunConfig, model: &ModelSpec, ms: &MultistartConfig) -> Result<Vec<StartSpec>> {
    let plain = |label: String, cfg: RunConfig| StartSpec { label, cfg, points: None };
    match ms {
        MultistartConfig::SobolSkip { runs } => {
            let GeneratorConfig::Sobol { count, skip } = cfg.generator else {
                return Err(config_err("multistart.strategy", "sobol_skip needs a sobol generator"));
            };
            Ok((0..*runs)
                .map(|k| {
                    let mut c = cfg.clone();
                    let s = skip + k as u64 * count as u64;
                    c.generator = GeneratorConfig::Sobol { count, skip: s };
                    plain(format!("Sobol({count}) skip={s}"), c)
                })
                .collect())
        }
        MultistartConfig::Factorial { runs } => {
            let GeneratorConfig::Factorial { count, shrink } = cfg.generator else {
                return Err(config_err("multistart.strategy", "factorial multistart needs a factorial generator"));
            };
            let sets = factorial_multistart(model.domain(), count, *runs, shrink, cfg.seed)?;
            sets.into_iter()
                .enumerate()
                .map(|(k, pts)| {
                    Ok(StartSpec {
                        label: format!("Factorial({count}) combination {k}"),
                        cfg: cfg.clone(),
                        points: Some(CandidateSet::new(pts, format!("Factorial({count})"))?),
                    })
                })
                .collect()
        }
        MultistartConfig::Seeds { runs } => Ok((0..*runs)
            .map(|k| {
                let mut c = cfg.clone();
                c.seed = cfg.seed.wrapping_add(k as u64);
                plain(format!("seed={}", c.seed), c)
            })
            .collect()),
        MultistartConfig::Pools { pools } => Ok(pools
            .iter()
            .map(|v| {
                let mut c = cfg.clone();
                c.generator = v.generator.clone();
                c.feasibility_filter = v.feasibility_filter;
                let label = format!("{:?}{}", v.generator, if v.feasibility_filter { " filtered" } else { "" });
                plain(label, c)
            })
            .collect()),
    }
}

fn strategy_name(ms: &MultistartConfig) -> &'static str {
    match ms {
        MultistartConfig::SobolSkip { .. } => "sobol_skip",
        MultistartConfig::Factorial { .. } => "factorial",
        MultistartConfig::Seeds { .. } => "seeds",
        MultistartConfig::Pools { .. } => "pools",
    }
}

/// Independent starts, run concurrently, each writing to `start_<k>/`. A
/// failed start is recorded; the call fails only when every start does.
pub fn run_multistart_in(cfg: &RunConfig, out: Option<&Path>) -> Result<MultistartReport> {
    let ms = cfg
        .multistart
        .as_ref()
        .ok_or_else(|| config_err("multistart", "no multistart section"))?;
    let model = build_model(&cfg.model)?;
    let noise = noise_precision(cfg, &model)?;
    let specs = start_specs(cfg, &model, ms)?;

    let starts: Vec<StartResult> = specs
        .par_iter()
        .enumerate()
        .map(|(index, spec)| {
            let dir: Option<PathBuf> = out.map(|d| d.join(format!("start_{index:03}")));
            let run = || -> Result<RunOutcome> {
                let set = match &spec.points {
                    Some(p) => p.clone(),
                    None => generate_points(&spec.cfg.generator, &model, spec.cfg.seed)?,
                };
                let pool = finish_pool(set, &model, spec.cfg.feasibility_filter).map_err(|e| e.in_stage("generate"))?;
                run_on_pool(&spec.cfg, &model, &noise, &pool, dir.as_deref(), Timings::default())
            };
            match run() {
                Ok(o) => StartResult {
                    index,
                    label: spec.label.clone(),
                    phi: Some(o.report.final_phi),
                    error: None,
                    report: Some(o.report),
                },
                Err(e) => StartResult {
                    index,
                    label: spec.label.clone(),
                    phi: None,
                    error: Some(e.to_string()),
                    report: None,
                },
            }
        })
        .collect();

    let best = starts
        .iter()
        .filter_map(|s| s.phi.map(|p| (s.index, p)))
        .fold(None::<(usize, f64)>, |acc, (i, p)| match acc {
            Some((_, bp)) if bp <= p => acc,
            _ => Some((i, p)),
        });
    let Some((best_index, best_phi)) = best else {
        let first = starts.first().and_then(|s| s.error.clone()).unwrap_or_default();
        return Err(DesignError::InvalidArgument(format!("every multistart run failed; first error: {first}"))
            .in_stage("multistart"));
    };
    let report = MultistartReport {
        strategy: strategy_name(ms).into(),
        starts,
        best_index,
        best_phi,
    };
    if let Some(dir) = out {
        write_json(&dir.join("multistart.json"), &report)?;
    }
    check_optimal(cfg, report.best())?;
    Ok(report)
}

pub fn run_multistart(cfg: &RunConfig) -> Result<MultistartReport> {
    run_multistart_in(cfg, Some(&cfg.output_dir))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRound {
    pub round: usize,
    /// Parameters the design was computed at.
    pub p_design: Vec<f64>,
    pub design: Design,
    pub phi: f64,
    pub repetitions: Vec<usize>,
    /// Estimate after adding this round's observations.
    pub p_hat: Vec<f64>,
    /// `‖p̂ − p_design‖∞`.
    pub step: f64,
    /// `‖p̂ − p_true‖₂`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationTrajectory {
    pub p_true: Vec<f64>,
    pub p0: Vec<f64>,
    pub budget: usize,
    pub rounds: Vec<ValidationRound>,
    pub converged: bool,
    /// Error that ended the loop early; earlier rounds are kept.
    pub failure: Option<String>,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn validation_round(
    cfg: &RunConfig,
    base: &ModelSpec,
    truth: &ModelSpec,
    noise: &NoisePrecision,
    round: usize,
    p_design: &[f64],
    budget: usize,
    experiments: &mut Vec<Experiment>,
) -> Result<ValidationRound> {
    let model = base.clone().with_parameters(p_design)?;
    let pool = generate_pool(cfg, &model).map_err(|e| e.in_stage("generate"))?;
    let p1 = solve_phase1(cfg, &model, noise, &pool).map_err(|e| e.in_stage("phase 1"))?;
    let mut design = p1.record.design()?;
    let mut phi = p1.record.phi;
    if let Some(r) = refine_phase2(cfg, &model, noise, &design).map_err(|e| e.in_stage("phase 2"))? {
        design = r.design;
        phi = r.phi;
    }

    let repetitions = realize_repetitions(design.weights(), budget);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(round as u64);
    for (x, &r) in design.points().iter().zip(&repetitions) {
        if r == 0 {
            continue;
        }
        let mut mean = vec![0.0; truth.m()];
        for _ in 0..r {
            for (acc, v) in mean.iter_mut().zip(simulate_with(truth, x, &mut rng)?) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= r as f64);
        experiments.push(Experiment {
            point: x.clone(),
            y: mean,
            repetitions: r,
        });
    }
    let p_hat = estimate_parameters(truth, experiments, p_design).map_err(|e| e.in_stage("estimate"))?;
    Ok(ValidationRound {
        round,
        p_design: p_design.to_vec(),
        step: max_abs_diff(&p_hat, p_design),
        error: l2_diff(&p_hat, truth.parameters()),
        design,
        phi,
        repetitions,
        p_hat,
    })
}

/// Design at the current estimate, run the realized experiments on the
/// simulated truth, re-estimate from all observations so far, repeat.
pub fn run_validation_loop_in(cfg: &RunConfig, out: Option<&Path>) -> Result<ValidationTrajectory> {
    let v = cfg
        .validation
        .as_ref()
        .ok_or_else(|| config_err("validation", "no validation section"))?;
    let base = build_model(&cfg.model)?;
    if !base.is_evaluable() {
        return Err(DesignError::Capability("the validation loop needs an evaluable model".into()));
    }
    if v.p0.len() != base.n_params() {
        return Err(config_err("validation.p0", format!("expected {} values", base.n_params())));
    }
    if v.budget < base.n_params() {
        return Err(DesignError::Identifiability {
            observations: v.budget,
            parameters: base.n_params(),
        });
    }
    let p_true = v.p_true.clone().unwrap_or_else(|| base.parameters().to_vec());
    let truth = base
        .clone()
        .with_parameters(&p_true)
        .map_err(|e| config_err("validation.p_true", e.to_string()))?;
    let noise = noise_precision(cfg, &base)?;

    let mut traj = ValidationTrajectory {
        p_true,
        p0: v.p0.clone(),
        budget: v.budget,
        rounds: Vec::new(),
        converged: false,
        failure: None,
    };
    let mut experiments = Vec::new();
    let mut p = v.p0.clone();
    for round in 0..v.rounds {
        match validation_round(cfg, &base, &truth, &noise, round, &p, v.budget, &mut experiments) {
            Ok(r) => {
                let done = r.step <= LOOP_STEP_TOL;
                p = r.p_hat.clone();
                traj.rounds.push(r);
                if done {
                    traj.converged = true;
                    break;
                }
            }
            Err(e) => {
                traj.failure = Some(e.to_string());
                break;
            }
        }
    }
    if let Some(dir) = out {
        write_json(&dir.join("validation.json"), &traj)?;
    }
    Ok(traj)
}

pub fn run_validation_loop(cfg: &RunConfig) -> Result<ValidationTrajectory> {
    run_validation_loop_in(cfg, Some(&cfg.output_dir))
}

/// Reads any JSON object carrying `points` and `weights` as a [`Design`].
pub fn load_design(path: &Path) -> Result<Design> {
    #[derive(Deserialize)]
    struct Stored {
        points: Vec<DesignPoint>,
        weights: Vec<f64>,
    }
    let s: Stored = serde_json::from_str(&read_text(path)?)?;
    Design::new(s.points, s.weights)
}

/// Certificate of a stored design without running any solver. Writes
/// `sensitivity.csv` and `certificate.json` into `out`.
pub fn verify_design(cfg: &RunConfig, design: &Design, out: Option<&Path>) -> Result<CertificateSummary> {
    let model = build_model(&cfg.model)?;
    let noise = noise_precision(cfg, &model)?;
    let pool = match &cfg.verification.probe {
        ProbeConfig::Pool => generate_pool(cfg, &model).map_err(|e| e.in_stage("generate"))?,
        ProbeConfig::Grid { .. } => CandidateSet::new(design.points().to_vec(), "design")?,
    };
    let probe = probe_set(cfg, &model, &pool)?;
    let cert = certify(cfg, &model, &noise, &probe, design).map_err(|e| e.in_stage("verify"))?;
    let summary = CertificateSummary::new(&cert, &probe);
    if let Some(dir) = out {
        let mut csv = Vec::new();
        write_sensitivity_csv(&mut csv, probe.points(), &cert.d_values)?;
        write_text(&dir.join("sensitivity.csv"), &String::from_utf8(csv).expect("csv is ascii"))?;
        write_json(&dir.join("certificate.json"), &summary)?;
    }
    if cfg.verification.require_optimal && !summary.is_optimal {
        return Err(DesignError::Verification(format!(
            "max d = {} exceeds P = {} at tol {}",
            summary.max_d, summary.n_params, summary.tol
        )));
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMetrics {
    pub phi: f64,
    pub delta: f64,
    /// `None` when the design covers the whole pool.
    pub q: Option<f64>,
    pub pool: PoolSummary,
}

/// `Φ`, `Δ` and `q` of `design` against the configured pool.
pub fn design_metrics(cfg: &RunConfig, design: &Design) -> Result<DesignMetrics> {
    let model = build_model(&cfg.model)?;
    let noise = noise_precision(cfg, &model)?;
    let pool = generate_pool(cfg, &model).map_err(|e| e.in_stage("generate"))?;
    let opts = certificate_assembly(cfg, &model);
    let blocks = model.blocks_for(design.points())?;
    let q = match q_metric(design, &blocks, &pool, &noise, &opts) {
        Ok(q) => Some(q),
        Err(DesignError::DegeneratePool(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(DesignMetrics {
        phi: design_phi(&model, design, &noise, &report_assembly(cfg, &model))?,
        delta: delta_metric(design, &blocks, &noise, &opts)?,
        q,
        pool: PoolSummary {
            provenance: pool.provenance().into(),
            size: pool.len(),
        },
    })
}
