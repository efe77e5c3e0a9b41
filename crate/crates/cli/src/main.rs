//! `optdesign` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 solver failure,
//! 4 verification failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use optdesign::io::{write_json, write_text};
use optdesign::refine::{refine, RefineRecord};
use optdesign::workflow::{self, RunConfig};
use optdesign::{DesignError, Result};

#[derive(Parser)]
#[command(name = "optdesign", version, about = "Two-phase D-optimal experimental design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the candidate pool and write candidates.csv.
    Generate(Common),
    /// Phase 1 only: discrete weights over the candidate pool.
    Solve(Common),
    /// Phase 2 only: refine a stored design.
    Refine(WithDesign),
    /// Equivalence-theorem check of a stored design.
    Verify(WithDesign),
    /// Several starts, best one reported.
    Multistart(Common),
    /// Estimate-redesign validation loop on simulated data.
    Loop(Common),
    /// Φ, Δ and q of a stored design against the configured pool.
    Metrics(WithDesign),
    /// Full pipeline: generate, phase 1, phase 2, verify.
    Run(Common),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Format of the summary printed to stdout.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct WithDesign {
    #[command(flatten)]
    common: Common,
    /// JSON file with `points` and `weights`.
    #[arg(long)]
    design: PathBuf,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

fn exit_code(e: &DesignError) -> u8 {
    match e.root() {
        DesignError::Config { .. } | DesignError::Parse { .. } | DesignError::Io { .. } | DesignError::Json(_) => 2,
        DesignError::Verification(_) => 4,
        _ => 3,
    }
}

/// Prints `value` as pretty JSON, or as `key,value` rows of its top-level scalars.
fn emit<T: Serialize>(value: &T, format: Format) -> Result<()> {
    let v = serde_json::to_value(value)?;
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&v)?),
        Format::Csv => {
            println!("key,value");
            if let serde_json::Value::Object(map) = v {
                for (k, val) in map {
                    if !(val.is_object() || val.is_array()) {
                        println!("{k},{val}");
                    }
                }
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct GenerateSummary {
    provenance: String,
    size: usize,
    path: PathBuf,
}

fn generate(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let model = workflow::build_model(&cfg.model)?;
    let pool = workflow::generate_pool(&cfg, &model).map_err(|e| e.in_stage("generate"))?;
    let path = cfg.output_dir.join("candidates.csv");
    write_text(&path, &pool.to_csv())?;
    emit(&GenerateSummary { provenance: pool.provenance().into(), size: pool.len(), path }, c.format)
}

fn solve(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let model = workflow::build_model(&cfg.model)?;
    let noise = workflow::noise_precision(&cfg, &model)?;
    let pool = workflow::generate_pool(&cfg, &model).map_err(|e| e.in_stage("generate"))?;
    let out = workflow::solve_phase1(&cfg, &model, &noise, &pool).map_err(|e| e.in_stage("phase 1"))?;
    write_text(&cfg.output_dir.join("candidates.csv"), &pool.to_csv())?;
    write_json(&cfg.output_dir.join("phase1_design.json"), &out.record)?;
    if let Some(trace) = &out.trace_csv {
        write_text(&cfg.output_dir.join("phase1_trace.csv"), trace)?;
    }
    emit(&out.record, c.format)
}

fn refine_cmd(w: &WithDesign) -> Result<()> {
    let cfg = w.common.load()?;
    let model = workflow::build_model(&cfg.model)?;
    let noise = workflow::noise_precision(&cfg, &model)?;
    let init = workflow::load_design(&w.design)?;
    let r = refine(&model, &init, &noise, &cfg.phase2.options()).map_err(|e| e.in_stage("phase 2"))?;
    let record = RefineRecord::from(&r);
    write_json(&cfg.output_dir.join("phase2_design.json"), &record)?;
    emit(&record, w.common.format)
}

fn verify(w: &WithDesign) -> Result<()> {
    let cfg = w.common.load()?;
    let design = workflow::load_design(&w.design)?;
    let s = workflow::verify_design(&cfg, &design, Some(&cfg.output_dir))?;
    emit(&s, w.common.format)
}

fn metrics(w: &WithDesign) -> Result<()> {
    let cfg = w.common.load()?;
    let design = workflow::load_design(&w.design)?;
    let m = workflow::design_metrics(&cfg, &design)?;
    write_json(&cfg.output_dir.join("metrics.json"), &m)?;
    emit(&m, w.common.format)
}

#[derive(Serialize)]
struct MultistartSummary {
    strategy: String,
    starts: usize,
    failed: usize,
    best_index: usize,
    best_phi: f64,
}

fn multistart(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let r = workflow::run_multistart(&cfg)?;
    let summary = MultistartSummary {
        strategy: r.strategy.clone(),
        starts: r.starts.len(),
        failed: r.starts.iter().filter(|s| s.error.is_some()).count(),
        best_index: r.best_index,
        best_phi: r.best_phi,
    };
    match c.format {
        Format::Json => emit(&r, c.format),
        Format::Csv => emit(&summary, c.format),
    }
}

fn validation_loop(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let t = workflow::run_validation_loop(&cfg)?;
    match c.format {
        Format::Json => emit(&t, c.format)?,
        Format::Csv => {
            let n = t.p0.len();
            let head: Vec<String> = (1..=n).map(|i| format!("p{i}")).collect();
            println!("round,{},step,error", head.join(","));
            for r in &t.rounds {
                let p: Vec<String> = r.p_hat.iter().map(|v| v.to_string()).collect();
                println!("{},{},{},{}", r.round, p.join(","), r.step, r.error);
            }
        }
    }
    match &t.failure {
        Some(f) => Err(DesignError::InvalidArgument(f.clone()).in_stage("validation loop")),
        None => Ok(()),
    }
}

fn run(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let o = workflow::run_pipeline(&cfg)?;
    emit(&o.report, c.format)
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(c) => generate(c),
        Command::Solve(c) => solve(c),
        Command::Refine(w) => refine_cmd(w),
        Command::Verify(w) => verify(w),
        Command::Multistart(c) => multistart(c),
        Command::Loop(c) => validation_loop(c),
        Command::Metrics(w) => metrics(w),
        Command::Run(c) => run(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
