//! Configuration-driven orchestration of the two-phase pipeline.

pub mod config;
pub mod pipeline;

pub use config::{
    GeneratorConfig, ModelConfig, MultistartConfig, Phase1Config, Phase2Config, PoolVariant, ProbeConfig, RunConfig,
    Sigma, ValidationConfig, VerificationConfig,
};
pub use pipeline::{
    build_model, design_metrics, generate_pool, load_design, noise_precision, run_multistart, run_multistart_in,
    run_pipeline, run_pipeline_in, run_validation_loop, run_validation_loop_in, solve_phase1, verify_design,
    CertificateSummary, DesignMetrics, MultistartReport, Phase1Record, RunOutcome, RunReport, StartResult, Timings,
    ValidationRound, ValidationTrajectory,
};
