//! Two-phase D-optimal experimental design.
//!
//! Phase 1 picks weights over a fixed candidate pool ([`solvers::wda`],
//! [`solvers::wmaxvol`]); phase 2 moves the surviving points and weights
//! continuously ([`refine::refine`]). Designs are certified with the
//! Kiefer–Wolfowitz sensitivity bound ([`design::kw_certificate`]).

pub mod design;
pub mod error;
pub mod generators;
pub mod io;
pub mod linalg;
pub mod models;
pub mod refine;
pub mod solvers;
pub mod workflow;

pub use design::{
    assemble_information, atom, delta_metric, kw_certificate, log_d_criterion, q_metric,
    sensitivity, AssemblyOptions, CertificateReport, Design, DesignPoint, InformationMatrix,
    JacobianBlock, NoisePrecision,
};
pub use error::{DesignError, Result};
pub use generators::{CandidateSet, DomainBox};
pub use models::{JacobianTable, ModelSpec};
