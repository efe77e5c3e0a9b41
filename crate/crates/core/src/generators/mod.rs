//! Candidate pools and initial designs.

pub mod candidates;
pub mod factorial;
pub mod lhs;
pub mod sobol;

pub use candidates::{feasible_filter, grid, CandidateSet, DomainBox};
pub use factorial::{factorial, factorial_multistart, DEFAULT_SHRINK};
pub use lhs::latin_hypercube;
pub use sobol::{sobol, sobol_in, SobolSequence};
