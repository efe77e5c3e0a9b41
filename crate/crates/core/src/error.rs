use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DesignError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("information matrix is numerically singular{}", context_suffix(.0))]
    Singular(String),

    #[error("singular starting design: {0} (try a feasibility filter or a larger candidate pool)")]
    SingularStart(String),

    #[error("matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("no nonsingular initial block set found after {attempts} attempts")]
    Initialization { attempts: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("design is empty after pruning")]
    EmptyDesign,

    #[error("candidate set is empty{}", context_suffix(.0))]
    EmptyCandidateSet(String),

    #[error("degenerate pool: {0}")]
    DegeneratePool(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error("infeasible design: {0}")]
    Infeasible(String),

    #[error("not identifiable: {observations} effective observations for {parameters} parameters")]
    Identifiability { observations: usize, parameters: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<DesignError>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn context_suffix(ctx: &str) -> String {
    if ctx.is_empty() {
        String::new()
    } else {
        format!(" ({ctx})")
    }
}

impl DesignError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DesignError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        DesignError::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, looking through stage labels.
    pub fn root(&self) -> &DesignError {
        match self {
            DesignError::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_singular(&self) -> bool {
        matches!(
            self.root(),
            DesignError::Singular(_) | DesignError::SingularStart(_)
        )
    }
}
