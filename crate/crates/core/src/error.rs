use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DeaError> = std::result::Result<T, E>;

/// Pipeline stage a failure originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Cluster,
    Distance,
    NeighborGraph,
    SigmaSearch,
    Reduce,
    Train,
    Project,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Cluster => "cluster",
            Stage::Distance => "distance_matrix",
            Stage::NeighborGraph => "neighbor_graph",
            Stage::SigmaSearch => "optimize_sigma",
            Stage::Reduce => "reduce",
            Stage::Train => "train",
            Stage::Project => "project",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum DeaError {
    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("image error: {0}")]
    Image(String),

    #[error("loss became non-finite at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("schema error in field `{field}`: {msg}")]
    Schema { field: String, msg: String },

    #[error("unsupported model version {found} (this build reads version {expected})")]
    Version { found: u64, expected: u64 },

    #[error("stage {stage} failed")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<DeaError>,
    },
}

impl DeaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DeaError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        DeaError::InvalidArgument(msg.into())
    }

    pub(crate) fn at(self, stage: Stage) -> Self {
        DeaError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage tags.
    pub fn root(&self) -> &DeaError {
        match self {
            DeaError::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures caused by the numbers rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            DeaError::Divergence { .. } | DeaError::Numerical(_)
        )
    }

    /// True for failures caused by bad or unreadable input data.
    pub fn is_data(&self) -> bool {
        matches!(
            self.root(),
            DeaError::Io { .. }
                | DeaError::Parse { .. }
                | DeaError::NonFinite { .. }
                | DeaError::Dimension(_)
                | DeaError::Image(_)
                | DeaError::Schema { .. }
                | DeaError::Version { .. }
        )
    }
}
