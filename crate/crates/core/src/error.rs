use thiserror::Error;

use crate::mesh::ElementId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("level-set gradient undefined at ({}, {}, {}): point lies on the singular set", .0[0], .0[1], .0[2])]
    SingularPoint([f64; 3]),

    #[error("surface does not intersect mesh")]
    EmptyActiveSet,

    #[error("unknown node ({}, {}, {})", .0[0], .0[1], .0[2])]
    UnknownNode([i64; 3]),

    #[error("mapping construction failed (mesh too coarse) in element {element}")]
    MappingFailed { element: ElementId },

    #[error("deformation not invertible (mesh too coarse) in element {element}")]
    NotInvertible { element: ElementId },

    #[error("unsupported quadrature degree {0}")]
    UnsupportedDegree(usize),

    #[error("unsupported polynomial degree {0} (expected 1..=5)")]
    UnsupportedOrder(usize),

    #[error("unsupported (no higher-order theory): {0}")]
    Unsupported(String),

    #[error("constraint vector is zero")]
    ZeroConstraint,

    #[error("discrete surface has zero measure")]
    ZeroMeasure,

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("eigenvalue estimate did not converge after {iterations} iterations (last relative change {change:e})")]
    EigenNotConverged { iterations: usize, change: f64 },

    #[error("system too large for eigenvalue estimation ({size} > {cap})")]
    TooLarge { size: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The error beneath any stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
