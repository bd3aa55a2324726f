use std::io;

use thiserror::Error;

/// Errors raised across the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("numeric fault in {context}")]
    NumericFault { context: String },

    #[error("activation {0} has no usable second derivative")]
    UnsupportedActivation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate neighborhood around point {index}")]
    DegenerateNeighborhood { index: usize },

    #[error("ray is tangent to the surface (|v.n| = {dot:.3e})")]
    TangentialRay { dot: f64 },

    #[error("degenerate scene: {0}")]
    DegenerateScene(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("empty output: {0}")]
    EmptyOutput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("training aborted: {0}")]
    NonConvergence(String),

    #[error("loss term `{term}`: {source}")]
    Term {
        term: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn numeric(context: impl Into<String>) -> Self {
        Error::NumericFault {
            context: context.into(),
        }
    }

    pub(crate) fn in_term(self, term: &'static str) -> Self {
        Error::Term {
            term,
            source: Box::new(self),
        }
    }

    /// Innermost error, looking through term annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Term { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
