use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every failure the pipeline can report.
///
/// The variants split into input problems ([`Error::Parameter`],
/// [`Error::Shape`], [`Error::NonFinite`], [`Error::DegenerateGeometry`])
/// and numerical ones ([`Error::Connectivity`], [`Error::Convergence`],
/// [`Error::Numerical`]); the CLI maps the two groups to different exit codes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("disconnected kernel: {0}")]
    Connectivity(String),
    #[error("eigensolver did not converge: {message} (worst residual {worst:e})")]
    Convergence {
        message: String,
        worst: f64,
        residuals: Vec<f64>,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("iteration {iteration}, stage {stage}: {source}")]
    Stage {
        iteration: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for errors caused by the input rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Parameter(_)
            | Error::Shape(_)
            | Error::NonFinite { .. }
            | Error::DegenerateGeometry(_) => true,
            Error::Connectivity(_) | Error::Convergence { .. } | Error::Numerical(_) => false,
            Error::Stage { source, .. } => source.is_input_error(),
        }
    }

    pub(crate) fn at(self, iteration: usize, stage: &'static str) -> Error {
        Error::Stage {
            iteration,
            stage,
            source: Box::new(self),
        }
    }
}

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
