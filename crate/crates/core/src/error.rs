use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),

    #[error("not a knot: {0}")]
    NotAKnot(String),

    #[error("endpoint configurations are not coplanar (residual {residual:.3e})")]
    NonPlanarInput { residual: f64 },

    #[error("no admissible path: {0}")]
    Infeasible(String),

    #[error("cap comes within {distance:.4} of the core (tube needs {required:.4})")]
    CapCollision { distance: f64, required: f64 },

    #[error("overlap removal stalled with penetration {max_penetration:.3e} after {sweeps} sweeps")]
    OverlapStuck { max_penetration: f64, sweeps: usize },

    #[error("start curve violates constraints: {0}")]
    InfeasibleStart(String),

    #[error("seed curve violates constraints: {0}")]
    InfeasibleSeed(String),

    #[error("offset strand curvature {curvature:.4} exceeds the bound at vertex {index}")]
    OffsetCurvatureViolation { index: usize, curvature: f64 },

    #[error("construction stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("no aperture: {0}")]
    NoAperture(String),

    #[error("trace has no frames")]
    EmptyTrace,

    #[error("curve has zero tube radius")]
    NoTube,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(#[from] serde_json::Error),
}

impl Error {
    /// Wrap an error with the name of the pipeline stage that raised it.
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
