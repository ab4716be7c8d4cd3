use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate direction: vector has zero length")]
    DegenerateDirection,
    #[error("degenerate query: point lies on the polyline")]
    DegenerateQuery,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("illegal move: |v| = {norm} exceeds step bound {eps}")]
    IllegalMove { norm: f64, eps: f64 },
    #[error("position is not terminal")]
    NotTerminal,
    #[error("non-termination suspected after {0} steps")]
    NonTermination(u64),
    #[error("query point outside the field domain")]
    OutsideDomain,
    #[error("processes already merged")]
    Merged,
    #[error("moves are not aligned with the difference direction")]
    NotAligned,
    #[error("unsupported dimension {0}: {1}")]
    UnsupportedDimension(usize, &'static str),
    #[error("barrier exponent nonpositive; regime not covered by the barrier (p = {p}, d = {d})")]
    BarrierRegime { p: f64, d: usize },
    #[error("empty experiment")]
    EmptyExperiment,
    #[error("degenerate design: {0}")]
    DegenerateDesign(&'static str),
    #[error("relaxation diverged: {0}")]
    Diverged(String),
    #[error("mismatched boundary data: {0} vs {1}")]
    BoundaryMismatch(String, String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
