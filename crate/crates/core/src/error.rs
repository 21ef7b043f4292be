use thiserror::Error;

use crate::partition::AtomIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("critical index {k} outside [{min}, {max}]")]
    IndexOutOfRange { k: i64, min: u32, max: u32 },

    #[error("map evaluated at the singular point 0")]
    SingularInput,

    #[error("orbit reached the critical set at iterate {iterate}")]
    SingularOrbit { iterate: usize },

    #[error("invalid atom index {0}")]
    InvalidIndex(AtomIndex),

    #[error("point {0} lies on an atom boundary")]
    BoundaryPoint(f64),

    #[error("point {0} belongs to the critical set")]
    SingularPoint(f64),

    #[error("binding period reached the cap of {cap} iterates")]
    CapReached { cap: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("f^n is not monotone on atom {atom} at iterate {iterate}")]
    DiffeomorphismViolation { atom: usize, iterate: usize },

    #[error("every sampled orbit hit the critical set")]
    AllOrbitsSingular,

    #[error("histograms have different bin counts ({0} vs {1})")]
    BinMismatch(usize, usize),

    #[error("parameter grid is empty")]
    EmptyGrid,

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
