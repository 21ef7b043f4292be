//! Numerical laboratory for a circle-map family with infinitely many
//! critical points accumulating at the origin.

pub mod bounds;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod map;
pub mod measure;
pub mod params;
pub mod partition;
pub mod scan;

pub use error::{Error, Result};
pub use map::{CriticalKind, CriticalPoint, CriticalTarget, Nearest};
pub use params::{MapParams, ParamSpec};
