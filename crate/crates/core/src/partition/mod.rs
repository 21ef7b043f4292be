mod atoms;
mod binding;
mod chain;
mod image;
mod refine;

pub use atoms::*;
pub use binding::*;
pub use chain::*;
pub use refine::*;
