pub mod error;
pub mod forward;
pub mod geometry;
pub mod metrics;
pub mod optimizer;
pub mod problem;
pub mod specfun;
pub mod surrogate;

pub use error::{Error, Result};
