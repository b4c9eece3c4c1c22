//! File formats, experiment orchestration and reporting on top of `ewcl-core`.

pub mod error;
pub mod experiment;
pub mod io;

pub use error::{Error, Result};
