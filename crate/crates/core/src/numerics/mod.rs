//! Dense arrays, named parameter stores and reverse-mode automatic differentiation.

mod array;
pub mod fdcheck;
pub mod kernels;
mod params;
mod tape;

pub use array::DenseArray;
pub use fdcheck::{finite_diff_check, FdReport, Objective, FD_FULL_CHECK_LIMIT, FD_SAMPLE_SIZE};
pub use params::ParameterStore;
pub use tape::{Adjoints, Graph, Var};
