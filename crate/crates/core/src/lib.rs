pub mod cssvm;
pub mod dataio;
pub mod error;
pub mod fs_milp;
pub mod harness;
pub mod kernels;
pub mod metrics;
pub mod relax;
pub mod report;

pub use error::{Error, Result};
