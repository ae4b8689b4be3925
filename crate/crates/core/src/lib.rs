pub mod diagnostics;
pub mod error;
pub mod gp;
pub mod harness;
pub mod kernels;
pub mod manifold;
pub mod par;
pub mod spectrum;

pub use error::{Error, Result};
