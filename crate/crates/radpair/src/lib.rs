pub mod cli;
pub mod conditional;
pub mod encounter;
pub mod error;
pub mod qcore;
pub mod reactops;
pub mod spinham;
pub mod stochastic;
pub mod yields;

pub use error::{Error, Result};
