pub mod bootstrap;
pub mod classifiers;
pub mod crowd;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod rankers;
pub mod seed;
pub mod loops;

pub use error::{Error, Result};
