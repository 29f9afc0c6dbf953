pub mod backend;
pub mod cli;
pub mod datasetgen;
pub mod domain;
pub mod equivalence;
pub mod error;
pub mod geoconv;
pub mod harness;
pub mod sandbox;
pub mod stats;
pub mod strategies;
mod sync;

pub use error::{Error, Result};
