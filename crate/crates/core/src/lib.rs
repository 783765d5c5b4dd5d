pub mod cli;
pub mod data;
pub mod error;
pub mod estimate;
pub mod network;
pub mod nuisance;
pub mod policy;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
