pub mod driver;
pub mod drift;
pub mod error;
pub mod experiment;
pub mod market;
pub mod par;
pub mod pricing;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
