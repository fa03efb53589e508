pub mod agent;
pub mod env;
pub mod error;
pub mod experiment;
pub mod lattice;
pub mod ppr;
pub mod referee;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
