pub mod commands;
pub mod config;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod model;
pub mod reestimation;
pub mod smoothing;

pub use error::{Error, Result};
