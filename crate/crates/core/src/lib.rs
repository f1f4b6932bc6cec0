pub mod ablation;
pub mod association;
pub mod cli;
pub mod config;
pub mod detection;
pub mod encoding;
pub mod error;
pub mod io;
pub mod metrics;
pub mod numeric;
pub mod simulator;
pub mod tracker;
pub mod training;

pub use detection::Detection;
pub use error::{Error, Result};
