pub mod bags;
pub mod cli;
pub mod cohort;
pub mod config;
pub mod eval;
pub mod error;
pub mod hrv;
pub mod ingest;
pub mod model;
pub mod preprocess;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
