//! Simulation of analog photonic matrix-vector hardware running neural
//! network inference with adaptive block floating point.

pub mod abfp;
pub mod analysis;
pub mod bf16;
pub mod cli;
pub mod costmodel;
pub mod dataset;
pub mod dnf;
pub mod error;
pub mod fixtures;
pub mod model;
pub mod noise;
pub mod ops;
pub mod photocore;
pub mod reference;
pub mod tensor;

pub use error::{Error, Result};
