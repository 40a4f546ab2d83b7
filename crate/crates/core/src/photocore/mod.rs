//! The simulated photonic matrix-vector pipeline.

mod config;
mod forward;
mod gemm;
mod kn2row;
mod mvp;
mod tiling;

pub use config::{Bypass, PhotocoreConfig, Resolved, ScaleMode};
pub use forward::{photocore_layer, simulate_forward, simulate_forward_with, simulate_trace, Placement};
pub use gemm::{photocore_gemm, run_parallel, THREADS_ENV};
pub use kn2row::{lower_conv_kn2row, Kn2Row};
pub use mvp::{tile_mvp, Codes, EncodedTile, EncodedVector};
pub use tiling::{padded_extent, tile_operand, TiledOperand};
