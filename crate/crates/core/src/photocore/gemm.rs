use std::sync::OnceLock;

use rayon::prelude::*;

use crate::abfp::per_tensor_scale;
use crate::bf16::bf16_round_f64;
use crate::error::{Error, Result};
use crate::noise::{NoiseKey, NoiseSource};
use crate::tensor::Matrix;

use super::config::{PhotocoreConfig, Resolved, ScaleMode};
use super::mvp::{tile_mvp, EncodedTile, EncodedVector};
use super::tiling::tile_operand;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "PHOTOCORE_SIM_THREADS";

pub(crate) fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .unwrap_or(0);
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
    })
}

/// Runs `f` on the simulator's worker pool.
pub fn run_parallel<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    pool().install(f)
}

/// `W (R x K) * X (K x P)` on the simulated array. Columns of `X` are the
/// input vectors; `layer` keys the noise streams.
pub fn photocore_gemm(
    w: &Matrix,
    x: &Matrix,
    cfg: &PhotocoreConfig,
    noise: &NoiseSource,
    layer: u32,
) -> Result<Matrix> {
    let r = cfg.resolve()?;
    gemm_resolved(w, x, &r, noise, layer)
}

pub(crate) fn gemm_resolved(
    w: &Matrix,
    x: &Matrix,
    cfg: &Resolved,
    noise: &NoiseSource,
    layer: u32,
) -> Result<Matrix> {
    if w.cols() != x.rows() {
        return Err(Error::shape(format!(
            "cannot multiply {}x{} by {}x{}",
            w.rows(),
            w.cols(),
            x.rows(),
            x.cols()
        )));
    }
    let n = cfg.n;
    let (w_shared, x_shared) = match cfg.scale_mode {
        ScaleMode::Abfp => (None, None),
        ScaleMode::PerTensor => (Some(per_tensor_scale(w.data())), Some(per_tensor_scale(x.data()))),
    };
    let tiled = tile_operand(w, n);
    let (row_tiles, k_tiles) = tiled.grid;
    let encoded: Vec<EncodedTile> =
        tiled.tiles.iter().map(|t| EncodedTile::encode(t, cfg, w_shared)).collect();
    let rows = w.rows();
    let k = w.cols();

    let columns: Vec<Vec<f32>> = pool().install(|| {
        (0..x.cols())
            .into_par_iter()
            .map(|p| {
                let mut acc = vec![0.0f32; row_tiles * n];
                let mut seg = vec![0.0f32; n];
                for t in 0..k_tiles {
                    for (j, s) in seg.iter_mut().enumerate() {
                        let kk = t * n + j;
                        *s = if kk < k { x.get(kk, p) } else { 0.0 };
                    }
                    let xv = EncodedVector::encode(&seg, cfg, x_shared);
                    for rt in 0..row_tiles {
                        let key = NoiseKey {
                            layer,
                            tile_row: rt as u32,
                            tile_col: t as u32,
                            vector: p as u32,
                        };
                        let part = tile_mvp(&encoded[rt * k_tiles + t], &xv, cfg, noise, key);
                        for (a, v) in acc[rt * n..(rt + 1) * n].iter_mut().zip(part) {
                            *a = bf16_round_f64(*a as f64 + v as f64) as f32;
                        }
                    }
                }
                acc.truncate(rows);
                acc
            })
            .collect()
    });
    Ok(Matrix::from_fn(rows, x.cols(), |i, p| columns[p][i]))
}
