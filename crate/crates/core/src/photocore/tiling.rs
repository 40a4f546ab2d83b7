use crate::tensor::Matrix;

/// A matrix zero-padded to multiples of `n` and cut into `n x n` tiles.
#[derive(Debug, Clone, PartialEq)]
pub struct TiledOperand {
    pub n: usize,
    /// Row-major grid; each tile is row-major `n x n`.
    pub tiles: Vec<Vec<f32>>,
    pub grid: (usize, usize),
    pub original_shape: (usize, usize),
    pub padded_shape: (usize, usize),
}

impl TiledOperand {
    pub fn tile(&self, r: usize, c: usize) -> &[f32] {
        &self.tiles[r * self.grid.1 + c]
    }

    /// Reassembles the tiles and crops the padding.
    pub fn untile(&self) -> Matrix {
        let (rows, cols) = self.original_shape;
        let n = self.n;
        Matrix::from_fn(rows, cols, |i, j| self.tile(i / n, j / n)[(i % n) * n + j % n])
    }
}

pub fn padded_extent(len: usize, n: usize) -> usize {
    len.div_ceil(n) * n
}

/// # Panics
/// If `n == 0`.
pub fn tile_operand(m: &Matrix, n: usize) -> TiledOperand {
    assert!(n >= 1, "tile size must be positive");
    let grid = (m.rows().div_ceil(n), m.cols().div_ceil(n));
    let mut tiles = Vec::with_capacity(grid.0 * grid.1);
    for tr in 0..grid.0 {
        for tc in 0..grid.1 {
            let mut t = vec![0.0f32; n * n];
            for i in 0..n {
                let r = tr * n + i;
                if r >= m.rows() {
                    break;
                }
                let c0 = tc * n;
                let c1 = (c0 + n).min(m.cols());
                t[i * n..i * n + (c1 - c0)].copy_from_slice(&m.row(r)[c0..c1]);
            }
            tiles.push(t);
        }
    }
    TiledOperand {
        n,
        tiles,
        grid,
        original_shape: (m.rows(), m.cols()),
        padded_shape: (grid.0 * n, grid.1 * n),
    }
}
