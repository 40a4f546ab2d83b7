//! kn2row convolution lowering: one `1x1` GEMM per kernel offset, stacked
//! into a single weight matrix, then a shift-add over the padded pixel grid.

use crate::error::{Error, Result};
use crate::ops::conv_out_dims;
use crate::tensor::{Matrix, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Kn2Row {
    /// `[(a * kw + b) * c_out + co, ci]`.
    pub weight: Matrix,
    /// `[ci, hp * wp]` zero-padded input pixels.
    pub input: Matrix,
    pub c_out: usize,
    pub kernel: (usize, usize),
    pub padded: (usize, usize),
    pub stride: usize,
    pub out_dims: (usize, usize),
}

pub fn lower_conv_kn2row(
    weight: &Tensor,
    stride: usize,
    padding: usize,
    input: &Tensor,
) -> Result<Kn2Row> {
    let ws = weight.shape();
    let xs = input.shape();
    if ws.len() != 4 || xs.len() != 3 || ws[1] != xs[0] {
        return Err(Error::shape(format!("conv weight {ws:?} does not fit input {xs:?}")));
    }
    let (co, ci, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    let out_dims = conv_out_dims((xs[1], xs[2]), (kh, kw), stride, padding)?;
    let (h, w) = (xs[1], xs[2]);
    let (hp, wp) = (h + 2 * padding, w + 2 * padding);
    let wd = weight.data();
    let lowered = Matrix::from_fn(kh * kw * co, ci, |r, c| {
        let (ab, o) = (r / co, r % co);
        let (a, b) = (ab / kw, ab % kw);
        wd[((o * ci + c) * kh + a) * kw + b]
    });
    let xd = input.data();
    let padded_input = Matrix::from_fn(ci, hp * wp, |c, pix| {
        let (y, x) = (pix / wp, pix % wp);
        if y < padding || x < padding || y >= h + padding || x >= w + padding {
            0.0
        } else {
            xd[(c * h + y - padding) * w + x - padding]
        }
    });
    Ok(Kn2Row {
        weight: lowered,
        input: padded_input,
        c_out: co,
        kernel: (kh, kw),
        padded: (hp, wp),
        stride,
        out_dims,
    })
}

impl Kn2Row {
    /// Shift-add of the partial products `[kh * kw * c_out, hp * wp]` in f32.
    pub fn recompose(&self, partial: &Matrix) -> Result<Tensor> {
        let (kh, kw) = self.kernel;
        let (_, wp) = self.padded;
        let (oh, ow) = self.out_dims;
        let co = self.c_out;
        if partial.rows() != kh * kw * co || partial.cols() != self.padded.0 * wp {
            return Err(Error::shape("partial product does not match the lowering"));
        }
        let s = self.stride;
        let mut out = vec![0.0f32; co * oh * ow];
        for o in 0..co {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = 0.0f32;
                    for a in 0..kh {
                        for b in 0..kw {
                            acc += partial.get((a * kw + b) * co + o, (y * s + a) * wp + x * s + b);
                        }
                    }
                    out[(o * oh + y) * ow + x] = acc;
                }
            }
        }
        Tensor::new(vec![co, oh, ow], out)
    }
}
