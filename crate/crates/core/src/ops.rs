//! Full-precision (f32) layer kernels used by the digital domain and the
//! reference forward pass.

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor};

/// Output spatial extent of a convolution, or an error if the kernel does not
/// fit inside the padded input.
pub fn conv_out_dims(
    (h, w): (usize, usize),
    (kh, kw): (usize, usize),
    stride: usize,
    padding: usize,
) -> Result<(usize, usize)> {
    if stride == 0 {
        return Err(Error::Model("conv2d stride must be >= 1".into()));
    }
    let (hp, wp) = (h + 2 * padding, w + 2 * padding);
    if kh > hp || kw > wp {
        return Err(Error::shape(format!(
            "kernel {kh}x{kw} larger than padded input {hp}x{wp}"
        )));
    }
    Ok(((hp - kh) / stride + 1, (wp - kw) / stride + 1))
}

/// Views `input` as a `[channels, positions]` matrix.
pub(crate) fn channel_matrix(input: &Tensor) -> Matrix {
    let c = input.shape()[0];
    Matrix::new(c, input.len() / c, input.data().to_vec()).expect("consistent tensor")
}

/// Pointwise linear map over the leading (channel) axis: `[in, ...] -> [out, ...]`.
pub fn dense(weight: &Tensor, input: &Tensor) -> Result<Tensor> {
    let ws = weight.shape();
    if ws.len() != 2 || input.shape()[0] != ws[1] {
        return Err(Error::shape(format!(
            "dense weight {ws:?} does not accept input {:?}",
            input.shape()
        )));
    }
    let w = Matrix::new(ws[0], ws[1], weight.data().to_vec())?;
    let y = w.matmul(&channel_matrix(input))?;
    let mut shape = input.shape().to_vec();
    shape[0] = ws[0];
    Tensor::new(shape, y.into_data())
}

/// Direct sliding-window convolution with symmetric zero padding.
/// `weight` is `[c_out, c_in, kh, kw]`, `input` is `[c_in, h, w]`.
pub fn conv2d(weight: &Tensor, stride: usize, padding: usize, input: &Tensor) -> Result<Tensor> {
    let ws = weight.shape();
    let is = input.shape();
    if ws.len() != 4 || is.len() != 3 || ws[1] != is[0] {
        return Err(Error::shape(format!("conv2d weight {ws:?} does not accept input {is:?}")));
    }
    let (co, ci, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    let (h, w) = (is[1], is[2]);
    let (ho, wo) = conv_out_dims((h, w), (kh, kw), stride, padding)?;
    let wd = weight.data();
    let xd = input.data();
    let mut out = vec![0.0f32; co * ho * wo];
    for o in 0..co {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0.0f32;
                for c in 0..ci {
                    for a in 0..kh {
                        let iy = (oy * stride + a) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for b in 0..kw {
                            let ix = (ox * stride + b) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += wd[((o * ci + c) * kh + a) * kw + b]
                                * xd[(c * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(o * ho + oy) * wo + ox] = acc;
            }
        }
    }
    Tensor::new(vec![co, ho, wo], out)
}

pub fn relu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Tensor::new(input.shape().to_vec(), data).expect("same shape")
}

/// Adds `bias[c]` to every element of channel `c`.
pub fn add_bias(bias: &Tensor, input: &Tensor) -> Result<Tensor> {
    let c = input.shape()[0];
    if bias.shape() != [c] {
        return Err(Error::shape(format!(
            "bias {:?} does not match {c} channels",
            bias.shape()
        )));
    }
    let per = input.len() / c;
    let data = input
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| v + bias.data()[i / per])
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Index of the largest channel at every position (first index wins ties).
pub fn argmax_channel(input: &Tensor) -> Tensor {
    let shape = input.shape();
    let c = shape[0];
    let per = input.len() / c;
    let d = input.data();
    let data = (0..per)
        .map(|p| {
            let mut best = 0usize;
            for k in 1..c {
                if d[k * per + p] > d[best * per + p] {
                    best = k;
                }
            }
            best as f32
        })
        .collect();
    let out_shape = if shape.len() > 1 { shape[1..].to_vec() } else { vec![1] };
    Tensor::new(out_shape, data).expect("argmax shape")
}
