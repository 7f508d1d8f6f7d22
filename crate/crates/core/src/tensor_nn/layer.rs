use rand::Rng;

use super::Tensor;
use crate::channel;
use crate::{Error, Result};

/// Discriminant of a [`Layer`], also used as the tag in parameter blobs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum LayerKind {
    Dense = 1,
    Conv2d = 2,
    Flatten = 3,
    Reshape = 4,
    Relu = 5,
    Sigmoid = 6,
    Tanh = 7,
    PowerNorm = 8,
}

impl LayerKind {
    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            1 => Self::Dense,
            2 => Self::Conv2d,
            3 => Self::Flatten,
            4 => Self::Reshape,
            5 => Self::Relu,
            6 => Self::Sigmoid,
            7 => Self::Tanh,
            8 => Self::PowerNorm,
            _ => return None,
        })
    }

    pub fn is_activation(self) -> bool {
        matches!(self, Self::Relu | Self::Sigmoid | Self::Tanh)
    }
}

/// One stage of a sequential [`Model`](super::Model).
///
/// Shapes below are per sample; every activation additionally carries a
/// leading batch dimension.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    /// `y = x W + b` with `W: [in, out]`, `b: [out]`; input `[in]`.
    Dense { weight: Tensor, bias: Tensor },
    /// Channel-first convolution, input `[c_in, h, w]`, kernel
    /// `[c_out, c_in, k, k]`, bias `[c_out]`. Zero padding, no dilation.
    Conv2d {
        kernel: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
    },
    Flatten,
    Reshape { shape: Vec<usize> },
    Relu,
    Sigmoid,
    Tanh,
    /// Scales each sample to unit mean symbol power.
    PowerNorm,
}

/// Uniform Glorot bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn uniform_tensor(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.random_range(-bound..=bound);
    }
    t
}

impl Layer {
    pub fn dense(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Layer::Dense {
            weight: uniform_tensor(&[in_dim, out_dim], glorot_bound(in_dim, out_dim), rng),
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    /// Dense layer with explicit weights (`[in, out]`) and bias (`[out]`).
    pub fn dense_from(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 || bias.rank() != 1 || bias.len() != weight.shape()[1] {
            return Err(Error::shape(format!(
                "dense weight {:?} / bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Layer::Dense { weight, bias })
    }

    /// Square identity dense layer (`W = I`, `b = 0`).
    pub fn dense_identity(dim: usize) -> Self {
        let mut weight = Tensor::zeros(&[dim, dim]);
        for i in 0..dim {
            weight.data_mut()[i * dim + i] = 1.0;
        }
        Layer::Dense {
            weight,
            bias: Tensor::zeros(&[dim]),
        }
    }

    pub fn conv2d(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let area = kernel_size * kernel_size;
        let bound = glorot_bound(in_channels * area, out_channels * area);
        Layer::Conv2d {
            kernel: uniform_tensor(
                &[out_channels, in_channels, kernel_size, kernel_size],
                bound,
                rng,
            ),
            bias: Tensor::zeros(&[out_channels]),
            stride: stride.max(1),
            padding,
        }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Dense { .. } => LayerKind::Dense,
            Layer::Conv2d { .. } => LayerKind::Conv2d,
            Layer::Flatten => LayerKind::Flatten,
            Layer::Reshape { .. } => LayerKind::Reshape,
            Layer::Relu => LayerKind::Relu,
            Layer::Sigmoid => LayerKind::Sigmoid,
            Layer::Tanh => LayerKind::Tanh,
            Layer::PowerNorm => LayerKind::PowerNorm,
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense { weight, bias } => vec![weight, bias],
            Layer::Conv2d { kernel, bias, .. } => vec![kernel, bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense { weight, bias } => vec![weight, bias],
            Layer::Conv2d { kernel, bias, .. } => vec![kernel, bias],
            _ => Vec::new(),
        }
    }

    /// Per-sample output shape for a per-sample input shape, or `None` when
    /// the input is not acceptable.
    pub fn output_shape(&self, input: &[usize]) -> Option<Vec<usize>> {
        match self {
            Layer::Dense { weight, .. } => {
                (input == [weight.shape()[0]]).then(|| vec![weight.shape()[1]])
            }
            Layer::Conv2d {
                kernel,
                stride,
                padding,
                ..
            } => {
                let ks = kernel.shape();
                if input.len() != 3 || input[0] != ks[1] {
                    return None;
                }
                let k = ks[2];
                let (h, w) = (input[1] + 2 * padding, input[2] + 2 * padding);
                if h < k || w < k {
                    return None;
                }
                Some(vec![ks[0], (h - k) / stride + 1, (w - k) / stride + 1])
            }
            Layer::Flatten => Some(vec![input.iter().product()]),
            Layer::Reshape { shape } => {
                (shape.iter().product::<usize>() == input.iter().product::<usize>())
                    .then(|| shape.clone())
            }
            Layer::Relu | Layer::Sigmoid | Layer::Tanh | Layer::PowerNorm => Some(input.to_vec()),
        }
    }

    /// Computes the layer output for a batched input.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense { weight, bias } => Ok(dense_forward(x, weight, bias)),
            Layer::Conv2d {
                kernel,
                bias,
                stride,
                padding,
            } => Ok(conv_forward(x, kernel, bias, *stride, *padding)),
            Layer::Flatten => {
                let n = x.sample_len();
                x.clone().reshape(vec![x.batch_size(), n])
            }
            Layer::Reshape { shape } => {
                let mut s = vec![x.batch_size()];
                s.extend_from_slice(shape);
                x.clone().reshape(s)
            }
            Layer::Relu => Ok(x.map(|v| v.max(0.0))),
            Layer::Sigmoid => Ok(x.map(sigmoid)),
            Layer::Tanh => Ok(x.map(f64::tanh)),
            Layer::PowerNorm => channel::power_normalize(x),
        }
    }

    /// Propagates `grad_out` back through the layer, accumulating parameter
    /// gradients, and returns the gradient with respect to `input`.
    pub fn backward(&mut self, input: &Tensor, output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense { weight, bias } => Ok(dense_backward(input, weight, bias, grad_out)),
            Layer::Conv2d {
                kernel,
                bias,
                stride,
                padding,
            } => Ok(conv_backward(input, kernel, bias, *stride, *padding, grad_out)),
            Layer::Flatten | Layer::Reshape { .. } => {
                grad_out.clone().reshape(input.shape().to_vec())
            }
            Layer::Relu => input.zip_map(grad_out, |x, g| if x > 0.0 { g } else { 0.0 }),
            Layer::Sigmoid => output.zip_map(grad_out, |y, g| g * y * (1.0 - y)),
            Layer::Tanh => output.zip_map(grad_out, |y, g| g * (1.0 - y * y)),
            Layer::PowerNorm => channel::power_normalize_backward(input, grad_out),
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn dense_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
    let (b, n_in) = (x.batch_size(), weight.shape()[0]);
    let n_out = weight.shape()[1];
    let w = weight.data();
    let mut out = Tensor::zeros(&[b, n_out]);
    for s in 0..b {
        let xi = x.sample(s);
        let yi = out.sample_mut(s);
        yi.copy_from_slice(bias.data());
        for (i, &xv) in xi.iter().enumerate().take(n_in) {
            if xv == 0.0 {
                continue;
            }
            let row = &w[i * n_out..(i + 1) * n_out];
            for (y, &wv) in yi.iter_mut().zip(row) {
                *y += xv * wv;
            }
        }
    }
    out
}

fn dense_backward(x: &Tensor, weight: &mut Tensor, bias: &mut Tensor, g: &Tensor) -> Tensor {
    let (b, n_in, n_out) = (x.batch_size(), weight.shape()[0], weight.shape()[1]);
    let mut dw = vec![0.0; n_in * n_out];
    let mut db = vec![0.0; n_out];
    let mut dx = Tensor::zeros(x.shape());
    let w = weight.data();
    for s in 0..b {
        let xi = x.sample(s);
        let gi = g.sample(s);
        for (d, &gv) in db.iter_mut().zip(gi) {
            *d += gv;
        }
        for i in 0..n_in {
            let row = &w[i * n_out..(i + 1) * n_out];
            let dw_row = &mut dw[i * n_out..(i + 1) * n_out];
            let xv = xi[i];
            let mut acc = 0.0;
            for j in 0..n_out {
                dw_row[j] += xv * gi[j];
                acc += gi[j] * row[j];
            }
            dx.sample_mut(s)[i] = acc;
        }
    }
    weight.accumulate_grad(&dw);
    bias.accumulate_grad(&db);
    dx
}

struct ConvGeom {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    ho: usize,
    wo: usize,
}

fn conv_geom(x: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> ConvGeom {
    let xs = x.shape();
    let ks = kernel.shape();
    let (h, w, k) = (xs[2], xs[3], ks[2]);
    ConvGeom {
        c_in: xs[1],
        h,
        w,
        c_out: ks[0],
        k,
        ho: (h + 2 * padding - k) / stride + 1,
        wo: (w + 2 * padding - k) / stride + 1,
    }
}

fn conv_forward(x: &Tensor, kernel: &Tensor, bias: &Tensor, stride: usize, padding: usize) -> Tensor {
    let g = conv_geom(x, kernel, stride, padding);
    let b = x.batch_size();
    let mut out = Tensor::zeros(&[b, g.c_out, g.ho, g.wo]);
    let kd = kernel.data();
    for s in 0..b {
        let xi = x.sample(s);
        let yi = out.sample_mut(s);
        for o in 0..g.c_out {
            for oy in 0..g.ho {
                for ox in 0..g.wo {
                    let mut acc = bias.data()[o];
                    for c in 0..g.c_in {
                        for ky in 0..g.k {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            if iy < 0 || iy as usize >= g.h {
                                continue;
                            }
                            for kx in 0..g.k {
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if ix < 0 || ix as usize >= g.w {
                                    continue;
                                }
                                acc += kd[((o * g.c_in + c) * g.k + ky) * g.k + kx]
                                    * xi[(c * g.h + iy as usize) * g.w + ix as usize];
                            }
                        }
                    }
                    yi[(o * g.ho + oy) * g.wo + ox] = acc;
                }
            }
        }
    }
    out
}

fn conv_backward(
    x: &Tensor,
    kernel: &mut Tensor,
    bias: &mut Tensor,
    stride: usize,
    padding: usize,
    grad: &Tensor,
) -> Tensor {
    let g = conv_geom(x, kernel, stride, padding);
    let b = x.batch_size();
    let mut dk = vec![0.0; kernel.len()];
    let mut db = vec![0.0; g.c_out];
    let mut dx = Tensor::zeros(x.shape());
    let kd = kernel.data();
    for s in 0..b {
        let xi = x.sample(s);
        let gi = grad.sample(s);
        let dxi = dx.sample_mut(s);
        for o in 0..g.c_out {
            for oy in 0..g.ho {
                for ox in 0..g.wo {
                    let gv = gi[(o * g.ho + oy) * g.wo + ox];
                    db[o] += gv;
                    for c in 0..g.c_in {
                        for ky in 0..g.k {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            if iy < 0 || iy as usize >= g.h {
                                continue;
                            }
                            for kx in 0..g.k {
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if ix < 0 || ix as usize >= g.w {
                                    continue;
                                }
                                let xi_idx = (c * g.h + iy as usize) * g.w + ix as usize;
                                let k_idx = ((o * g.c_in + c) * g.k + ky) * g.k + kx;
                                dk[k_idx] += gv * xi[xi_idx];
                                dxi[xi_idx] += gv * kd[k_idx];
                            }
                        }
                    }
                }
            }
        }
    }
    kernel.accumulate_grad(&dk);
    bias.accumulate_grad(&db);
    dx
}

/// Kernel width for the convolutional coder stages:
/// `ceil(log_alphabet_x / 5 * (1 - sqrt(cr)))`, at least 1.
///
/// `log_alphabet_x` is the log-size of the channel-input alphabet.
pub fn conv_kernel_size(log_alphabet_x: f64, cr: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&cr) || !(log_alphabet_x > 0.0) || !log_alphabet_x.is_finite() {
        return Err(Error::invalid(format!(
            "kernel size rule needs cr in [0,1] and positive log alphabet, got {cr}, {log_alphabet_x}"
        )));
    }
    let w = (log_alphabet_x / 5.0 * (1.0 - cr.sqrt())).ceil() as usize;
    Ok(w.max(1))
}
