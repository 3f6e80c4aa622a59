//! Minimal reverse-mode differentiation for small convolutional networks.
//!
//! Activations are `(channels, batch, height, width)` arrays so that an
//! im2col convolution over the whole batch is a single matrix product whose
//! result already has the output layout. Graphs are rebuilt for every forward
//! pass; only convolution layers carry parameters.

use std::fmt::Debug;

use ndarray::{s, Array1, Array2, Array4, ArrayView2, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Float types the network can run in.
pub trait Scalar:
    LinalgScalar
    + Float
    + FromPrimitive
    + ScalarOperand
    + Debug
    + Send
    + Sync
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub(crate) fn cast<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("finite conversion")
}

/// Square convolution with "same"-style padding `kernel / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    /// `(out_channels, in_channels * kernel * kernel)`.
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl<T: Scalar> Conv2d<T> {
    /// He-normal weights, zero bias.
    pub fn new<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, rng: &mut R) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let std = (2.0 / fan_in as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((out_channels, fan_in), || {
            let z: f64 = StandardNormal.sample(rng);
            cast(z * std)
        });
        Self {
            weight,
            bias: Array1::zeros(out_channels),
            in_channels,
            out_channels,
            kernel,
            stride,
        }
    }

    pub fn padding(&self) -> usize {
        self.kernel / 2
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let p = self.padding();
        (
            (h + 2 * p - self.kernel) / self.stride + 1,
            (w + 2 * p - self.kernel) / self.stride + 1,
        )
    }

    pub fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn zeros_like(&self) -> ConvGrad<T> {
        ConvGrad {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }
}

/// Gradient (or optimizer moment) with the shape of one [`Conv2d`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrad<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

pub fn zero_grads<T: Scalar>(layers: &[Conv2d<T>]) -> Vec<ConvGrad<T>> {
    layers.iter().map(Conv2d::zeros_like).collect()
}

pub type NodeId = usize;

#[derive(Debug)]
enum Op<T> {
    Input,
    Conv {
        input: NodeId,
        layer: usize,
        cols: Option<Array2<T>>,
    },
    Relu(NodeId),
    Add(NodeId, NodeId),
    Concat(Vec<NodeId>),
    Upsample(NodeId, usize),
}

/// Range of output positions `o` with `o * stride + offset - pad` in `[0, len)`.
fn valid_range(len: usize, out: usize, stride: usize, offset: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > offset {
        (pad - offset).div_ceil(stride)
    } else {
        0
    };
    let hi = if len + pad > offset {
        ((len + pad - offset - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn im2col<T: Scalar>(x: &Array4<T>, conv: &Conv2d<T>, ho: usize, wo: usize) -> Array2<T> {
    let (c, n, h, w) = x.dim();
    let (k, st, pad) = (conv.kernel, conv.stride, conv.padding());
    let row_len = n * ho * wo;
    let mut cols = Array2::zeros((c * k * k, row_len));
    let xs = x.as_slice().expect("contiguous activations");
    let cs = cols.as_slice_mut().expect("fresh array");
    for ci in 0..c {
        for ky in 0..k {
            let (oy0, oy1) = valid_range(h, ho, st, ky, pad);
            for kx in 0..k {
                let (ox0, ox1) = valid_range(w, wo, st, kx, pad);
                let row = ((ci * k + ky) * k + kx) * row_len;
                for b in 0..n {
                    let src = (ci * n + b) * h * w;
                    let dst = row + b * ho * wo;
                    for oy in oy0..oy1 {
                        let iy = oy * st + ky - pad;
                        let srow = src + iy * w;
                        let drow = dst + oy * wo;
                        for ox in ox0..ox1 {
                            cs[drow + ox] = xs[srow + ox * st + kx - pad];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: ArrayView2<T>, conv: &Conv2d<T>, dims: (usize, usize, usize, usize), ho: usize, wo: usize) -> Array4<T> {
    let (c, n, h, w) = dims;
    let (k, st, pad) = (conv.kernel, conv.stride, conv.padding());
    let row_len = n * ho * wo;
    let mut x = Array4::zeros(dims);
    let cols = cols.as_standard_layout();
    let cs = cols.as_slice().expect("standard layout");
    let xs = x.as_slice_mut().expect("fresh array");
    for ci in 0..c {
        for ky in 0..k {
            let (oy0, oy1) = valid_range(h, ho, st, ky, pad);
            for kx in 0..k {
                let (ox0, ox1) = valid_range(w, wo, st, kx, pad);
                let row = ((ci * k + ky) * k + kx) * row_len;
                for b in 0..n {
                    let dst = (ci * n + b) * h * w;
                    let src = row + b * ho * wo;
                    for oy in oy0..oy1 {
                        let iy = oy * st + ky - pad;
                        let xrow = dst + iy * w;
                        let crow = src + oy * wo;
                        for ox in ox0..ox1 {
                            xs[xrow + ox * st + kx - pad] += cs[crow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// A forward pass recorded for differentiation.
pub struct Graph<'a, T> {
    layers: &'a [Conv2d<T>],
    values: Vec<Array4<T>>,
    ops: Vec<Op<T>>,
    record: bool,
}

impl<'a, T: Scalar> Graph<'a, T> {
    /// Graph that keeps what [`Graph::backward`] needs.
    pub fn new(layers: &'a [Conv2d<T>]) -> Self {
        Self {
            layers,
            values: Vec::new(),
            ops: Vec::new(),
            record: true,
        }
    }

    /// Forward-only graph; `backward` is unavailable.
    pub fn inference(layers: &'a [Conv2d<T>]) -> Self {
        Self {
            record: false,
            ..Self::new(layers)
        }
    }

    fn push(&mut self, value: Array4<T>, op: Op<T>) -> NodeId {
        self.values.push(value);
        self.ops.push(op);
        self.values.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Array4<T> {
        &self.values[id]
    }

    pub fn input(&mut self, x: Array4<T>) -> NodeId {
        let x = x.as_standard_layout().into_owned();
        self.push(x, Op::Input)
    }

    pub fn conv(&mut self, input: NodeId, layer: usize) -> Result<NodeId> {
        let conv = &self.layers[layer];
        let x = &self.values[input];
        let (c, n, h, w) = x.dim();
        if c != conv.in_channels {
            return Err(Error::domain(format!(
                "layer {layer} expects {} channels, got {c}",
                conv.in_channels
            )));
        }
        let (ho, wo) = conv.output_size(h, w);
        let cols = if conv.kernel == 1 && conv.stride == 1 {
            x.view()
                .into_shape_with_order((c, n * h * w))
                .expect("contiguous activations")
                .to_owned()
        } else {
            im2col(x, conv, ho, wo)
        };
        let mut out = conv.weight.dot(&cols);
        out += &conv.bias.view().insert_axis(Axis(1));
        let out = out
            .into_shape_with_order((conv.out_channels, n, ho, wo))
            .expect("matmul output is contiguous");
        let cols = self.record.then_some(cols);
        Ok(self.push(out, Op::Conv { input, layer, cols }))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let out = self.values[input].mapv(|v| v.max(T::zero()));
        self.push(out, Op::Relu(input))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.values[a].dim() != self.values[b].dim() {
            return Err(Error::domain("add needs equal shapes"));
        }
        let out = &self.values[a] + &self.values[b];
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Channel-wise concatenation.
    pub fn concat(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        let views: Vec<_> = inputs.iter().map(|&i| self.values[i].view()).collect();
        let out = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::domain(format!("concat: {e}")))?;
        Ok(self.push(out, Op::Concat(inputs.to_vec())))
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample(&mut self, input: NodeId, factor: usize) -> NodeId {
        let x = &self.values[input];
        let (c, n, h, w) = x.dim();
        let out = Array4::from_shape_fn((c, n, h * factor, w * factor), |(ci, b, y, xx)| {
            x[[ci, b, y / factor, xx / factor]]
        });
        self.push(out, Op::Upsample(input, factor))
    }

    /// Accumulates parameter gradients of `sum(output * grad_output)`.
    pub fn backward(&self, output: NodeId, grad_output: Array4<T>, grads: &mut [ConvGrad<T>]) -> Result<()> {
        if !self.record {
            return Err(Error::domain("backward on an inference graph"));
        }
        if grad_output.dim() != self.values[output].dim() {
            return Err(Error::domain("output gradient shape mismatch"));
        }
        let mut node_grads: Vec<Option<Array4<T>>> = (0..self.values.len()).map(|_| None).collect();
        node_grads[output] = Some(grad_output);
        let accumulate = |slot: &mut Option<Array4<T>>, g: Array4<T>| match slot {
            Some(acc) => *acc += &g,
            None => *slot = Some(g),
        };
        for id in (0..=output).rev() {
            let Some(g) = node_grads[id].take() else {
                continue;
            };
            match &self.ops[id] {
                Op::Input => {}
                Op::Conv { input, layer, cols } => {
                    let conv = &self.layers[*layer];
                    let cols = cols.as_ref().expect("recorded graph keeps columns");
                    let (co, n, ho, wo) = g.dim();
                    let g2 = g
                        .as_standard_layout()
                        .into_owned()
                        .into_shape_with_order((co, n * ho * wo))
                        .expect("contiguous gradient");
                    let grad = &mut grads[*layer];
                    grad.weight += &g2.dot(&cols.t());
                    grad.bias += &g2.sum_axis(Axis(1));
                    let dcols = conv.weight.t().dot(&g2);
                    let dims = self.values[*input].dim();
                    let dx = if conv.kernel == 1 && conv.stride == 1 {
                        dcols.into_shape_with_order(dims).expect("contiguous")
                    } else {
                        col2im(dcols.view(), conv, dims, ho, wo)
                    };
                    accumulate(&mut node_grads[*input], dx);
                }
                Op::Relu(input) => {
                    let mut dx = g;
                    ndarray::Zip::from(&mut dx)
                        .and(&self.values[id])
                        .for_each(|d, &y| {
                            if y <= T::zero() {
                                *d = T::zero();
                            }
                        });
                    accumulate(&mut node_grads[*input], dx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut node_grads[*b], g.clone());
                    accumulate(&mut node_grads[*a], g);
                }
                Op::Concat(inputs) => {
                    let mut start = 0;
                    for &i in inputs {
                        let c = self.values[i].dim().0;
                        let part = g.slice(s![start..start + c, .., .., ..]).to_owned();
                        accumulate(&mut node_grads[i], part);
                        start += c;
                    }
                }
                Op::Upsample(input, f) => {
                    let (c, n, h, w) = self.values[*input].dim();
                    let mut dx = Array4::zeros((c, n, h, w));
                    for ((ci, b, y, x), v) in g.indexed_iter() {
                        dx[[ci, b, y / f, x / f]] += *v;
                    }
                    accumulate(&mut node_grads[*input], dx);
                }
            }
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub m: Vec<ConvGrad<T>>,
    pub v: Vec<ConvGrad<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(layers: &[Conv2d<T>]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: zero_grads(layers),
            v: zero_grads(layers),
        }
    }

    pub fn update(&mut self, layers: &mut [Conv2d<T>], grads: &[ConvGrad<T>], lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (cast::<T>(self.beta1), cast::<T>(self.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let c1 = cast::<T>(1.0 / (1.0 - self.beta1.powi(t)));
        let c2 = cast::<T>(1.0 / (1.0 - self.beta2.powi(t)));
        let (lr, eps) = (cast::<T>(lr), cast::<T>(self.epsilon));
        let step = |p: &mut T, g: &T, m: &mut T, v: &mut T| {
            *m = b1 * *m + one_b1 * *g;
            *v = b2 * *v + one_b2 * *g * *g;
            let m_hat = *m * c1;
            let v_hat = *v * c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((layer, g), m), v) in layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(&mut layer.weight)
                .and(&g.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .for_each(step);
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(step);
        }
    }
}

/// Flattens layer parameters (weights then bias, layer by layer) to f64.
pub fn flatten<T: Scalar>(layers: &[ConvGrad<T>]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
        .map(|v| v.to_f64().expect("finite"))
        .collect()
}

pub fn flatten_layers<T: Scalar>(layers: &[Conv2d<T>]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
        .map(|v| v.to_f64().expect("finite"))
        .collect()
}

fn fill<'a, T: Scalar>(values: &[f64], targets: Vec<(&'a mut Array2<T>, &'a mut Array1<T>)>) -> Result<()> {
    let needed: usize = targets.iter().map(|(w, b)| w.len() + b.len()).sum();
    if values.len() != needed {
        return Err(Error::domain(format!(
            "parameter blob holds {} values, network needs {needed}",
            values.len()
        )));
    }
    let mut it = values.iter();
    for (w, b) in targets {
        for p in w.iter_mut().chain(b.iter_mut()) {
            *p = cast(*it.next().expect("length checked"));
        }
    }
    Ok(())
}

/// Overwrites layer parameters from a vector produced by [`flatten_layers`].
pub fn load_layers<T: Scalar>(values: &[f64], layers: &mut [Conv2d<T>]) -> Result<()> {
    fill(values, layers.iter_mut().map(|l| (&mut l.weight, &mut l.bias)).collect())
}

/// Overwrites gradient-shaped state from a vector produced by [`flatten`].
pub fn load_grads<T: Scalar>(values: &[f64], grads: &mut [ConvGrad<T>]) -> Result<()> {
    fill(values, grads.iter_mut().map(|g| (&mut g.weight, &mut g.bias)).collect())
}
