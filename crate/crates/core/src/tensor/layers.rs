use rand::Rng as _;

use super::adam::AdamMoments;
use super::gemm::{gemm, Layout};
use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl LayerKind {
    pub fn weight_shape(&self) -> Vec<usize> {
        match *self {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![out_channels, in_channels, kernel, kernel],
            LayerKind::Dense { inputs, outputs } => vec![outputs, inputs],
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerKind::Conv2d { out_channels, .. } => out_channels,
            LayerKind::Dense { outputs, .. } => outputs,
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerKind::Conv2d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
            LayerKind::Dense { inputs, .. } => inputs,
        }
    }
}

pub fn conv_output_size(input: usize, kernel: usize, stride: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || input < kernel {
        None
    } else {
        Some((input - kernel) / stride + 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    kind: LayerKind,
    weights: Tensor,
    biases: Tensor,
    moments: AdamMoments,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

impl LayerGrads {
    pub fn zeros_like(layer: &LayerParams) -> Self {
        Self {
            weights: vec![0.0; layer.weights.len()],
            biases: vec![0.0; layer.biases.len()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(|g| g.is_finite())
    }
}

impl LayerParams {
    pub fn zeros(kind: LayerKind) -> Self {
        let weights = Tensor::zeros(kind.weight_shape());
        let biases = Tensor::zeros(vec![kind.bias_len()]);
        let moments = AdamMoments::new(weights.len(), biases.len());
        Self {
            kind,
            weights,
            biases,
            moments,
        }
    }

    /// He-uniform weights scaled by fan-in, zero biases.
    pub fn he_uniform(kind: LayerKind, rng: &mut Rng) -> Self {
        let mut layer = Self::zeros(kind);
        let bound = (6.0 / kind.fan_in() as f64).sqrt();
        for w in layer.weights.data_mut() {
            *w = rng.random_range(-bound..bound) as f32;
        }
        layer
    }

    pub fn from_parts(kind: LayerKind, weights: Vec<f32>, biases: Vec<f32>) -> Result<Self> {
        let weights = Tensor::new(kind.weight_shape(), weights)?;
        let biases = Tensor::new(vec![kind.bias_len()], biases)?;
        let moments = AdamMoments::new(weights.len(), biases.len());
        Ok(Self {
            kind,
            weights,
            biases,
            moments,
        })
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f32] {
        self.weights.data_mut()
    }

    pub fn biases(&self) -> &Tensor {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [f32] {
        self.biases.data_mut()
    }

    pub fn moments(&self) -> &AdamMoments {
        &self.moments
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [f32], &mut [f32], &mut AdamMoments) {
        (
            self.weights.data_mut(),
            self.biases.data_mut(),
            &mut self.moments,
        )
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    /// Output shape (without batch) for an input shape (without batch).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self.kind {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                let [c, h, w] = input else {
                    return Err(Error::Shape(format!("conv2d expects [C,H,W], got {input:?}")));
                };
                if *c != in_channels {
                    return Err(Error::Shape(format!(
                        "conv2d expects {in_channels} channels, got {c}"
                    )));
                }
                match (
                    conv_output_size(*h, kernel, stride),
                    conv_output_size(*w, kernel, stride),
                ) {
                    (Some(ho), Some(wo)) => Ok(vec![out_channels, ho, wo]),
                    _ => Err(Error::Shape(format!(
                        "input {h}x{w} smaller than kernel {kernel}"
                    ))),
                }
            }
            LayerKind::Dense { inputs, outputs } => {
                let n: usize = input.iter().product();
                if n != inputs {
                    return Err(Error::Shape(format!(
                        "dense expects {inputs} inputs, got {input:?}"
                    )));
                }
                Ok(vec![outputs])
            }
        }
    }
}

/// Batched activations used during backward.
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeometry {
    fn patch(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }
}

impl ConvGeometry {
    /// Offset in `x` of each output position's top-left input pixel.
    fn position_offsets(&self) -> Vec<usize> {
        let plane = self.height * self.width;
        let mut offsets = Vec::with_capacity(self.positions());
        for b in 0..self.batch {
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    offsets.push(b * self.channels * plane + oy * self.stride * self.width + ox * self.stride);
                }
            }
        }
        offsets
    }

    /// Offset of each patch row `(c, ky, kx)` relative to a position.
    fn patch_offsets(&self) -> Vec<usize> {
        let k = self.kernel;
        let mut offsets = Vec::with_capacity(self.patch());
        for c in 0..self.channels {
            for ky in 0..k {
                for kx in 0..k {
                    offsets.push((c * self.height + ky) * self.width + kx);
                }
            }
        }
        offsets
    }
}

/// `[C*k*k, B*Ho*Wo]` patch matrix.
pub(crate) fn im2col(x: &[f32], g: &ConvGeometry) -> Vec<f32> {
    let positions = g.position_offsets();
    let mut cols = vec![0.0f32; g.patch() * positions.len()];
    for (row, off) in cols.chunks_mut(positions.len()).zip(g.patch_offsets()) {
        for (dst, &base) in row.iter_mut().zip(&positions) {
            *dst = x[base + off];
        }
    }
    cols
}

fn col2im(cols: &[f32], g: &ConvGeometry) -> Vec<f32> {
    let positions = g.position_offsets();
    let mut x = vec![0.0f32; g.batch * g.channels * g.height * g.width];
    for (row, off) in cols.chunks(positions.len()).zip(g.patch_offsets()) {
        for (v, &base) in row.iter().zip(&positions) {
            x[base + off] += v;
        }
    }
    x
}

pub(crate) fn conv_geometry(layer: &LayerParams, batch: usize, input: &[usize]) -> Result<ConvGeometry> {
    let out = layer.output_shape(input)?;
    let LayerKind::Conv2d { kernel, stride, .. } = layer.kind else {
        unreachable!("conv_geometry on dense layer");
    };
    Ok(ConvGeometry {
        batch,
        channels: input[0],
        height: input[1],
        width: input[2],
        out_channels: out[0],
        out_h: out[1],
        out_w: out[2],
        kernel,
        stride,
    })
}

/// Returns `(output [B, Co, Ho, Wo] flat, im2col buffer)`.
pub(crate) fn conv_forward_raw(layer: &LayerParams, x: &[f32], g: &ConvGeometry) -> (Vec<f32>, Vec<f32>) {
    let cols = im2col(x, g);
    let positions = g.positions();
    let mut out2 = vec![0.0f32; g.out_channels * positions];
    gemm(
        1.0,
        layer.weights.data(),
        Layout::row_major(g.out_channels, g.patch()),
        &cols,
        Layout::row_major(g.patch(), positions),
        0.0,
        &mut out2,
    );
    let per_sample = g.out_h * g.out_w;
    let mut y = vec![0.0f32; g.batch * g.out_channels * per_sample];
    let bias = layer.biases.data();
    for co in 0..g.out_channels {
        let row = &out2[co * positions..(co + 1) * positions];
        for b in 0..g.batch {
            let dst = &mut y[(b * g.out_channels + co) * per_sample..][..per_sample];
            for (d, v) in dst.iter_mut().zip(&row[b * per_sample..(b + 1) * per_sample]) {
                *d = v + bias[co];
            }
        }
    }
    (y, cols)
}

/// Gradients of a conv layer; `dx` only when `need_input_grad`.
pub(crate) fn conv_backward_raw(
    layer: &LayerParams,
    cols: &[f32],
    dy: &[f32],
    g: &ConvGeometry,
    need_input_grad: bool,
) -> (LayerGrads, Option<Vec<f32>>) {
    let positions = g.positions();
    let per_sample = g.out_h * g.out_w;
    let mut dy2 = vec![0.0f32; g.out_channels * positions];
    for b in 0..g.batch {
        for co in 0..g.out_channels {
            let src = &dy[(b * g.out_channels + co) * per_sample..][..per_sample];
            dy2[co * positions + b * per_sample..][..per_sample].copy_from_slice(src);
        }
    }
    let mut grads = LayerGrads::zeros_like(layer);
    gemm(
        1.0,
        &dy2,
        Layout::row_major(g.out_channels, positions),
        cols,
        Layout::transposed(g.patch(), positions),
        0.0,
        &mut grads.weights,
    );
    for (co, db) in grads.biases.iter_mut().enumerate() {
        *db = dy2[co * positions..(co + 1) * positions].iter().sum();
    }
    let dx = need_input_grad.then(|| {
        let mut dcols = vec![0.0f32; g.patch() * positions];
        gemm(
            1.0,
            layer.weights.data(),
            Layout::transposed(g.out_channels, g.patch()),
            &dy2,
            Layout::row_major(g.out_channels, positions),
            0.0,
            &mut dcols,
        );
        col2im(&dcols, g)
    });
    (grads, dx)
}

pub(crate) fn dense_forward_raw(layer: &LayerParams, x: &[f32], batch: usize) -> Vec<f32> {
    let LayerKind::Dense { inputs, outputs } = layer.kind else {
        unreachable!("dense_forward_raw on conv layer");
    };
    let mut y = vec![0.0f32; batch * outputs];
    for row in y.chunks_mut(outputs) {
        row.copy_from_slice(layer.biases.data());
    }
    gemm(
        1.0,
        x,
        Layout::row_major(batch, inputs),
        layer.weights.data(),
        Layout::transposed(outputs, inputs),
        1.0,
        &mut y,
    );
    y
}

pub(crate) fn dense_backward_raw(
    layer: &LayerParams,
    x: &[f32],
    dy: &[f32],
    batch: usize,
    need_input_grad: bool,
) -> (LayerGrads, Option<Vec<f32>>) {
    let LayerKind::Dense { inputs, outputs } = layer.kind else {
        unreachable!("dense_backward_raw on conv layer");
    };
    let mut grads = LayerGrads::zeros_like(layer);
    gemm(
        1.0,
        dy,
        Layout::transposed(batch, outputs),
        x,
        Layout::row_major(batch, inputs),
        0.0,
        &mut grads.weights,
    );
    for row in dy.chunks(outputs) {
        for (db, g) in grads.biases.iter_mut().zip(row) {
            *db += g;
        }
    }
    let dx = need_input_grad.then(|| {
        let mut dx = vec![0.0f32; batch * inputs];
        gemm(
            1.0,
            dy,
            Layout::row_major(batch, outputs),
            layer.weights.data(),
            Layout::row_major(outputs, inputs),
            0.0,
            &mut dx,
        );
        dx
    });
    (grads, dx)
}

fn split_batch(input: &Tensor, rank: usize) -> Result<(usize, Vec<usize>)> {
    let shape = input.shape();
    if shape.len() == rank {
        Ok((1, shape.to_vec()))
    } else if shape.len() == rank + 1 {
        Ok((shape[0], shape[1..].to_vec()))
    } else {
        Err(Error::Shape(format!(
            "expected rank {rank} or {}, got {shape:?}",
            rank + 1
        )))
    }
}

/// Valid cross-correlation plus bias. Accepts `[C,H,W]` or `[B,C,H,W]`.
pub fn conv2d_forward(input: &Tensor, layer: &LayerParams) -> Result<Tensor> {
    if !matches!(layer.kind, LayerKind::Conv2d { .. }) {
        return Err(Error::Shape("conv2d_forward needs a conv2d layer".into()));
    }
    let batched = input.shape().len() == 4;
    let (batch, sample) = split_batch(input, 3)?;
    let g = conv_geometry(layer, batch, &sample)?;
    let (y, _) = conv_forward_raw(layer, input.data(), &g);
    let mut shape = vec![g.out_channels, g.out_h, g.out_w];
    if batched {
        shape.insert(0, batch);
    }
    Tensor::new(shape, y)
}

/// `W x + b`. Accepts `[n]` or `[B, n]`.
pub fn dense_forward(input: &Tensor, layer: &LayerParams) -> Result<Tensor> {
    let LayerKind::Dense { inputs, outputs } = layer.kind else {
        return Err(Error::Shape("dense_forward needs a dense layer".into()));
    };
    let batched = input.shape().len() == 2;
    let (batch, sample) = split_batch(input, 1)?;
    if sample[0] != inputs {
        return Err(Error::Shape(format!(
            "dense expects {inputs} inputs, got {}",
            sample[0]
        )));
    }
    let y = dense_forward_raw(layer, input.data(), batch);
    let shape = if batched { vec![batch, outputs] } else { vec![outputs] };
    Tensor::new(shape, y)
}
