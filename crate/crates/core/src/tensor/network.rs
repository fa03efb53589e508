use super::adam::{adam_step, AdamConfig};
use super::layers::{
    conv_backward_raw, conv_forward_raw, conv_geometry, dense_backward_raw, dense_forward_raw, LayerGrads,
    LayerKind, LayerParams,
};
use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// A chain of layers with ReLU between consecutive layers (none after the
/// last). Inputs are `[C, H, W]` per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<LayerParams>,
    seed: u64,
}

/// Activations recorded by [`Network::forward_recorded`].
#[derive(Default)]
pub struct Tape {
    batch: usize,
    /// Input of every layer (post-ReLU output of the previous one).
    inputs: Vec<Vec<f32>>,
    /// Per-sample input shape of every layer.
    shapes: Vec<Vec<usize>>,
    /// im2col buffers of conv layers.
    cols: Vec<Option<Vec<f32>>>,
    output: Option<Tensor>,
}

impl Tape {
    pub fn output(&self) -> Option<&Tensor> {
        self.output.as_ref()
    }
}

pub type Gradients = Vec<LayerGrads>;

impl Network {
    /// Layers initialised He-uniform from `rng`; `seed` is recorded for manifests.
    pub fn new(input_shape: Vec<usize>, kinds: &[LayerKind], rng: &mut Rng, seed: u64) -> Result<Self> {
        let layers = kinds.iter().map(|&k| LayerParams::he_uniform(k, rng)).collect();
        Self::from_layers(input_shape, layers, seed)
    }

    pub fn from_layers(input_shape: Vec<usize>, layers: Vec<LayerParams>, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        let mut shape = input_shape.clone();
        for layer in &layers {
            shape = layer.output_shape(&shape)?;
        }
        Ok(Self {
            input_shape,
            layers,
            seed,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Values per sample in the output (flattened when the last layer is a conv).
    pub fn output_len(&self) -> usize {
        let mut shape = self.input_shape.clone();
        for layer in &self.layers {
            shape = layer.output_shape(&shape).expect("shapes checked at construction");
        }
        shape.iter().product()
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(LayerParams::num_params).sum()
    }

    /// Copies parameters (not optimiser state) from `other`.
    pub fn copy_params_from(&mut self, other: &Network) -> Result<()> {
        if self.input_shape != other.input_shape || self.layers.len() != other.layers.len() {
            return Err(Error::Shape("networks differ in architecture".into()));
        }
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            if dst.kind() != src.kind() {
                return Err(Error::Shape("networks differ in architecture".into()));
            }
            dst.weights_mut().copy_from_slice(src.weights().data());
            dst.biases_mut().copy_from_slice(src.biases().data());
        }
        Ok(())
    }

    fn batch_of(&self, input: &Tensor) -> Result<usize> {
        let shape = input.shape();
        let rank = self.input_shape.len();
        if shape == self.input_shape.as_slice() {
            Ok(1)
        } else if shape.len() == rank + 1 && shape[1..] == self.input_shape[..] {
            Ok(shape[0])
        } else {
            Err(Error::Shape(format!(
                "network expects {:?} (optionally batched), got {shape:?}",
                self.input_shape
            )))
        }
    }

    /// Output `[B, out]`.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.run(input, false)?.output.expect("forward records output"))
    }

    /// Forward pass keeping everything needed by [`Network::backward`].
    pub fn forward_recorded(&self, input: &Tensor) -> Result<Tape> {
        self.run(input, true)
    }

    fn run(&self, input: &Tensor, record: bool) -> Result<Tape> {
        let batch = self.batch_of(input)?;
        let mut tape = Tape {
            batch,
            ..Tape::default()
        };
        let mut x = input.data().to_vec();
        let mut shape = self.input_shape.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let out_shape = layer.output_shape(&shape)?;
            let (mut y, cols) = match layer.kind() {
                LayerKind::Conv2d { .. } => {
                    let g = conv_geometry(layer, batch, &shape)?;
                    let (y, cols) = conv_forward_raw(layer, &x, &g);
                    (y, Some(cols))
                }
                LayerKind::Dense { .. } => (dense_forward_raw(layer, &x, batch), None),
            };
            if i != last {
                for v in &mut y {
                    *v = v.max(0.0);
                }
            }
            if record {
                tape.inputs.push(std::mem::replace(&mut x, y));
                tape.shapes.push(std::mem::replace(&mut shape, out_shape));
                tape.cols.push(cols);
            } else {
                x = y;
                shape = out_shape;
            }
        }
        let out_len = shape.iter().product();
        tape.output = Some(Tensor::new(vec![batch, out_len], x)?);
        Ok(tape)
    }

    /// Reverse-mode gradients of all parameters given `d loss / d output`.
    pub fn backward(&self, tape: &Tape, output_grad: &Tensor) -> Result<Gradients> {
        let Some(output) = &tape.output else {
            return Err(Error::NoForwardPass);
        };
        if tape.inputs.len() != self.layers.len() {
            return Err(Error::NoForwardPass);
        }
        if output_grad.len() != output.len() {
            return Err(Error::Shape(format!(
                "output gradient has {} values, output has {}",
                output_grad.len(),
                output.len()
            )));
        }
        let batch = tape.batch;
        let mut grads: Vec<Option<LayerGrads>> = vec![None; self.layers.len()];
        let mut dy = output_grad.data().to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let x = &tape.inputs[i];
            let need_dx = i > 0;
            let (g, dx) = match layer.kind() {
                LayerKind::Conv2d { .. } => {
                    let geom = conv_geometry(layer, batch, &tape.shapes[i])?;
                    let cols = tape.cols[i].as_ref().expect("conv layer records im2col");
                    conv_backward_raw(layer, cols, &dy, &geom, need_dx)
                }
                LayerKind::Dense { .. } => dense_backward_raw(layer, x, &dy, batch, need_dx),
            };
            grads[i] = Some(g);
            if let Some(mut dx) = dx {
                // ReLU of the previous layer: pass gradient where its output was positive.
                for (d, &a) in dx.iter_mut().zip(x) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
                dy = dx;
            }
        }
        Ok(grads.into_iter().map(|g| g.expect("every layer visited")).collect())
    }

    pub fn adam_step(&mut self, grads: &Gradients, lr: f32, cfg: &AdamConfig) -> Result<()> {
        if grads.len() != self.layers.len() {
            return Err(Error::Shape("gradient count does not match layers".into()));
        }
        if !grads.iter().all(LayerGrads::is_finite) {
            return Err(Error::NonFinite("gradient"));
        }
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            adam_step(layer, g, lr, cfg)?;
        }
        Ok(())
    }
}
