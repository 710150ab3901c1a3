//! Multi-layer perceptrons on the differentiation tape.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tape::{Param, Tape, ValueId};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    None,
}

/// One linear layer and the nonlinearity applied after it.
#[derive(Debug, Clone, Copy)]
pub struct LayerSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(inputs: usize, outputs: usize, activation: Activation) -> Self {
        LayerSpec { inputs, outputs, activation }
    }
}

struct Layer {
    weight: Param,
    bias: Param,
    activation: Activation,
}

/// A stack of linear layers with per-layer activations.  Weights are
/// `(inputs, outputs)` so rows of the batch stay rows throughout.
pub struct Mlp {
    name: String,
    layers: Vec<Layer>,
}

impl Mlp {
    /// Initializes weights uniformly: bound `sqrt(6 / fan_in)` before a
    /// ReLU, `sqrt(6 / (fan_in + fan_out))` otherwise.  Biases start at
    /// zero.
    pub fn new(name: impl Into<String>, specs: &[LayerSpec], rng: &mut impl Rng) -> Result<Self> {
        let name = name.into();
        if specs.is_empty() {
            return Err(Error::config(format!("mlp `{}` needs at least one layer", name)));
        }
        for (i, pair) in specs.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::config(format!(
                    "mlp `{}`: layer {} emits {} values but layer {} expects {}",
                    name,
                    i,
                    pair[0].outputs,
                    i + 1,
                    pair[1].inputs
                )));
            }
        }
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let bound = match spec.activation {
                Activation::Relu => (6.0 / spec.inputs as f64).sqrt(),
                _ => (6.0 / (spec.inputs + spec.outputs) as f64).sqrt(),
            };
            let mut w = Tensor2::zeros(spec.inputs, spec.outputs);
            for v in w.data_mut() {
                *v = rng.gen_range(-bound..bound);
            }
            layers.push(Layer {
                weight: Param::new(format!("{}.{}.weight", name, i), w),
                bias: Param::new(
                    format!("{}.{}.bias", name, i),
                    Tensor2::zeros(1, spec.outputs),
                ),
                activation: spec.activation,
            });
        }
        Ok(Mlp { name, layers })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.value.rows()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().weight.value.cols()
    }

    /// Runs the batch through every layer.  Errors name the layer whose
    /// input width does not match.
    pub fn forward(&self, tape: &mut Tape, input: ValueId) -> Result<ValueId> {
        let mut x = input;
        for (i, layer) in self.layers.iter().enumerate() {
            let got = tape.value(x).cols();
            let want = layer.weight.value.rows();
            if got != want {
                return Err(Error::config(format!(
                    "mlp `{}` layer {}: expected {} input columns, got {}",
                    self.name, i, want, got
                )));
            }
            let w = tape.param(&layer.weight);
            let b = tape.param(&layer.bias);
            let lin = tape.matmul(x, w);
            let biased = tape.add_row_broadcast(lin, b);
            x = match layer.activation {
                Activation::Relu => tape.relu(biased),
                Activation::Sigmoid => tape.sigmoid(biased),
                Activation::None => biased,
            };
        }
        Ok(x)
    }

    /// Parameters in layer order: weight then bias per layer.
    pub fn params(&self) -> Vec<&Param> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Weight and bias of one layer, for per-layer optimizer groups.
    pub fn layer_params_mut(&mut self, layer: usize) -> [&mut Param; 2] {
        let l = &mut self.layers[layer];
        [&mut l.weight, &mut l.bias]
    }
}
