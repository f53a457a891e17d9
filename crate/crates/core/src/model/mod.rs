//! The classifier `F = H(E(x))`: an MLP encoder that emits unit-norm
//! embeddings and a linear classification head.

mod checkpoint;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::rng;

pub use checkpoint::{from_bytes, load, save, to_bytes, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, t: &Tensor) -> Tensor {
        match self {
            Activation::Relu => t.relu(),
            Activation::Tanh => t.tanh(),
        }
    }

    fn apply_on(self, tape: &Tape, v: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(v),
            Activation::Tanh => tape.tanh(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelArchitecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelArchitecture {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.input_dim == 0 {
            problems.push("architecture.input_dim must be >= 1".to_string());
        }
        if self.hidden.is_empty() {
            problems.push("architecture.hidden must list at least one layer".to_string());
        }
        if self.hidden.contains(&0) {
            problems.push("architecture.hidden widths must be >= 1".to_string());
        }
        if self.embedding_dim == 0 {
            problems.push("architecture.embedding_dim must be >= 1".to_string());
        }
        if self.num_classes == 0 {
            problems.push("architecture.num_classes must be >= 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// `(fan_in, fan_out)` of every encoder layer followed by the head.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden);
        widths.push(self.embedding_dim);
        let mut dims: Vec<_> = widths.windows(2).map(|w| (w[0], w[1])).collect();
        dims.push((self.embedding_dim, self.num_classes));
        dims
    }

    /// Expected `(name, shape)` of every parameter tensor, in storage order.
    pub fn parameter_layout(&self) -> Vec<(String, Vec<usize>)> {
        let dims = self.layer_dims();
        let encoder_layers = dims.len() - 1;
        dims.iter()
            .enumerate()
            .flat_map(|(i, &(fan_in, fan_out))| {
                let prefix = if i < encoder_layers {
                    format!("encoder.{i}")
                } else {
                    "head".to_string()
                };
                [
                    (format!("{prefix}.weight"), vec![fan_in, fan_out]),
                    (format!("{prefix}.bias"), vec![fan_out]),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

/// All weights of encoder and head. Weight matrices are stored `[fan_in, fan_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    arch: ModelArchitecture,
    tensors: Vec<NamedTensor>,
}

/// Parameter handles of one model recorded on a tape.
#[derive(Debug, Clone)]
pub struct ParamVars(Vec<Var>);

impl ParamVars {
    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl ModelParameters {
    /// Fan-based uniform initialization: weights from `U(-s, s)` with
    /// `s = sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(arch: &ModelArchitecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = rng::stream(seed, "init");
        let tensors = arch
            .parameter_layout()
            .into_iter()
            .map(|(name, shape)| {
                let tensor = if shape.len() == 2 {
                    let s = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                    let data = (0..shape[0] * shape[1]).map(|_| rng.random_range(-s..s)).collect();
                    Tensor::new(shape, data)?
                } else {
                    Tensor::zeros(&shape)
                };
                Ok(NamedTensor { name, tensor })
            })
            .collect::<Result<_>>()?;
        Ok(ModelParameters { arch: arch.clone(), tensors })
    }

    /// Assembles parameters, checking names and the shape chain against `arch`.
    pub fn from_tensors(arch: ModelArchitecture, tensors: Vec<NamedTensor>) -> Result<Self> {
        arch.validate().map_err(|e| Error::Integrity(e.to_string()))?;
        let layout = arch.parameter_layout();
        if layout.len() != tensors.len() {
            return Err(Error::Integrity(format!(
                "expected {} tensors, found {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in layout.iter().zip(&tensors) {
            if *name != t.name || shape.as_slice() != t.tensor.shape() {
                return Err(Error::Integrity(format!(
                    "tensor {} {:?} does not match expected {name} {shape:?}",
                    t.name,
                    t.tensor.shape()
                )));
            }
        }
        Ok(ModelParameters { arch, tensors })
    }

    pub fn architecture(&self) -> &ModelArchitecture {
        &self.arch
    }

    pub fn tensors(&self) -> &[NamedTensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.tensors.iter_mut().map(|t| &mut t.tensor)
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.tensor.len()).sum()
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 2 || shape[1] != self.arch.input_dim {
            return Err(Error::Dimension {
                op: "encode",
                left: shape.to_vec(),
                right: vec![shape.first().copied().unwrap_or(0), self.arch.input_dim],
            });
        }
        Ok(())
    }

    fn encoder_layers(&self) -> usize {
        self.arch.hidden.len() + 1
    }

    /// Unit-norm embeddings, one row per sample.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x.shape())?;
        let last = self.encoder_layers() - 1;
        let mut h = x.clone();
        for layer in 0..=last {
            let w = &self.tensors[2 * layer].tensor;
            let b = &self.tensors[2 * layer + 1].tensor;
            h = h.matmul(w)?.add_row(b)?;
            if layer < last {
                h = self.arch.activation.apply(&h);
            }
        }
        h.l2_normalize()
    }

    pub fn head(&self, z: &Tensor) -> Result<Tensor> {
        let n = self.tensors.len();
        z.matmul(&self.tensors[n - 2].tensor)?.add_row(&self.tensors[n - 1].tensor)
    }

    /// Logits `[batch, num_classes]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.head(&self.encode(x)?)
    }

    /// Predicted class per row; ties go to the lowest class index.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(self.forward(x)?.argmax_rows())
    }

    pub fn record(&self, tape: &Tape) -> ParamVars {
        ParamVars(self.tensors.iter().map(|t| tape.leaf(t.tensor.clone())).collect())
    }

    pub fn encode_on(&self, tape: &Tape, vars: &ParamVars, x: Var) -> Result<Var> {
        self.check_input(&tape.shape(x))?;
        let last = self.encoder_layers() - 1;
        let mut h = x;
        for layer in 0..=last {
            h = tape.matmul(h, vars.0[2 * layer])?;
            h = tape.add_row(h, vars.0[2 * layer + 1])?;
            if layer < last {
                h = self.arch.activation.apply_on(tape, h);
            }
        }
        tape.l2_normalize(h)
    }

    pub fn head_on(&self, tape: &Tape, vars: &ParamVars, z: Var) -> Result<Var> {
        let n = vars.0.len();
        let h = tape.matmul(z, vars.0[n - 2])?;
        tape.add_row(h, vars.0[n - 1])
    }

    /// `θ ← θ + step · g` for every tensor.
    pub fn apply_update(&mut self, grads: &[Tensor], step: f64) -> Result<()> {
        if grads.len() != self.tensors.len() {
            return Err(Error::Contract(format!(
                "{} gradients for {} parameter tensors",
                grads.len(),
                self.tensors.len()
            )));
        }
        for (p, g) in self.tensors.iter_mut().zip(grads) {
            p.tensor = p.tensor.zip_with(g, "update", |w, d| w + step * d)?;
        }
        Ok(())
    }

    pub fn set_tensor(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .tensors
            .iter_mut()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Validation(format!("no parameter named {name}")))?;
        if slot.tensor.shape() != value.shape() {
            return Err(Error::Dimension {
                op: "set_tensor",
                left: slot.tensor.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        slot.tensor = value;
        Ok(())
    }
}
