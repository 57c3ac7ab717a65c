//! Named parameters, initialization, and the small layer set both learning
//! engines are assembled from.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conv::conv2d;
use crate::error::{Result, TensorError};
use crate::norm::{group_norm, layer_norm};
use crate::tensor::Tensor;

/// How a parameter was initialized; recorded alongside checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `U(−1/√fan_in, 1/√fan_in)`
    FanInUniform {
        fan_in: usize,
    },
    Zeros,
    Ones,
    Constant {
        value: f64,
    },
}

impl Init {
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            Init::FanInUniform { fan_in } => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            }
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Constant { value } => vec![value; n],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
    pub init: Init,
}

/// Ordered, uniquely named collection of parameters.
#[derive(Default, Debug)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create<R: Rng + ?Sized>(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut R) -> Result<Tensor> {
        if self.params.iter().any(|p| p.name == name) {
            return Err(TensorError::DuplicateParameter(name.to_string()));
        }
        let n = shape.iter().product();
        let tensor = Tensor::param(init.sample(n, rng), shape)?;
        self.params.push(Parameter {
            name: name.to_string(),
            tensor: tensor.clone(),
            init,
        });
        Ok(tensor)
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn zero_grad(&self) {
        for p in &self.params {
            p.tensor.zero_grad();
        }
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }
}

/// `y = x·W + b` with `W: (in, out)`. Accepts `(…, in)` inputs of rank 2 or 3.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.create(
            &format!("{name}.weight"),
            &[d_in, d_out],
            Init::FanInUniform { fan_in: d_in },
            rng,
        )?;
        let bias = if bias {
            Some(store.create(&format!("{name}.bias"), &[d_out], Init::Zeros, rng)?)
        } else {
            None
        };
        Ok(Self { weight, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.matmul(&self.weight)?;
        match &self.bias {
            Some(b) => y.add(b),
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let fan_in = c_in * kernel * kernel;
        let weight = store.create(
            &format!("{name}.weight"),
            &[c_out, c_in, kernel, kernel],
            Init::FanInUniform { fan_in },
            rng,
        )?;
        let bias = store.create(&format!("{name}.bias"), &[c_out], Init::Zeros, rng)?;
        Ok(Self {
            weight,
            bias,
            stride,
            pad: kernel / 2,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv2d(x, &self.weight, Some(&self.bias), self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct GroupNorm {
    pub groups: usize,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

impl GroupNorm {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        groups: usize,
        channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if groups == 0 || channels % groups != 0 {
            return Err(TensorError::invalid(
                "group_norm",
                format!("{channels} channels not divisible into {groups} groups"),
            ));
        }
        Ok(Self {
            groups,
            gamma: store.create(&format!("{name}.gamma"), &[channels], Init::Ones, rng)?,
            beta: store.create(&format!("{name}.beta"), &[channels], Init::Zeros, rng)?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        group_norm(x, self.groups, &self.gamma, &self.beta, self.eps)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, dim: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            gamma: store.create(&format!("{name}.gamma"), &[dim], Init::Ones, rng)?,
            beta: store.create(&format!("{name}.beta"), &[dim], Init::Zeros, rng)?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        layer_norm(x, &self.gamma, &self.beta, self.eps)
    }
}
