//! Named parameter storage and tape binding.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::nn::{Activation, Dense};
use crate::tensor::{Gradients, Tape, Tensor, Var};
use crate::{discriminator, encoder, gnn, perception};

pub const PARAMS_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    Zeros,
    /// Explicit values in row-major order.
    Values(Vec<f64>),
    /// N(0, 2/fan_in), for layers followed by ReLU.
    He {
        fan_in: usize,
    },
    /// N(0, 1/fan_in), for linear or sigmoid outputs.
    Lecun {
        fan_in: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: impl Into<Vec<usize>>, init: Init) -> Self {
        Self {
            name: name.into(),
            shape: shape.into(),
            init,
        }
    }

    /// `weight` (`fan_in×fan_out`) and zero `bias` of a dense layer.
    pub fn dense(prefix: &str, fan_in: usize, fan_out: usize, relu_after: bool) -> [ParamSpec; 2] {
        let init = if relu_after {
            Init::He { fan_in }
        } else {
            Init::Lecun { fan_in }
        };
        [
            ParamSpec::new(format!("{prefix}.weight"), [fan_in, fan_out], init),
            ParamSpec::new(format!("{prefix}.bias"), [fan_out], Init::Zeros),
        ]
    }

    /// `kernel` (`k×k×cin×cout`) and zero `bias` of a convolution.
    pub fn conv(
        prefix: &str,
        k: usize,
        cin: usize,
        cout: usize,
        relu_after: bool,
    ) -> [ParamSpec; 2] {
        let fan_in = k * k * cin;
        let init = if relu_after {
            Init::He { fan_in }
        } else {
            Init::Lecun { fan_in }
        };
        [
            ParamSpec::new(format!("{prefix}.kernel"), [k, k, cin, cout], init),
            ParamSpec::new(format!("{prefix}.bias"), [cout], Init::Zeros),
        ]
    }
}

/// Every parameter the model described by `config` reads.
pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    specs.extend(perception::param_specs(config));
    specs.extend(encoder::param_specs(config));
    specs.extend(gnn::param_specs(config));
    specs.extend(discriminator::param_specs(config));
    specs
}

/// All learnable tensors of one model, keyed by dotted path
/// (`backbone.conv0.kernel`), plus the configuration they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub version: u32,
    pub config: ModelConfig,
    tensors: BTreeMap<String, Tensor>,
}

impl ModelParams {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for spec in param_specs(config) {
            let tensor = match spec.init {
                Init::Zeros => Tensor::zeros(spec.shape.clone()),
                Init::Values(values) => Tensor::new(spec.shape.clone(), values)?,
                Init::He { fan_in } => {
                    normal_tensor(&spec.shape, (2.0 / fan_in as f64).sqrt(), &mut rng)
                }
                Init::Lecun { fan_in } => {
                    normal_tensor(&spec.shape, (1.0 / fan_in as f64).sqrt(), &mut rng)
                }
            };
            tensors.insert(spec.name, tensor);
        }
        Ok(Self {
            version: PARAMS_VERSION,
            config: config.clone(),
            tensors,
        })
    }

    /// Every parameter zero. Handy for degenerate-case checks.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let tensors = param_specs(config)
            .into_iter()
            .map(|s| (s.name, Tensor::zeros(s.shape)))
            .collect();
        Ok(Self {
            version: PARAMS_VERSION,
            config: config.clone(),
            tensors,
        })
    }

    pub fn from_parts(
        version: u32,
        config: ModelConfig,
        tensors: BTreeMap<String, Tensor>,
    ) -> Result<Self> {
        let params = Self {
            version,
            config,
            tensors,
        };
        params.check_complete()?;
        Ok(params)
    }

    /// Every path the config needs is present with the expected shape.
    pub fn check_complete(&self) -> Result<()> {
        for spec in param_specs(&self.config) {
            let t = self
                .tensors
                .get(&spec.name)
                .ok_or_else(|| Error::Load(format!("missing parameter {}", spec.name)))?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::Load(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    spec.name,
                    t.shape(),
                    spec.shape
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Load(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Load(format!("missing parameter {name}")))
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    /// Parameters in sorted path order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }
}

fn normal_tensor(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let normal = Normal::new(0.0, std).expect("positive std");
    Tensor::from_fn(shape.to_vec(), |_| normal.sample(rng))
}

/// Places parameters on a tape on first use and remembers their handles so
/// gradients can be read back by path.
pub struct Binder<'p> {
    params: &'p ModelParams,
    trainable: bool,
    vars: BTreeMap<String, Var>,
}

impl<'p> Binder<'p> {
    pub fn new(params: &'p ModelParams, trainable: bool) -> Self {
        Self {
            params,
            trainable,
            vars: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &'p ModelConfig {
        &self.params.config
    }

    pub fn var(&mut self, tape: &mut Tape, name: &str) -> Result<Var> {
        if let Some(v) = self.vars.get(name) {
            return Ok(*v);
        }
        let value = self.params.get(name)?.clone();
        let v = tape.leaf(value, self.trainable);
        self.vars.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn dense(
        &mut self,
        tape: &mut Tape,
        prefix: &str,
        activation: Activation,
    ) -> Result<Dense> {
        Ok(Dense {
            weight: self.var(tape, &format!("{prefix}.weight"))?,
            bias: self.var(tape, &format!("{prefix}.bias"))?,
            activation,
        })
    }

    /// `(kernel, bias)` of a convolution.
    pub fn conv(&mut self, tape: &mut Tape, prefix: &str) -> Result<(Var, Var)> {
        Ok((
            self.var(tape, &format!("{prefix}.kernel"))?,
            self.var(tape, &format!("{prefix}.bias"))?,
        ))
    }

    /// Gradients of every bound parameter. Parameters that did not influence
    /// the output get zero tensors.
    pub fn gradients(&self, tape: &Tape, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(name, var)| {
                let shape = tape.shape(*var).to_vec();
                let data = grads
                    .get(*var)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; tape.value(*var).len()]);
                (
                    name.clone(),
                    Tensor::new(shape, data).expect("gradient matches parameter"),
                )
            })
            .collect()
    }
}
