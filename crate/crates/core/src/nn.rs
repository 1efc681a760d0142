//! Dense layers built from tape primitives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

/// One affine layer `x·W + b` followed by an activation. `W` is `in×out`.
#[derive(Clone, Copy, Debug)]
pub struct Dense {
    pub weight: Var,
    pub bias: Var,
    pub activation: Activation,
}

pub fn linear(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let h = tape.matmul(x, weight)?;
    tape.add_bias(h, bias)
}

/// Runs `x` (rows × in) through a chain of dense layers.
pub fn mlp_forward(tape: &mut Tape, x: Var, layers: &[Dense]) -> Result<Var> {
    let mut h = x;
    for (i, layer) in layers.iter().enumerate() {
        let width = tape.shape(h).last().copied().unwrap_or(0);
        let fan_in = tape.shape(layer.weight)[0];
        if width != fan_in {
            return Err(Error::dim(format!(
                "mlp layer {i} expects width {fan_in}, got {width}"
            )));
        }
        h = linear(tape, h, layer.weight, layer.bias)?;
        h = layer.activation.apply(tape, h);
    }
    Ok(h)
}
