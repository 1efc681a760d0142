//! Central-difference gradient oracle.

use crate::error::{Error, Result};

use super::{Tape, Tensor, Var};

/// Denominator floor of [`relative_error`]. A relative tolerance of 1e-4 with
/// this floor is the same as accepting absolute errors up to 1e-6 when both
/// gradients are small.
pub const GRAD_CHECK_SCALE_FLOOR: f64 = 1e-2;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic
        .abs()
        .max(numeric.abs())
        .max(GRAD_CHECK_SCALE_FLOOR);
    (analytic - numeric).abs() / scale
}

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h`.
pub fn finite_difference(
    mut eval: impl FnMut(&Tensor) -> Result<f64>,
    x: &Tensor,
    index: usize,
    step: f64,
) -> Result<f64> {
    let mut probe = x.clone();
    let orig = probe.data()[index];
    probe.data_mut()[index] = orig + step;
    let plus = eval(&probe)?;
    probe.data_mut()[index] = orig - step;
    let minus = eval(&probe)?;
    Ok((plus - minus) / (2.0 * step))
}

/// Worst [`relative_error`] between tape gradients and central differences
/// over every coordinate of `x`.
pub fn grad_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let all: Vec<usize> = (0..x.len()).collect();
    grad_check_indices(f, x, step, &all)
}

/// Like [`grad_check`] but only probes the given coordinates.
pub fn grad_check_indices<F>(f: F, x: &Tensor, step: f64, indices: &[usize]) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let input = tape.leaf(x.clone(), true);
    let out = f(&mut tape, input)?;
    if tape.value(out).len() != 1 {
        return Err(Error::dim("grad_check needs a scalar-valued function"));
    }
    let grads = tape.backward(out)?;
    let analytic = grads
        .get(input)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; x.len()]);

    let eval = |t: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.leaf(t.clone(), false);
        let out = f(&mut tape, v)?;
        Ok(tape.value(out).data()[0])
    };
    let mut worst = 0.0f64;
    for &i in indices {
        let numeric = finite_difference(eval, x, i, step)?;
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}
