//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slotgnn::tensor::{grad_check, Tape, Tensor, Var};
use slotgnn::Result;

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

/// Reduces a tensor to a scalar through fixed random weights so upstream
/// gradients are not all ones.
pub fn weighted_sum(tape: &mut Tape, x: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = tape.value(x).len();
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y = tape.apply_mask(x, w);
    tape.sum(y)
}

pub type OpFn = fn(&mut Tape, Var, &[Tensor]) -> Result<Var>;

/// `(name, input shape, auxiliary tensor shapes, op)`.
pub fn op_cases(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Vec<usize>, Vec<Vec<usize>>, OpFn)> {
    let m = rng.gen_range(1..5);
    let k = rng.gen_range(1..5);
    let n = rng.gen_range(1..5);
    let h = rng.gen_range(3..7);
    let w = rng.gen_range(3..7);
    let c = rng.gen_range(1..3);
    vec![
        ("matmul_left", vec![m, k], vec![vec![k, n]], |t, v, aux| {
            let b = t.constant(aux[0].clone());
            t.matmul(v, b)
        }),
        ("matmul_right", vec![k, n], vec![vec![m, k]], |t, v, aux| {
            let a = t.constant(aux[0].clone());
            t.matmul(a, v)
        }),
        ("add", vec![m, n], vec![vec![m, n]], |t, v, aux| {
            let b = t.constant(aux[0].clone());
            t.add(v, b)
        }),
        ("add_bias_input", vec![m, n], vec![vec![n]], |t, v, aux| {
            let b = t.constant(aux[0].clone());
            t.add_bias(v, b)
        }),
        ("add_bias_bias", vec![n], vec![vec![m, n]], |t, v, aux| {
            let x = t.constant(aux[0].clone());
            t.add_bias(x, v)
        }),
        ("scale", vec![m, n], vec![], |t, v, _| Ok(t.scale(v, -1.7))),
        ("relu", vec![m, n], vec![], |t, v, _| Ok(t.relu(v))),
        ("sigmoid", vec![m, n], vec![], |t, v, _| Ok(t.sigmoid(v))),
        ("softmax", vec![m, n], vec![], |t, v, _| t.softmax(v)),
        (
            "conv_input",
            vec![h, w, c],
            vec![vec![3, 3, c, 2]],
            |t, v, aux| {
                let k = t.constant(aux[0].clone());
                t.conv2d(v, k, 2, 1)
            },
        ),
        (
            "conv_kernel",
            vec![3, 3, c, 2],
            vec![vec![h, w, c]],
            |t, v, aux| {
                let x = t.constant(aux[0].clone());
                t.conv2d(x, v, 1, 1)
            },
        ),
        ("concat", vec![m, n], vec![vec![m, k]], |t, v, aux| {
            let b = t.constant(aux[0].clone());
            t.concat_cols(&[b, v, b])
        }),
        ("slice_rows", vec![m + 2, n], vec![], |t, v, _| {
            let rows = t.shape(v)[0];
            t.slice_rows(v, 1, rows - 1)
        }),
        ("transpose", vec![m, n], vec![], |t, v, _| t.transpose(v)),
        (
            "pair_sum_left",
            vec![m, n],
            vec![vec![m, n]],
            |t, v, aux| {
                let b = t.constant(aux[0].clone());
                t.pair_sum(v, b)
            },
        ),
        (
            "pair_sum_right",
            vec![m, n],
            vec![vec![m, n]],
            |t, v, aux| {
                let a = t.constant(aux[0].clone());
                t.pair_sum(a, v)
            },
        ),
        ("bilinear", vec![h, w, c], vec![], |t, v, _| {
            t.bilinear_gather(v, &[(0.3, 1.7), (2.0, 0.0), (1.25, 1.5), (9.0, -1.0)])
        }),
        ("reshape", vec![m, n], vec![], |t, v, _| {
            let len = t.value(v).len();
            t.reshape(v, &[len])
        }),
        (
            "sq_error",
            vec![m, n],
            vec![vec![m, n], vec![m, n]],
            |t, v, aux| {
                let w = aux[1].map(f64::abs).into_data();
                t.weighted_sq_error(v, aux[0].data().to_vec(), w, 0.37)
            },
        ),
        ("bce", vec![m, n], vec![vec![m, n]], |t, v, aux| {
            // probabilities strictly inside the clamp range
            let p = t.sigmoid(v);
            let labels = aux[0].map(|x| if x > 0.0 { 1.0 } else { 0.0 }).into_data();
            t.binary_cross_entropy(p, labels, 0.5, 1e-7, 1.0 - 1e-7)
        }),
    ]
}

/// Worst finite-difference mismatch of every differentiable op over
/// `trials` random shapes and inputs.
pub fn worst_op_errors(trials: u64) -> Vec<(&'static str, f64)> {
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        for (i, (name, shape, aux_shapes, op)) in op_cases(&mut rng).into_iter().enumerate() {
            let x = random(&shape, &mut rng);
            let aux: Vec<Tensor> = aux_shapes.iter().map(|s| random(s, &mut rng)).collect();
            let err = grad_check(
                |t, v| {
                    let y = op(t, v, &aux)?;
                    Ok(weighted_sum(t, y, trial))
                },
                &x,
                1e-5,
            )
            .unwrap();
            if worst.len() <= i {
                worst.push((name, err));
            } else {
                worst[i].1 = worst[i].1.max(err);
            }
        }
    }
    worst
}
