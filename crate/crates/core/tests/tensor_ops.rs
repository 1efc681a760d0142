mod common;

use common::{random, weighted_sum};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slotgnn::tensor::{grad_check, sigmoid, Tape, Tensor};
use slotgnn::Error;

#[test]
fn matmul_identity_and_hand_example() {
    let mut tape = Tape::new();
    let x = Tensor::from_fn([3, 4], |i| i as f64 * 0.5 - 1.0);
    let i3 = tape.constant(Tensor::eye(3));
    let xv = tape.constant(x.clone());
    let out = tape.matmul(i3, xv).unwrap();
    assert_eq!(tape.value(out), &x);

    let a = tape.constant(Tensor::new([2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let b = tape.constant(Tensor::new([2, 1], vec![1.0, 1.0]).unwrap());
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c).data(), &[3.0, 7.0]);
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros([2, 3]));
    let b = tape.constant(Tensor::zeros([4, 2]));
    match tape.matmul(a, b) {
        Err(Error::Dimension(msg)) => {
            assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
        }
        other => panic!("expected dimension error, got {other:?}"),
    }
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&[4, 5], &mut rng);
    let b = random(&[5, 2], &mut rng);
    let ea = grad_check(
        |t, v| {
            let bb = t.constant(b.clone());
            let c = t.matmul(v, bb)?;
            Ok(weighted_sum(t, c, 3))
        },
        &a,
        1e-5,
    )
    .unwrap();
    let eb = grad_check(
        |t, v| {
            let aa = t.constant(a.clone());
            let c = t.matmul(aa, v)?;
            Ok(weighted_sum(t, c, 3))
        },
        &b,
        1e-5,
    )
    .unwrap();
    assert!(ea < 1e-6 && eb < 1e-6, "{ea} {eb}");
}

#[test]
fn softmax_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new([2], vec![0.0, 0.0]).unwrap());
    let y = tape.softmax(x).unwrap();
    assert_eq!(tape.value(y).data(), &[0.5, 0.5]);

    for c in [-7.5, 0.0, 3.0, 1e6] {
        let x = tape.constant(Tensor::full([3], c));
        let y = tape.softmax(x).unwrap();
        for v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    let x = tape.constant(Tensor::new([2], vec![1000.0, 0.0]).unwrap());
    let y = tape.softmax(x).unwrap();
    let v = tape.value(y);
    assert!(v.is_finite());
    assert!((v.data()[0] - 1.0).abs() < 1e-15 && v.data()[1] < 1e-300);

    let empty = tape.constant(Tensor::new_allow_empty([0], vec![]).unwrap());
    assert!(matches!(tape.softmax(empty), Err(Error::Dimension(_))));
}

proptest! {
    #[test]
    fn softmax_normalized_and_shift_invariant(
        logits in prop::collection::vec(-50.0f64..50.0, 1..12),
        shift in -100.0f64..100.0,
    ) {
        let n = logits.len();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new([n], logits.clone()).unwrap());
        let xs = tape.constant(Tensor::new([n], logits.iter().map(|v| v + shift).collect()).unwrap());
        let y = tape.softmax(x).unwrap();
        let ys = tape.softmax(xs).unwrap();
        let (y, ys) = (tape.value(y), tape.value(ys));
        prop_assert!((y.sum() - 1.0).abs() < 1e-12);
        prop_assert!(y.data().iter().all(|&v| v >= 0.0));
        prop_assert!(y.max_abs_diff(ys) < 1e-12);
    }
}

#[test]
fn sigmoid_examples() {
    assert_eq!(sigmoid(0.0), 0.5);
    assert!((sigmoid(1.0) - 0.731_058_578_6).abs() < 1e-9);
    // independent closed form
    assert!((sigmoid(1.0) - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);

    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(50.0), true);
    let y = tape.sigmoid(x);
    assert!((tape.value(y).data()[0] - 1.0).abs() < 1e-20);
    let g = tape.backward(y).unwrap();
    assert!(g.get(x).unwrap()[0] < 1e-20);
}

#[test]
fn conv2d_examples() {
    let mut tape = Tape::new();
    let input = Tensor::from_fn([5, 4, 1], |i| i as f64);
    let x = tape.constant(input.clone());
    let k = tape.constant(Tensor::full([1, 1, 1, 1], 1.0));
    let y = tape.conv2d(x, k, 1, 0).unwrap();
    assert_eq!(tape.value(y), &input);

    let x = tape.constant(Tensor::new([2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let k = tape.constant(Tensor::full([2, 2, 1, 1], 1.0));
    let y = tape.conv2d(x, k, 1, 0).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 1, 1]);
    assert_eq!(tape.value(y).data(), &[10.0]);

    let big = tape.constant(Tensor::zeros([3, 3, 1, 1]));
    assert!(matches!(
        tape.conv2d(x, big, 1, 0),
        Err(Error::Dimension(_))
    ));
    assert!(tape.conv2d(x, big, 1, 1).is_ok());
}

#[test]
fn conv2d_output_geometry() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros([256, 256, 3]));
    let k = tape.constant(Tensor::zeros([3, 3, 3, 16]));
    let y = tape.conv2d(x, k, 2, 1).unwrap();
    assert_eq!(tape.shape(y), &[128, 128, 16]);
    let x = tape.constant(Tensor::zeros([7, 9, 2]));
    let k = tape.constant(Tensor::zeros([3, 2, 2, 5]));
    let y = tape.conv2d(x, k, 2, 0).unwrap();
    assert_eq!(tape.shape(y), &[3, 4, 5]);
}

#[test]
fn conv2d_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let input = random(&[8, 8, 2], &mut rng);
    let kernel = random(&[3, 3, 2, 4], &mut rng);
    for (stride, pad) in [(1, 1), (2, 1), (1, 0)] {
        let e_in = grad_check(
            |t, v| {
                let k = t.constant(kernel.clone());
                let y = t.conv2d(v, k, stride, pad)?;
                Ok(weighted_sum(t, y, 4))
            },
            &input,
            1e-5,
        )
        .unwrap();
        let e_k = grad_check(
            |t, v| {
                let x = t.constant(input.clone());
                let y = t.conv2d(x, v, stride, pad)?;
                Ok(weighted_sum(t, y, 4))
            },
            &kernel,
            1e-5,
        )
        .unwrap();
        assert!(
            e_in < 1e-5 && e_k < 1e-5,
            "stride {stride} pad {pad}: {e_in} {e_k}"
        );
    }
}

#[test]
fn dropout_modes() {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let input = Tensor::from_fn([100], |i| i as f64);
    let x = tape.constant(input.clone());
    for rate in [0.0, 0.3, 0.9] {
        let y = tape.dropout(x, rate, false, &mut rng).unwrap();
        assert_eq!(tape.value(y), &input);
    }
    let y = tape.dropout(x, 0.0, true, &mut rng).unwrap();
    assert_eq!(tape.value(y), &input);
    assert!(matches!(
        tape.dropout(x, 1.0, true, &mut rng),
        Err(Error::Parameter(_))
    ));
    assert!(tape.dropout(x, -0.1, false, &mut rng).is_err());

    let ones = tape.constant(Tensor::full([100_000], 1.0));
    let y = tape.dropout(ones, 0.5, true, &mut rng).unwrap();
    let v = tape.value(y);
    let mean = v.sum() / v.len() as f64;
    assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    assert!(v.data().iter().all(|&e| e == 0.0 || e == 2.0));
}

#[test]
fn grad_check_reference_cases() {
    let x = Tensor::from_fn([6], |i| i as f64 - 2.5);
    let err = grad_check(
        |t, v| {
            let vt = t.reshape(v, &[1, 6])?;
            let col = t.reshape(v, &[6, 1])?;
            let dot = t.matmul(vt, col)?;
            Ok(t.sum(dot))
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-8, "Σx² error {err}");

    let err = grad_check(|t, _v| Ok(t.constant(Tensor::scalar(3.0))), &x, 1e-5).unwrap();
    assert_eq!(err, 0.0);
}

#[test]
fn every_op_matches_finite_differences_over_seeded_trials() {
    for (name, worst) in common::worst_op_errors(100) {
        assert!(worst < 1e-4, "op {name}: relative error {worst}");
    }
}

#[test]
fn forward_passes_are_bitwise_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut tape = Tape::new();
        let x = tape.constant(random(&[12, 12, 3], &mut rng));
        let k = tape.constant(random(&[3, 3, 3, 8], &mut rng));
        let y = tape.conv2d(x, k, 2, 1).unwrap();
        let y = tape.relu(y);
        let y = tape.reshape(y, &[36, 8]).unwrap();
        let y = tape.softmax(y).unwrap();
        let y = tape.dropout(y, 0.5, true, &mut rng).unwrap();
        tape.value(y).clone()
    };
    let (a, b) = (run(), run());
    assert!(a
        .data()
        .iter()
        .zip(b.data())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn backward_visits_shared_inputs_once_per_use() {
    // y = x·x summed: d/dx Σx² uses the same leaf twice.
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new([1, 3], vec![1.0, -2.0, 0.5]).unwrap(), true);
    let xt = tape.transpose(x).unwrap();
    let d = tape.matmul(x, xt).unwrap();
    let s = tape.sum(d);
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap(), &[2.0, -4.0, 1.0]);
}
