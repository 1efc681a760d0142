use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slotgnn::encoder::bilinear_sample;
use slotgnn::gnn::{attention_weights, gnn_forward, GnnVariant, GraphLayerParams};
use slotgnn::params::Binder;
use slotgnn::perception::{decode_points, GridMap};
use slotgnn::tensor::{Tape, Tensor};
use slotgnn::{ModelConfig, ModelParams};

fn random_nodes(n: usize, d: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn([n, d], |_| rng.gen_range(-1.0..1.0))
}

fn gnn_output(params: &ModelParams, nodes: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let mut binder = Binder::new(params, false);
    let x = tape.constant(nodes.clone());
    let y = gnn_forward(&mut tape, &mut binder, x).unwrap();
    tape.value(y).clone()
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let d = t.last_dim();
    let data = perm.iter().flat_map(|&i| t.row(i).to_vec()).collect();
    Tensor::new([perm.len(), d], data).unwrap()
}

fn config(variant: GnnVariant) -> ModelConfig {
    let mut cfg = ModelConfig::default();
    cfg.gnn.variant = variant;
    cfg
}

#[test]
fn gnn_is_permutation_equivariant() {
    for variant in [GnnVariant::Attentional, GnnVariant::FcnBaseline] {
        let params = ModelParams::init(&config(variant), 11).unwrap();
        for trial in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            let n = rng.gen_range(1..9);
            let nodes = random_nodes(n, 64, 100 + trial);
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
            let a = permute_rows(&gnn_output(&params, &nodes), &perm);
            let b = gnn_output(&params, &permute_rows(&nodes, &perm));
            assert!(
                a.max_abs_diff(&b) < 1e-10,
                "{variant:?} trial {trial}: {}",
                a.max_abs_diff(&b)
            );
        }
    }
}

#[test]
fn attention_rows_are_stochastic() {
    let params = ModelParams::init(&ModelConfig::default(), 12).unwrap();
    for n in [1, 2, 5, 12] {
        let mut tape = Tape::new();
        let mut binder = Binder::new(&params, false);
        let x = tape.constant(random_nodes(n, 64, n as u64));
        for layer in 0..3 {
            let lp = GraphLayerParams::bind(&mut tape, &mut binder, layer, 4).unwrap();
            for head in 0..4 {
                let w = attention_weights(&mut tape, x, &lp, head).unwrap();
                assert_eq!(w.shape(), &[n, n]);
                for i in 0..n {
                    let row = w.row(i);
                    assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
            assert!(attention_weights(&mut tape, x, &lp, 4).is_err());
        }
    }
}

#[test]
fn zeroed_update_layers_make_the_gnn_an_identity() {
    let mut params = ModelParams::init(&ModelConfig::default(), 13).unwrap();
    let names: Vec<String> = params
        .iter()
        .map(|(k, _)| k.clone())
        .filter(|k| k.contains(".update.fc1."))
        .collect();
    assert_eq!(names.len(), 6);
    for name in names {
        params.get_mut(&name).unwrap().data_mut().fill(0.0);
    }
    let nodes = random_nodes(6, 64, 3);
    assert_eq!(gnn_output(&params, &nodes), nodes);

    let mut params = ModelParams::init(&config(GnnVariant::FcnBaseline), 13).unwrap();
    for l in 0..3 {
        for p in ["weight", "bias"] {
            params
                .get_mut(&format!("gnn.layer{l}.fc1.{p}"))
                .unwrap()
                .data_mut()
                .fill(0.0);
        }
    }
    assert_eq!(gnn_output(&params, &nodes), nodes);
}

#[test]
fn nms_output_is_an_antichain() {
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = GridMap::new(Tensor::from_fn([16, 16, 3], |_| rng.gen_range(0.0..1.0))).unwrap();
        let radius = rng.gen_range(0.0..0.3);
        let threshold = rng.gen_range(0.0..1.0);
        let max = rng.gen_range(1..40);
        let pts = decode_points(&map, threshold, radius, max);
        assert!(pts.len() <= max);
        for (i, p) in pts.iter().enumerate() {
            assert!(p.confidence >= threshold);
            assert!((0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y));
            if i > 0 {
                assert!(pts[i - 1].confidence >= p.confidence);
            }
            for q in &pts[..i] {
                assert!(q.distance(p) >= radius, "seed {seed}");
            }
        }
    }
}

proptest! {
    #[test]
    fn bilinear_samples_are_convex_combinations(
        seed in any::<u64>(),
        x in -0.2f64..1.2,
        y in -0.2f64..1.2,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, c) = (16usize, 4usize);
        let map = Tensor::from_fn([s, s, c], |_| rng.gen_range(-5.0..5.0));
        let mut tape = Tape::new();
        let m = tape.constant(map.clone());
        let v = bilinear_sample(&mut tape, m, &[[x, y]]).unwrap();
        let v = tape.value(v).clone();
        let gx = x.clamp(0.0, 1.0) * (s - 1) as f64;
        let gy = y.clamp(0.0, 1.0) * (s - 1) as f64;
        let (x0, y0) = (gx.floor() as usize, gy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(s - 1), (y0 + 1).min(s - 1));
        for ch in 0..c {
            let corners = [map.at3(y0, x0, ch), map.at3(y0, x1, ch), map.at3(y1, x0, ch), map.at3(y1, x1, ch)];
            let lo = corners.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let val = v.data()[ch];
            prop_assert!(val >= lo - 1e-12 && val <= hi + 1e-12);
        }
    }

    #[test]
    fn bilinear_sampling_is_linear_in_the_map(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = Tensor::from_fn([16, 16, 3], |_| rng.gen_range(-1.0..1.0));
        let g = Tensor::from_fn([16, 16, 3], |_| rng.gen_range(-1.0..1.0));
        let pts: Vec<[f64; 2]> = (0..5).map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
        let combo = Tensor::new([16, 16, 3], f.data().iter().zip(g.data()).map(|(u, v)| a * u + b * v).collect()).unwrap();
        let mut tape = Tape::new();
        let sample = |tape: &mut Tape, t: &Tensor| {
            let m = tape.constant(t.clone());
            let v = bilinear_sample(tape, m, &pts).unwrap();
            tape.value(v).clone()
        };
        let (sf, sg, sc) = (sample(&mut tape, &f), sample(&mut tape, &g), sample(&mut tape, &combo));
        for i in 0..sc.len() {
            prop_assert!((sc.data()[i] - (a * sf.data()[i] + b * sg.data()[i])).abs() < 1e-12);
        }
    }
}
