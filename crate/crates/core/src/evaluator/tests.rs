use rand::Rng;

use super::*;
use crate::rng::seeded;
use crate::rng::ProjectRng;
use crate::scenario::tests::open_lot;

fn random_tensor(rng: &mut ProjectRng) -> StateTensor {
    let n = GRID_SIZE * GRID_SIZE;
    StateTensor {
        size: GRID_SIZE,
        occupancy: (0..n).map(|_| rng.random::<u8>() & rng.random::<u8>() & 0x3f).collect(),
        gear: if rng.random_bool(0.5) { 1.0 } else { -1.0 },
        steer: rng.random_range(-1.0..=1.0),
    }
}

fn random_batch(rng: &mut ProjectRng, actions: usize, size: usize) -> Vec<TrainingSample> {
    (0..size)
        .map(|_| {
            let raw: Vec<f64> = (0..actions).map(|_| rng.random::<f64>().powi(3)).collect();
            let total: f64 = raw.iter().sum();
            TrainingSample {
                input: random_tensor(rng),
                policy: raw.iter().map(|r| r / total).collect(),
                value: if rng.random_bool(0.5) { 1.0 } else { 0.0 },
            }
        })
        .collect()
}

#[test]
fn zero_network_is_uniform() {
    let net = Network::zeros(NetworkShape::standard(6));
    let (p, v) = net.forward(&random_tensor(&mut seeded(1))).unwrap();
    assert!(p.iter().all(|x| (x - 1.0 / 6.0).abs() < 1e-15));
    assert_eq!(v, 0.5);
}

#[test]
fn outputs_are_distributions() {
    let mut rng = seeded(2);
    for k in 0..4 {
        let net = Network::init(NetworkShape::standard(10 + k), &mut rng);
        for _ in 0..3 {
            let (p, v) = net.forward(&random_tensor(&mut rng)).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(p.iter().all(|x| *x > 0.0));
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn forward_is_deterministic() {
    let mut rng = seeded(3);
    let net = Network::init(NetworkShape::standard(14), &mut rng);
    let x = random_tensor(&mut rng);
    let a = net.forward(&x).unwrap();
    let b = net.forward(&x).unwrap();
    assert_eq!(
        a.0.iter().map(|f| f.to_bits()).collect::<Vec<_>>(),
        b.0.iter().map(|f| f.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(a.1.to_bits(), b.1.to_bits());
}

#[test]
fn input_size_checked() {
    let net = Network::zeros(NetworkShape::standard(6));
    let small = StateTensor {
        size: 32,
        occupancy: vec![0; 32 * 32],
        gear: 1.0,
        steer: 0.0,
    };
    assert!(matches!(net.forward(&small), Err(NetworkError::InputSize { .. })));
}

/// Direct nested-loop evaluation of the same architecture, written without
/// the strided inner loops or parameter offsets table of the main code.
#[allow(clippy::needless_range_loop)]
fn reference_forward(net: &Network, x: &StateTensor) -> (Vec<f64>, f64) {
    let shape = net.shape();
    let mut params = net.params().iter().copied();
    let mut take = |n: usize| -> Vec<f64> { (&mut params).take(n).collect() };
    let mut side = shape.grid;
    let mut c_in = shape.in_channels;
    let mut planes: Vec<Vec<Vec<f64>>> = (0..c_in)
        .map(|c| {
            (0..side)
                .map(|iy| (0..side).map(|ix| x.get(c, iy, ix)).collect())
                .collect()
        })
        .collect();
    for &c_out in &shape.conv_channels {
        let w = take(c_out * c_in * 9);
        let scale = take(c_out);
        let shift = take(c_out);
        let out_side = side.div_ceil(2);
        let mut next = vec![vec![vec![0.0; out_side]; out_side]; c_out];
        for co in 0..c_out {
            for oy in 0..out_side {
                for ox in 0..out_side {
                    let mut acc = 0.0;
                    for (ci, plane) in planes.iter().enumerate() {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = 2 * oy as i64 + ky as i64 - 1;
                                let ix = 2 * ox as i64 + kx as i64 - 1;
                                if iy >= 0 && ix >= 0 && (iy as usize) < side && (ix as usize) < side {
                                    acc += w[co * c_in * 9 + ci * 9 + ky * 3 + kx] * plane[iy as usize][ix as usize];
                                }
                            }
                        }
                    }
                    let normed = scale[co] * acc / (1.0f64 + 1e-5).sqrt() + shift[co];
                    next[co][oy][ox] = normed.max(0.0);
                }
            }
        }
        planes = next;
        side = out_side;
        c_in = c_out;
    }
    let flat: Vec<f64> = planes.into_iter().flatten().flatten().collect();
    let mut affine = |input: &[f64], n_out: usize, activate: bool| -> Vec<f64> {
        let w = take(n_out * input.len());
        let b = take(n_out);
        (0..n_out)
            .map(|o| {
                let z = b[o] + (0..input.len()).map(|i| w[o * input.len() + i] * input[i]).sum::<f64>();
                if activate {
                    z.max(0.0)
                } else {
                    z
                }
            })
            .collect()
    };
    let hidden = affine(&flat, shape.hidden, true);
    let ph = affine(&hidden, shape.head_hidden, true);
    let logits = affine(&ph, shape.actions, false);
    let vh = affine(&hidden, shape.head_hidden, true);
    let z = affine(&vh, 1, false)[0];
    let m = logits.iter().copied().fold(f64::MIN, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    (e.iter().map(|v| v / s).collect(), 1.0 / (1.0 + (-z).exp()))
}

#[test]
fn forward_matches_reference_loops() {
    let mut rng = seeded(4);
    let net = Network::init(NetworkShape::standard(14), &mut rng);
    for _ in 0..2 {
        let x = random_tensor(&mut rng);
        let (p, v) = net.forward(&x).unwrap();
        let (rp, rv) = reference_forward(&net, &x);
        for (a, b) in p.iter().zip(&rp) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!((v - rv).abs() < 1e-12);
    }
}

#[test]
fn loss_examples() {
    let quarter = vec![0.25; 4];
    assert!((sample_loss(&quarter, 0.3, &quarter, 0.3) - 4f64.ln()).abs() < 1e-6);
    let one_hot = vec![0.0, 1.0, 0.0, 0.0];
    assert!(sample_loss(&one_hot, 1.0, &one_hot, 1.0).abs() < 1e-6);
    assert!((sample_loss(&one_hot, 0.0, &one_hot, 1.0) - 1.0).abs() < 1e-6);
}

#[test]
fn batch_loss_is_mean() {
    let mut rng = seeded(5);
    let net = Network::init(NetworkShape::standard(6), &mut rng);
    let batch = random_batch(&mut rng, 6, 11);
    let each: Vec<f64> = batch
        .iter()
        .map(|s| {
            let (p, v) = net.forward(&s.input).unwrap();
            sample_loss(&p, v, &s.policy, s.value)
        })
        .collect();
    let mean = each.iter().sum::<f64>() / each.len() as f64;
    assert!((net.loss(&batch).unwrap() - mean).abs() < 1e-12);
    assert_eq!(net.loss(&[]), Err(NetworkError::EmptyBatch));
}

/// Encoded start states of generated lots with random targets.
fn scenario_batch(rng: &mut ProjectRng, actions: usize) -> Vec<TrainingSample> {
    use crate::scenario::{generate, GenSpec, ScenarioKind};
    use crate::vehicle::{make_action_set, transition};
    let mut out = Vec::new();
    for kind in [ScenarioKind::Parallel, ScenarioKind::Diagonal] {
        let s = &generate(&GenSpec::new(kind, 1, 21)).unwrap()[0];
        let set = make_action_set(&s.vehicle, actions / 2, 0.8).unwrap();
        let child = transition(&s.start, &set.actions()[3], &s.vehicle);
        let input = SceneEncoder::new(s).encode(&child, &s.start);
        let mut t = random_batch(rng, actions, 1).remove(0);
        t.input = input;
        out.push(t);
    }
    out
}

fn check_gradient(net: &Network, batch: &[TrainingSample], rng: &mut ProjectRng, per_tensor: usize) {
    let (_, grad) = net.loss_and_gradient(batch).unwrap();
    let eps = 1e-6;
    for spec in net.tensor_specs() {
        for _ in 0..per_tensor {
            let idx = spec.offset + rng.random_range(0..spec.len);
            let mut plus = net.clone();
            plus.params_mut()[idx] += eps;
            let mut minus = net.clone();
            minus.params_mut()[idx] -= eps;
            let numeric = (plus.loss(batch).unwrap() - minus.loss(batch).unwrap()) / (2.0 * eps);
            let rel = (grad[idx] - numeric).abs() / grad[idx].abs().max(numeric.abs()).max(1e-8);
            assert!(
                rel < 1e-4,
                "{} [{idx}]: analytic {} numeric {numeric}",
                spec.name,
                grad[idx]
            );
        }
    }
}

/// Central differences with a step small enough to stay clear of ReLU kinks.
#[test]
fn gradient_matches_finite_differences_on_scenes() {
    let mut rng = seeded(6);
    let net = Network::init(NetworkShape::standard(14), &mut rng);
    let batch = scenario_batch(&mut rng, 14);
    check_gradient(&net, &batch, &mut rng, 4);
}

#[test]
fn gradient_matches_finite_differences_on_dense_inputs() {
    let mut rng = seeded(16);
    let net = Network::init(NetworkShape::standard(14), &mut rng);
    let batch = random_batch(&mut rng, 14, 3);
    check_gradient(&net, &batch, &mut rng, 3);
}

#[test]
fn repeated_steps_reduce_loss() {
    let mut rng = seeded(7);
    let net = Network::init(NetworkShape::standard(14), &mut rng);
    let batch = random_batch(&mut rng, 14, 8);
    let mut trainer = Trainer::new(net, 0.9);
    let mut last = f64::INFINITY;
    for step in 0..50 {
        let loss = trainer.step(&batch, 1e-3).unwrap();
        assert!(loss < last, "step {step}: {loss} >= {last}");
        last = loss;
    }
}

#[test]
fn zero_learning_rate_keeps_params() {
    let mut rng = seeded(8);
    let net = Network::init(NetworkShape::standard(6), &mut rng);
    let batch = random_batch(&mut rng, 6, 4);
    let mut trainer = Trainer::new(net.clone(), 0.9);
    trainer.step(&batch, 0.0).unwrap();
    assert_eq!(trainer.network, net);
}

#[test]
fn non_finite_gradient_aborts() {
    let mut rng = seeded(9);
    let net = Network::init(NetworkShape::standard(6), &mut rng);
    let mut batch = random_batch(&mut rng, 6, 2);
    batch[1].value = f64::NAN;
    let mut trainer = Trainer::new(net.clone(), 0.9);
    assert_eq!(trainer.step(&batch, 1e-3), Err(NetworkError::NonFinite));
    assert_eq!(trainer.network, net);
}

#[test]
fn init_is_f32_exact() {
    let net = Network::init(NetworkShape::standard(6), &mut seeded(10));
    assert!(net.params().iter().all(|p| f64::from(*p as f32) == *p));
    assert!(net.params().len() > 150_000 && net.params().len() < 400_000);
}

#[test]
fn checkpoint_round_trip_and_errors() {
    let net = Network::init(NetworkShape::standard(14), &mut seeded(11));
    let meta = CheckpointMeta {
        shape: net.shape().clone(),
        steer_count: 7,
        step: 0.8,
        max_steer: 0.6,
        iteration: 3,
    };
    let bytes = encode_checkpoint(&net, &meta);
    let (back, back_meta) = decode_checkpoint(&bytes).unwrap();
    assert_eq!(back, net);
    assert_eq!(back_meta, meta);
    assert_eq!(encode_checkpoint(&back, &back_meta), bytes);
    assert!(matches!(
        decode_checkpoint(&bytes[..bytes.len() - 3]),
        Err(CheckpointError::Truncated)
    ));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_checkpoint(&bad), Err(CheckpointError::BadMagic)));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    save_checkpoint(&net, &meta, &path).unwrap();
    assert!(load_checkpoint_for(&path, &NetworkShape::standard(14)).is_ok());
    assert!(matches!(
        load_checkpoint_for(&path, &NetworkShape::standard(10)),
        Err(CheckpointError::ShapeMismatch { .. })
    ));
}

#[test]
fn uniform_evaluator_ignores_input() {
    let s = open_lot();
    let scene = SceneEncoder::new(&s);
    let u = UniformEvaluator { actions: 6 };
    let e = u.evaluate(&scene, &s.start, &s.start);
    assert_eq!(e.policy, vec![1.0 / 6.0; 6]);
    assert_eq!(e.value, 0.5);
    let mut other = s.start;
    other.pose.position.x += 3.0;
    assert_eq!(u.evaluate(&scene, &other, &s.start), e);
}
