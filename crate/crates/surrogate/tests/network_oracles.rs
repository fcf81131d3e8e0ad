use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vembeam_surrogate::{
    backward_params, forward, input_gradient, Activation, Architecture, Batch, NetworkParameters, SurrogateError,
};

const STEP: f64 = 1e-6;
const REL_TOL: f64 = 1e-5;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// Random split network with at most three layers and sixteen units per part.
fn random_net(rng: &mut ChaCha8Rng) -> NetworkParameters {
    let mut widths = |first: usize, last: Option<usize>| -> Vec<usize> {
        let layers = rng.random_range(1..=3);
        let mut w = vec![first];
        for i in 0..layers {
            match (i + 1 == layers, last) {
                (true, Some(l)) => w.push(l),
                _ => w.push(rng.random_range(1..=16)),
            }
        }
        w
    };
    let node = widths(2, None);
    let material = widths(3, None);
    let head = widths(0, Some(3));
    let hidden = if rng.random_bool(0.5) {
        Activation::Tanh
    } else {
        Activation::Sigmoid
    };
    let arch = Architecture {
        node,
        material,
        head_hidden: head[1..head.len() - 1].to_vec(),
        outputs: 3,
        coordinate_dims: 2,
        hidden_activation: hidden,
        output_activation: Activation::Identity,
    };
    let mut params = NetworkParameters::new(&arch, rng).unwrap();
    for mlp in [&mut params.node, &mut params.material, &mut params.head] {
        for layer in &mut mlp.layers {
            layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
    }
    params
}

fn random_batch(rng: &mut ChaCha8Rng) -> Batch {
    let nodes = random_matrix(rng, 3, 2);
    let materials = random_matrix(rng, 2, 3);
    Batch {
        nodes,
        materials,
        pairs: vec![(0, 0), (1, 0), (2, 1), (0, 1)],
    }
}

/// Scalar probe `sum U * y + sum_k V_k * dy/dx_k`, touching both the outputs
/// and their coordinate tangents.
fn probe(params: &NetworkParameters, batch: &Batch, u: &Array2<f64>, v: &[Array2<f64>]) -> f64 {
    let fwd = params.forward(batch, true).unwrap();
    let mut s = (fwd.outputs() * u).sum();
    for (t, w) in fwd.output_tangents().iter().zip(v) {
        s += (t * w).sum();
    }
    s
}

fn close(analytic: f64, fd: f64, scale: f64) -> bool {
    (analytic - fd).abs() <= REL_TOL * analytic.abs().max(fd.abs()).max(1e-3 * scale)
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for draw in 0..100 {
        let mut params = random_net(&mut rng);
        let batch = random_batch(&mut rng);
        let u = random_matrix(&mut rng, batch.len(), 3);
        let v: Vec<Array2<f64>> = (0..2).map(|_| random_matrix(&mut rng, batch.len(), 3)).collect();
        let fwd = params.forward(&batch, true).unwrap();
        let analytic = params.backward(&fwd, &u, &v).flatten();
        let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let base = params.flatten();
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] = base[i] + STEP;
            params.assign_flat(&p);
            let up = probe(&params, &batch, &u, &v);
            p[i] = base[i] - STEP;
            params.assign_flat(&p);
            let down = probe(&params, &batch, &u, &v);
            let fd = (up - down) / (2.0 * STEP);
            assert!(
                close(analytic[i], fd, scale),
                "draw {draw} parameter {i}: analytic {} fd {fd}",
                analytic[i]
            );
        }
        params.assign_flat(&base);
    }
}

#[test]
fn output_only_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for draw in 0..100 {
        let mut params = random_net(&mut rng);
        let batch = random_batch(&mut rng);
        let u = random_matrix(&mut rng, batch.len(), 3);
        let analytic = backward_params(&params, &batch, &u).unwrap().flatten();
        let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let base = params.flatten();
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] = base[i] + STEP;
            params.assign_flat(&p);
            let up = probe(&params, &batch, &u, &[]);
            p[i] = base[i] - STEP;
            params.assign_flat(&p);
            let down = probe(&params, &batch, &u, &[]);
            let fd = (up - down) / (2.0 * STEP);
            assert!(close(analytic[i], fd, scale), "draw {draw} parameter {i}");
        }
        params.assign_flat(&base);
    }
}

#[test]
fn input_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for draw in 0..100 {
        let params = random_net(&mut rng);
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let jac = input_gradient(&params, &x, &m).unwrap();
        let scale = jac.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        for d in 0..2 {
            let mut xp = x.clone();
            xp[d] += STEP;
            let mut xm = x.clone();
            xm[d] -= STEP;
            let up = forward(&params, &xp, &m).unwrap();
            let down = forward(&params, &xm, &m).unwrap();
            for o in 0..3 {
                let fd = (up[o] - down[o]) / (2.0 * STEP);
                assert!(close(jac[(o, d)], fd, scale), "draw {draw} output {o} dim {d}");
            }
        }
    }
}

fn zero_params(arch: &Architecture) -> NetworkParameters {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    NetworkParameters::new(arch, &mut rng).unwrap().zeros_like()
}

#[test]
fn zero_weights_give_zero_output() {
    let p = zero_params(&Architecture::default());
    assert_eq!(forward(&p, &[0.3, -1.2], &[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
}

#[test]
fn identity_activations_are_linear_in_inputs() {
    let arch = Architecture {
        node: vec![2, 3],
        material: vec![3, 2],
        head_hidden: vec![],
        outputs: 3,
        coordinate_dims: 2,
        hidden_activation: Activation::Identity,
        output_activation: Activation::Identity,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = NetworkParameters::new(&arch, &mut rng).unwrap();
    let m = [0.5, -0.1, 0.2];
    let f = |x: [f64; 2]| forward(&p, &x, &m).unwrap();
    let (a, b) = ([0.3, -0.7], [1.1, 0.4]);
    let sum = f([a[0] + b[0], a[1] + b[1]]);
    let zero = f([0.0, 0.0]);
    for o in 0..3 {
        let lhs = sum[o] - zero[o];
        let rhs = (f(a)[o] - zero[o]) + (f(b)[o] - zero[o]);
        assert!((lhs - rhs).abs() < 1e-14);
    }
    // Jacobian is the product of the weight matrices on the coordinate path
    let wn = &p.node.layers[0].weights;
    let wh = &p.head.layers[0].weights;
    let expected = wn.dot(&wh.slice(ndarray::s![..3, ..])).reversed_axes();
    for x in [a, b] {
        let jac = input_gradient(&p, &x, &m).unwrap();
        assert!((&jac - &expected).iter().all(|d| d.abs() < 1e-14));
    }
}

#[test]
fn single_linear_layer_gradient_is_outer_product() {
    // head only sees the concatenated features; identity subnets of width one
    let arch = Architecture {
        node: vec![2, 2],
        material: vec![3, 1],
        head_hidden: vec![],
        outputs: 3,
        coordinate_dims: 2,
        hidden_activation: Activation::Identity,
        output_activation: Activation::Identity,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = NetworkParameters::new(&arch, &mut rng).unwrap();
    let batch = Batch::single(&[0.4, -0.9], &[0.2, 0.1, -0.3]);
    let fwd = p.forward(&batch, false).unwrap();
    let pred = fwd.outputs().row(0).to_owned();
    let target = Array1::from(vec![0.1, 0.0, -0.2]);
    let upstream = (&pred - &target).mapv(|d| 2.0 * d).insert_axis(ndarray::Axis(0));
    let grads = backward_params(&p, &batch, &upstream).unwrap();

    let mut features = Vec::new();
    features.extend(p.node.layers[0].weights.t().dot(&Array1::from(vec![0.4, -0.9])) + &p.node.layers[0].bias);
    features.extend(
        p.material.layers[0]
            .weights
            .t()
            .dot(&Array1::from(vec![0.2, 0.1, -0.3]))
            + &p.material.layers[0].bias,
    );
    for (i, &a) in features.iter().enumerate() {
        for o in 0..3 {
            let expected = 2.0 * (pred[o] - target[o]) * a;
            assert!((grads.head.layers[0].weights[(i, o)] - expected).abs() < 1e-14);
        }
    }
}

#[test]
fn zero_upstream_gives_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = random_net(&mut rng);
    let batch = random_batch(&mut rng);
    let g = backward_params(&p, &batch, &Array2::zeros((batch.len(), 3))).unwrap();
    assert!(g.flatten().iter().all(|&v| v == 0.0));
}

#[test]
fn material_features_change_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = NetworkParameters::new(&Architecture::default(), &mut rng).unwrap();
    let base = forward(&p, &[0.1, 0.2], &[0.0, 0.0, 0.0]).unwrap();
    for k in 0..3 {
        let mut m = [0.0; 3];
        m[k] = 0.5;
        assert_ne!(forward(&p, &[0.1, 0.2], &m).unwrap(), base, "feature {k}");
    }
    let mut dead = p.clone();
    dead.material = dead.material.zeros_like();
    let a = forward(&dead, &[0.1, 0.2], &[0.0, 0.0, 0.0]).unwrap();
    let b = forward(&dead, &[0.1, 0.2], &[0.7, -0.3, 1.2]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dead_material_path_has_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let arch = Architecture::default();
    let mut p = NetworkParameters::new(&arch, &mut rng).unwrap();
    for l in &mut p.material.layers {
        l.bias.fill(0.0);
    }
    let batch = Batch {
        nodes: random_matrix(&mut rng, 4, 2),
        materials: Array2::zeros((2, 3)),
        pairs: vec![(0, 0), (1, 1), (2, 0), (3, 1)],
    };
    let u = random_matrix(&mut rng, 4, 3);
    let g = backward_params(&p, &batch, &u).unwrap();
    assert!(g.material.layers.iter().all(|l| l.weights.iter().all(|&v| v == 0.0)));
}

#[test]
fn zero_node_weights_give_zero_jacobian() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut p = NetworkParameters::new(&Architecture::default(), &mut rng).unwrap();
    p.node = p.node.zeros_like();
    let jac = input_gradient(&p, &[0.3, 0.4], &[0.1, 0.2, 0.3]).unwrap();
    assert!(jac.iter().all(|&v| v == 0.0));
}

#[test]
fn width_mismatch_is_rejected() {
    let p = zero_params(&Architecture::default());
    let err = forward(&p, &[0.0, 0.0, 0.0], &[0.0; 3]).unwrap_err();
    assert!(matches!(err, SurrogateError::WidthMismatch { .. }));
    let err = forward(&p, &[0.0, 0.0], &[0.0; 2]).unwrap_err();
    assert!(matches!(err, SurrogateError::WidthMismatch { .. }));
}

#[test]
fn flatten_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let p = random_net(&mut rng);
    let mut q = p.zeros_like();
    q.assign_flat(&p.flatten());
    assert_eq!(p, q);
    assert_eq!(p.param_count(), p.flatten().len());
}

proptest! {
    #[test]
    fn forward_is_deterministic(seed in any::<u64>(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_net(&mut rng);
        let m = [0.2, -0.4, 1.0];
        let a = forward(&p, &[x, y], &m).unwrap();
        let b = forward(&p, &[x, y], &m).unwrap();
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn batched_rows_match_single_evaluation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_net(&mut rng);
        let batch = random_batch(&mut rng);
        let fwd = p.forward(&batch, true).unwrap();
        for (r, &(ni, mi)) in batch.pairs.iter().enumerate() {
            let x = batch.nodes.row(ni).to_vec();
            let m = batch.materials.row(mi).to_vec();
            let single = forward(&p, &x, &m).unwrap();
            let jac = input_gradient(&p, &x, &m).unwrap();
            for o in 0..3 {
                prop_assert!((fwd.outputs()[(r, o)] - single[o]).abs() < 1e-13);
                for d in 0..2 {
                    prop_assert!((fwd.output_tangents()[d][(r, o)] - jac[(o, d)]).abs() < 1e-13);
                }
            }
        }
    }
}
