mod common;

use common::*;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rewardgap::comparison::ComparisonModel;
use rewardgap::network::{
    init_params, nll, nll_and_gradient, param_count, param_count_bound, theorem_architecture, MlpArchitecture,
    MlpParameters, CHECKPOINT_MAGIC,
};

#[test]
fn gradient_matches_finite_differences() {
    let (pass, detail) = gradient_check(20);
    assert!(pass, "{detail}");
}

#[test]
fn gradient_with_many_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let arch = MlpArchitecture { input_dim: 4, hidden_widths: vec![6, 3, 5], output_dim: 4 };
    for model in all_models() {
        let params = random_net(&arch, &mut rng, 0.3);
        let batch = random_batch(&model, 4, 4, 16, &mut rng);
        let err = gradient_error(&params, &batch, &model);
        assert!(err <= 1e-4, "{}: {err}", model.kind());
    }
}

#[test]
fn outputs_are_centred() {
    let (pass, detail) = identification(1000);
    assert!(pass, "{detail}");
}

#[test]
fn zero_parameters_give_zero_and_log_two() {
    let arch = MlpArchitecture::rectangular(3, 5, 2, 2);
    let p = MlpParameters::zeros(&arch);
    assert_eq!(p.forward(&[0.3, -1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bt = ComparisonModel::bradley_terry();
    let batch = random_batch(&bt, 3, 2, 16, &mut rng);
    assert!((nll(&p, &batch, &bt).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    assert!(p.forward(&[1.0]).is_err());
    assert!(nll(&p, &[], &bt).is_err());
}

#[test]
fn hand_built_relu_of_first_coordinate() {
    // hidden unit h = relu(s1); head (h/2 + 1, -h/2 + 1) centres to (h/2, -h/2)
    let arch = MlpArchitecture::rectangular(2, 1, 1, 2);
    let mut p = MlpParameters::zeros(&arch);
    p.weights[0] = array![[1.0, 0.0]];
    p.weights[1] = array![[0.5], [-0.5]];
    p.biases[1] = array![1.0, 1.0];
    let r = p.forward(&[0.8, 5.0]).unwrap();
    assert!((r[0] - 0.4).abs() < 1e-15 && (r[1] + 0.4).abs() < 1e-15);
    assert_eq!(p.forward(&[-0.8, 5.0]).unwrap(), vec![0.0, 0.0]);
    assert_eq!(p.hidden_activations(&[0.8, 5.0]).unwrap(), vec![vec![0.8]]);
}

#[test]
fn parameter_counts() {
    // 10*4+4, 4*4+4, 4*4+4, 4*2+2
    assert_eq!(param_count(&MlpArchitecture::rectangular(10, 4, 3, 2)), 94);
    assert_eq!(param_count_bound(4, 3, 10), 89);
    assert_eq!(param_count_bound(1, 1, 1), 4);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let (w, d, dim) = (rng.random_range(1..40), rng.random_range(1..8), rng.random_range(1..20));
        assert!(param_count(&MlpArchitecture::rectangular(dim, w, d, 1)) <= param_count_bound(w, d, dim));
    }
}

#[test]
fn prescribed_sizes() {
    assert_eq!(theorem_architecture(10, 1.0, 12345).unwrap().0, 45600);
    assert_eq!(theorem_architecture(1, 1.0, 1).unwrap().1, 252);
    // 2^(140/24) = 57.018..., log2(8 * 57.018) = 8.8333..., product 503.66 -> 504; 84 * 504
    assert_eq!(theorem_architecture(10, 1.0, 1 << 14).unwrap().1, 42336);
    assert!(theorem_architecture(10, 0.0, 10).is_err());
    assert!(theorem_architecture(10, 1.0, 0).is_err());
}

#[test]
fn he_initialisation_variance() {
    let arch = MlpArchitecture::rectangular(10, 10_000, 1, 2);
    let p = init_params(&arch, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let w = &p.weights[0];
    assert_eq!(w.len(), 100_000);
    let mean = w.mean().unwrap();
    let var = w.mapv(|x| (x - mean) * (x - mean)).sum() / (w.len() - 1) as f64;
    assert!((var / 0.2 - 1.0).abs() < 0.05, "{var}");
    assert!(p.biases.iter().all(|b| b.iter().all(|&x| x == 0.0)));
    let q = init_params(&arch, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(p, q);
}

#[test]
fn first_layer_scaling_is_homogeneous() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let arch = MlpArchitecture::rectangular(4, 7, 3, 2);
        // zero biases past the first layer keep the whole stack positively homogeneous
        let mut p = init_params(&arch, &mut rng).unwrap();
        p.biases[0].mapv_inplace(|_| rng.random_range(-1.0..1.0));
        let c = rng.random_range(0.1..5.0);
        let mut q = p.clone();
        q.weights[0] *= c;
        q.biases[0] *= c;
        let s: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (hp, hq) = (p.hidden_activations(&s).unwrap(), q.hidden_activations(&s).unwrap());
        for (lp, lq) in hp.iter().zip(&hq) {
            for (a, b) in lp.iter().zip(lq) {
                assert!((c * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
        let x = Array2::from_shape_vec((1, 4), s).unwrap();
        let (rp, rq) = (p.forward_raw_batch(x.view()).unwrap(), q.forward_raw_batch(x.view()).unwrap());
        assert!((&rp * c - &rq).iter().all(|e| e.abs() < 1e-12 * (1.0 + rq.iter().map(|v| v.abs()).sum::<f64>())));
    }
}

#[test]
fn common_shift_of_head_leaves_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let arch = MlpArchitecture::rectangular(3, 6, 2, 3);
    for model in all_models() {
        let p = random_net(&arch, &mut rng, 0.5);
        let batch = random_batch(&model, 3, 3, 32, &mut rng);
        let mut q = p.clone();
        q.biases[2] += 3.7;
        let (a, b) = (nll(&p, &batch, &model).unwrap(), nll(&q, &batch, &model).unwrap());
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn duplicated_batch_leaves_loss_and_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let arch = MlpArchitecture::rectangular(3, 5, 2, 2);
    let bt = ComparisonModel::bradley_terry();
    let p = random_net(&arch, &mut rng, 0.3);
    let batch = random_batch(&bt, 3, 2, 16, &mut rng);
    let doubled: Vec<_> = batch.iter().flat_map(|x| [x.clone(), x.clone()]).collect();
    let (l1, g1) = nll_and_gradient(&p, &batch, &bt).unwrap();
    let (l2, g2) = nll_and_gradient(&p, &doubled, &bt).unwrap();
    assert!((l1 - l2).abs() < 1e-14);
    for (a, b) in g1.to_flat().iter().zip(g2.to_flat()) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn checkpoint_round_trip_and_layout() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let arch = MlpArchitecture { input_dim: 3, hidden_widths: vec![4, 2], output_dim: 2 };
    let p = random_net(&arch, &mut rng, 1.0);
    let mut buf = Vec::new();
    p.write_checkpoint(&mut buf).unwrap();
    assert_eq!(&buf[..8], &CHECKPOINT_MAGIC);
    let header: Vec<u32> = buf[8..8 + 4 * 5].chunks(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    assert_eq!(header, vec![3, 2, 4, 2, 2]);
    assert_eq!(buf.len(), 8 + 20 + 8 * param_count(&arch));
    let first = f64::from_le_bytes(buf[28..36].try_into().unwrap());
    assert_eq!(first, p.weights[0][[0, 0]]);
    let second = f64::from_le_bytes(buf[36..44].try_into().unwrap());
    assert_eq!(second, p.weights[0][[0, 1]]);
    let q = MlpParameters::read_checkpoint(&buf[..]).unwrap();
    assert_eq!(p, q);
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(MlpParameters::read_checkpoint(&bad[..]).is_err());
    assert!(MlpParameters::read_checkpoint(&buf[..buf.len() - 3]).is_err());
}
