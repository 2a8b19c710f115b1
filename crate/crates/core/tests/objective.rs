use graphcl_autodiff::{Tape, Tensor, Var};
use graphcl_dta::objective::{
    contrastive_loss, joint_loss, joint_value, mse_loss, predict_affinity, sample_noise, sample_noise_pair,
    uniformity_loss, HeadVars, LossTerms, LossWeights,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mat(tape: &mut Tape<f64>, rows: usize, cols: usize, data: &[f64]) -> Var {
    tape.leaf(Tensor::new(vec![rows, cols], data.to_vec()).unwrap())
}

fn weights(alpha: f64, beta: f64) -> LossWeights {
    LossWeights {
        alpha,
        beta,
        tau: 0.2,
        epsilon: 0.1,
    }
}

fn toy_head(tape: &mut Tape<f64>) -> HeadVars {
    // h = 1: v1 is 2×1, v2 1×1, v3 1×1
    HeadVars {
        v1: mat(tape, 2, 1, &[1.0, -2.0]),
        b1: mat(tape, 1, 1, &[0.5]),
        v2: mat(tape, 1, 1, &[3.0]),
        b2: mat(tape, 1, 1, &[-1.0]),
        v3: mat(tape, 1, 1, &[2.0]),
        b3: mat(tape, 1, 1, &[0.25]),
    }
}

#[test]
fn toy_head_matches_hand_evaluation() {
    let mut tape = Tape::new();
    let head = toy_head(&mut tape);
    let d = mat(&mut tape, 2, 1, &[2.0, 1.0]);
    let t = mat(&mut tape, 2, 1, &[0.5, 1.0]);
    let p = predict_affinity(&mut tape, d, t, &head).unwrap();
    // row 0: relu(2 - 1 + .5) = 1.5; relu(4.5 - 1) = 3.5; 7 + .25
    // row 1: relu(1 - 2 + .5) = 0;   relu(-1) = 0;        0 + .25
    assert_eq!(tape.value(p).data(), &[7.25, 0.25]);
}

#[test]
fn zero_weights_predict_the_output_bias() {
    let mut tape = Tape::new();
    let z = |tape: &mut Tape<f64>, r, c| tape.leaf(Tensor::zeros(vec![r, c]));
    let head = HeadVars {
        v1: z(&mut tape, 6, 3),
        b1: z(&mut tape, 1, 3),
        v2: z(&mut tape, 3, 3),
        b2: z(&mut tape, 1, 3),
        v3: z(&mut tape, 3, 1),
        b3: mat(&mut tape, 1, 1, &[6.5]),
    };
    let d = mat(&mut tape, 2, 3, &[1.0, -4.0, 2.0, 9.0, 0.1, 3.0]);
    let t = mat(&mut tape, 2, 3, &[0.0, 7.0, -1.0, 2.0, 2.0, 2.0]);
    let p = predict_affinity(&mut tape, d, t, &head).unwrap();
    assert_eq!(tape.value(p).data(), &[6.5, 6.5]);
}

#[test]
fn mse_examples() {
    let cases: [(&[f64], &[f64], f64); 3] = [
        (&[1.0, 2.0], &[1.0, 2.0], 0.0),
        (&[0.0, 0.0], &[1.0, 1.0], 1.0),
        (&[1.0, 2.0, 3.0], &[2.0, 4.0, 3.0], 5.0 / 3.0),
    ];
    for (p, y, want) in cases {
        let mut tape = Tape::new();
        let pv = mat(&mut tape, p.len(), 1, p);
        let l = mse_loss(&mut tape, pv, y).unwrap();
        assert!((tape.scalar(l) - want).abs() < 1e-15, "{p:?} {y:?}");
    }
}

#[test]
fn mse_rejects_length_mismatch() {
    let mut tape = Tape::new();
    let pv = mat(&mut tape, 2, 1, &[1.0, 2.0]);
    assert!(mse_loss(&mut tape, pv, &[1.0]).is_err());
}

proptest! {
    #[test]
    fn mse_scales_quadratically(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..20),
        c in 0.1f64..5.0,
    ) {
        let (p, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let eval = |p: &[f64], y: &[f64]| {
            let mut tape = Tape::new();
            let pv = mat(&mut tape, p.len(), 1, p);
            let l = mse_loss(&mut tape, pv, y).unwrap();
            tape.scalar(l)
        };
        let base = eval(&p, &y);
        let scaled = eval(
            &p.iter().map(|v| v * c).collect::<Vec<_>>(),
            &y.iter().map(|v| v * c).collect::<Vec<_>>(),
        );
        prop_assert!((scaled - c * c * base).abs() <= 1e-9 * (1.0 + scaled.abs()));
    }

    #[test]
    fn noise_respects_norm_and_hyperoctant(
        d in prop::collection::vec(-3.0f64..3.0, 1..40),
        eps in 0.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = sample_noise(&d, eps, &mut rng);
        let norm = n.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - eps).abs() < 1e-9);
        if d.iter().any(|&x| x != 0.0) {
            for (x, v) in d.iter().zip(&n) {
                prop_assert!(x * v >= 0.0);
                if *x == 0.0 {
                    prop_assert_eq!(*v, 0.0);
                }
            }
        }
    }
}

#[test]
fn zero_epsilon_leaves_views_on_the_embedding() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (a, b) = sample_noise_pair(&[1.0, -2.0, 0.5], 0.0, &mut rng);
    assert_eq!(a, vec![0.0; 3]);
    assert_eq!(b, vec![0.0; 3]);
}

#[test]
fn two_dimensional_noise_example() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let n = sample_noise(&[1.0, -1.0], 0.1, &mut rng);
        assert!((n[0].hypot(n[1]) - 0.1).abs() < 1e-12);
        assert!(n[0] >= 0.0 && n[1] <= 0.0);
    }
}

#[test]
fn all_zero_embedding_still_gets_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = sample_noise(&[0.0; 5], 0.3, &mut rng);
    assert!((n.iter().map(|v| v * v).sum::<f64>().sqrt() - 0.3).abs() < 1e-12);
}

#[test]
fn single_drug_contrastive_loss_is_exactly_zero() {
    let mut tape = Tape::new();
    let a = mat(&mut tape, 1, 3, &[0.3, -1.2, 4.0]);
    let b = mat(&mut tape, 1, 3, &[0.1, 0.7, -2.0]);
    let l = contrastive_loss(&mut tape, a, b, 0.2, false).unwrap();
    assert_eq!(tape.scalar(l), 0.0);
}

#[test]
fn equal_similarities_give_two_log_two() {
    let mut tape = Tape::new();
    // every dot product is 1
    let a = mat(&mut tape, 2, 2, &[1.0, 0.0, 1.0, 0.0]);
    let b = mat(&mut tape, 2, 2, &[1.0, 5.0, 1.0, -3.0]);
    let l = contrastive_loss(&mut tape, a, b, 0.7, false).unwrap();
    assert!((tape.scalar(l) - 2.0 * 2f64.ln()).abs() < 1e-12);
}

fn brute_force_info_nce(e1: &[[f64; 2]], e2: &[[f64; 2]], tau: f64) -> f64 {
    let dot = |a: &[f64; 2], b: &[f64; 2]| a[0] * b[0] + a[1] * b[1];
    (0..e1.len())
        .map(|i| {
            let num = (dot(&e1[i], &e2[i]) / tau).exp();
            let den: f64 = (0..e2.len()).map(|j| (dot(&e1[i], &e2[j]) / tau).exp()).sum();
            -(num / den).ln()
        })
        .sum()
}

#[test]
fn three_drug_contrastive_loss_matches_brute_force() {
    let e1 = [[0.5, -0.2], [1.0, 0.3], [-0.4, 0.8]];
    let e2 = [[0.45, -0.1], [0.9, 0.35], [-0.5, 0.7]];
    let mut tape = Tape::new();
    let a = mat(&mut tape, 3, 2, &e1.concat());
    let b = mat(&mut tape, 3, 2, &e2.concat());
    let l = contrastive_loss(&mut tape, a, b, 1.0, false).unwrap();
    let want = brute_force_info_nce(&e1, &e2, 1.0);
    assert!((tape.scalar(l) - want).abs() < 1e-10);
}

#[test]
fn contrastive_loss_rejects_nonpositive_temperature() {
    let mut tape = Tape::new();
    let a = mat(&mut tape, 1, 1, &[1.0]);
    assert!(contrastive_loss(&mut tape, a, a, 0.0, false).is_err());
}

fn uniformity(rows: usize, cols: usize, data: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let x = mat(&mut tape, rows, cols, data);
    let l = uniformity_loss(&mut tape, x).unwrap().unwrap();
    tape.scalar(l)
}

#[test]
fn uniformity_fixed_points() {
    assert_eq!(uniformity(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]), 0.0);
    assert!((uniformity(2, 2, &[0.0, 0.0, 0.6, 0.8]) + 2.0).abs() < 1e-12);
}

#[test]
fn uniformity_needs_two_rows() {
    let mut tape = Tape::new();
    let x = mat(&mut tape, 1, 2, &[1.0, 1.0]);
    assert!(uniformity_loss(&mut tape, x).unwrap().is_none());
}

#[test]
fn four_point_uniformity_matches_pair_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut sum = 0.0;
    for u in 0..4 {
        for v in u + 1..4 {
            let d: f64 = (0..3).map(|k| (x[u * 3 + k] - x[v * 3 + k]).powi(2)).sum::<f64>().sqrt();
            sum += (-2.0 * d).exp();
        }
    }
    let want = (sum / 6.0).ln();
    assert!((uniformity(4, 3, &x) - want).abs() < 1e-10);
}

fn mean_pairwise_distance(x: &[f64], m: usize, h: usize) -> f64 {
    let mut total = 0.0;
    for u in 0..m {
        for v in u + 1..m {
            total += (0..h).map(|k| (x[u * h + k] - x[v * h + k]).powi(2)).sum::<f64>().sqrt();
        }
    }
    total / (m * (m - 1) / 2) as f64
}

#[test]
fn a_descent_step_spreads_a_tight_cluster() {
    let (m, h) = (8, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = (0..m * h).map(|_| 1.0 + rng.gen_range(-1e-3..1e-3)).collect();
    let mut tape = Tape::new();
    let xv = mat(&mut tape, m, h, &x);
    let l = uniformity_loss(&mut tape, xv).unwrap().unwrap();
    tape.backward(l).unwrap();
    let g = tape.grad(xv).unwrap();
    let stepped: Vec<f64> = x.iter().zip(g.data()).map(|(a, b)| a - 1e-3 * b).collect();
    assert!(mean_pairwise_distance(&stepped, m, h) > mean_pairwise_distance(&x, m, h));
}

proptest! {
    #[test]
    fn uniformity_is_never_positive(x in prop::collection::vec(-5.0f64..5.0, 6..30)) {
        let rows = x.len() / 3;
        prop_assert!(uniformity(rows, 3, &x[..rows * 3]) <= 0.0);
    }

    #[test]
    fn contrastive_loss_is_non_negative(
        x in prop::collection::vec(-3.0f64..3.0, 8),
        y in prop::collection::vec(-3.0f64..3.0, 8),
    ) {
        let mut tape = Tape::new();
        let a = mat(&mut tape, 4, 2, &x);
        let b = mat(&mut tape, 4, 2, &y);
        let l = contrastive_loss(&mut tape, a, b, 0.2, false).unwrap();
        prop_assert!(tape.scalar(l) >= 0.0);
    }
}

fn scalar(tape: &mut Tape<f64>, v: f64) -> Var {
    tape.leaf(Tensor::scalar(v))
}

#[test]
fn joint_loss_arithmetic() {
    let mut tape = Tape::new();
    let terms = LossTerms {
        mse: scalar(&mut tape, 1.0),
        gcl: scalar(&mut tape, 2.0),
        uniform_drug: Some(scalar(&mut tape, -0.5)),
        uniform_target: Some(scalar(&mut tape, -1.5)),
    };
    let ablation = joint_loss(&mut tape, &terms, &weights(0.0, 0.0)).unwrap();
    assert_eq!(tape.scalar(ablation), 1.0);
    let contrast_only = joint_loss(&mut tape, &terms, &weights(1.0, 0.0)).unwrap();
    assert_eq!(tape.scalar(contrast_only), 3.0);
    // 1 + 0.5·2 + 0.5·(−0.5 − 1.5) = 1
    let defaults = joint_loss(&mut tape, &terms, &weights(0.5, 0.5)).unwrap();
    assert_eq!(tape.scalar(defaults), 1.0);
    assert_eq!(joint_value(1.0, 2.0, -0.5, -1.5, &weights(0.5, 0.5)), 1.0);
}

#[test]
fn joint_loss_names_the_non_finite_term() {
    let mut tape = Tape::new();
    let terms = LossTerms {
        mse: scalar(&mut tape, 1.0),
        gcl: scalar(&mut tape, f64::NAN),
        uniform_drug: None,
        uniform_target: None,
    };
    match joint_loss(&mut tape, &terms, &weights(0.5, 0.5)) {
        Err(graphcl_dta::Error::NonFinite { term, .. }) => assert_eq!(term, "L_gcl"),
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}
