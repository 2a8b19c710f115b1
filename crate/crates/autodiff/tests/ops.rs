use graphcl_autodiff::{finite_diff_check, AutodiffError, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Random values kept away from zero so relu/max kinks are not sampled.
fn random_off_kink(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let x: f64 = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                x
            } else {
                -x
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Reduces any tensor to a scalar through a fixed random projection so every
/// output coordinate gets a distinct upstream gradient.
fn project(t: &mut Tape<f64>, v: Var, seed: u64) -> Result<Var, AutodiffError> {
    let shape = t.value(v).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = t.constant(random(&mut rng, shape));
    let prod = t.mul(v, weights)?;
    t.sum(prod)
}

fn check(params: &[Tensor<f64>], build: impl FnMut(&mut Tape<f64>, &[Var]) -> Result<Var, AutodiffError>) {
    let report = finite_diff_check(build, params, 1e-5, 1e-4).unwrap();
    assert!(report.passed(), "gradient check failed: {report:?}");
}

#[test]
fn matmul_with_identity_returns_operand() {
    let mut t = Tape::<f64>::new();
    let m = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]);
    let i = t.constant(Tensor::identity(3));
    let mv = t.constant(m.clone());
    let out = t.matmul(i, mv).unwrap();
    assert_eq!(t.value(out), &m);
}

#[test]
fn relu_forward_and_backward() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::row_vector(&[-1.0, 0.0, 2.0]));
    let r = t.relu(x).unwrap();
    assert_eq!(t.value(r).data(), &[0.0, 0.0, 2.0]);
    let s = t.sum(r).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap().data(), &[0.0, 0.0, 1.0]);
}

#[test]
fn conv1d_sliding_window() {
    // [1,2,3,4] * [1,1] evaluated by hand: 1+2, 2+3, 3+4.
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::new(vec![4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let w = t.constant(Tensor::new(vec![2, 1, 1], vec![1.0, 1.0]).unwrap());
    let y = t.conv1d(x, w, None).unwrap();
    assert_eq!(t.value(y).shape(), &[3, 1]);
    assert_eq!(t.value(y).data(), &[3.0, 5.0, 7.0]);
}

#[test]
fn conv1d_multichannel_matches_direct_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (len, k, c_in, c_out) = (9, 3, 4, 5);
    let x = random(&mut rng, vec![len, c_in]);
    let w = random(&mut rng, vec![k, c_in, c_out]);
    let b = random(&mut rng, vec![1, c_out]);
    let mut t = Tape::<f64>::new();
    let (xv, wv, bv) = (t.constant(x.clone()), t.constant(w.clone()), t.constant(b.clone()));
    let y = t.conv1d(xv, wv, Some(bv)).unwrap();
    for pos in 0..len - k + 1 {
        for o in 0..c_out {
            let mut acc = b.data()[o];
            for j in 0..k {
                for c in 0..c_in {
                    acc += x.data()[(pos + j) * c_in + c] * w.data()[(j * c_in + c) * c_out + o];
                }
            }
            assert!((t.value(y).get2(pos, o) - acc).abs() < 1e-12);
        }
    }
}

#[test]
fn sum_of_squares_gradient() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::row_vector(&[1.0, 2.0, 3.0]));
    let sq = t.mul(x, x).unwrap();
    let s = t.sum(sq).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap().data(), &[2.0, 4.0, 6.0]);
    assert_eq!(t.grad(s).unwrap().data(), &[1.0]);
}

#[test]
fn mean_gradient_is_uniform() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::row_vector(&[3.0, -1.0, 4.0, 1.5]));
    let m = t.mean(x).unwrap();
    t.backward(m).unwrap();
    assert_eq!(t.grad(x).unwrap().data(), &[0.25; 4]);
}

#[test]
fn backward_rejects_non_scalar_and_second_pass() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::row_vector(&[1.0, 2.0]));
    let r = t.relu(x).unwrap();
    assert_eq!(t.backward(r), Err(AutodiffError::NonScalarLoss(vec![1, 2])));
    let s = t.sum(r).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.backward(s), Err(AutodiffError::BackwardTwice));
}

#[test]
fn shape_mismatch_names_both_shapes() {
    let mut t = Tape::<f64>::new();
    let a = t.leaf(Tensor::zeros(vec![2, 3]));
    let b = t.leaf(Tensor::zeros(vec![2, 3]));
    let err = t.matmul(a, b).unwrap_err();
    assert_eq!(
        err,
        AutodiffError::ShapeMismatch {
            op: "matmul",
            left: vec![2, 3],
            right: vec![2, 3]
        }
    );
    assert!(err.to_string().contains("[2, 3]"));
    let c = t.leaf(Tensor::zeros(vec![3, 2]));
    assert!(matches!(t.add(a, c), Err(AutodiffError::ShapeMismatch { op: "add", .. })));
}

#[test]
fn conv_kernel_longer_than_sequence_is_rejected() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::zeros(vec![3, 2]));
    let w = t.leaf(Tensor::zeros(vec![4, 2, 1]));
    assert!(matches!(t.conv1d(x, w, None), Err(AutodiffError::InvalidArgument { op: "conv1d", .. })));
}

#[test]
fn max_cols_ties_route_to_lowest_row() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0], vec![3.0, 2.0]]));
    let m = t.max_cols(x).unwrap();
    assert_eq!(t.value(m).data(), &[3.0, 5.0]);
    let w = t.constant(Tensor::row_vector(&[10.0, 20.0]));
    let p = t.mul(m, w).unwrap();
    let s = t.sum(p).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap().data(), &[0.0, 20.0, 10.0, 0.0, 0.0, 0.0]);
}

#[test]
fn row_norm_at_zero_has_zero_subgradient() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]));
    let n = t.row_norms(x).unwrap();
    assert_eq!(t.value(n).data(), &[0.0, 5.0]);
    let s = t.sum(n).unwrap();
    t.backward(s).unwrap();
    let g = t.grad(x).unwrap();
    assert!(g.data().iter().all(|v| v.is_finite()));
    assert_eq!(g.data(), &[0.0, 0.0, 0.6, 0.8]);
}

#[test]
fn log_rejects_non_positive() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::row_vector(&[1.0, 0.0]));
    assert!(matches!(t.log(x), Err(AutodiffError::InvalidArgument { op: "log", .. })));
}

#[test]
fn logsumexp_is_stable_for_large_inputs() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::row_vector(&[1000.0, 1000.0]));
    let l = t.logsumexp_rows(x).unwrap();
    assert!((t.scalar(l) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    t.backward(l).unwrap();
    for g in t.grad(x).unwrap().data() {
        assert!((g - 0.5).abs() < 1e-12);
    }
}

#[test]
fn embedding_padding_row_gets_no_gradient() {
    let mut t = Tape::<f64>::new();
    let table = t.leaf(Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 2.0], vec![3.0, 4.0]]));
    let e = t.embedding(table, &[1, 0, 2, 1, 0], Some(0)).unwrap();
    assert_eq!(t.value(e).data(), &[1.0, 2.0, 0.0, 0.0, 3.0, 4.0, 1.0, 2.0, 0.0, 0.0]);
    let s = t.sum(e).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(table).unwrap().data(), &[0.0, 0.0, 2.0, 2.0, 1.0, 1.0]);
    assert!(t.embedding(table, &[3], Some(0)).is_err());
}

#[test]
fn constants_receive_no_gradient() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(Tensor::row_vector(&[1.0, 2.0]));
    let c = t.constant(Tensor::row_vector(&[3.0, 4.0]));
    let p = t.mul(x, c).unwrap();
    let s = t.sum(p).unwrap();
    t.backward(s).unwrap();
    assert!(t.grad(c).is_none());
    assert_eq!(t.grad(x).unwrap().data(), &[3.0, 4.0]);
}

#[test]
fn linearity_of_backward() {
    // grad(a·f + b·g) = a·grad f + b·grad g
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x0 = random(&mut rng, vec![3, 4]);
    let (a, b) = (0.7, -2.5);
    let f = |t: &mut Tape<f64>, x: Var| -> Result<Var, AutodiffError> {
        let e = t.exp(x)?;
        t.mean(e)
    };
    let g = |t: &mut Tape<f64>, x: Var| -> Result<Var, AutodiffError> {
        let n = t.row_norms(x)?;
        let l = t.logsumexp_rows(x)?;
        let s = t.add(n, l)?;
        t.sum(s)
    };
    let grad_of = |which: u8| -> Vec<f64> {
        let mut t = Tape::new();
        let x = t.leaf(x0.clone());
        let loss = match which {
            0 => f(&mut t, x).unwrap(),
            1 => g(&mut t, x).unwrap(),
            _ => {
                let fv = f(&mut t, x).unwrap();
                let gv = g(&mut t, x).unwrap();
                let fa = t.scale(fv, a).unwrap();
                let gb = t.scale(gv, b).unwrap();
                t.add(fa, gb).unwrap()
            }
        };
        t.backward(loss).unwrap();
        t.grad(x).unwrap().into_data()
    };
    let (gf, gg, combined) = (grad_of(0), grad_of(1), grad_of(2));
    for i in 0..combined.len() {
        assert!((combined[i] - (a * gf[i] + b * gg[i])).abs() < 1e-12);
    }
}

#[test]
fn identical_inputs_give_bit_identical_results() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x = random(&mut rng, vec![12, 5]);
        let w = random(&mut rng, vec![3, 5, 4]);
        let mut t = Tape::new();
        let (xv, wv) = (t.leaf(x), t.leaf(w));
        let y = t.conv1d(xv, wv, None).unwrap();
        let r = t.relu(y).unwrap();
        let m = t.max_cols(r).unwrap();
        let s = t.sum(m).unwrap();
        t.backward(s).unwrap();
        (
            t.value(s).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            t.grad(wv).unwrap().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        )
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matmul_gradients(m in 1usize..=8, k in 1usize..=8, n in 1usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = [random(&mut rng, vec![m, k]), random(&mut rng, vec![k, n]), random(&mut rng, vec![k, n])];
        check(&params, |t, v| {
            let ab = t.matmul(v[0], v[1])?;
            let abc = t.matmul_nt(ab, v[2])?;
            project(t, abc, seed)
        });
    }

    #[test]
    fn elementwise_gradients(m in 1usize..=8, n in 1usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = [random(&mut rng, vec![m, n]), random(&mut rng, vec![m, n]), random(&mut rng, vec![1, n])];
        check(&params, |t, v| {
            let a = t.add(v[0], v[1])?;
            let s = t.sub(a, v[1])?;
            let p = t.mul(s, v[1])?;
            let r = t.add_row(p, v[2])?;
            let sc = t.scale(r, -1.7)?;
            project(t, sc, seed)
        });
    }

    #[test]
    fn concat_transpose_reshape_gradients(m in 1usize..=8, n in 1usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = [random(&mut rng, vec![m, n]), random(&mut rng, vec![m, 2]), random(&mut rng, vec![3, n])];
        check(&params, |t, v| {
            let wide = t.concat(&[v[0], v[1]], 1)?;
            let tall = t.concat(&[v[0], v[2]], 0)?;
            let tw = t.transpose(wide)?;
            let flat = t.reshape(tall, vec![1, (m + 3) * n])?;
            let a = project(t, tw, seed)?;
            let b = project(t, flat, seed ^ 1)?;
            t.add(a, b)
        });
    }

    #[test]
    fn unary_gradients(m in 1usize..=8, n in 1usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = [random_off_kink(&mut rng, vec![m, n])];
        check(&params, |t, v| {
            let r = t.relu(v[0])?;
            let e = t.exp(v[0])?;
            let l = t.log(e)?;
            let l2 = t.exp(l)?;
            let lg = t.log(l2)?;
            let a = project(t, r, seed)?;
            let b = project(t, lg, seed ^ 2)?;
            let c = t.mean(e)?;
            let d = t.sum(v[0])?;
            let ab = t.add(a, b)?;
            let cd = t.add(c, d)?;
            t.add(ab, cd)
        });
    }

    #[test]
    fn reduction_gradients(m in 1usize..=8, n in 1usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = [random_off_kink(&mut rng, vec![m, n])];
        check(&params, |t, v| {
            let sr = t.sum_rows(v[0])?;
            let rn = t.row_norms(v[0])?;
            let nr = t.normalize_rows(v[0])?;
            let lse = t.logsumexp_rows(v[0])?;
            let a = project(t, sr, seed)?;
            let b = project(t, rn, seed ^ 3)?;
            let c = project(t, nr, seed ^ 4)?;
            let d = project(t, lse, seed ^ 5)?;
            let ab = t.add(a, b)?;
            let cd = t.add(c, d)?;
            t.add(ab, cd)
        });
    }

    #[test]
    fn max_cols_gradients(m in 1usize..=8, n in 1usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Distinct, well separated entries keep the argmax stable under ±h.
        let mut values: Vec<f64> = (0..m * n).map(|i| i as f64 * 0.01).collect();
        use rand::seq::SliceRandom;
        values.shuffle(&mut rng);
        let params = [Tensor::new(vec![m, n], values).unwrap()];
        check(&params, |t, v| {
            let mx = t.max_cols(v[0])?;
            project(t, mx, seed)
        });
    }

    #[test]
    fn conv_and_gather_gradients(len in 2usize..=8, k in 1usize..=4, c_in in 1usize..=4, c_out in 1usize..=4, seed in any::<u64>()) {
        prop_assume!(k <= len);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = 5;
        let tokens: Vec<usize> = (0..len).map(|_| rng.gen_range(0..vocab)).collect();
        let rows: Vec<usize> = (0..3).map(|_| rng.gen_range(0..vocab)).collect();
        let params = [
            random(&mut rng, vec![vocab, c_in]),
            random(&mut rng, vec![k, c_in, c_out]),
            random(&mut rng, vec![1, c_out]),
        ];
        check(&params, |t, v| {
            let x = t.embedding(v[0], &tokens, None)?;
            let y = t.conv1d(x, v[1], Some(v[2]))?;
            let g = t.gather_rows(v[0], &rows)?;
            let a = project(t, y, seed)?;
            let b = project(t, g, seed ^ 6)?;
            t.add(a, b)
        });
    }
}
