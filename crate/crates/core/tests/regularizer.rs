mod common;

use common::*;
use endreg::regularizer::{
    disentangling_term, end_regularizer, entangling_term, gramian, naive_entangling_term,
    normalize_batch, partition_batch, BatchPartition,
};
use endreg::{EndConfig, LabeledBatch, Matrix, Rng};
use proptest::prelude::*;

#[test]
fn partition_matches_histogram() {
    let mut rng = Rng::new(64);
    let b = random_batch(&mut rng, 2, 64, 4, 3);
    let p = partition_batch(&b.labeled());
    let mut hist = [[0usize; 3]; 4];
    for (&t, &bi) in b.targets.iter().zip(&b.biases) {
        hist[t][bi] += 1;
    }
    let mut total = 0;
    for t in 0..4 {
        for bi in 0..3 {
            assert_eq!(p.count(t, bi), hist[t][bi]);
            assert!(p.cell(t, bi).windows(2).all(|w| w[0] < w[1]));
            total += p.count(t, bi);
        }
        assert_eq!(p.target_count(t), hist[t].iter().sum::<usize>());
    }
    for bi in 0..3 {
        assert_eq!(p.bias_count(bi), (0..4).map(|t| hist[t][bi]).sum::<usize>());
    }
    assert_eq!(total, 64);
}

#[test]
fn terms_match_loop_oracles() {
    let mut rng = Rng::new(8);
    let cfg = EndConfig::default();
    for _ in 0..10 {
        let b = random_batch(&mut rng, 5, 8, 2, 2);
        let y = unit_columns(&b.features);
        let p = BatchPartition::new(&b.targets, &b.biases, 2, 2);
        let perp = disentangling_term(&y, &p).unwrap();
        assert!((perp.value - oracle_r_perp(&y, &b.biases, 2)).abs() < 1e-12);
        let naive = naive_entangling_term(&y, &p).unwrap();
        assert!((naive.value - oracle_naive_r_par(&y, &b.targets, 2)).abs() < 1e-12);
        let par = entangling_term(&y, &p, &cfg).unwrap();
        let (value, skipped) = oracle_r_par(&y, &b.targets, &b.biases);
        assert!((par.value - value).abs() < 1e-12);
        assert_eq!(par.skipped, skipped);
    }
}

#[test]
fn term_gradients_match_finite_differences() {
    let mut rng = Rng::new(21);
    let cfg = EndConfig::default();
    for _ in 0..5 {
        let b = random_batch(&mut rng, 4, 8, 2, 2);
        let y = unit_columns(&b.features);
        let p = BatchPartition::new(&b.targets, &b.biases, 2, 2);

        // Gradients w.r.t. the normalized columns treated as free variables.
        let perp = disentangling_term(&y, &p).unwrap();
        let fd = central_differences(&y, 1e-6, |x| oracle_r_perp(x, &b.biases, 2));
        assert!(max_rel_error(perp.grad.as_slice(), fd.as_slice()) < 1e-5);

        let naive = naive_entangling_term(&y, &p).unwrap();
        let fd = central_differences(&y, 1e-6, |x| oracle_naive_r_par(x, &b.targets, 2));
        assert!(max_rel_error(naive.grad.as_slice(), fd.as_slice()) < 1e-5);

        let par = entangling_term(&y, &p, &cfg).unwrap();
        let fd = central_differences(&y, 1e-6, |x| oracle_r_par(x, &b.targets, &b.biases).0);
        assert!(max_rel_error(par.grad.as_slice(), fd.as_slice()) < 1e-5);
    }
}

fn pipeline_value(batch: &RandomBatch, features: &Matrix, cfg: &EndConfig) -> f64 {
    let y = unit_columns(features);
    let (par, _) = oracle_r_par(&y, &batch.targets, &batch.biases);
    cfg.alpha * oracle_r_perp(&y, &batch.biases, batch.n_biases) + cfg.beta * par
}

#[test]
fn full_gradient_matches_finite_differences() {
    let mut rng = Rng::new(77);
    let cfg = EndConfig::new(0.7, 0.3);
    for _ in 0..5 {
        let b = random_batch(&mut rng, 6, 10, 3, 2);
        let out = end_regularizer(&b.labeled(), &cfg).unwrap();
        let fd = central_differences(&b.features, 1e-6, |x| pipeline_value(&b, x, &cfg));
        let err = max_rel_error(out.grad.as_slice(), fd.as_slice());
        assert!(err < 1e-5, "relative error {err}");
    }
}

#[test]
fn gramian_is_symmetric_psd_with_unit_diagonal() {
    let mut rng = Rng::new(5);
    for _ in 0..10 {
        let b = random_batch(&mut rng, 4, 12, 2, 2);
        let g = gramian(&unit_columns(&b.features)).unwrap().g;
        let m = g.rows();
        for i in 0..m {
            assert!((g[(i, i)] - 1.0).abs() < 1e-9);
            for j in 0..m {
                assert!((g[(i, j)] - g[(j, i)]).abs() < 1e-12);
                assert!(g[(i, j)].abs() <= 1.0 + 1e-9);
            }
        }
        let eig = nalgebra::DMatrix::from_row_slice(m, m, g.as_slice()).symmetric_eigenvalues();
        assert!(eig.min() >= -1e-8);
    }
}

#[test]
fn orthonormal_fixed_point() {
    // Two targets, two biases; every same-bias pair orthogonal and every
    // same-target, cross-bias pair identical.
    let e = |k: usize| {
        let mut v = vec![0.0; 2];
        v[k] = 1.0;
        v
    };
    let features = Matrix::from_columns(&[e(0), e(1), e(0), e(1)]).unwrap();
    let batch = LabeledBatch::new(features, vec![0, 1, 0, 1], vec![0, 0, 1, 1], 2, 2).unwrap();
    let out = end_regularizer(&batch, &EndConfig::new(1.0, 1.0)).unwrap();
    // lower bound: 1/B * sum_b 1/M^{-,b} = 1/2 * (1/2 + 1/2)
    assert!((out.r_perp - 0.5).abs() < 1e-12);
    assert!(out.r_par.abs() < 1e-12);
}

fn labeled_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<usize>, Vec<usize>, usize, usize)> {
    (2usize..=6, 2usize..=12, 1usize..=3, 1usize..=3).prop_flat_map(|(n, m, t, b)| {
        (
            proptest::collection::vec(-1.0f64..1.0, n * m).prop_filter(
                "columns away from zero",
                move |v| (0..m).all(|j| (0..n).map(|i| v[i * m + j].powi(2)).sum::<f64>() > 1e-2),
            ),
            proptest::collection::vec(0..t, m),
            proptest::collection::vec(0..b, m),
            Just(t),
            Just(b),
        )
    })
}

fn build(data: &[f64], ts: &[usize], bs: &[usize], t: usize, b: usize) -> LabeledBatch {
    let m = ts.len();
    let n = data.len() / m;
    LabeledBatch::new(
        Matrix::from_vec(n, m, data.to_vec()).unwrap(),
        ts.to_vec(),
        bs.to_vec(),
        t,
        b,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scale_invariance((data, ts, bs, t, b) in labeled_strategy(), scales in proptest::collection::vec(0.01f64..100.0, 12)) {
        let batch = build(&data, &ts, &bs, t, b);
        let cfg = EndConfig::new(0.5, 0.5);
        let base = end_regularizer(&batch, &cfg).unwrap();
        let mut scaled = batch.features().clone();
        for j in 0..scaled.cols() {
            for i in 0..scaled.rows() {
                scaled[(i, j)] *= scales[j];
            }
        }
        let out = end_regularizer(&batch.with_features(scaled).unwrap(), &cfg).unwrap();
        prop_assert!((out.r_perp - base.r_perp).abs() < 1e-10);
        prop_assert!((out.r_par - base.r_par).abs() < 1e-10);
        prop_assert!((out.r - base.r).abs() < 1e-10);
    }

    #[test]
    fn permutation_equivariance((data, ts, bs, t, b) in labeled_strategy(), seed in any::<u64>()) {
        let batch = build(&data, &ts, &bs, t, b);
        let m = ts.len();
        let mut perm: Vec<usize> = (0..m).collect();
        Rng::new(seed).shuffle(&mut perm);
        let permuted = LabeledBatch::new(
            batch.features().select_columns(&perm),
            perm.iter().map(|&i| ts[i]).collect(),
            perm.iter().map(|&i| bs[i]).collect(),
            t,
            b,
        ).unwrap();
        let cfg = EndConfig::new(0.4, 0.9);
        let a = end_regularizer(&batch, &cfg).unwrap();
        let p = end_regularizer(&permuted, &cfg).unwrap();
        prop_assert!((a.r_perp - p.r_perp).abs() < 1e-12);
        prop_assert!((a.r_par - p.r_par).abs() < 1e-12);
        let expected = a.grad.select_columns(&perm);
        prop_assert!(max_abs_diff(&expected, &p.grad) < 1e-12);
    }

    #[test]
    fn term_ranges((data, ts, bs, t, b) in labeled_strategy()) {
        let batch = build(&data, &ts, &bs, t, b);
        let out = end_regularizer(&batch, &EndConfig::new(1.0, 1.0)).unwrap();
        let p = partition_batch(&batch);
        let present: Vec<usize> = p.bias_counts().iter().copied().filter(|&c| c > 0).collect();
        let lower = present.iter().map(|&c| 1.0 / c as f64).sum::<f64>() / present.len() as f64;
        prop_assert!(out.r_perp <= 1.0 + 1e-12);
        prop_assert!(out.r_perp >= lower - 1e-12);
        prop_assert!((-1e-12..=2.0 + 1e-12).contains(&out.r_par));
        prop_assert!(out.grad.is_finite());
        let y = normalize_batch(&batch, &EndConfig::default()).unwrap();
        let naive = naive_entangling_term(&y, &p).unwrap();
        prop_assert!((-1e-12..=2.0 + 1e-12).contains(&naive.value));
    }
}
