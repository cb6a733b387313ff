use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>())
}

/// `Hbar = (W* F*)^T (+ noise)` with `n_clusters` chosen so that `N_r` fits.
fn planted(n_clusters: usize, n: usize, rank: usize, noise: f64, seed: u64) -> (VectorizedSeries<f64>, Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nr = n_clusters * (n_clusters - 1) / 2;
    let w = uniform(n, rank, &mut rng);
    let f = uniform(rank, nr, &mut rng);
    let mut v = w.dot(&f);
    v.mapv_inplace(|x| x + noise * rng.random::<f64>());
    (VectorizedSeries::from_matrix(n_clusters, v.t().to_owned()).unwrap(), w, f)
}

fn exact_opts(seed: u64) -> NnmfOptions {
    NnmfOptions { max_iter: 20_000, tol: 0.0, seed }
}

fn density_series(n_clusters: usize, n_windows: usize, seed: u64) -> LinkDensitySeries<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; n_windows * n_clusters * n_clusters];
    for k in 0..n_windows {
        for c in 0..n_clusters {
            for d in c..n_clusters {
                let v = rng.random::<f64>();
                values[(k * n_clusters + c) * n_clusters + d] = v;
                values[(k * n_clusters + d) * n_clusters + c] = v;
            }
        }
    }
    LinkDensitySeries { n_clusters, n_windows, values }
}

#[test]
fn vectorized_row_counts() {
    assert_eq!(vectorize_upper(&density_series(23, 2, 0)).n_rows(), 253);
    let h = density_series(2, 7, 1);
    let v = vectorize_upper(&h);
    assert_eq!(v.pair_index, vec![(0, 1)]);
    for k in 0..7 {
        assert_eq!(v.hbar[[0, k]], h.get(k, 0, 1));
    }
}

#[test]
fn unvectorize_round_trip() {
    let h = density_series(6, 4, 2);
    let v = vectorize_upper(&h);
    assert_eq!(v.pair_index[0], (0, 1));
    assert_eq!(v.pair_index[5], (1, 2));
    for k in 0..4 {
        let m = v.unvectorize(k);
        for c in 0..6 {
            assert_eq!(m[c][c], 0.0);
            for d in c + 1..6 {
                assert_eq!(m[c][d], h.get(k, c, d));
                assert_eq!(m[d][c], h.get(k, c, d));
            }
        }
    }
}

#[test]
fn rank_one_is_exact() {
    let (s, _, _) = planted(8, 60, 1, 0.0, 3);
    let m = nnmf_fit(&s, 1, &exact_opts(0)).unwrap();
    assert!(m.residual < 1e-8, "{}", m.residual);
}

#[test]
fn rank_three_is_recovered() {
    for seed in 0..2 {
        let (s, _, _) = planted(8, 100, 3, 0.0, seed);
        let m = nnmf_fit(&s, 3, &NnmfOptions { max_iter: 200_000, tol: 1e-15, seed }).unwrap();
        assert!(m.residual < 1e-6, "seed {seed}: D = {}", m.residual);
    }
}

#[test]
fn noisy_fit_is_near_the_generator() {
    // N_r = 45 with 10 clusters is the closest triangular number to 50.
    let (s, w, f) = planted(10, 400, 3, 0.1, 4);
    let oracle = residual(s.hbar.view(), w.view(), f.view()).unwrap();
    let m = nnmf_fit(&s, 3, &NnmfOptions::default()).unwrap();
    assert!(m.residual <= 1.05 * oracle, "{} vs {oracle}", m.residual);
}

#[test]
fn residual_examples() {
    let (s, w, f) = planted(5, 20, 2, 0.0, 5);
    assert!(residual(s.hbar.view(), w.view(), f.view()).unwrap() < 1e-15);
    let zero = Array2::zeros(w.dim());
    let d = residual(s.hbar.view(), zero.view(), f.view()).unwrap();
    let norm = s.hbar.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((d - norm / ((s.n_rows() * s.n_windows()) as f64).sqrt()).abs() < 1e-15);
    assert!(residual(s.hbar.view(), f.view(), w.view()).is_err());
}

#[test]
fn model_invariants() {
    let (s, _, _) = planted(9, 120, 4, 0.05, 6);
    let m = nnmf_fit(&s, 5, &NnmfOptions::default()).unwrap();
    assert!(m.w.iter().chain(m.f.iter()).all(|&x| x >= 0.0));
    for row in m.f.axis_iter(Axis(0)) {
        assert!((row.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
    }
    assert!(m.energies.windows(2).all(|e| e[0] >= e[1]));
    for (i, c) in m.w.axis_iter(Axis(1)).enumerate() {
        assert!((c.iter().map(|x| x * x).sum::<f64>() - m.energies[i]).abs() <= 1e-12 * m.energies[i]);
    }
    let again = residual(s.hbar.view(), m.w.view(), m.f.view()).unwrap();
    assert!((again - m.residual).abs() < 1e-10);
    // The stored trace ends at the returned fit.
    let last = *m.objective.last().unwrap();
    assert!((last.sqrt() / ((s.n_rows() * s.n_windows()) as f64).sqrt() - m.residual).abs() < 1e-10);
}

#[test]
fn rejects_too_many_factors() {
    let (s, _, _) = planted(4, 5, 1, 0.0, 7);
    assert!(matches!(nnmf_fit(&s, 6, &NnmfOptions::default()), Err(Error::Config(_))));
    assert!(nnmf_fit(&s, 0, &NnmfOptions::default()).is_err());
    assert!(nnmf_fit(&s, 5, &NnmfOptions::default()).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn objective_never_increases(seed in 0u64..1000, k in 2usize..6, n in 5usize..40, rank in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nr = k * (k - 1) / 2;
        let v = uniform(nr, n, &mut rng);
        let s = VectorizedSeries::from_matrix(k, v).unwrap();
        let rank = rank.min(nr).min(n);
        let m = nnmf_fit(&s, rank, &NnmfOptions { max_iter: 200, tol: 0.0, seed }).unwrap();
        // Changes below 1e-15 of the starting objective are rounding.
        let floor = 1e-15 * m.objective[0];
        for p in m.objective.windows(2) {
            prop_assert!(p[1] <= p[0] * (1.0 + 1e-12) + floor, "{} -> {}", p[0], p[1]);
        }
        prop_assert!(m.w.iter().chain(m.f.iter()).all(|&x| x >= 0.0));
    }
}

#[test]
fn select_rank_finds_planted_rank() {
    let mut hits = 0;
    for seed in 0..10 {
        let (s, _, _) = planted(7, 60, 3, 0.0, 100 + seed);
        let opts = NnmfOptions { max_iter: 4_000, tol: 1e-7, seed };
        let sel = select_rank(&s, &[1, 2, 3, 4, 5, 6], 0.05, &opts).unwrap();
        if sel.rank == 3 {
            hits += 1;
        }
        for p in sel.curve.windows(2) {
            assert!(p[1].1 <= p[0].1 * (1.0 + 1e-6), "{:?}", sel.curve);
        }
    }
    assert!(hits >= 9, "{hits}/10");
}

#[test]
fn single_candidate_rank() {
    let (s, _, _) = planted(6, 30, 2, 0.1, 8);
    let sel = select_rank(&s, &[4], 0.05, &NnmfOptions::default()).unwrap();
    assert_eq!(sel.rank, 4);
    assert_eq!(sel.curve.len(), 1);
    assert!(select_rank(&s, &[3, 2], 0.05, &NnmfOptions::default()).is_err());
    assert!(select_rank(&s, &[], 0.05, &NnmfOptions::default()).is_err());
}

#[test]
fn elbow_rule() {
    let curve = [(1, 1.0), (2, 0.5), (3, 0.1), (4, 0.09), (5, 0.085)];
    assert_eq!(elbow(&curve, 0.05), 3);
    assert_eq!(elbow(&[(2, 0.3), (3, 0.3)], 0.05), 2);
    assert_eq!(elbow(&[(1, 1.0), (2, 0.5), (3, 0.0)], 0.05), 3);
}

#[test]
fn decompose_orders_scores() {
    let (mut s, _, _) = planted(7, 50, 3, 0.05, 9);
    s.hbar.column_mut(10).fill(0.0);
    let m = nnmf_fit(&s, 4, &NnmfOptions::default()).unwrap();
    for k in 0..50 {
        let d = decompose(&m, k).unwrap();
        assert!(d.windows(2).all(|p| p[0].1 >= p[1].1));
        for &(i, score) in &d {
            assert_eq!(score, m.w[[k, i]]);
        }
        assert_eq!(leading_factor(&m, k).unwrap(), d[0].0);
    }
    assert!(decompose(&m, 10).unwrap().iter().all(|&(_, s)| s == 0.0));
    assert!(decompose(&m, 50).is_err());
}

#[test]
fn leading_factor_ties_go_low() {
    let m = FactorModel {
        f: Array2::eye(3),
        w: Array2::from_shape_vec((1, 3), vec![0.5, 0.7, 0.7]).unwrap(),
        residual: 0.0,
        energies: vec![0.25, 0.49, 0.49],
        iterations: 0,
        objective: vec![],
    };
    assert_eq!(leading_factor(&m, 0).unwrap(), 1);
    let (s, _, _) = planted(5, 20, 1, 0.1, 10);
    let one = nnmf_fit(&s, 1, &NnmfOptions::default()).unwrap();
    assert!((0..20).all(|k| leading_factor(&one, k).unwrap() == 0));
}

#[test]
fn window_permutation_permutes_scores() {
    let (s, _, _) = planted(8, 80, 3, 0.1, 11);
    let mut order: Vec<usize> = (0..80).collect();
    order.reverse();
    order.swap(3, 40);
    let p = VectorizedSeries::from_matrix(8, s.hbar.select(Axis(1), &order)).unwrap();
    let opts = NnmfOptions { max_iter: 300, tol: 0.0, seed: 5 };
    let a = nnmf_fit(&s, 3, &opts).unwrap();
    let b = nnmf_fit(&p, 3, &opts).unwrap();
    for (x, y) in a.f.iter().zip(b.f.iter()) {
        assert!((x - y).abs() < 1e-9);
    }
    for (new, &old) in order.iter().enumerate() {
        for i in 0..3 {
            assert!((b.w[[new, i]] - a.w[[old, i]]).abs() < 1e-9);
        }
    }
}

#[test]
fn window_scaling_keeps_leader() {
    let (s, _, _) = planted(8, 100, 4, 0.05, 12);
    let opts = NnmfOptions::default();
    let base = nnmf_fit(&s, 4, &opts).unwrap();
    for lambda in [0.5, 2.0] {
        for k in [0, 17, 63] {
            let mut scaled = s.clone();
            scaled.hbar.column_mut(k).mapv_inplace(|x| x * lambda);
            let m = nnmf_fit(&scaled, 4, &opts).unwrap();
            assert_eq!(leading_factor(&m, k).unwrap(), leading_factor(&base, k).unwrap(), "lambda {lambda}, window {k}");
        }
    }
}

#[test]
fn single_precision_fit() {
    let (s, _, _) = planted(8, 60, 2, 0.0, 13);
    let s32 = VectorizedSeries::from_matrix(8, s.hbar.mapv(|x| x as f32)).unwrap();
    let m = nnmf_fit(&s32, 2, &NnmfOptions { max_iter: 3000, tol: 0.0, seed: 1 }).unwrap();
    assert!(m.residual < 1e-3, "{}", m.residual);
}
