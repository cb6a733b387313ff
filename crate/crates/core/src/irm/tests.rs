use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

const LN2: f64 = std::f64::consts::LN_2;

fn random_graphs(n: usize, windows: usize, p: f64, seed: u64) -> BinaryGraphSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = BinaryGraphSeries::new(n, 0.0);
    for _ in 0..windows {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        g.push_edges(edges);
    }
    g
}

/// `groups` blocks of `size` nodes; dense inside, sparse across.
fn planted_blocks(groups: usize, size: usize, windows: usize, seed: u64) -> (BinaryGraphSeries, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = groups * size;
    let truth: Vec<usize> = (0..n).map(|i| i / size).collect();
    let mut g = BinaryGraphSeries::new(n, 0.0);
    for _ in 0..windows {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let p = if truth[i] == truth[j] { 0.9 } else { 0.05 };
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        g.push_edges(edges);
    }
    (g, truth)
}

fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    // Restricted growth strings.
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    fn rec(i: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for c in 0..=max + 1 {
            cur[i] = c;
            rec(i + 1, max.max(c), cur, out);
        }
    }
    if n > 0 {
        rec(1, 0, &mut cur, &mut out);
    }
    out
}

fn hyper(alpha: f64) -> IRMHyper {
    IRMHyper { crp_alpha: alpha, ..IRMHyper::default() }
}

#[test]
fn two_nodes_closed_form() {
    let mut g = BinaryGraphSeries::new(2, 0.0);
    g.push_edges([(0, 1)]);
    let h = hyper(1.0);
    // CRP gives 1/2 to each partition; either way one pair with one edge gives 1/2.
    let one = log_joint(&g, &Partition::one_cluster(2), &h).unwrap();
    let two = log_joint(&g, &Partition::singletons(2), &h).unwrap();
    assert!((one + 2.0 * LN2).abs() < 1e-12, "{one}");
    assert!((two + 2.0 * LN2).abs() < 1e-12, "{two}");
}

#[test]
fn empty_series_is_crp_prior() {
    let g = BinaryGraphSeries::new(3, 0.0);
    let h = hyper(1.0);
    let one = log_joint(&g, &Partition::one_cluster(3), &h).unwrap();
    assert!((one - (1.0f64 / 3.0).ln()).abs() < 1e-12);
    let single = log_joint(&g, &Partition::singletons(3), &h).unwrap();
    assert!((single - (1.0f64 / 6.0).ln()).abs() < 1e-12);
    // The CRP over all partitions of five nodes sums to one.
    let g5 = BinaryGraphSeries::new(5, 0.0);
    let total: f64 = all_partitions(5)
        .iter()
        .map(|p| log_joint(&g5, &Partition::canonical(p), &hyper(0.7)).unwrap().exp())
        .sum();
    assert!((total - 1.0).abs() < 1e-12, "{total}");
}

#[test]
fn partition_count_is_bell_number() {
    assert_eq!(all_partitions(6).len(), 203);
}

#[test]
fn posterior_sums_to_evidence_consistently() {
    // With every partition enumerated the normalized posterior is a distribution.
    let g = random_graphs(5, 3, 0.4, 2);
    let h = hyper(1.0);
    let lps: Vec<f64> = all_partitions(5).iter().map(|p| log_joint(&g, &Partition::canonical(p), &h).unwrap()).collect();
    let m = lps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = lps.iter().map(|l| (l - m).exp()).sum();
    assert!(z.is_finite() && z >= 1.0);
}

fn enumerated_tv(moves: impl Fn(&mut GibbsSampler, &mut ChaCha8Rng)) -> f64 {
    let g = random_graphs(6, 2, 0.5, 11);
    let h = hyper(1.0);
    let parts = all_partitions(6);
    let lps: Vec<f64> = parts.iter().map(|p| log_joint(&g, &Partition::canonical(p), &h).unwrap()).collect();
    let m = lps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = lps.iter().map(|l| (l - m).exp()).sum();
    let exact: HashMap<Vec<usize>, f64> = parts.iter().cloned().zip(lps.iter().map(|l| (l - m).exp() / z)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s = GibbsSampler::new(&g, &Partition::one_cluster(6), &h);
    let steps = 100_000;
    let mut freq: HashMap<Vec<usize>, f64> = HashMap::new();
    for _ in 0..1000 {
        moves(&mut s, &mut rng);
    }
    for _ in 0..steps {
        moves(&mut s, &mut rng);
        *freq.entry(Partition::canonical(s.assignment()).assignment).or_default() += 1.0 / steps as f64;
    }
    exact.iter().map(|(p, &q)| (freq.get(p).copied().unwrap_or(0.0) - q).abs()).sum::<f64>() / 2.0
}

#[test]
fn gibbs_matches_enumerated_posterior() {
    let tv = enumerated_tv(|s, rng| s.sweep(rng));
    assert!(tv < 0.05, "total variation {tv}");
}

#[test]
fn split_merge_matches_enumerated_posterior() {
    let tv = enumerated_tv(|s, rng| {
        s.split_merge(rng);
        s.split_merge(rng);
    });
    assert!(tv < 0.05, "total variation {tv}");
}

#[test]
fn split_merge_keeps_statistics_consistent() {
    let (g, _) = planted_blocks(3, 5, 6, 2);
    let h = hyper(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut s = GibbsSampler::new(&g, &Partition::one_cluster(15), &h);
    let mut accepted = 0;
    for _ in 0..200 {
        accepted += s.split_merge(&mut rng) as usize;
        let fresh = log_joint(&g, &Partition::canonical(s.assignment()), &h).unwrap();
        assert!((s.log_joint() - fresh).abs() < 1e-8 * fresh.abs().max(1.0));
    }
    assert!(accepted > 0);
}

#[test]
fn split_merge_separates_merged_blocks() {
    // Single-site moves cannot leave a large well-fitting cluster one node at
    // a time; a split proposal can.
    let (g, truth) = planted_blocks(2, 12, 30, 8);
    let h = hyper(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = GibbsSampler::new(&g, &Partition::one_cluster(24), &h);
    for _ in 0..200 {
        s.split_merge(&mut rng);
    }
    assert_eq!(adjusted_rand_index(s.assignment(), &truth), 1.0);
}

#[test]
fn small_alpha_merges_everything() {
    let g = random_graphs(4, 5, 0.5, 3);
    let h = IRMHyper { crp_alpha: 1e-12, n_sweeps: 20, n_restarts: 2, ..IRMHyper::default() };
    let (p, _) = fit(&g, &h).unwrap();
    assert_eq!(p.n_clusters, 1);
}

#[test]
fn fit_is_deterministic() {
    let (g, _) = planted_blocks(3, 6, 8, 4);
    let h = IRMHyper { n_sweeps: 10, n_restarts: 3, seed: 9, ..IRMHyper::default() };
    let (a, da) = fit(&g, &h).unwrap();
    let (b, db) = fit(&g, &h).unwrap();
    assert_eq!(a, b);
    assert_eq!(da.traces, db.traces);
}

#[test]
fn planted_blocks_are_recovered() {
    for init in [ChainInit::Finest, ChainInit::Sequential] {
        let (g, truth) = planted_blocks(3, 10, 20, 7);
        let h = IRMHyper { n_sweeps: 50, n_restarts: 4, init, ..IRMHyper::default() };
        let (p, diag) = fit(&g, &h).unwrap();
        assert_eq!(adjusted_rand_index(&p.assignment, &truth), 1.0, "{init:?}: {:?}", p.assignment);
        assert!(diag.warnings.is_empty(), "{:?}", diag.warnings);
        assert!(p.log_joint >= diag.one_cluster_log_joint);
        assert!(p.log_joint >= diag.singletons_log_joint);
    }
}

#[test]
fn degenerate_series_warn() {
    let mut g = BinaryGraphSeries::new(4, 0.0);
    g.push_edges([]);
    let (p, d) = fit(&g, &IRMHyper { n_sweeps: 5, n_restarts: 1, ..IRMHyper::default() }).unwrap();
    assert_eq!(p.n_clusters, 1);
    assert!(!d.warnings.is_empty());
}

#[test]
fn single_node() {
    let mut g = BinaryGraphSeries::new(1, 0.0);
    g.push_edges([]);
    let (p, _) = fit(&g, &IRMHyper { n_sweeps: 3, n_restarts: 1, ..IRMHyper::default() }).unwrap();
    assert_eq!(p.assignment, vec![0]);
    let l = link_densities::<f64>(&g, &p, &IRMHyper::default()).unwrap();
    // No pairs inside a single node: the prior mean.
    assert_eq!(l.get(0, 0, 0), 0.5);
}

#[test]
fn link_density_examples() {
    // Cluster {0,1,2} fully connected, {3} isolated: 3 pairs inside, 3 across.
    let mut g = BinaryGraphSeries::new(4, 0.0);
    g.push_edges([(0, 1), (0, 2), (1, 2)]);
    let p = Partition::canonical(&[0, 0, 0, 1]);
    let h = IRMHyper::default();
    let l = link_densities::<f64>(&g, &p, &h).unwrap();
    assert!((l.get(0, 0, 0) - 4.0 / 5.0).abs() < 1e-15);
    assert!((l.get(0, 0, 1) - 1.0 / 5.0).abs() < 1e-15);
    assert_eq!(l.get(0, 0, 1), l.get(0, 1, 0));

    // Six of seven pairs present with Beta(1,1): 7/9.
    let h2 = IRMHyper { beta_a: 1.0, beta_b: 1.0, ..IRMHyper::default() };
    let mut g2 = BinaryGraphSeries::new(8, 0.0);
    g2.push_edges((1..7).map(|j| (0, j)));
    let p2 = Partition::canonical(&[0, 1, 1, 1, 1, 1, 1, 1]);
    let l2 = link_densities::<f64>(&g2, &p2, &h2).unwrap();
    assert!((l2.get(0, 0, 1) - 7.0 / 9.0).abs() < 1e-15);
}

#[test]
fn sampler_state_matches_log_joint() {
    let (g, _) = planted_blocks(4, 5, 6, 12);
    let h = hyper(1.3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut s = GibbsSampler::sequential(&g, &h, &mut rng);
    for _ in 0..5 {
        s.sweep(&mut rng);
        let direct = log_joint(&g, &s.partition(), &h).unwrap();
        assert!((s.log_joint() - direct).abs() < 1e-8 * direct.abs(), "{} vs {direct}", s.log_joint());
    }
}

#[test]
fn identical_rows_grouped() {
    let mut g = BinaryGraphSeries::new(4, 0.0);
    g.push_edges([(0, 2), (1, 2)]);
    // 0 and 1 share the neighborhood {2}; 3 is isolated; 2 is alone.
    assert_eq!(identical_rows_partition(&g).assignment, vec![0, 0, 1, 2]);
}

#[test]
fn ari_basics() {
    assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]), 1.0);
    assert!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.0);
    assert_eq!(adjusted_rand_index(&[3], &[1]), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn log_joint_ignores_labels(seed in 0u64..1000, n in 2usize..10, k in 1usize..4) {
        let g = random_graphs(n, 3, 0.3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let p = Partition::canonical(&labels);
        let mut perm: Vec<usize> = (0..p.n_clusters).collect();
        perm.reverse();
        let q = Partition { assignment: p.assignment.iter().map(|&c| perm[c]).collect(), ..p.clone() };
        let h = hyper(0.8);
        let a = log_joint(&g, &p, &h).unwrap();
        let b = log_joint(&g, &q, &h).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn link_densities_are_permutation_equivariant(seed in 0u64..1000, n in 2usize..12) {
        let g = random_graphs(n, 4, 0.4, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 77);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let p = Partition::canonical(&labels);
        // Reverse the node order in both the graphs and the partition.
        let rev = |i: usize| n - 1 - i;
        let mut g2 = BinaryGraphSeries::new(n, 0.0);
        for k in 0..g.n_windows() {
            let mut e = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if g.has_edge(k, i, j) {
                        e.push((rev(j), rev(i)));
                    }
                }
            }
            g2.push_edges(e);
        }
        let q = Partition { assignment: (0..n).map(|i| p.assignment[rev(i)]).collect(), ..p.clone() };
        let h = IRMHyper::default();
        let a = link_densities::<f64>(&g, &p, &h).unwrap();
        let b = link_densities::<f64>(&g2, &q, &h).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.values.iter().all(|&v| v > 0.0 && v < 1.0));
        let la = log_joint(&g, &p, &h).unwrap();
        let lb = log_joint(&g2, &q, &h).unwrap();
        prop_assert!((la - lb).abs() <= 1e-12 * la.abs());
    }
}
