//! Infinite relational model over a binary graph series: a CRP partition of
//! the nodes with a Beta-Bernoulli link probability per cluster pair and
//! window, collapsed and sampled with Gibbs sweeps plus split-merge moves.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imi::BinaryGraphSeries;
use crate::scalar::Real;

mod sampler;

pub use sampler::GibbsSampler;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IRMHyper {
    pub crp_alpha: f64,
    pub beta_a: f64,
    pub beta_b: f64,
    pub n_sweeps: usize,
    pub n_restarts: usize,
    pub seed: u64,
    pub init: ChainInit,
    /// Split-merge proposals after each Gibbs sweep.
    pub split_merge: usize,
}

/// Starting state of each chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainInit {
    /// Every node alone, except nodes with identical adjacency in every
    /// window, which start together.
    #[default]
    Finest,
    /// Nodes added one by one in random order, each drawn from its
    /// conditional given the nodes already placed.
    Sequential,
}

impl Default for IRMHyper {
    fn default() -> Self {
        Self {
            crp_alpha: 1.0,
            beta_a: 1.0,
            beta_b: 1.0,
            n_sweeps: 200,
            n_restarts: 4,
            seed: 0,
            init: ChainInit::default(),
            split_merge: 5,
        }
    }
}

impl IRMHyper {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !(pos(self.crp_alpha) && pos(self.beta_a) && pos(self.beta_b)) {
            return Err(Error::Config(format!("IRM hyperparameters must be positive: {self:?}")));
        }
        if self.n_sweeps == 0 || self.n_restarts == 0 {
            return Err(Error::Config("n_sweeps and n_restarts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: Vec<usize>,
    pub n_clusters: usize,
    pub log_joint: f64,
}

impl Partition {
    /// Relabels clusters by order of first appearance. `log_joint` is left NaN.
    pub fn canonical(labels: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let assignment: Vec<usize> = labels
            .iter()
            .map(|&l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect();
        Self { n_clusters: map.len(), assignment, log_joint: f64::NAN }
    }

    pub fn one_cluster(n: usize) -> Self {
        Self::canonical(&vec![0; n])
    }

    pub fn singletons(n: usize) -> Self {
        Self::canonical(&(0..n).collect::<Vec<_>>())
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.n_clusters];
        for &c in &self.assignment {
            if c >= self.n_clusters {
                return Err(Error::InvalidState(format!("cluster id {c} >= n_clusters {}", self.n_clusters)));
            }
            seen[c] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidState("partition has an empty cluster".into()));
        }
        Ok(())
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_clusters];
        for &c in &self.assignment {
            s[c] += 1;
        }
        s
    }

    pub fn members(&self, c: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == c).collect()
    }
}

/// Present-edge counts per window and unordered cluster pair, plus the
/// number of possible pairs per block.
struct BlockCounts {
    k: usize,
    /// `[window][c * k + d]`, symmetric.
    pos: Vec<u32>,
    /// `[c * k + d]`
    pairs: Vec<usize>,
}

fn block_counts(graphs: &BinaryGraphSeries, partition: &Partition) -> Result<BlockCounts> {
    partition.validate()?;
    let n = graphs.n_nodes();
    if partition.assignment.len() != n {
        return Err(Error::InvalidState(format!(
            "partition covers {} signals, graphs have {n}",
            partition.assignment.len()
        )));
    }
    let k = partition.n_clusters;
    let words = graphs.words_per_row();
    let mut masks = vec![0u64; k * words];
    for (i, &c) in partition.assignment.iter().enumerate() {
        masks[c * words + i / 64] |= 1 << (i % 64);
    }
    let sizes = partition.sizes();
    let mut pairs = vec![0; k * k];
    for c in 0..k {
        for d in 0..k {
            pairs[c * k + d] = if c == d { sizes[c] * (sizes[c] - 1) / 2 } else { sizes[c] * sizes[d] };
        }
    }
    let mut pos = vec![0u32; graphs.n_windows() * k * k];
    for w in 0..graphs.n_windows() {
        let out = &mut pos[w * k * k..(w + 1) * k * k];
        for (i, &c) in partition.assignment.iter().enumerate() {
            let row = graphs.row(w, i);
            for d in 0..k {
                let m = &masks[d * words..(d + 1) * words];
                out[c * k + d] += row.iter().zip(m).map(|(a, b)| (a & b).count_ones()).sum::<u32>();
            }
        }
        // Within-cluster edges were seen from both ends.
        for c in 0..k {
            out[c * k + c] /= 2;
        }
    }
    Ok(BlockCounts { k, pos, pairs })
}

/// Log CRP prior of the partition plus the collapsed Beta-Bernoulli
/// likelihood of every window's blocks.
pub fn log_joint(graphs: &BinaryGraphSeries, partition: &Partition, hyper: &IRMHyper) -> Result<f64> {
    hyper.validate()?;
    let counts = block_counts(graphs, partition)?;
    let (a, b, alpha) = (hyper.beta_a, hyper.beta_b, hyper.crp_alpha);
    let n = partition.assignment.len() as f64;
    let lg = libm::lgamma;
    let mut lp = lg(alpha) - lg(alpha + n);
    for s in partition.sizes() {
        lp += alpha.ln() + lg(s as f64);
    }
    let ln_beta = |x: f64, y: f64| lg(x) + lg(y) - lg(x + y);
    let base = ln_beta(a, b);
    let k = counts.k;
    for w in 0..graphs.n_windows() {
        for c in 0..k {
            for d in c..k {
                let p = counts.pos[w * k * k + c * k + d] as f64;
                let q = counts.pairs[c * k + d] as f64 - p;
                lp += ln_beta(p + a, q + b) - base;
            }
        }
    }
    Ok(lp)
}

/// One Gibbs pass from `partition`; the result is canonically labeled.
pub fn gibbs_sweep<R: rand::Rng>(
    graphs: &BinaryGraphSeries,
    partition: &Partition,
    hyper: &IRMHyper,
    rng: &mut R,
) -> Result<Partition> {
    hyper.validate()?;
    partition.validate()?;
    if partition.assignment.len() != graphs.n_nodes() {
        return Err(Error::InvalidState("partition does not cover the graph nodes".into()));
    }
    let mut s = GibbsSampler::new(graphs, partition, hyper);
    s.sweep(rng);
    Ok(s.partition())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Log joint after initialization and after every sweep, per chain.
    pub traces: Vec<Vec<f64>>,
    pub best_chain: usize,
    /// 0 = the initial state.
    pub best_sweep: usize,
    pub one_cluster_log_joint: f64,
    pub singletons_log_joint: f64,
    pub warnings: Vec<String>,
}

/// Runs `n_restarts` independent chains and returns the highest-scoring
/// partition visited. Chains run in parallel; each is seeded from
/// `(seed, chain)` so the result does not depend on scheduling.
pub fn fit(graphs: &BinaryGraphSeries, hyper: &IRMHyper) -> Result<(Partition, FitDiagnostics)> {
    hyper.validate()?;
    let n = graphs.n_nodes();
    if n == 0 || graphs.n_windows() == 0 {
        return Err(Error::Config("IRM needs at least one node and one window".into()));
    }
    let mut warnings = Vec::new();
    let edges: usize = (0..graphs.n_windows()).map(|k| graphs.edge_count(k)).sum();
    let possible = graphs.n_windows() * n * (n - 1) / 2;
    if edges == 0 {
        warnings.push("graph series has no edges; the posterior concentrates on one cluster".to_string());
    } else if edges == possible {
        warnings.push("graph series is complete; the posterior concentrates on one cluster".to_string());
    }

    let finest = identical_rows_partition(graphs);
    let chains: Vec<(Vec<usize>, f64, usize, Vec<f64>)> = (0..hyper.n_restarts)
        .into_par_iter()
        .map(|chain| {
            let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
            rng.set_stream(chain as u64);
            let mut s = match hyper.init {
                ChainInit::Finest => GibbsSampler::new(graphs, &finest, hyper),
                ChainInit::Sequential => GibbsSampler::sequential(graphs, hyper, &mut rng),
            };
            let mut trace = Vec::with_capacity(hyper.n_sweeps + 1);
            let mut best = (s.assignment().to_vec(), s.log_joint(), 0);
            trace.push(best.1);
            for sweep in 1..=hyper.n_sweeps {
                s.sweep(&mut rng);
                for _ in 0..hyper.split_merge {
                    s.split_merge(&mut rng);
                }
                let lp = s.log_joint();
                trace.push(lp);
                if lp > best.1 {
                    best = (s.assignment().to_vec(), lp, sweep);
                }
            }
            (best.0, best.1, best.2, trace)
        })
        .collect();

    let mut best_chain = 0;
    for (c, ch) in chains.iter().enumerate() {
        if ch.1 > chains[best_chain].1 {
            best_chain = c;
        }
    }
    let mut partition = Partition::canonical(&chains[best_chain].0);
    partition.log_joint = log_joint(graphs, &partition, hyper)?;

    let one = log_joint(graphs, &Partition::one_cluster(n), hyper)?;
    let single = if n <= 2000 { log_joint(graphs, &Partition::singletons(n), hyper)? } else { f64::NAN };
    if partition.log_joint < one || partition.log_joint < single {
        warnings.push(format!(
            "MAP log joint {:.3} is below a trivial partition (one cluster {one:.3}, singletons {single:.3})",
            partition.log_joint
        ));
    }
    let diagnostics = FitDiagnostics {
        best_sweep: chains[best_chain].2,
        best_chain,
        traces: chains.into_iter().map(|c| c.3).collect(),
        one_cluster_log_joint: one,
        singletons_log_joint: single,
        warnings,
    };
    Ok((partition, diagnostics))
}

/// Groups nodes whose neighborhoods coincide in every window.
pub fn identical_rows_partition(graphs: &BinaryGraphSeries) -> Partition {
    let n = graphs.n_nodes();
    let mut seen: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
    let labels: Vec<usize> = (0..n)
        .map(|i| {
            let key: Vec<u64> = (0..graphs.n_windows()).flat_map(|k| graphs.row(k, i).iter().copied()).collect();
            let next = seen.len();
            *seen.entry(key).or_insert(next)
        })
        .collect();
    Partition::canonical(&labels)
}

/// Per-window posterior mean link probability between clusters.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkDensitySeries<T> {
    pub n_clusters: usize,
    pub n_windows: usize,
    /// `[window][c][d]`, row-major.
    pub values: Vec<T>,
}

impl<T: Real> LinkDensitySeries<T> {
    #[inline]
    pub fn get(&self, k: usize, c: usize, d: usize) -> T {
        self.values[(k * self.n_clusters + c) * self.n_clusters + d]
    }

    pub fn window(&self, k: usize) -> &[T] {
        let s = self.n_clusters * self.n_clusters;
        &self.values[k * s..(k + 1) * s]
    }
}

pub fn link_densities<T: Real>(
    graphs: &BinaryGraphSeries,
    partition: &Partition,
    hyper: &IRMHyper,
) -> Result<LinkDensitySeries<T>> {
    hyper.validate()?;
    let counts = block_counts(graphs, partition)?;
    let (a, b) = (hyper.beta_a, hyper.beta_b);
    let values = counts
        .pos
        .chunks(counts.k * counts.k)
        .flat_map(|w| {
            w.iter().zip(&counts.pairs).map(move |(&p, &m)| T::lit((p as f64 + a) / (m as f64 + a + b)))
        })
        .collect();
    Ok(LinkDensitySeries { n_clusters: counts.k, n_windows: graphs.n_windows(), values })
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(x: &[usize], y: &[usize]) -> f64 {
    assert_eq!(x.len(), y.len(), "labelings differ in length");
    let n = x.len();
    if n < 2 {
        return 1.0;
    }
    let c2 = |m: usize| (m * m.saturating_sub(1) / 2) as f64;
    let mut table = std::collections::HashMap::new();
    let mut rows = std::collections::HashMap::new();
    let mut cols = std::collections::HashMap::new();
    for (&a, &b) in x.iter().zip(y) {
        *table.entry((a, b)).or_insert(0usize) += 1;
        *rows.entry(a).or_insert(0usize) += 1;
        *cols.entry(b).or_insert(0usize) += 1;
    }
    let index: f64 = table.values().map(|&m| c2(m)).sum();
    let sa: f64 = rows.values().map(|&m| c2(m)).sum();
    let sb: f64 = cols.values().map(|&m| c2(m)).sum();
    let expected = sa * sb / c2(n);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests;
