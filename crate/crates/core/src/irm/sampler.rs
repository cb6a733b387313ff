//! Collapsed Gibbs state for the CRP / Beta-Bernoulli block model.
//!
//! Each block `(c, d)` keeps its per-window edge count and a histogram of
//! those counts. Moving a node only changes the windows where it has edges,
//! so a candidate cluster is scored from the histogram plus the node's own
//! sparse edge counts instead of a pass over every window.

use rand::Rng;

use super::{IRMHyper, Partition};
use crate::imi::BinaryGraphSeries;

const NONE: usize = usize::MAX;

/// `ln Γ(x + a)`, `ln Γ(x + b)`, `ln Γ(x + a + b)` for integer `x`.
pub(crate) struct Tables {
    ga: Vec<f64>,
    gb: Vec<f64>,
    gab: Vec<f64>,
}

impl Tables {
    pub(crate) fn new(a: f64, b: f64, max: usize) -> Self {
        let mk = |off: f64| (0..=max).map(|x| libm::lgamma(x as f64 + off)).collect();
        Self { ga: mk(a), gb: mk(b), gab: mk(a + b) }
    }

    /// `ln B(p + a, q + b) - ln B(a, b)`.
    #[inline]
    fn block(&self, p: usize, q: usize) -> f64 {
        self.ga[p] + self.gb[q] - self.gab[p + q] - (self.ga[0] + self.gb[0] - self.gab[0])
    }
}

struct Block {
    pos: Vec<u32>,
    /// `(edge count, number of windows)` sorted by count.
    hist: Vec<(u32, u32)>,
}

impl Block {
    fn zero(windows: usize) -> Self {
        Self {
            pos: vec![0; windows],
            hist: if windows > 0 { vec![(0, windows as u32)] } else { Vec::new() },
        }
    }

    fn hist_add(&mut self, p: u32, delta: i64) {
        match self.hist.binary_search_by_key(&p, |h| h.0) {
            Ok(i) => {
                let c = self.hist[i].1 as i64 + delta;
                debug_assert!(c >= 0);
                if c == 0 {
                    self.hist.remove(i);
                } else {
                    self.hist[i].1 = c as u32;
                }
            }
            Err(i) => {
                debug_assert!(delta > 0);
                self.hist.insert(i, (p, delta as u32));
            }
        }
    }

    fn shift(&mut self, k: usize, delta: i64) {
        let old = self.pos[k];
        let new = (old as i64 + delta) as u32;
        self.pos[k] = new;
        self.hist_add(old, -1);
        self.hist_add(new, 1);
    }
}

pub struct GibbsSampler<'g> {
    graphs: &'g BinaryGraphSeries,
    alpha: f64,
    tables: Tables,
    z: Vec<usize>,
    sizes: Vec<usize>,
    /// Occupied cluster slots, ascending.
    active: Vec<usize>,
    cap: usize,
    blocks: Vec<Option<Block>>,
    // Scratch: the moving node's edge counts per cluster slot, as (window, count).
    edges: Vec<Vec<(u32, u32)>>,
    touched: Vec<usize>,
    counts: Vec<u32>,
    weights: Vec<f64>,
}

impl<'g> GibbsSampler<'g> {
    fn empty(graphs: &'g BinaryGraphSeries, hyper: &IRMHyper) -> Self {
        let n = graphs.n_nodes();
        let cap = n + 1;
        Self {
            graphs,
            alpha: hyper.crp_alpha,
            tables: Tables::new(hyper.beta_a, hyper.beta_b, n * (n + 1) / 2 + n + 2),
            z: vec![NONE; n],
            sizes: vec![0; cap],
            active: Vec::new(),
            cap,
            blocks: (0..cap * cap).map(|_| None).collect(),
            edges: vec![Vec::new(); cap],
            touched: Vec::new(),
            counts: vec![0; cap],
            weights: Vec::new(),
        }
    }

    /// Sampler state holding `partition`.
    pub fn new(graphs: &'g BinaryGraphSeries, partition: &Partition, hyper: &IRMHyper) -> Self {
        let mut s = Self::empty(graphs, hyper);
        for (i, &c) in partition.assignment.iter().enumerate() {
            s.collect_edges(i);
            s.insert(i, c);
        }
        s
    }

    /// Adds nodes one at a time in a random order, each drawn from its
    /// conditional given the nodes placed before it.
    pub fn sequential<R: Rng>(graphs: &'g BinaryGraphSeries, hyper: &IRMHyper, rng: &mut R) -> Self {
        let mut s = Self::empty(graphs, hyper);
        for i in shuffled(graphs.n_nodes(), rng) {
            s.collect_edges(i);
            let c = s.draw(rng);
            s.insert(i, c);
        }
        s
    }

    pub fn n_clusters(&self) -> usize {
        self.active.len()
    }

    /// One pass over all nodes in a fresh random order.
    pub fn sweep<R: Rng>(&mut self, rng: &mut R) {
        for i in shuffled(self.z.len(), rng) {
            let c = self.z[i];
            self.collect_edges(i);
            self.remove(i, c);
            let c = self.draw(rng);
            self.insert(i, c);
        }
    }

    /// One sequentially allocated split-merge proposal, accepted with the
    /// Metropolis-Hastings ratio. Two distinct nodes are drawn; if they share
    /// a cluster it is split around them, otherwise their clusters merge.
    /// Returns whether the proposal was accepted.
    pub fn split_merge<R: Rng>(&mut self, rng: &mut R) -> bool {
        let n = self.z.len();
        if n < 2 {
            return false;
        }
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (ci, cj) = (self.z[i], self.z[j]);
        let before = self.log_joint();
        let members: Vec<usize> = (0..n).filter(|&k| self.z[k] == ci || self.z[k] == cj).collect();
        let rest: Vec<usize> = shuffled(members.len(), rng)
            .into_iter()
            .map(|x| members[x])
            .filter(|&k| k != i && k != j)
            .collect();
        let old: Vec<usize> = members.iter().map(|&k| self.z[k]).collect();
        for &k in &members {
            self.take(k);
        }

        if ci == cj {
            let a = self.free_slot();
            self.collect_edges(i);
            self.insert(i, a);
            let b = self.free_slot();
            self.collect_edges(j);
            self.insert(j, b);
            let mut log_q = 0.0;
            for &k in &rest {
                self.collect_edges(k);
                let (p_a, _) = self.pair_weights(a, b);
                let to_a = rng.random::<f64>() < p_a;
                log_q += if to_a { p_a } else { 1.0 - p_a }.ln();
                self.insert(k, if to_a { a } else { b });
            }
            if accept(self.log_joint() - before - log_q, rng) {
                return true;
            }
            for &k in &members {
                self.take(k);
            }
            for (&k, &c) in members.iter().zip(&old) {
                self.collect_edges(k);
                self.insert(k, c);
            }
            false
        } else {
            // Replay the split that would recreate the current state to get
            // the reverse proposal probability; this also restores it.
            self.collect_edges(i);
            self.insert(i, ci);
            self.collect_edges(j);
            self.insert(j, cj);
            let mut log_q = 0.0;
            for &k in &rest {
                let c = old[members.binary_search(&k).expect("member")];
                self.collect_edges(k);
                let (p_a, _) = self.pair_weights(ci, cj);
                log_q += if c == ci { p_a } else { 1.0 - p_a }.ln();
                self.insert(k, c);
            }
            let moved: Vec<usize> = members.iter().copied().filter(|&k| self.z[k] == cj).collect();
            for &k in &moved {
                self.relabel(k, ci);
            }
            if accept(self.log_joint() - before + log_q, rng) {
                return true;
            }
            for &k in &moved {
                self.relabel(k, cj);
            }
            false
        }
    }

    fn take(&mut self, k: usize) {
        self.collect_edges(k);
        self.remove(k, self.z[k]);
    }

    fn relabel(&mut self, k: usize, c: usize) {
        self.collect_edges(k);
        self.remove(k, self.z[k]);
        self.insert(k, c);
    }

    fn free_slot(&self) -> usize {
        (0..self.cap).find(|&s| self.sizes[s] == 0).expect("free slot")
    }

    /// Conditional probability of joining `a` rather than `b` for the
    /// collected node, restricted to those two clusters.
    fn pair_weights(&self, a: usize, b: usize) -> (f64, f64) {
        let la = (self.sizes[a] as f64).ln() + self.delta(Some(a));
        let lb = (self.sizes[b] as f64).ln() + self.delta(Some(b));
        let p_a = 1.0 / (1.0 + (lb - la).exp());
        (p_a, 1.0 - p_a)
    }

    /// Current assignment with clusters numbered by first appearance.
    pub fn partition(&self) -> Partition {
        let mut p = Partition::canonical(&self.z);
        p.log_joint = self.log_joint();
        p
    }

    pub fn assignment(&self) -> &[usize] {
        &self.z
    }

    /// Log joint of the current state from the maintained block statistics.
    pub fn log_joint(&self) -> f64 {
        let n = self.z.len();
        let mut lp = libm::lgamma(self.alpha) - libm::lgamma(self.alpha + n as f64);
        for &c in &self.active {
            lp += self.alpha.ln() + libm::lgamma(self.sizes[c] as f64);
        }
        for (x, &c) in self.active.iter().enumerate() {
            for &d in &self.active[x..] {
                let m = self.pairs(c, d);
                for &(p, w) in &self.block(c, d).hist {
                    lp += w as f64 * self.tables.block(p as usize, m - p as usize);
                }
            }
        }
        lp
    }

    #[inline]
    fn key(&self, c: usize, d: usize) -> usize {
        if c <= d {
            c * self.cap + d
        } else {
            d * self.cap + c
        }
    }

    fn block(&self, c: usize, d: usize) -> &Block {
        self.blocks[self.key(c, d)].as_ref().expect("block of active clusters")
    }

    fn block_mut(&mut self, c: usize, d: usize) -> &mut Block {
        let k = self.key(c, d);
        self.blocks[k].as_mut().expect("block of active clusters")
    }

    /// Possible node pairs between (or within) clusters.
    #[inline]
    fn pairs(&self, c: usize, d: usize) -> usize {
        if c == d {
            self.sizes[c] * self.sizes[c].saturating_sub(1) / 2
        } else {
            self.sizes[c] * self.sizes[d]
        }
    }

    /// Per-cluster edge counts of node `i` to currently assigned nodes.
    fn collect_edges(&mut self, i: usize) {
        for &d in &self.touched {
            self.edges[d].clear();
        }
        self.touched.clear();
        let g = self.graphs;
        let mut hit = Vec::new();
        for k in 0..g.n_windows() {
            for (wi, &word) in g.row(k, i).iter().enumerate() {
                let mut w = word;
                while w != 0 {
                    let j = wi * 64 + w.trailing_zeros() as usize;
                    w &= w - 1;
                    let d = self.z[j];
                    if j == i || d == NONE {
                        continue;
                    }
                    if self.counts[d] == 0 {
                        hit.push(d);
                    }
                    self.counts[d] += 1;
                }
            }
            for &d in &hit {
                if self.edges[d].is_empty() {
                    self.touched.push(d);
                }
                self.edges[d].push((k as u32, self.counts[d]));
                self.counts[d] = 0;
            }
            hit.clear();
        }
    }

    fn open(&mut self, c: usize) {
        let w = self.graphs.n_windows();
        let pos = self.active.binary_search(&c).expect_err("slot already open");
        self.active.insert(pos, c);
        for x in 0..self.active.len() {
            let k = self.key(c, self.active[x]);
            self.blocks[k] = Some(Block::zero(w));
        }
    }

    fn insert(&mut self, i: usize, c: usize) {
        if self.sizes[c] == 0 && self.active.binary_search(&c).is_err() {
            self.open(c);
        }
        for t in 0..self.touched.len() {
            let d = self.touched[t];
            let list = std::mem::take(&mut self.edges[d]);
            let b = self.block_mut(c, d);
            for &(k, e) in &list {
                b.shift(k as usize, e as i64);
            }
            self.edges[d] = list;
        }
        self.sizes[c] += 1;
        self.z[i] = c;
    }

    fn remove(&mut self, i: usize, c: usize) {
        for t in 0..self.touched.len() {
            let d = self.touched[t];
            let list = std::mem::take(&mut self.edges[d]);
            let b = self.block_mut(c, d);
            for &(k, e) in &list {
                b.shift(k as usize, -(e as i64));
            }
            self.edges[d] = list;
        }
        self.sizes[c] -= 1;
        self.z[i] = NONE;
        if self.sizes[c] == 0 {
            for x in 0..self.active.len() {
                let k = self.key(c, self.active[x]);
                self.blocks[k] = None;
            }
            let pos = self.active.binary_search(&c).expect("active slot");
            self.active.remove(pos);
        }
    }

    /// Log likelihood ratio of adding the collected node to cluster `c`
    /// (`None`: a new cluster).
    fn delta(&self, c: Option<usize>) -> f64 {
        let t = &self.tables;
        let w = self.graphs.n_windows() as f64;
        let mut s = 0.0;
        for &d in &self.active {
            let add = self.sizes[d];
            let list = &self.edges[d];
            match c {
                Some(c) => {
                    let m = self.pairs(c, d);
                    let b = self.block(c, d);
                    let phi = |p: usize| t.gb[m - p + add] - t.gb[m - p];
                    for &(p, cnt) in &b.hist {
                        s += cnt as f64 * phi(p as usize);
                    }
                    for &(k, e) in list {
                        let p = b.pos[k as usize] as usize;
                        let e = e as usize;
                        s += t.ga[p + e] - t.ga[p] + t.gb[m - p + add - e] - t.gb[m - p] - phi(p);
                    }
                    s -= w * (t.gab[m + add] - t.gab[m]);
                }
                None => {
                    s += w * (t.gb[add] - t.gb[0]);
                    for &(_, e) in list {
                        let e = e as usize;
                        s += t.ga[e] - t.ga[0] + t.gb[add - e] - t.gb[add];
                    }
                    s -= w * (t.gab[add] - t.gab[0]);
                }
            }
        }
        s
    }

    /// Samples a cluster slot for the collected (unassigned) node.
    fn draw<R: Rng>(&mut self, rng: &mut R) -> usize {
        let mut weights = std::mem::take(&mut self.weights);
        weights.clear();
        for &c in &self.active {
            weights.push((self.sizes[c] as f64).ln() + self.delta(Some(c)));
        }
        weights.push(self.alpha.ln() + self.delta(None));
        let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for w in weights.iter_mut() {
            *w = (*w - max).exp();
            total += *w;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = weights.len() - 1;
        for (x, &w) in weights.iter().enumerate() {
            if u < w {
                pick = x;
                break;
            }
            u -= w;
        }
        self.weights = weights;
        if pick < self.active.len() {
            self.active[pick]
        } else {
            self.free_slot()
        }
    }
}

fn accept<R: Rng>(log_ratio: f64, rng: &mut R) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>() < log_ratio.exp()
}

fn shuffled<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}
