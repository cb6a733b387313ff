//! Sliding-window ("instantaneous") mutual information between all signal
//! pairs, and its thresholded binary graph series.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Hz.
    pub analysis_rate: u32,
    /// Samples per window, at the analysis rate.
    pub window_len: usize,
    /// Samples between consecutive window ends.
    pub step: usize,
    pub n_bins: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            analysis_rate: 100,
            window_len: 10,
            step: 1,
            n_bins: 4,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 || self.n_bins < 2 || self.step < 1 || self.analysis_rate == 0 {
            return Err(Error::Config(format!(
                "window spec needs window_len >= 2, n_bins >= 2, step >= 1, rate > 0: {self:?}"
            )));
        }
        if self.n_bins > 255 || self.window_len > u16::MAX as usize {
            return Err(Error::Config("n_bins must fit a byte and window_len a u16".into()));
        }
        Ok(())
    }

    /// Number of windows over a stream of `len` samples.
    pub fn window_count(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.step + 1
        }
    }

    /// Exclusive end sample of window `w`.
    pub fn window_end(&self, w: usize) -> usize {
        self.window_len + w * self.step
    }
}

/// Multichannel signal sampled on a common clock, stored frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalStream<T> {
    pub times: Vec<T>,
    pub n_signals: usize,
    pub data: Vec<T>,
}

impl<T: Real> SignalStream<T> {
    pub fn new(n_signals: usize) -> Self {
        Self { times: Vec::new(), n_signals, data: Vec::new() }
    }

    pub fn from_frames(times: Vec<T>, frames: &[Vec<T>]) -> Result<Self> {
        let n_signals = frames.first().map_or(0, Vec::len);
        let mut s = Self::new(n_signals);
        if times.len() != frames.len() {
            return Err(Error::Config("one timestamp per frame required".into()));
        }
        for (t, f) in times.into_iter().zip(frames) {
            s.push(t, f)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, t: T, frame: &[T]) -> Result<()> {
        if frame.len() != self.n_signals {
            return Err(Error::Config(format!(
                "frame has {} signals, stream expects {}",
                frame.len(),
                self.n_signals
            )));
        }
        self.times.push(t);
        self.data.extend_from_slice(frame);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn frame(&self, k: usize) -> &[T] {
        &self.data[k * self.n_signals..(k + 1) * self.n_signals]
    }

    /// Signal-major copy: `columns[i]` is the full trace of signal `i`.
    pub fn columns(&self) -> Vec<Vec<T>> {
        let mut cols = vec![Vec::with_capacity(self.len()); self.n_signals];
        for k in 0..self.len() {
            for (c, &v) in cols.iter_mut().zip(self.frame(k)) {
                c.push(v);
            }
        }
        cols
    }

    /// Swaps signals `a` and `b` in every frame.
    pub fn swap_signals(&mut self, a: usize, b: usize) {
        for k in 0..self.len() {
            self.data.swap(k * self.n_signals + a, k * self.n_signals + b);
        }
    }
}

/// Keeps every `(sim_rate / analysis_rate)`-th frame, ending each kept block
/// on its last frame, so 1 kHz frames at 1, 2, ... ms become 100 Hz frames at
/// 10, 20, ... ms.
pub fn downsample<T: Real>(stream: &SignalStream<T>, sim_rate: u32, spec: &WindowSpec) -> Result<SignalStream<T>> {
    if spec.analysis_rate == 0 || sim_rate % spec.analysis_rate != 0 {
        return Err(Error::Config(format!(
            "analysis rate {} Hz must divide the simulation rate {sim_rate} Hz",
            spec.analysis_rate
        )));
    }
    let factor = (sim_rate / spec.analysis_rate) as usize;
    let mut out = SignalStream::new(stream.n_signals);
    for k in (factor - 1..stream.len()).step_by(factor) {
        out.times.push(stream.times[k]);
        out.data.extend_from_slice(stream.frame(k));
    }
    Ok(out)
}

/// Centers the window and assigns each sample to one of `n_bins` equal-width
/// bins spanning its own `[min, max]`. A constant window maps to bin 0.
pub fn bin_window<T: Real>(x: &[T], n_bins: usize, out: &mut Vec<u8>) {
    out.clear();
    if x.is_empty() {
        return;
    }
    let mean = x.iter().copied().sum::<T>() / T::from_usize_lossy(x.len());
    let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
    for &v in x {
        let c = v - mean;
        lo = lo.min(c);
        hi = hi.max(c);
    }
    let span = hi - lo;
    if !(span > T::zero()) {
        out.resize(x.len(), 0);
        return;
    }
    let nb = T::from_usize_lossy(n_bins);
    let top = (n_bins - 1) as u8;
    out.extend(x.iter().map(|&v| {
        let b = (((v - mean) - lo) / span * nb).floor();
        b.to_u8().map_or(top, |b| b.min(top))
    }));
}

/// Lookup of `c ln c` for window counts `0..=n`.
#[derive(Clone, Debug)]
pub struct CountEntropyTable<T> {
    xlogx: Vec<T>,
}

impl<T: Real> CountEntropyTable<T> {
    pub fn new(n: usize) -> Self {
        let xlogx = (0..=n)
            .map(|c| if c < 2 { T::zero() } else { T::from_usize_lossy(c) * T::from_usize_lossy(c).ln() })
            .collect();
        Self { xlogx }
    }

    pub fn samples(&self) -> usize {
        self.xlogx.len() - 1
    }

    #[inline]
    fn get(&self, c: usize) -> T {
        self.xlogx[c]
    }
}

/// Binned window of one signal, with its marginal summary.
#[derive(Clone, Debug)]
pub struct BinnedWindow<T> {
    pub bins: Vec<u8>,
    /// `sum_a c_a ln c_a` over the marginal histogram.
    marginal: T,
    constant: bool,
}

impl<T: Real> BinnedWindow<T> {
    pub fn new(x: &[T], n_bins: usize, table: &CountEntropyTable<T>) -> Self {
        let mut bins = Vec::with_capacity(x.len());
        bin_window(x, n_bins, &mut bins);
        let mut counts = [0usize; 256];
        for &b in &bins {
            counts[b as usize] += 1;
        }
        let marginal = counts[..n_bins].iter().map(|&c| table.get(c)).sum();
        let constant = counts[..n_bins].iter().filter(|&&c| c > 0).count() <= 1;
        Self { bins, marginal, constant }
    }

    /// Plug-in entropy of the binned window, nats.
    pub fn entropy(&self, table: &CountEntropyTable<T>) -> T {
        if self.constant {
            return T::zero();
        }
        let n = self.bins.len();
        ((table.get(n) - self.marginal) / T::from_usize_lossy(n)).max(T::zero())
    }
}

/// Plug-in MI of two binned windows of equal length.
///
/// The joint term is accumulated by count multiplicity so the result does
/// not depend on argument order.
pub fn mi_binned<T: Real>(x: &BinnedWindow<T>, y: &BinnedWindow<T>, n_bins: usize, table: &CountEntropyTable<T>) -> T {
    if x.constant || y.constant {
        return T::zero();
    }
    let n = x.bins.len();
    debug_assert_eq!(n, y.bins.len());
    let mut joint = [0u16; 256];
    for (&a, &b) in x.bins.iter().zip(&y.bins) {
        joint[a as usize * n_bins + b as usize] += 1;
    }
    let mut mult = [0u32; 64];
    let mut mult_big: Vec<u32> = Vec::new();
    let small = n < mult.len();
    if !small {
        mult_big = vec![0; n + 1];
    }
    for &c in &joint[..n_bins * n_bins] {
        if c > 1 {
            if small {
                mult[c as usize] += 1;
            } else {
                mult_big[c as usize] += 1;
            }
        }
    }
    let counts: &[u32] = if small { &mult[..=n] } else { &mult_big };
    let mut j = T::zero();
    for (c, &m) in counts.iter().enumerate().skip(2) {
        if m > 0 {
            j += T::from_u32(m).expect("count") * table.get(c);
        }
    }
    let mi = (j + table.get(n) - (x.marginal + y.marginal)) / T::from_usize_lossy(n);
    mi.max(T::zero())
}

/// Plug-in mutual information (nats) between two equally long windows after
/// centering and equal-width binning.
pub fn mutual_information<T: Real>(x: &[T], y: &[T], n_bins: usize) -> Result<T> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Config(format!(
            "windows must have equal length >= 2 (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    if !(2..=16).contains(&n_bins) {
        return Err(Error::Config(format!("n_bins must be in 2..=16, got {n_bins}")));
    }
    let table = CountEntropyTable::new(x.len());
    let bx = BinnedWindow::new(x, n_bins, &table);
    let by = BinnedWindow::new(y, n_bins, &table);
    Ok(mi_binned(&bx, &by, n_bins, &table))
}

/// Symmetric `N_s x N_s` MI matrix stored as its packed upper triangle
/// (diagonal included, row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct MIMatrix<T> {
    pub n: usize,
    /// Exclusive end sample of the window at the analysis rate.
    pub window_end_index: usize,
    pub packed: Vec<T>,
}

#[inline]
pub fn packed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

impl<T: Real> MIMatrix<T> {
    pub fn get(&self, i: usize, j: usize) -> T {
        self.packed[packed_index(self.n, i, j)]
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }
}

/// MI matrix of the window ending (exclusively) at sample `end`.
pub fn imi_window<T: Real>(columns: &[Vec<T>], end: usize, spec: &WindowSpec) -> MIMatrix<T> {
    let n = columns.len();
    let start = end - spec.window_len;
    let table = CountEntropyTable::new(spec.window_len);
    let binned: Vec<BinnedWindow<T>> = columns
        .iter()
        .map(|c| BinnedWindow::new(&c[start..end], spec.n_bins, &table))
        .collect();
    let mut packed = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        packed.push(binned[i].entropy(&table));
        for j in i + 1..n {
            packed.push(mi_binned(&binned[i], &binned[j], spec.n_bins, &table));
        }
    }
    MIMatrix { n, window_end_index: end, packed }
}

/// Computes every window's MI matrix, handing them to `sink` in window
/// order. Windows within a chunk are evaluated in parallel; results do not
/// depend on the schedule.
pub fn for_each_imi<T: Real, F>(stream: &SignalStream<T>, spec: &WindowSpec, mut sink: F) -> Result<usize>
where
    F: FnMut(usize, MIMatrix<T>) -> Result<()>,
{
    spec.validate()?;
    let columns = stream.columns();
    let count = spec.window_count(stream.len());
    let chunk = 64;
    for lo in (0..count).step_by(chunk) {
        let hi = (lo + chunk).min(count);
        let mats: Vec<MIMatrix<T>> = (lo..hi)
            .into_par_iter()
            .map(|w| imi_window(&columns, spec.window_end(w), spec))
            .collect();
        for (w, m) in (lo..hi).zip(mats) {
            sink(w, m)?;
        }
    }
    Ok(count)
}

pub fn imi_series<T: Real>(stream: &SignalStream<T>, spec: &WindowSpec) -> Result<Vec<MIMatrix<T>>> {
    let mut out = Vec::with_capacity(spec.window_count(stream.len()));
    for_each_imi(stream, spec, |_, m| {
        out.push(m);
        Ok(())
    })?;
    Ok(out)
}

/// How the binarization threshold is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Fixed value in nats.
    Fixed { nats: f64 },
    /// `fraction * ln(n_bins)`.
    LnBinsFraction { fraction: f64 },
    /// Mean plus one standard deviation of all off-diagonal entries.
    MeanPlusStd,
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::LnBinsFraction { fraction: 0.25 }
    }
}

impl ThresholdRule {
    pub fn needs_statistics(&self) -> bool {
        matches!(self, ThresholdRule::MeanPlusStd)
    }

    pub fn resolve(&self, n_bins: usize, stats: Option<&OffDiagonalStats>) -> Result<f64> {
        let t = match *self {
            ThresholdRule::Fixed { nats } => nats,
            ThresholdRule::LnBinsFraction { fraction } => fraction * (n_bins as f64).ln(),
            ThresholdRule::MeanPlusStd => {
                let s = stats.ok_or_else(|| Error::Config("adaptive threshold needs MI statistics".into()))?;
                s.mean() + s.std()
            }
        };
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("binarization threshold must be positive, got {t}")));
        }
        Ok(t)
    }
}

/// Running mean/variance of off-diagonal MI values.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OffDiagonalStats {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl OffDiagonalStats {
    pub fn add<T: Real>(&mut self, m: &MIMatrix<T>) {
        for i in 0..m.n {
            for j in i + 1..m.n {
                let v = m.get(i, j).to_f64_lossy();
                self.count += 1;
                self.sum += v;
                self.sum_sq += v * v;
            }
        }
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    pub fn std(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let m = self.mean();
        (self.sum_sq / self.count as f64 - m * m).max(0.0).sqrt()
    }
}

/// Time series of symmetric boolean adjacency matrices with empty diagonal,
/// stored as one bitset row per node.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryGraphSeries {
    n_nodes: usize,
    words: usize,
    n_windows: usize,
    bits: Vec<u64>,
    pub threshold_used: f64,
}

impl BinaryGraphSeries {
    pub fn new(n_nodes: usize, threshold_used: f64) -> Self {
        Self {
            n_nodes,
            words: n_nodes.div_ceil(64).max(1),
            n_windows: 0,
            bits: Vec::new(),
            threshold_used,
        }
    }

    /// Rebuilds a series from its packed rows (`n_nodes` rows of
    /// `ceil(n_nodes / 64)` words per window).
    pub fn from_words(n_nodes: usize, threshold_used: f64, bits: Vec<u64>) -> Result<Self> {
        let mut g = Self::new(n_nodes, threshold_used);
        let stride = n_nodes * g.words;
        if stride == 0 {
            if !bits.is_empty() {
                return Err(Error::InvalidState("graph words given for zero nodes".into()));
            }
            return Ok(g);
        }
        if bits.len() % stride != 0 {
            return Err(Error::InvalidState(format!("{} words is not a whole number of windows", bits.len())));
        }
        g.n_windows = bits.len() / stride;
        g.bits = bits;
        for k in 0..g.n_windows {
            for i in 0..n_nodes {
                let row = g.row(k, i);
                if row[i / 64] >> (i % 64) & 1 == 1 {
                    return Err(Error::InvalidState(format!("self-edge on node {i} in window {k}")));
                }
                if n_nodes % 64 != 0 && row[g.words - 1] >> (n_nodes % 64) != 0 {
                    return Err(Error::InvalidState(format!("bits past the last node in window {k}")));
                }
                for j in i + 1..n_nodes {
                    if g.has_edge(k, i, j) != g.has_edge(k, j, i) {
                        return Err(Error::InvalidState(format!("asymmetric edge ({i}, {j}) in window {k}")));
                    }
                }
            }
        }
        Ok(g)
    }

    /// The packed rows, window-major then node-major.
    pub fn as_words(&self) -> &[u64] {
        &self.bits
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_windows(&self) -> usize {
        self.n_windows
    }

    pub fn words_per_row(&self) -> usize {
        self.words
    }

    /// Appends a window from its edge list; edges on the diagonal are ignored.
    pub fn push_edges(&mut self, edges: impl IntoIterator<Item = (usize, usize)>) {
        let base = self.bits.len();
        self.bits.resize(base + self.n_nodes * self.words, 0);
        for (i, j) in edges {
            if i == j {
                continue;
            }
            assert!(i < self.n_nodes && j < self.n_nodes, "edge ({i}, {j}) out of range");
            self.bits[base + i * self.words + j / 64] |= 1 << (j % 64);
            self.bits[base + j * self.words + i / 64] |= 1 << (i % 64);
        }
        self.n_windows += 1;
    }

    pub fn push_thresholded<T: Real>(&mut self, m: &MIMatrix<T>, threshold: f64) {
        assert_eq!(m.n, self.n_nodes, "matrix size differs from graph series");
        let mut edges = Vec::new();
        let mut idx = 0;
        for i in 0..m.n {
            idx += 1; // diagonal
            for j in i + 1..m.n {
                if m.packed[idx].to_f64_lossy() > threshold {
                    edges.push((i, j));
                }
                idx += 1;
            }
        }
        self.push_edges(edges);
    }

    /// Bitset of node `i`'s neighbors in window `k`.
    #[inline]
    pub fn row(&self, k: usize, i: usize) -> &[u64] {
        let base = (k * self.n_nodes + i) * self.words;
        &self.bits[base..base + self.words]
    }

    /// All rows of window `k`, node-major.
    pub fn window_bits(&self, k: usize) -> &[u64] {
        let stride = self.n_nodes * self.words;
        &self.bits[k * stride..(k + 1) * stride]
    }

    #[inline]
    pub fn has_edge(&self, k: usize, i: usize, j: usize) -> bool {
        self.row(k, i)[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn edge_count(&self, k: usize) -> usize {
        self.window_bits(k).iter().map(|w| w.count_ones() as usize).sum::<usize>() / 2
    }

    /// Fraction of the `N (N - 1) / 2` possible edges present in window `k`.
    pub fn density(&self, k: usize) -> f64 {
        let pairs = self.n_nodes * self.n_nodes.saturating_sub(1) / 2;
        if pairs == 0 {
            0.0
        } else {
            self.edge_count(k) as f64 / pairs as f64
        }
    }
}

pub fn binarize<T: Real>(series: &[MIMatrix<T>], threshold: f64) -> Result<BinaryGraphSeries> {
    if !(threshold > 0.0) {
        return Err(Error::Config(format!("threshold must be positive, got {threshold}")));
    }
    let n = series.first().map_or(0, |m| m.n);
    let mut g = BinaryGraphSeries::new(n, threshold);
    for m in series {
        g.push_thresholded(m, threshold);
    }
    Ok(g)
}
