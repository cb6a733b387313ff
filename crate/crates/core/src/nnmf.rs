//! Non-negative factorization of the vectorized link-density series,
//! `Hbar^T ~ W F`, by Lee-Seung multiplicative updates.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irm::LinkDensitySeries;
use crate::scalar::Real;

/// Strict upper triangles of the link-density matrices, one column per window.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorizedSeries<T> {
    pub n_clusters: usize,
    /// `N_r x N_windows`.
    pub hbar: Array2<T>,
    /// Row `r` <-> cluster pair `(c, d)`, `c < d`, lexicographic.
    pub pair_index: Vec<(usize, usize)>,
}

pub fn upper_pairs(n_clusters: usize) -> Vec<(usize, usize)> {
    (0..n_clusters).flat_map(|c| (c + 1..n_clusters).map(move |d| (c, d))).collect()
}

pub fn vectorize_upper<T: Real>(h: &LinkDensitySeries<T>) -> VectorizedSeries<T> {
    let pairs = upper_pairs(h.n_clusters);
    let hbar = Array2::from_shape_fn((pairs.len(), h.n_windows), |(r, k)| {
        let (c, d) = pairs[r];
        h.get(k, c, d)
    });
    VectorizedSeries { n_clusters: h.n_clusters, hbar, pair_index: pairs }
}

impl<T: Real> VectorizedSeries<T> {
    pub fn from_matrix(n_clusters: usize, hbar: Array2<T>) -> Result<Self> {
        let pairs = upper_pairs(n_clusters);
        if hbar.nrows() != pairs.len() {
            return Err(Error::Config(format!(
                "{} rows do not match {n_clusters} clusters ({} pairs)",
                hbar.nrows(),
                pairs.len()
            )));
        }
        if hbar.iter().any(|&v| !(v >= T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidState("vectorized series must be finite and non-negative".into()));
        }
        Ok(Self { n_clusters, hbar, pair_index: pairs })
    }

    pub fn n_rows(&self) -> usize {
        self.hbar.nrows()
    }

    pub fn n_windows(&self) -> usize {
        self.hbar.ncols()
    }

    /// Symmetric `N_c x N_c` matrix of window `k` with a zero diagonal.
    pub fn unvectorize(&self, k: usize) -> Vec<Vec<T>> {
        let mut m = vec![vec![T::zero(); self.n_clusters]; self.n_clusters];
        for (r, &(c, d)) in self.pair_index.iter().enumerate() {
            m[c][d] = self.hbar[[r, k]];
            m[d][c] = self.hbar[[r, k]];
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnmfOptions {
    pub max_iter: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for NnmfOptions {
    fn default() -> Self {
        Self { max_iter: 1000, tol: 1e-6, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorModel<T> {
    /// `N_f x N_r`, unit-norm rows.
    pub f: Array2<T>,
    /// `N_windows x N_f`.
    pub w: Array2<T>,
    pub residual: T,
    /// `E_i = sum_k w_i(k)^2`, non-increasing.
    pub energies: Vec<T>,
    pub iterations: usize,
    /// `||V - W F||_F^2` at initialization and after every iteration.
    pub objective: Vec<T>,
}

impl<T: Real> FactorModel<T> {
    pub fn n_factors(&self) -> usize {
        self.f.nrows()
    }
}

/// `||Hbar^T - W F||_F / sqrt(N_r N)`.
pub fn residual<T: Real>(hbar: ArrayView2<T>, w: ArrayView2<T>, f: ArrayView2<T>) -> Result<T> {
    let (nr, n) = hbar.dim();
    if w.nrows() != n || f.ncols() != nr || w.ncols() != f.nrows() {
        return Err(Error::Config(format!(
            "shape mismatch: Hbar {:?}, W {:?}, F {:?}",
            hbar.dim(),
            w.dim(),
            f.dim()
        )));
    }
    let sq = sq_error(&hbar.t(), &w.dot(&f));
    Ok((sq / T::from_usize_lossy(nr * n)).sqrt())
}

fn sq_error<T: Real>(v: &ArrayView2<T>, wf: &Array2<T>) -> T {
    let mut s = T::zero();
    for (&a, &b) in v.iter().zip(wf.iter()) {
        let d = a - b;
        s += d * d;
    }
    s
}

/// Fits `n_factors` factors from a seeded start that depends only on the
/// shapes and the seed: every window starts with the same score row, so
/// reordering windows reorders the rows of `W` and nothing else.
pub fn nnmf_fit<T: Real>(series: &VectorizedSeries<T>, n_factors: usize, opts: &NnmfOptions) -> Result<FactorModel<T>> {
    let (nr, n) = series.hbar.dim();
    if n_factors == 0 || n_factors > nr.min(n) {
        return Err(Error::Config(format!(
            "n_factors must be in 1..={} (N_r = {nr}, N_windows = {n}), got {n_factors}",
            nr.min(n)
        )));
    }
    let (w, f) = initial_factors(series, n_factors, opts.seed);
    fit_from(series, w, f, opts)
}

fn initial_factors<T: Real>(series: &VectorizedSeries<T>, n_factors: usize, seed: u64) -> (Array2<T>, Array2<T>) {
    let (nr, n) = series.hbar.dim();
    let mean = series.hbar.iter().copied().sum::<T>() / T::from_usize_lossy((nr * n).max(1));
    // Both factors get sqrt(mean / N_f) so that W F starts at the data's scale.
    let scale = (mean / T::from_usize_lossy(n_factors)).sqrt();
    let scale = if scale > T::zero() { scale } else { T::one() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || T::lit(rng.random::<f64>()) * scale + T::min_positive_value();
    let row: Vec<T> = (0..n_factors).map(|_| draw()).collect();
    let f = Array2::from_shape_simple_fn((n_factors, nr), &mut draw);
    let w = Array2::from_shape_fn((n, n_factors), |(_, i)| row[i]);
    (w, f)
}

/// Multiplicative updates from a given start, followed by normalization
/// and energy ordering.
pub fn fit_from<T: Real>(
    series: &VectorizedSeries<T>,
    mut w: Array2<T>,
    mut f: Array2<T>,
    opts: &NnmfOptions,
) -> Result<FactorModel<T>> {
    let v = series.hbar.t();
    let (n, nr) = v.dim();
    if w.dim() != (n, f.nrows()) || f.ncols() != nr {
        return Err(Error::Config("initial factors do not match the series shape".into()));
    }
    let mut objective = vec![sq_error(&v, &w.dot(&f))];
    let tol = T::lit(opts.tol);
    let mut iterations = 0;
    while iterations < opts.max_iter {
        // F <- F * (W^T V) / (W^T W F)
        let num = w.t().dot(&v);
        let den = w.t().dot(&w).dot(&f);
        mul_update(&mut f, &num, &den);
        // W <- W * (V F^T) / (W F F^T)
        let num = v.dot(&f.t());
        let den = w.dot(&f.dot(&f.t()));
        mul_update(&mut w, &num, &den);
        debug_assert!(w.iter().chain(f.iter()).all(|&x| x >= T::zero()));
        iterations += 1;

        let obj = sq_error(&v, &w.dot(&f));
        let prev = *objective.last().expect("initial objective");
        objective.push(obj);
        if prev <= T::zero() || (prev - obj) / prev < tol {
            break;
        }
    }

    // Unit-norm factor rows, scale moved into W.
    for (i, mut row) in f.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.iter().map(|&x| x * x).sum::<T>().sqrt();
        if norm > T::zero() {
            row.mapv_inplace(|x| x / norm);
            w.column_mut(i).mapv_inplace(|x| x * norm);
        }
    }
    let energies: Vec<T> = w.axis_iter(Axis(1)).map(|c| c.iter().map(|&x| x * x).sum()).collect();
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[b].partial_cmp(&energies[a]).expect("finite energies").then(a.cmp(&b)));
    let f = f.select(Axis(0), &order);
    let w = w.select(Axis(1), &order);
    let energies = order.iter().map(|&i| energies[i]).collect();
    let residual = residual(series.hbar.view(), w.view(), f.view())?;
    Ok(FactorModel { f, w, residual, energies, iterations, objective })
}

fn mul_update<T: Real>(x: &mut Array2<T>, num: &Array2<T>, den: &Array2<T>) {
    ndarray::Zip::from(x).and(num).and(den).for_each(|x, &a, &b| {
        if b > T::zero() {
            *x = *x * a / b;
        }
    });
}

/// Residual curve over candidate ranks and the elbow choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSelection {
    pub rank: usize,
    /// `(rank, D)` for every candidate.
    pub curve: Vec<(usize, f64)>,
}

/// Fits every rank in `ranks` (ascending) and returns the smallest rank `r`
/// whose marginal decrease `D(r) - D(r+1)` is below `fraction` of the total
/// decrease over the range. Each rank starts from the previous fit plus
/// one small new factor, so the curve is non-increasing up to `tol`.
pub fn select_rank<T: Real>(
    series: &VectorizedSeries<T>,
    ranks: &[usize],
    fraction: f64,
    opts: &NnmfOptions,
) -> Result<RankSelection> {
    if ranks.is_empty() || ranks.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::Config("rank range must be non-empty and strictly ascending".into()));
    }
    let (nr, n) = series.hbar.dim();
    let r_max = *ranks.last().expect("non-empty");
    if ranks[0] == 0 || r_max > nr.min(n) {
        return Err(Error::Config(format!("ranks must be in 1..={}", nr.min(n))));
    }
    let mut curve = Vec::with_capacity(ranks.len());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut prev: Option<FactorModel<T>> = None;
    for &r in ranks {
        // A cold start and a warm start from the previous rank; the better
        // fit is kept, which also keeps the curve non-increasing.
        let cold = nnmf_fit(series, r, opts)?;
        let model = match prev.take() {
            None => cold,
            Some(m) => {
                let (w0, f0) = grow(series, &m, r, &mut rng);
                let warm = fit_from(series, w0, f0, opts)?;
                if warm.residual <= cold.residual { warm } else { cold }
            }
        };
        curve.push((r, model.residual.to_f64_lossy()));
        prev = Some(model);
    }
    Ok(RankSelection { rank: elbow(&curve, fraction), curve })
}

/// Previous factors plus `r - k` new ones. Each new factor is a rank-one
/// non-negative fit to the current residual, started from the window with
/// the largest positive residual and refined by alternating projections.
/// Its scale is the exact line-search step, so the starting objective never
/// exceeds the previous fit's.
fn grow<T: Real, R: Rng>(series: &VectorizedSeries<T>, m: &FactorModel<T>, r: usize, rng: &mut R) -> (Array2<T>, Array2<T>) {
    let v = series.hbar.t();
    let (n, nr) = v.dim();
    let k = m.n_factors();
    let mut w = Array2::zeros((n, r));
    let mut f = Array2::zeros((r, nr));
    w.slice_mut(ndarray::s![.., ..k]).assign(&m.w);
    f.slice_mut(ndarray::s![..k, ..]).assign(&m.f);
    let tiny = T::min_positive_value();
    let sq = |a: &ndarray::Array1<T>| a.iter().map(|&x| x * x).sum::<T>();
    for i in k..r {
        let resid = &v - &w.dot(&f);
        let pos_norm: Vec<T> = resid.rows().into_iter().map(|row| row.iter().map(|&x| x.max(T::zero()).powi(2)).sum()).collect();
        let start = (0..n).fold(0, |b, j| if pos_norm[j] > pos_norm[b] { j } else { b });
        let mut fi = resid.row(start).mapv(|x| x.max(T::zero()));
        if !(sq(&fi) > T::zero()) {
            // Exact fit already; any small direction will do.
            fi = ndarray::Array1::from_shape_simple_fn(nr, || T::lit(rng.random::<f64>()));
        }
        let mut wi = resid.dot(&fi).mapv(|x| x.max(T::zero()) / sq(&fi));
        for _ in 0..10 {
            let wn = sq(&wi);
            if !(wn > T::zero()) {
                break;
            }
            let next = resid.t().dot(&wi).mapv(|x| x.max(T::zero()) / wn);
            if !(sq(&next) > T::zero()) {
                break;
            }
            fi = next;
            wi = resid.dot(&fi).mapv(|x| x.max(T::zero()) / sq(&fi));
        }
        let u = outer(&wi, &fi);
        let uu = u.iter().map(|&x| x * x).sum::<T>();
        let ru = resid.iter().zip(u.iter()).map(|(&a, &b)| a * b).sum::<T>();
        let t = if uu > T::zero() && ru > T::zero() { ru / uu } else { T::zero() };
        let st = t.sqrt();
        // A positive floor keeps every entry reachable by the multiplicative updates.
        w.column_mut(i).assign(&wi.mapv(|x| x * st + tiny));
        f.row_mut(i).assign(&fi.mapv(|x| x * st + tiny));
    }
    (w, f)
}

fn outer<T: Real>(a: &ndarray::Array1<T>, b: &ndarray::Array1<T>) -> Array2<T> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

/// Smallest rank whose marginal decrease is below `fraction` of the total.
pub fn elbow(curve: &[(usize, f64)], fraction: f64) -> usize {
    let first = curve[0];
    let last = curve[curve.len() - 1];
    let total = first.1 - last.1;
    if !(total > 0.0) {
        return first.0;
    }
    for p in curve.windows(2) {
        if p[0].1 - p[1].1 < fraction * total {
            return p[0].0;
        }
    }
    last.0
}

/// Scores of window `k`, largest first; ties keep the lower factor index.
pub fn decompose<T: Real>(model: &FactorModel<T>, k: usize) -> Result<Vec<(usize, T)>> {
    if k >= model.w.nrows() {
        return Err(Error::Config(format!("window {k} out of range ({})", model.w.nrows())));
    }
    let mut s: Vec<(usize, T)> = model.w.row(k).iter().copied().enumerate().collect();
    s.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite scores").then(a.0.cmp(&b.0)));
    Ok(s)
}

/// Index of the highest score in window `k`; ties go to the lower index.
pub fn leading_factor<T: Real>(model: &FactorModel<T>, k: usize) -> Result<usize> {
    Ok(decompose(model, k)?[0].0)
}

#[cfg(test)]
mod tests;
