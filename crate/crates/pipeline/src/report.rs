//! Qualitative checks on a finished run directory, computed from the
//! persisted artifacts only.

use std::path::Path;

use dfc_core::nnmf::{decompose, residual, upper_pairs, vectorize_upper, FactorModel};
use dfc_core::sensory::{Modality, SignalInfo};
use dfc_core::tensor;
use serde::Serialize;

use crate::artifacts::{self as a, LISTING_MIN_WEIGHT};
use crate::config::RunConfig;
use crate::error::{PipelineError, Result};
use crate::manifest::RunManifest;
use crate::stages::{cluster_modalities, count_episodes, read_factor_model};

/// `(start, end)` times of each maximal run of frames with contact.
pub fn touch_intervals(contacts: &[(f64, usize)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = None;
    for (k, &(t, c)) in contacts.iter().enumerate() {
        match (c > 0, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                out.push((s, contacts[k - 1].0));
                start = None;
            }
            _ => {}
        }
    }
    if let (Some(s), Some(last)) = (start, contacts.last()) {
        out.push((s, last.0));
    }
    out
}

/// Time of the frame each analysis sample was taken from.
fn analysis_times(config: &RunConfig, contacts: &[(f64, usize)]) -> Result<Vec<f64>> {
    let factor = (config.sim.rate()? / config.imi.analysis_rate) as usize;
    Ok((factor - 1..contacts.len()).step_by(factor.max(1)).map(|k| contacts[k].0).collect())
}

/// End time of each of the first `n_windows` windows.
pub fn window_end_times(config: &RunConfig, contacts: &[(f64, usize)], n_windows: usize) -> Result<Vec<f64>> {
    let spec = config.imi.window();
    let times = analysis_times(config, contacts)?;
    (0..n_windows)
        .map(|k| {
            times.get(spec.window_end(k) - 1).copied().ok_or_else(|| {
                PipelineError::Config(format!("window {k} ends past the {} analysis samples", times.len()))
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct QualitativeReport {
    pub touch_episodes: usize,
    pub n_c: usize,
    pub pure_clusters: usize,
    pub tactile_modules: usize,
    pub n_f: usize,
    /// Residual recomputed from the stored `W`, `F` and link densities.
    pub d_recomputed: f64,
    pub d_manifest: f64,
    /// Windows whose span overlaps a touch episode.
    pub touch_windows: usize,
    /// Of those, windows where one of the three highest-scoring factors has
    /// a listed pair (weight above the listing cutoff) with a tactile module.
    pub touch_windows_linked: usize,
}

impl QualitativeReport {
    pub fn pure_fraction(&self) -> f64 {
        if self.n_c == 0 { 0.0 } else { self.pure_clusters as f64 / self.n_c as f64 }
    }
}

pub fn qualitative_report(dir: &Path) -> Result<QualitativeReport> {
    let config = RunConfig::load(&dir.join(a::CONFIG))?;
    let manifest = RunManifest::load(&dir.join(a::MANIFEST))?;
    let contacts = a::read_contact_counts(&dir.join(a::TRAJECTORY))?;
    let signals: Vec<SignalInfo> = a::read_json(&dir.join(a::SIGNALS))?;
    let partition = a::read_partition(&dir.join(a::PARTITION))?;
    let h = tensor::link_density_from_tensor(a::read_tensor_file(&dir.join(a::LINK_DENSITY))?)?;
    let (f, w) = read_factor_model(dir)?;
    let series = vectorize_upper(&h);
    let d_recomputed = residual(series.hbar.view(), w.view(), f.view())?;

    let mods = cluster_modalities(&partition.assignment, partition.n_clusters, &signals);
    let tactile: Vec<bool> = mods.iter().map(|m| m.0 == Modality::Tactile).collect();
    let pairs = upper_pairs(h.n_clusters);
    let links_touch: Vec<bool> = (0..f.nrows())
        .map(|i| (0..pairs.len()).any(|r| f[[i, r]] > LISTING_MIN_WEIGHT && (tactile[pairs[r].0] || tactile[pairs[r].1])))
        .collect();

    let spec = config.imi.window();
    let times = analysis_times(&config, &contacts)?;
    let touches = touch_intervals(&contacts);
    let model = FactorModel {
        energies: Vec::new(),
        iterations: 0,
        objective: Vec::new(),
        residual: d_recomputed,
        f: f.clone(),
        w: w.clone(),
    };
    let (mut touch_windows, mut linked) = (0, 0);
    for k in 0..w.nrows() {
        let end = spec.window_end(k);
        let (t0, t1) = (times[end - spec.window_len], times[end - 1]);
        if !touches.iter().any(|&(a, b)| a <= t1 && b >= t0) {
            continue;
        }
        touch_windows += 1;
        let top = decompose(&model, k)?;
        if top.iter().take(3).any(|&(i, _)| links_touch[i]) {
            linked += 1;
        }
    }
    Ok(QualitativeReport {
        touch_episodes: count_episodes(contacts.iter().map(|c| c.1 > 0)),
        n_c: partition.n_clusters,
        pure_clusters: mods.iter().filter(|m| m.1).count(),
        tactile_modules: tactile.iter().filter(|&&t| t).count(),
        n_f: f.nrows(),
        d_recomputed,
        d_manifest: manifest.derived.d.unwrap_or(f64::NAN),
        touch_windows,
        touch_windows_linked: linked,
    })
}
