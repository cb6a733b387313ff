//! Static figures: module map, factor graphs, stacked score traces and the
//! rank curve.

use std::path::Path;

use dfc_core::irm::{LinkDensitySeries, Partition};
use dfc_core::nnmf::upper_pairs;
use dfc_core::sensory::{Modality, SignalInfo};
use dfc_core::tensor;
use ndarray::Array2;

use crate::artifacts::{self as a, LISTING_MIN_WEIGHT};
use crate::error::{PipelineError, Result};
use crate::report::{touch_intervals, window_end_times};
use crate::stages::{cluster_modalities, read_factor_model};
use crate::svg::{Axes, Svg};
use crate::Pipeline;

/// Color of the `i`-th of `count` clusters of a modality: greens for
/// proprioception, reds for touch, blues for vision.
pub fn modality_color(m: Modality, i: usize, count: usize) -> String {
    let t = if count <= 1 { 0.5 } else { i as f64 / (count - 1) as f64 };
    let lo = (30.0 + 100.0 * t).round() as u8;
    let hi = (160.0 + 80.0 * (1.0 - t)).round() as u8;
    match m {
        Modality::Proprio => format!("#{lo:02x}{hi:02x}{lo:02x}"),
        Modality::Tactile => format!("#{hi:02x}{lo:02x}{lo:02x}"),
        Modality::Visual => format!("#{lo:02x}{lo:02x}{hi:02x}"),
    }
}

/// Per-cluster colors and labels like `V3` (third visual-majority module).
pub fn cluster_styles(partition: &Partition, signals: &[SignalInfo]) -> Vec<(String, String)> {
    let mods = cluster_modalities(&partition.assignment, partition.n_clusters, signals);
    let count = |m: Modality| mods.iter().filter(|x| x.0 == m).count();
    let mut seen = std::collections::BTreeMap::<Modality, usize>::new();
    mods.iter()
        .map(|&(m, _)| {
            let i = seen.entry(m).or_default();
            let style = (
                modality_color(m, *i, count(m)),
                format!("{}{}", &m.as_str()[..1].to_uppercase(), *i + 1),
            );
            *i += 1;
            style
        })
        .collect()
}

/// Module map: every signal colored by its module, plus the time-averaged
/// module link-density matrix.
pub fn module_map_svg(partition: &Partition, signals: &[SignalInfo], h: &LinkDensitySeries<f64>) -> String {
    let styles = cluster_styles(partition, signals);
    let cell = 12.0;
    let mut svg = Svg::new(900.0, 520.0);
    svg.text(20.0, 24.0, 14.0, "start", &format!("{} modules over {} signals", partition.n_clusters, signals.len()));

    let color = |i: usize| styles[partition.assignment[i]].0.as_str();
    // Proprioception: one row per joint.
    let (mut px, mut py) = (20.0, 50.0);
    svg.text(px, py - 6.0, 11.0, "start", "proprioception");
    let mut tactile = Vec::new();
    let mut visual = Vec::new();
    for (i, s) in signals.iter().enumerate() {
        match s {
            SignalInfo::Proprio { joint, neuron, .. } => {
                svg.rect(px + (*neuron - 1) as f64 * cell, py + (*joint - 1) as f64 * cell, cell - 1.0, cell - 1.0, color(i), "")
            }
            SignalInfo::Tactile { .. } => tactile.push(i),
            SignalInfo::Visual { ix, iy, .. } => visual.push((i, *ix, *iy)),
        }
    }
    py += 6.0 * cell + 30.0;
    svg.text(px, py - 6.0, 11.0, "start", "touch");
    for (k, &i) in tactile.iter().enumerate() {
        svg.rect(px + (k % 20) as f64 * cell, py + (k / 20) as f64 * cell, cell - 1.0, cell - 1.0, color(i), "");
    }
    py += (tactile.len().div_ceil(20)) as f64 * cell + 30.0;
    svg.text(px, py - 6.0, 11.0, "start", "vision");
    let ny = visual.iter().map(|v| v.2 + 1).max().unwrap_or(0);
    for &(i, ix, iy) in &visual {
        // Image rows drawn top-down, world y up.
        svg.rect(px + ix as f64 * cell, py + (ny - 1 - iy) as f64 * cell, cell - 1.0, cell - 1.0, color(i), "");
    }

    // Mean link densities.
    let k = h.n_clusters;
    px = 380.0;
    py = 50.0;
    let side = if k == 0 { 0.0 } else { (420.0 / k as f64).min(30.0) };
    svg.text(px, py - 20.0, 11.0, "start", "mean link density");
    for c in 0..k {
        svg.rect(px - 10.0, py + c as f64 * side, 8.0, side - 1.0, &styles[c].0, "");
        svg.rect(px + c as f64 * side, py - 10.0, side - 1.0, 8.0, &styles[c].0, "");
        svg.text(px - 14.0, py + (c as f64 + 0.7) * side, 8.0, "end", &styles[c].1);
        for d in 0..k {
            let mean = if h.n_windows == 0 {
                0.0
            } else {
                (0..h.n_windows).map(|w| h.get(w, c, d)).sum::<f64>() / h.n_windows as f64
            };
            let g = (255.0 * (1.0 - mean.clamp(0.0, 1.0))).round() as u8;
            svg.rect(px + d as f64 * side, py + c as f64 * side, side - 1.0, side - 1.0, &format!("#{g:02x}{g:02x}{g:02x}"), "");
        }
    }
    svg.finish()
}

/// One factor as a graph over modules: nodes on a circle, edge width
/// proportional to the pair weight.
pub fn factor_graph_svg(index: usize, weights: &[f64], styles: &[(String, String)]) -> String {
    let k = styles.len();
    let pairs = upper_pairs(k);
    let (cx, cy, r) = (250.0, 260.0, 190.0);
    let pos = |c: usize| {
        let a = std::f64::consts::TAU * c as f64 / k.max(1) as f64 - std::f64::consts::FRAC_PI_2;
        (cx + r * a.cos(), cy + r * a.sin())
    };
    let mut svg = Svg::new(500.0, 500.0);
    svg.text(250.0, 30.0, 14.0, "middle", &format!("factor {index}"));
    let max = weights.iter().cloned().fold(0.0, f64::max);
    for (p, &w) in pairs.iter().zip(weights) {
        if w > LISTING_MIN_WEIGHT && max > 0.0 {
            let (x1, y1) = pos(p.0);
            let (x2, y2) = pos(p.1);
            svg.line(x1, y1, x2, y2, "#555555", 0.5 + 7.5 * w / max);
        }
    }
    for (c, (color, label)) in styles.iter().enumerate() {
        let (x, y) = pos(c);
        svg.circle(x, y, 11.0, color, r#"stroke="black" stroke-width="0.5""#);
        svg.text(x, y + 3.5, 9.0, "middle", label);
    }
    svg.finish()
}

/// Scores stacked over time, factor 1 at the bottom; touch intervals shaded.
pub fn scores_svg(w: &Array2<f64>, times: &[f64], touches: &[(f64, f64)], colors: &[String]) -> String {
    let (n, nf) = w.dim();
    let total: Vec<f64> = (0..n).map(|k| w.row(k).sum()).collect();
    let ymax = total.iter().cloned().fold(0.0, f64::max);
    let t0 = times.first().copied().unwrap_or(0.0);
    let t1 = times.last().copied().unwrap_or(0.0);
    let ax = Axes { x0: 70.0, y0: 30.0, w: 800.0, h: 300.0, xr: (t0, t1), yr: (0.0, ymax) };
    let mut svg = Svg::new(900.0, 380.0);
    for &(a, b) in touches {
        if b >= t0 && a <= t1 {
            let (xa, xb) = (ax.px(a.max(t0)), ax.px(b.min(t1)));
            svg.rect(xa, ax.y0, (xb - xa).max(0.5), ax.h, "#f4d0d0", "");
        }
    }
    if n > 0 && nf > 0 {
        let mut base = vec![0.0; n];
        for i in 0..nf {
            let top: Vec<f64> = (0..n).map(|k| base[k] + w[[k, i]]).collect();
            let mut pts: Vec<(f64, f64)> = (0..n).map(|k| (ax.px(times[k]), ax.py(top[k]))).collect();
            pts.extend((0..n).rev().map(|k| (ax.px(times[k]), ax.py(base[k]))));
            let color = colors.get(i).map_or("#888888", |c| c.as_str());
            svg.polygon(&pts, color, r#"stroke="none""#);
            base = top;
        }
    }
    ax.draw(&mut svg, "time [s]", "score");
    svg.finish()
}

pub fn rank_curve_svg(curve: &[(usize, f64)]) -> String {
    let r0 = curve.first().map_or(0.0, |c| c.0 as f64);
    let r1 = curve.last().map_or(0.0, |c| c.0 as f64);
    let ymax = curve.iter().map(|c| c.1).fold(0.0, f64::max);
    let ax = Axes { x0: 70.0, y0: 30.0, w: 500.0, h: 300.0, xr: (r0, r1), yr: (0.0, ymax) };
    let mut svg = Svg::new(600.0, 380.0);
    let pts: Vec<(f64, f64)> = curve.iter().map(|&(r, d)| (ax.px(r as f64), ax.py(d))).collect();
    if !pts.is_empty() {
        svg.polyline(&pts, "#1f4e9c", 1.5);
    }
    for &(x, y) in &pts {
        svg.circle(x, y, 2.5, "#1f4e9c", "");
    }
    ax.draw(&mut svg, "rank", "residual D");
    svg.finish()
}

/// Distinct colors for factor traces.
fn factor_colors(nf: usize) -> Vec<String> {
    (0..nf)
        .map(|i| {
            // Golden-angle hue walk, fixed saturation and lightness.
            let h = (i as f64 * 137.507_764) % 360.0;
            hsl_hex(h, 0.55, 0.55)
        })
        .collect()
}

fn hsl_hex(h: f64, s: f64, l: f64) -> String {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let m = l - c / 2.0;
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let to = |v: f64| ((v + m) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", to(r), to(g), to(b))
}

fn write_svg(path: &Path, text: &str) -> Result<()> {
    a::write_atomic(path, text.as_bytes())
}

pub(crate) fn plot_stage(p: &mut Pipeline) -> Result<Vec<String>> {
    let dir = p.path(a::PLOTS);
    std::fs::create_dir_all(&dir).map_err(|source| PipelineError::Io { path: dir.clone(), source })?;
    // Drop figures of an earlier run (e.g. factor files of a higher rank).
    for e in std::fs::read_dir(&dir).map_err(|source| PipelineError::Io { path: dir.clone(), source })? {
        let path = e.map_err(|source| PipelineError::Io { path: dir.clone(), source })?.path();
        if path.extension().is_some_and(|x| x == "svg") {
            std::fs::remove_file(&path).map_err(|source| PipelineError::Io { path, source })?;
        }
    }
    let signals: Vec<SignalInfo> = a::read_json(&p.path(a::SIGNALS))?;
    let partition = a::read_partition(&p.path(a::PARTITION))?;
    let h = tensor::link_density_from_tensor(a::read_tensor_file(&p.path(a::LINK_DENSITY))?)?;
    let (f, w) = read_factor_model(&p.dir)?;
    let contacts = a::read_contact_counts(&p.path(a::TRAJECTORY))?;
    let times = window_end_times(&p.config, &contacts, w.nrows())?;
    let touches = touch_intervals(&contacts);

    let mut files = Vec::new();
    let mut emit = |name: String, text: String| -> Result<()> {
        write_svg(&p.dir.join(&name), &text)?;
        files.push(name);
        Ok(())
    };
    emit(format!("{}/modules.svg", a::PLOTS), module_map_svg(&partition, &signals, &h))?;
    let styles = cluster_styles(&partition, &signals);
    for i in 0..f.nrows() {
        let row: Vec<f64> = f.row(i).to_vec();
        emit(format!("{}/factor_{:02}.svg", a::PLOTS, i + 1), factor_graph_svg(i + 1, &row, &styles))?;
    }
    emit(format!("{}/scores.svg", a::PLOTS), scores_svg(&w, &times, &touches, &factor_colors(w.ncols())))?;
    if let Some(curve) = &p.manifest.derived.rank_curve {
        emit(format!("{}/rank_curve.svg", a::PLOTS), rank_curve_svg(curve))?;
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_scores_give_axes_only() {
        let s = scores_svg(&Array2::zeros((0, 0)), &[], &[], &[]);
        assert!(s.contains("<line"));
        assert!(!s.contains("<polygon"));
        assert!(s.ends_with("</svg>\n"));
    }

    #[test]
    fn edge_width_follows_weight() {
        let styles: Vec<(String, String)> = (0..3).map(|i| ("#000000".into(), format!("M{i}"))).collect();
        // Pairs (0,1), (0,2), (1,2).
        let s = factor_graph_svg(1, &[1.0, 0.5, 0.0], &styles);
        assert!(s.contains(r#"stroke-width="8.00""#));
        assert!(s.contains(r#"stroke-width="4.25""#));
        assert_eq!(s.matches("<line").count(), 2);
    }

    #[test]
    fn modality_palettes() {
        for i in 0..4 {
            let g = modality_color(Modality::Proprio, i, 4);
            let r = modality_color(Modality::Tactile, i, 4);
            let b = modality_color(Modality::Visual, i, 4);
            let ch = |s: &str, k: usize| u8::from_str_radix(&s[1 + 2 * k..3 + 2 * k], 16).unwrap();
            assert!(ch(&g, 1) > ch(&g, 0) && ch(&g, 1) > ch(&g, 2));
            assert!(ch(&r, 0) > ch(&r, 1));
            assert!(ch(&b, 2) > ch(&b, 0));
        }
    }

    #[test]
    fn hsl_primaries() {
        assert_eq!(hsl_hex(0.0, 1.0, 0.5), "#ff0000");
        assert_eq!(hsl_hex(120.0, 1.0, 0.5), "#00ff00");
        assert_eq!(hsl_hex(240.0, 1.0, 0.5), "#0000ff");
    }
}
