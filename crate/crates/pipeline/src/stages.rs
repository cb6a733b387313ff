use std::collections::BTreeMap;

use dfc_core::babbling::sample_program;
use dfc_core::dynamics::{simulate, JointState};
use dfc_core::imi::{downsample, for_each_imi, BinaryGraphSeries, MIMatrix, OffDiagonalStats, SignalStream, ThresholdRule};
use dfc_core::irm::{fit, link_densities};
use dfc_core::nnmf::{nnmf_fit, select_rank, upper_pairs, vectorize_upper};
use dfc_core::sensory::{Modality, SignalInfo};
use dfc_core::tensor::{self, DType, Layout, Tensor, TensorWriter};
use ndarray::Array2;

use crate::artifacts::{self as a, LISTING_MIN_WEIGHT};
use crate::error::{PipelineError, Result};
use crate::{plot, Pipeline, Stage};

/// Runs a stage and returns the files it wrote.
pub(crate) fn run(p: &mut Pipeline, stage: Stage) -> Result<Vec<String>> {
    match stage {
        Stage::Simulate => simulate_stage(p),
        Stage::Imi => imi_stage(p),
        Stage::Irm => irm_stage(p),
        Stage::Nnmf => nnmf_stage(p),
        Stage::Plot => plot::plot_stage(p),
    }
}

fn names(files: &[&str]) -> Vec<String> {
    files.iter().map(|s| s.to_string()).collect()
}

/// Number of maximal runs of consecutive frames with contact.
pub fn count_episodes(in_contact: impl IntoIterator<Item = bool>) -> usize {
    let mut prev = false;
    let mut n = 0;
    for c in in_contact {
        if c && !prev {
            n += 1;
        }
        prev = c;
    }
    n
}

fn simulate_stage(p: &mut Pipeline) -> Result<Vec<String>> {
    let cfg = &p.config;
    let robot = &cfg.sim.robot;
    let program = sample_program::<f64>(cfg.seed, dfc_core::dynamics::N_JOINTS, cfg.babbling.period)?;
    let traj = simulate(JointState::rest(), robot, cfg.sim.dt, cfg.sim.n_steps(), |t| program.commands(t))?;
    let layout = cfg.sensors.layout(robot, cfg.seed)?;
    let signals = layout.signal_map();
    let mut stream = SignalStream::new(layout.n_signals());
    for (s, c) in traj.states.iter().zip(&traj.contacts) {
        let frame = layout.encode(s, c, robot);
        stream.push(frame.t, &frame.values())?;
    }
    a::write_trajectory(&p.path(a::TRAJECTORY), &traj)?;
    a::write_contacts(&p.path(a::CONTACTS), &traj)?;
    a::write_sensors(&p.path(a::SENSORS), &stream)?;
    a::write_json(&p.path(a::SIGNALS), &signals)?;

    let d = &mut p.manifest.derived;
    d.n_frames = Some(traj.len());
    d.n_s = Some(layout.n_signals());
    d.touch_frames = Some(traj.contacts.iter().filter(|c| !c.is_empty()).count());
    d.touch_episodes = Some(count_episodes(traj.contacts.iter().map(|c| !c.is_empty())));
    d.babbling_program = Some(program);
    Ok(names(&[a::TRAJECTORY, a::CONTACTS, a::SENSORS, a::SIGNALS]))
}

fn imi_stage(p: &mut Pipeline) -> Result<Vec<String>> {
    let spec = p.config.imi.window();
    let rule = p.config.imi.threshold;
    let stream = a::read_sensors(&p.path(a::SENSORS))?;
    let analysis = downsample(&stream, p.config.sim.rate()?, &spec)?;
    drop(stream);
    let n = analysis.n_signals;
    let n_windows = spec.window_count(analysis.len());
    if n_windows == 0 {
        return Err(PipelineError::Config(format!(
            "{} analysis samples are fewer than one window of {}",
            analysis.len(),
            spec.window_len
        )));
    }
    // Thresholds are applied to the stored single-precision values so that
    // graphs.bin is reproducible from imi.bin alone.
    let fixed = match rule {
        ThresholdRule::MeanPlusStd => None,
        r => Some(r.resolve(spec.n_bins, None)?),
    };
    let mut graphs = BinaryGraphSeries::new(n, fixed.unwrap_or(f64::NAN));
    let mut stats = OffDiagonalStats::default();
    let imi_path = p.path(a::IMI);
    a::with_atomic(&imi_path, |w| {
        let mut tw = TensorWriter::new(w, DType::F32, Layout::SymmetricPacked, &[n_windows, n])?;
        for_each_imi(&analysis, &spec, |_, m| {
            let single = MIMatrix {
                n: m.n,
                window_end_index: m.window_end_index,
                packed: m.packed.iter().map(|&x| x as f32).collect::<Vec<f32>>(),
            };
            tw.write_f32(&single.packed).map_err(|e| dfc_core::Error::Internal(e.to_string()))?;
            match fixed {
                Some(t) => graphs.push_thresholded(&single, t),
                None => stats.add(&single),
            }
            Ok(())
        })?;
        tw.finish()?;
        Ok(())
    })?;
    let threshold = match fixed {
        Some(t) => t,
        None => {
            let t = rule.resolve(spec.n_bins, Some(&stats))?;
            let series = tensor::mi_series_from_tensor(a::read_tensor_file(&imi_path)?)?;
            graphs = BinaryGraphSeries::new(n, t);
            for m in &series {
                graphs.push_thresholded(m, t);
            }
            t
        }
    };
    a::write_tensor_file(&p.path(a::GRAPHS), &tensor::graphs_tensor(&graphs))?;
    let densities: Vec<f64> = (0..graphs.n_windows()).map(|k| graphs.density(k)).collect();
    a::write_rows(
        &p.path(a::DENSITY),
        &["window", "t_end", "edges", "density"],
        (0..graphs.n_windows()).map(|k| {
            let end = spec.window_end(k);
            vec![k.to_string(), analysis.times[end - 1].to_string(), graphs.edge_count(k).to_string(), densities[k].to_string()]
        }),
    )?;

    let d = &mut p.manifest.derived;
    d.n_windows = Some(n_windows);
    d.threshold_nats = Some(threshold);
    let lo = densities.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = densities.iter().cloned().fold(0.0, f64::max);
    d.density_min = Some(lo);
    d.density_max = Some(hi);
    d.density_mean = Some(densities.iter().sum::<f64>() / densities.len() as f64);
    d.warnings.retain(|w| !w.starts_with("imi:"));
    if lo < 0.01 || hi > 0.4 {
        d.warnings.push(format!("imi: graph density spans [{lo:.4}, {hi:.4}], outside [0.01, 0.40]"));
    }
    Ok(names(&[a::IMI, a::GRAPHS, a::DENSITY]))
}

/// Plurality modality of each cluster; ties go to the earlier modality.
pub fn cluster_modalities(assignment: &[usize], n_clusters: usize, signals: &[SignalInfo]) -> Vec<(Modality, bool)> {
    let mut counts = vec![BTreeMap::<Modality, usize>::new(); n_clusters];
    for (&c, s) in assignment.iter().zip(signals) {
        *counts[c].entry(s.modality()).or_default() += 1;
    }
    counts
        .iter()
        .map(|m| {
            let best = m.iter().fold((Modality::Proprio, 0), |b, (&k, &v)| if v > b.1 { (k, v) } else { b });
            (best.0, m.len() == 1)
        })
        .collect()
}

fn irm_stage(p: &mut Pipeline) -> Result<Vec<String>> {
    let threshold = p.manifest.derived.threshold_nats.unwrap_or(f64::NAN);
    let graphs = tensor::graphs_from_tensor(a::read_tensor_file(&p.path(a::GRAPHS))?, threshold)?;
    let signals: Vec<SignalInfo> = a::read_json(&p.path(a::SIGNALS))?;
    if signals.len() != graphs.n_nodes() {
        return Err(PipelineError::Config(format!(
            "{} signals described but graphs have {} nodes",
            signals.len(),
            graphs.n_nodes()
        )));
    }
    let hyper = p.config.irm.hyper(p.config.seed);
    let (partition, diag) = fit(&graphs, &hyper)?;
    let h = link_densities::<f64>(&graphs, &partition, &hyper)?;
    a::write_partition(&p.path(a::PARTITION), &partition, &signals)?;
    a::write_tensor_file(&p.path(a::LINK_DENSITY), &tensor::link_density_tensor(&h))?;
    a::write_rows(
        &p.path(a::IRM_TRACE),
        &["chain", "sweep", "log_joint"],
        diag.traces
            .iter()
            .enumerate()
            .flat_map(|(c, t)| t.iter().enumerate().map(move |(s, l)| vec![c.to_string(), s.to_string(), l.to_string()])),
    )?;
    let mods = cluster_modalities(&partition.assignment, partition.n_clusters, &signals);
    let d = &mut p.manifest.derived;
    d.n_c = Some(partition.n_clusters);
    d.log_joint = Some(partition.log_joint);
    d.modality_pure_clusters = Some(mods.iter().filter(|m| m.1).count());
    d.warnings.retain(|w| !w.starts_with("irm:"));
    d.warnings.extend(diag.warnings.iter().map(|w| format!("irm: {w}")));
    Ok(names(&[a::PARTITION, a::LINK_DENSITY, a::IRM_TRACE]))
}

fn nnmf_stage(p: &mut Pipeline) -> Result<Vec<String>> {
    let h = tensor::link_density_from_tensor(a::read_tensor_file(&p.path(a::LINK_DENSITY))?)?;
    let series = vectorize_upper(&h);
    let (nr, n) = series.hbar.dim();
    let limit = nr.min(n);
    let cfg = p.config.nnmf.clone();
    let opts = cfg.options(p.config.seed);
    let mut warnings = Vec::new();
    let mut files = names(&[a::FACTORS, a::SCORES, a::FACTOR_PAIRS]);
    if limit == 0 {
        return Err(PipelineError::Config(format!("{} clusters leave no module pairs to factorize", h.n_clusters)));
    }
    let mut curve = None;
    let rank = match cfg.select_ranks {
        Some([lo, hi]) => {
            let hi = hi.min(limit);
            if lo > hi {
                return Err(PipelineError::Config(format!("rank range starts above the limit {limit}")));
            }
            let ranks: Vec<usize> = (lo..=hi).collect();
            let sel = select_rank(&series, &ranks, cfg.elbow_fraction, &opts)?;
            a::write_rows(
                &p.path(a::RANK_CURVE),
                &["rank", "residual"],
                sel.curve.iter().map(|(r, d)| vec![r.to_string(), d.to_string()]),
            )?;
            files.push(a::RANK_CURVE.into());
            curve = Some(sel.curve);
            sel.rank
        }
        None if cfg.rank > limit => {
            warnings.push(format!("nnmf: rank {} exceeds min(N_r, N) = {limit}; using {limit}", cfg.rank));
            limit
        }
        None => cfg.rank,
    };
    let model = nnmf_fit(&series, rank, &opts)?;
    a::write_tensor_file(&p.path(a::FACTORS), &Tensor::dense_f64(vec![rank, nr], model.f.iter().copied().collect()))?;
    a::write_tensor_file(&p.path(a::SCORES), &Tensor::dense_f64(vec![n, rank], model.w.iter().copied().collect()))?;
    let pairs = upper_pairs(h.n_clusters);
    a::write_rows(
        &p.path(a::FACTOR_PAIRS),
        &["factor", "pair", "cluster_a", "cluster_b", "weight"],
        (0..rank).flat_map(|i| {
            let f = &model.f;
            let pairs = &pairs;
            (0..nr).filter(move |&r| f[[i, r]] > LISTING_MIN_WEIGHT).map(move |r| {
                vec![(i + 1).to_string(), r.to_string(), pairs[r].0.to_string(), pairs[r].1.to_string(), f[[i, r]].to_string()]
            })
        }),
    )?;
    let d = &mut p.manifest.derived;
    d.n_f = Some(rank);
    d.d = Some(model.residual);
    d.energies = Some(model.energies.clone());
    d.rank_curve = curve;
    d.warnings.retain(|w| !w.starts_with("nnmf:"));
    d.warnings.extend(warnings);
    Ok(files)
}

/// `(F, W)` as stored by the nnmf stage.
pub fn read_factor_model(p: &std::path::Path) -> Result<(Array2<f64>, Array2<f64>)> {
    let (fd, f) = a::read_tensor_file(&p.join(a::FACTORS))?.expect_f64(Layout::Dense, 2)?;
    let (wd, w) = a::read_tensor_file(&p.join(a::SCORES))?.expect_f64(Layout::Dense, 2)?;
    let f = Array2::from_shape_vec((fd[0], fd[1]), f).map_err(|e| PipelineError::Config(e.to_string()))?;
    let w = Array2::from_shape_vec((wd[0], wd[1]), w).map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok((f, w))
}
