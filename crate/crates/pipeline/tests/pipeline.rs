use std::fs;
use std::path::Path;

use dfc_pipeline::artifacts as a;
use dfc_pipeline::{Pipeline, PipelineError, RunConfig, Stage};

fn small_config(seed: u64) -> RunConfig {
    let mut c = RunConfig { seed, ..RunConfig::default() };
    c.sim.duration = 1.0;
    c.sensors.neurons_per_joint = 4;
    c.sensors.tactile_count = 10;
    c.sensors.visual_dims = (5, 5);
    c.irm.n_sweeps = 5;
    c.irm.n_restarts = 2;
    c.nnmf.rank = 3;
    c.nnmf.max_iter = 200;
    c
}

fn quiet(config: RunConfig, dir: &Path, resume: bool) -> Pipeline {
    let mut p = Pipeline::open(config, dir, resume).unwrap();
    p.verbose = false;
    p
}

fn checksums(p: &Pipeline) -> Vec<(String, String)> {
    p.manifest.stages.values().flat_map(|r| r.outputs.clone()).collect()
}

#[test]
fn default_config_shapes() {
    let c = RunConfig::default();
    let layout = c.sensors.layout(&c.sim.robot, c.seed).unwrap();
    assert_eq!(layout.n_signals(), 333);
    assert_eq!(c.sim.n_steps(), 30_000);
    let spec = c.imi.window();
    assert_eq!(spec.window_count(c.sim.n_steps() / 10), 2991);
    assert_eq!(c.nnmf.rank, 25);
}

#[test]
fn config_toml_roundtrip() {
    let c = small_config(3);
    assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    // Omitted sections take defaults.
    assert_eq!(RunConfig::from_toml("seed = 0").unwrap(), RunConfig::default());
    assert!(RunConfig::from_toml("seed = 0\nbogus = 1").is_err());
    assert!(RunConfig::from_toml("seed = 0\n[sim]\ndt = 0.0").is_err());
    assert!(RunConfig::from_toml("seed = 0\n[nnmf]\nrank = 0").is_err());
}

#[test]
fn full_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = quiet(small_config(1), dir.path(), false);
    p.run_all().unwrap();
    for f in [
        a::MANIFEST, a::CONFIG, a::TRAJECTORY, a::CONTACTS, a::SENSORS, a::SIGNALS, a::IMI, a::GRAPHS, a::DENSITY,
        a::PARTITION, a::LINK_DENSITY, a::IRM_TRACE, a::FACTORS, a::SCORES, a::FACTOR_PAIRS,
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    assert!(dir.path().join("plots/modules.svg").exists());
    assert!(dir.path().join("plots/scores.svg").exists());
    assert!(dir.path().join("plots/factor_01.svg").exists());
    let d = &p.manifest.derived;
    assert_eq!(d.n_s, Some(24 + 10 + 25));
    assert_eq!(d.n_frames, Some(1000));
    assert_eq!(d.n_windows, Some(91));
    assert_eq!(d.n_f, Some(3.min(d.n_c.unwrap() * (d.n_c.unwrap() - 1) / 2)));
    let header = fs::read_to_string(dir.path().join(a::TRAJECTORY)).unwrap();
    assert!(header.starts_with("t,q1,q2,q3,q4,q5,q6,qd1,qd2,qd3,qd4,qd5,qd6,contact_count,contact_force_total\n"));
    let part = fs::read_to_string(dir.path().join(a::PARTITION)).unwrap();
    assert!(part.starts_with("signal_index,cluster_id,modality,body,location\n0,"));

    // The stored residual is reproducible from the stored matrices.
    let r = dfc_pipeline::report::qualitative_report(dir.path()).unwrap();
    assert!((r.d_recomputed - r.d_manifest).abs() < 1e-10, "{r:?}");
}

#[test]
fn identical_config_identical_artifacts() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let mut p1 = quiet(small_config(2), d1.path(), false);
    p1.run_all().unwrap();
    let mut p2 = quiet(small_config(2), d2.path(), false);
    p2.run_all().unwrap();
    assert_eq!(checksums(&p1), checksums(&p2));
    let d3 = tempfile::tempdir().unwrap();
    let mut p3 = quiet(small_config(3), d3.path(), false);
    p3.run_stage(Stage::Simulate).unwrap();
    assert_ne!(p1.manifest.stages["simulate"].outputs[a::SENSORS], p3.manifest.stages["simulate"].outputs[a::SENSORS]);
}

#[test]
fn resume_recomputes_only_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = quiet(small_config(4), dir.path(), false);
    p.run_all().unwrap();
    let before = p.manifest.clone();
    fs::remove_file(dir.path().join(a::FACTORS)).unwrap();

    let mut r = quiet(small_config(4), dir.path(), true);
    r.run_all().unwrap();
    for s in ["simulate", "imi", "irm", "plot"] {
        assert_eq!(r.manifest.stages[s].wall_clock_s, before.stages[s].wall_clock_s, "{s} was rerun");
    }
    assert_ne!(r.manifest.stages["nnmf"].wall_clock_s, before.stages["nnmf"].wall_clock_s);
    assert_eq!(r.manifest.stages["nnmf"].outputs, before.stages["nnmf"].outputs);
}

#[test]
fn config_change_invalidates_downstream_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = quiet(small_config(5), dir.path(), false);
    p.run_all().unwrap();
    let before = p.manifest.clone();
    let mut c = small_config(5);
    c.nnmf.rank = 2;
    let mut r = quiet(c, dir.path(), true);
    r.run_all().unwrap();
    assert_eq!(r.manifest.stages["irm"].wall_clock_s, before.stages["irm"].wall_clock_s);
    assert_ne!(r.manifest.stages["nnmf"].wall_clock_s, before.stages["nnmf"].wall_clock_s);
    assert_eq!(r.manifest.derived.n_f, Some(2));
    assert!(!dir.path().join("plots/factor_03.svg").exists());
}

#[test]
fn stale_and_missing_inputs_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = quiet(small_config(6), dir.path(), false);
    let err = p.run_stage(Stage::Imi).unwrap_err();
    assert_eq!(err.stage(), Some(Stage::Imi));
    assert!(matches!(err, PipelineError::Stage { ref source, .. } if matches!(**source, PipelineError::Missing { needs: Stage::Simulate, .. })));
    assert!(err.to_string().contains("imi"));

    p.run_stage(Stage::Simulate).unwrap();
    let sensors = dir.path().join(a::SENSORS);
    let mut text = fs::read_to_string(&sensors).unwrap();
    text.push('\n');
    fs::write(&sensors, text).unwrap();
    let err = p.run_stage(Stage::Imi).unwrap_err();
    assert!(matches!(err, PipelineError::Stage { ref source, .. } if matches!(**source, PipelineError::Stale { producer: Stage::Simulate, .. })), "{err}");
    // The simulate artifacts are still there.
    assert!(dir.path().join(a::TRAJECTORY).exists());
}

#[test]
fn adaptive_threshold_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(7);
    c.imi.threshold = dfc_core::imi::ThresholdRule::MeanPlusStd;
    let mut p = quiet(c, dir.path(), false);
    p.run_stage(Stage::Simulate).unwrap();
    p.run_stage(Stage::Imi).unwrap();
    let t = p.manifest.derived.threshold_nats.unwrap();
    assert!(t > 0.0 && t < 4f64.ln());
}

#[test]
fn plots_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = quiet(small_config(8), dir.path(), false);
    p.run_all().unwrap();
    let first = fs::read(dir.path().join("plots/scores.svg")).unwrap();
    p.resume = false;
    p.run_stage(Stage::Plot).unwrap();
    assert_eq!(fs::read(dir.path().join("plots/scores.svg")).unwrap(), first);
}
