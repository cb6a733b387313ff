//! End-to-end pipeline: simulate the babbling agent, compute the IMI graph
//! series, fit the IRM and factorize the module link densities, persisting
//! every stage in a run directory with checksums.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod manifest;
pub mod plot;
pub mod report;
pub mod stages;
pub mod svg;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::RunConfig;
pub use error::{PipelineError, Result};
pub use manifest::RunManifest;

use artifacts as a;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Simulate,
    Imi,
    Irm,
    Nnmf,
    Plot,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Simulate, Stage::Imi, Stage::Irm, Stage::Nnmf, Stage::Plot];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Imi => "imi",
            Stage::Irm => "irm",
            Stage::Nnmf => "nnmf",
            Stage::Plot => "plot",
        }
    }

    /// Files read, with the stage that produces each.
    pub fn inputs(self) -> &'static [(&'static str, Stage)] {
        match self {
            Stage::Simulate => &[],
            Stage::Imi => &[(a::SENSORS, Stage::Simulate)],
            Stage::Irm => &[(a::GRAPHS, Stage::Imi), (a::SIGNALS, Stage::Simulate)],
            Stage::Nnmf => &[(a::LINK_DENSITY, Stage::Irm)],
            Stage::Plot => &[
                (a::TRAJECTORY, Stage::Simulate),
                (a::SIGNALS, Stage::Simulate),
                (a::PARTITION, Stage::Irm),
                (a::LINK_DENSITY, Stage::Irm),
                (a::FACTORS, Stage::Nnmf),
                (a::SCORES, Stage::Nnmf),
            ],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A run directory bound to a config.
pub struct Pipeline {
    pub config: RunConfig,
    pub dir: PathBuf,
    pub manifest: RunManifest,
    /// Skip stages whose recorded inputs, outputs and config still match.
    pub resume: bool,
    /// Progress lines go to stderr unless cleared.
    pub verbose: bool,
}

impl Pipeline {
    /// Creates `dir` if needed and writes the config into it. An existing
    /// manifest is kept so stages can be resumed or fed from earlier ones.
    pub fn open(config: RunConfig, dir: &Path, resume: bool) -> Result<Self> {
        config.validate()?;
        std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.into(), source })?;
        let mpath = dir.join(a::MANIFEST);
        let mut manifest = if mpath.exists() { RunManifest::load(&mpath)? } else { RunManifest::default() };
        manifest.config_hash = config.hash();
        a::write_atomic(&dir.join(a::CONFIG), config.to_toml().as_bytes())?;
        Ok(Self { config, dir: dir.into(), manifest, resume, verbose: true })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[dfc] {}", msg.as_ref());
        }
    }

    /// Runs every stage in order.
    pub fn run_all(&mut self) -> Result<&RunManifest> {
        for s in Stage::ALL {
            self.run_stage(s)?;
        }
        Ok(&self.manifest)
    }

    /// Runs one stage (or skips it when resuming and it is current). Errors
    /// name the stage; artifacts of earlier stages are left untouched.
    pub fn run_stage(&mut self, stage: Stage) -> Result<()> {
        self.run_stage_inner(stage).map_err(|e| match e {
            e @ PipelineError::Stage { .. } => e,
            e => PipelineError::Stage { stage, source: Box::new(e) },
        })
    }

    fn run_stage_inner(&mut self, stage: Stage) -> Result<()> {
        let inputs = self.check_inputs(stage)?;
        if self.resume && self.is_current(stage, &inputs)? {
            self.log(format!("{stage}: up to date"));
            return Ok(());
        }
        self.manifest.stages.remove(stage.name());
        self.log(format!("{stage}: running"));
        let t0 = Instant::now();
        let outputs = stages::run(self, stage)?;
        let mut record = manifest::StageRecord {
            config_hash: self.config.stage_hash(stage),
            inputs,
            outputs: BTreeMap::new(),
            wall_clock_s: t0.elapsed().as_secs_f64(),
        };
        for f in outputs {
            record.outputs.insert(f.clone(), manifest::sha256_file(&self.path(&f))?);
        }
        self.log(format!("{stage}: done in {:.1} s", record.wall_clock_s));
        self.manifest.stages.insert(stage.name().into(), record);
        self.manifest.save(&self.path(a::MANIFEST))
    }

    /// Checksums of a stage's inputs, each verified against the record of
    /// the stage that wrote it.
    fn check_inputs(&self, stage: Stage) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for &(file, producer) in stage.inputs() {
            let path = self.path(file);
            let recorded = self.manifest.stages.get(producer.name()).and_then(|r| r.outputs.get(file));
            let (Some(recorded), true) = (recorded, path.exists()) else {
                return Err(PipelineError::Missing { file: file.into(), needs: producer });
            };
            let sum = manifest::sha256_file(&path)?;
            if &sum != recorded {
                return Err(PipelineError::Stale { file: file.into(), producer });
            }
            out.insert(file.to_string(), sum);
        }
        Ok(out)
    }

    fn is_current(&self, stage: Stage, inputs: &BTreeMap<String, String>) -> Result<bool> {
        let Some(rec) = self.manifest.stages.get(stage.name()) else {
            return Ok(false);
        };
        if rec.config_hash != self.config.stage_hash(stage) || &rec.inputs != inputs || rec.outputs.is_empty() {
            return Ok(false);
        }
        for (file, sum) in &rec.outputs {
            let p = self.path(file);
            if !p.exists() || &manifest::sha256_file(&p)? != sum {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Convenience: open `dir` and run every stage.
pub fn run(config: RunConfig, dir: &Path, resume: bool) -> Result<RunManifest> {
    let mut p = Pipeline::open(config, dir, resume)?;
    p.run_all()?;
    Ok(p.manifest)
}
