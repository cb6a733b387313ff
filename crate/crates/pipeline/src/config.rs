use std::path::Path;

use dfc_core::babbling::DEFAULT_PERIOD;
use dfc_core::dynamics::RobotParams;
use dfc_core::imi::{ThresholdRule, WindowSpec};
use dfc_core::irm::{ChainInit, IRMHyper};
use dfc_core::nnmf::NnmfOptions;
use dfc_core::sensory::{
    ProprioLayout, SensorLayout, TactileLayout, VisualField, DEFAULT_NEURONS_PER_JOINT,
    DEFAULT_SATURATION_DEPTH_FRACTION, DEFAULT_TACTILE_COUNT, DEFAULT_TACTILE_WIDTH_FRACTION, DEFAULT_VISUAL_DIMS,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

/// Everything that determines a run. One seed drives babbling, tactile
/// placement, the IRM chains and the NNMF initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub sensors: SensorConfig,
    #[serde(default)]
    pub babbling: BabblingConfig,
    #[serde(default)]
    pub imi: ImiConfig,
    #[serde(default)]
    pub irm: IrmConfig,
    #[serde(default)]
    pub nnmf: NnmfConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sim: SimConfig::default(),
            sensors: SensorConfig::default(),
            babbling: BabblingConfig::default(),
            imi: ImiConfig::default(),
            irm: IrmConfig::default(),
            nnmf: NnmfConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Seconds.
    pub duration: f64,
    /// Seconds.
    pub dt: f64,
    pub robot: RobotParams<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { duration: 30.0, dt: 1e-3, robot: RobotParams::default() }
    }
}

impl SimConfig {
    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Integer sampling rate in Hz.
    pub fn rate(&self) -> Result<u32> {
        let r = (1.0 / self.dt).round();
        if !(self.dt > 0.0) || ((1.0 / self.dt) - r).abs() > 1e-6 * r || r < 1.0 {
            return Err(PipelineError::Config(format!("dt = {} s is not 1/n for an integer rate", self.dt)));
        }
        Ok(r as u32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub neurons_per_joint: usize,
    pub tactile_count: usize,
    /// RF width as a fraction of the summed body outline length.
    pub tactile_width_fraction: f64,
    /// Penetration, as a fraction of the thinnest link radius, that
    /// saturates the force modulation.
    pub saturation_depth_fraction: f64,
    pub visual_dims: (usize, usize),
    /// Overrides the square field that covers the full reach:
    /// `[x_min, y_min, x_max, y_max]`.
    pub visual_rect: Option<[f64; 4]>,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            neurons_per_joint: DEFAULT_NEURONS_PER_JOINT,
            tactile_count: DEFAULT_TACTILE_COUNT,
            tactile_width_fraction: DEFAULT_TACTILE_WIDTH_FRACTION,
            saturation_depth_fraction: DEFAULT_SATURATION_DEPTH_FRACTION,
            visual_dims: DEFAULT_VISUAL_DIMS,
            visual_rect: None,
        }
    }
}

impl SensorConfig {
    pub fn layout(&self, robot: &RobotParams<f64>, seed: u64) -> Result<SensorLayout<f64>> {
        let mut visual = VisualField::covering(robot, self.visual_dims)?;
        if let Some([x0, y0, x1, y1]) = self.visual_rect {
            if !(x1 > x0 && y1 > y0) {
                return Err(PipelineError::Config(format!("empty visual rectangle {:?}", self.visual_rect)));
            }
            visual.origin = [x0, y0];
            visual.extent = [x1 - x0, y1 - y0];
        }
        Ok(SensorLayout {
            proprio: ProprioLayout::from_limits(&robot.joint_limits, self.neurons_per_joint)?,
            tactile: TactileLayout::random(
                robot,
                self.tactile_count,
                self.tactile_width_fraction,
                self.saturation_depth_fraction,
                seed,
            )?,
            visual,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BabblingConfig {
    /// Base period `T0` in seconds.
    pub period: f64,
}

impl Default for BabblingConfig {
    fn default() -> Self {
        Self { period: DEFAULT_PERIOD }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImiConfig {
    pub analysis_rate: u32,
    pub window_len: usize,
    pub step: usize,
    pub n_bins: usize,
    pub threshold: ThresholdRule,
}

impl Default for ImiConfig {
    fn default() -> Self {
        let w = WindowSpec::default();
        Self {
            analysis_rate: w.analysis_rate,
            window_len: w.window_len,
            step: w.step,
            n_bins: w.n_bins,
            threshold: ThresholdRule::default(),
        }
    }
}

impl ImiConfig {
    pub fn window(&self) -> WindowSpec {
        WindowSpec {
            analysis_rate: self.analysis_rate,
            window_len: self.window_len,
            step: self.step,
            n_bins: self.n_bins,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrmConfig {
    pub crp_alpha: f64,
    pub beta_a: f64,
    pub beta_b: f64,
    pub n_sweeps: usize,
    pub n_restarts: usize,
    pub init: ChainInit,
    /// Split-merge proposals per sweep; 0 gives plain Gibbs.
    pub split_merge: usize,
}

impl Default for IrmConfig {
    fn default() -> Self {
        let h = IRMHyper::default();
        Self {
            crp_alpha: h.crp_alpha,
            beta_a: h.beta_a,
            beta_b: h.beta_b,
            n_sweeps: h.n_sweeps,
            n_restarts: h.n_restarts,
            init: h.init,
            split_merge: h.split_merge,
        }
    }
}

impl IrmConfig {
    pub fn hyper(&self, seed: u64) -> IRMHyper {
        IRMHyper {
            crp_alpha: self.crp_alpha,
            beta_a: self.beta_a,
            beta_b: self.beta_b,
            n_sweeps: self.n_sweeps,
            n_restarts: self.n_restarts,
            seed,
            init: self.init,
            split_merge: self.split_merge,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnmfConfig {
    /// Factor count used when `select_ranks` is unset.
    pub rank: usize,
    /// Candidate ranks `[min, max]` for the elbow rule; the selected rank
    /// replaces `rank`.
    pub select_ranks: Option<[usize; 2]>,
    pub elbow_fraction: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for NnmfConfig {
    fn default() -> Self {
        let o = NnmfOptions::default();
        Self { rank: 25, select_ranks: None, elbow_fraction: 0.05, max_iter: o.max_iter, tol: o.tol }
    }
}

impl NnmfConfig {
    pub fn options(&self, seed: u64) -> NnmfOptions {
        NnmfOptions { max_iter: self.max_iter, tol: self.tol, seed }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.robot.validate()?;
        self.sim.rate()?;
        if !(self.sim.duration > 0.0) || self.sim.n_steps() == 0 {
            return Err(PipelineError::Config("simulation duration must cover at least one step".into()));
        }
        self.imi.window().validate()?;
        if !(self.babbling.period > 0.0) {
            return Err(PipelineError::Config("babbling period must be positive".into()));
        }
        self.irm.hyper(self.seed).validate()?;
        let n = &self.nnmf;
        if n.rank == 0 || !(n.tol >= 0.0) || n.max_iter == 0 {
            return Err(PipelineError::Config("nnmf needs rank >= 1, max_iter >= 1 and tol >= 0".into()));
        }
        if let Some([lo, hi]) = n.select_ranks {
            if lo == 0 || lo > hi {
                return Err(PipelineError::Config(format!("bad rank range [{lo}, {hi}]")));
            }
        }
        if !(n.elbow_fraction > 0.0 && n.elbow_fraction < 1.0) {
            return Err(PipelineError::Config("elbow fraction must be in (0, 1)".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Hash of the parts of the config a stage (and its predecessors) reads.
    pub fn stage_hash(&self, stage: crate::Stage) -> String {
        use crate::Stage::*;
        let mut h = Sha256::new();
        let mut feed = |v: String| h.update(v.as_bytes());
        feed(format!("seed={}", self.seed));
        feed(toml::to_string(&self.sim).expect("serializes"));
        feed(toml::to_string(&self.sensors).expect("serializes"));
        feed(toml::to_string(&self.babbling).expect("serializes"));
        if stage >= Imi {
            feed(toml::to_string(&self.imi).expect("serializes"));
        }
        if stage >= Irm {
            feed(toml::to_string(&self.irm).expect("serializes"));
        }
        if stage >= Nnmf {
            feed(toml::to_string(&self.nnmf).expect("serializes"));
        }
        hex::encode(h.finalize())
    }
}
