use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use dfc_core::babbling::BabblingProgram;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    /// Keyed by stage name.
    pub stages: BTreeMap<String, StageRecord>,
    pub derived: Derived,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash of the config sections this stage depends on.
    pub config_hash: String,
    /// File name -> SHA-256 at the time the stage read it.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_s: f64,
}

/// Quantities derived along the way.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub n_frames: Option<usize>,
    pub n_s: Option<usize>,
    pub touch_frames: Option<usize>,
    pub touch_episodes: Option<usize>,
    pub babbling_program: Option<BabblingProgram<f64>>,
    pub n_windows: Option<usize>,
    pub threshold_nats: Option<f64>,
    pub density_min: Option<f64>,
    pub density_max: Option<f64>,
    pub density_mean: Option<f64>,
    pub n_c: Option<usize>,
    pub log_joint: Option<f64>,
    pub modality_pure_clusters: Option<usize>,
    pub n_f: Option<usize>,
    pub d: Option<f64>,
    pub energies: Option<Vec<f64>>,
    pub rank_curve: Option<Vec<(usize, f64)>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Parse { path: path.into(), message: e.to_string() })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        crate::artifacts::write_atomic(path, text.as_bytes())
    }
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let io = |source| PipelineError::Io { path: path.into(), source };
    let mut r = BufReader::with_capacity(1 << 20, File::open(path).map_err(io)?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = r.read(&mut buf).map_err(io)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}
