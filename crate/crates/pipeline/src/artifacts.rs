//! Reading and writing the files of a run directory.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use dfc_core::dynamics::{Trajectory, N_JOINTS};
use dfc_core::imi::SignalStream;
use dfc_core::irm::Partition;
use dfc_core::sensory::SignalInfo;
use dfc_core::tensor::{self, Tensor};

use crate::error::{PipelineError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.toml";
pub const TRAJECTORY: &str = "trajectory.csv";
pub const CONTACTS: &str = "contacts.csv";
pub const SENSORS: &str = "sensors.csv";
pub const SIGNALS: &str = "signals.json";
pub const IMI: &str = "imi.bin";
pub const GRAPHS: &str = "graphs.bin";
pub const DENSITY: &str = "density.csv";
pub const PARTITION: &str = "partition.csv";
pub const LINK_DENSITY: &str = "linkdensity.bin";
pub const IRM_TRACE: &str = "irm_trace.csv";
pub const FACTORS: &str = "factors.bin";
pub const SCORES: &str = "scores.bin";
pub const FACTOR_PAIRS: &str = "factor_pairs.csv";
pub const RANK_CURVE: &str = "rank_curve.csv";
pub const PLOTS: &str = "plots";

/// Pair weights at or below this are left out of factor listings.
pub const LISTING_MIN_WEIGHT: f64 = 1e-3;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.into(), source }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> PipelineError + '_ {
    move |e| PipelineError::Parse { path: path.into(), message: e.to_string() }
}

fn parse_err(path: &Path, message: impl Into<String>) -> PipelineError {
    PipelineError::Parse { path: path.into(), message: message.into() }
}

/// Writes through a temporary sibling so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    with_atomic(path, |w| w.write_all(bytes).map_err(io_err(path)))
}

pub fn with_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let tmp = tmp_path(path);
    let mut w = BufWriter::with_capacity(1 << 20, File::create(&tmp).map_err(io_err(&tmp))?);
    body(&mut w)?;
    w.flush().map_err(io_err(&tmp))?;
    drop(w);
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().expect("file path").to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn write_tensor_file(path: &Path, t: &Tensor) -> Result<()> {
    with_atomic(path, |w| Ok(tensor::write_tensor(w, t)?))
}

pub fn read_tensor_file(path: &Path) -> Result<Tensor> {
    let r = BufReader::with_capacity(1 << 20, File::open(path).map_err(io_err(path))?);
    tensor::read_tensor(r).map_err(|e| parse_err(path, e.to_string()))
}

pub fn write_trajectory(path: &Path, traj: &Trajectory<f64>) -> Result<()> {
    with_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=N_JOINTS).map(|j| format!("q{j}")));
        header.extend((1..=N_JOINTS).map(|j| format!("qd{j}")));
        header.extend(["contact_count".to_string(), "contact_force_total".to_string()]);
        out.write_record(&header).map_err(csv_err(path))?;
        for (s, c) in traj.states.iter().zip(&traj.contacts) {
            let mut row = vec![s.t.to_string()];
            row.extend(s.q.iter().map(|x| x.to_string()));
            row.extend(s.qd.iter().map(|x| x.to_string()));
            row.push(c.len().to_string());
            row.push(c.iter().map(|e| e.force).sum::<f64>().to_string());
            out.write_record(&row).map_err(csv_err(path))?;
        }
        out.flush().map_err(io_err(path))
    })
}

/// `(t, contact_count)` per recorded step.
pub fn read_contact_counts(path: &Path) -> Result<Vec<(f64, usize)>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = r.headers().map_err(csv_err(path))?.clone();
    let col = headers
        .iter()
        .position(|h| h == "contact_count")
        .ok_or_else(|| parse_err(path, "no contact_count column"))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let t = rec[0].parse().map_err(|_| parse_err(path, format!("bad time {:?}", &rec[0])))?;
        let c = rec[col].parse().map_err(|_| parse_err(path, format!("bad count {:?}", &rec[col])))?;
        out.push((t, c));
    }
    Ok(out)
}

pub fn write_contacts(path: &Path, traj: &Trajectory<f64>) -> Result<()> {
    with_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "body_a", "body_b", "x", "y", "depth", "force"]).map_err(csv_err(path))?;
        for (s, cs) in traj.states.iter().zip(&traj.contacts) {
            for c in cs {
                out.write_record([
                    s.t.to_string(),
                    c.pair.0.name(),
                    c.pair.1.name(),
                    c.point[0].to_string(),
                    c.point[1].to_string(),
                    c.depth.to_string(),
                    c.force.to_string(),
                ])
                .map_err(csv_err(path))?;
            }
        }
        out.flush().map_err(io_err(path))
    })
}

/// Sensor frames at the simulation rate, `t,s_1..s_N`.
pub fn write_sensors(path: &Path, stream: &SignalStream<f64>) -> Result<()> {
    with_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=stream.n_signals).map(|i| format!("s_{i}")));
        out.write_record(&header).map_err(csv_err(path))?;
        let mut row = Vec::with_capacity(stream.n_signals + 1);
        for k in 0..stream.len() {
            row.clear();
            row.push(stream.times[k].to_string());
            row.extend(stream.frame(k).iter().map(|x| x.to_string()));
            out.write_record(&row).map_err(csv_err(path))?;
        }
        out.flush().map_err(io_err(path))
    })
}

pub fn read_sensors(path: &Path) -> Result<SignalStream<f64>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = csv::Reader::from_reader(BufReader::with_capacity(1 << 20, file));
    let n = r.headers().map_err(csv_err(path))?.len().saturating_sub(1);
    let mut stream = SignalStream::new(n);
    let mut frame = Vec::with_capacity(n);
    let mut rec = csv::StringRecord::new();
    while r.read_record(&mut rec).map_err(csv_err(path))? {
        let mut it = rec.iter().map(|f| f.parse::<f64>());
        let t = it.next().and_then(|x| x.ok()).ok_or_else(|| parse_err(path, "bad time column"))?;
        frame.clear();
        for v in it {
            frame.push(v.map_err(|e| parse_err(path, e.to_string()))?);
        }
        stream.push(t, &frame)?;
    }
    Ok(stream)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializes");
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
}

pub fn write_partition(path: &Path, partition: &Partition, signals: &[SignalInfo]) -> Result<()> {
    with_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["signal_index", "cluster_id", "modality", "body", "location"]).map_err(csv_err(path))?;
        for (i, (&c, s)) in partition.assignment.iter().zip(signals).enumerate() {
            out.write_record([i.to_string(), c.to_string(), s.modality().as_str().to_string(), s.body(), s.location()])
                .map_err(csv_err(path))?;
        }
        out.flush().map_err(io_err(path))
    })
}

/// Cluster id per signal, in signal order.
pub fn read_partition(path: &Path) -> Result<Partition> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut labels = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let i: usize = rec[0].parse().map_err(|_| parse_err(path, "bad signal index"))?;
        if i != row {
            return Err(parse_err(path, format!("signal {i} out of order")));
        }
        labels.push(rec[1].parse::<usize>().map_err(|_| parse_err(path, "bad cluster id"))?);
    }
    let p = Partition { n_clusters: labels.iter().max().map_or(0, |m| m + 1), assignment: labels, log_joint: f64::NAN };
    p.validate()?;
    Ok(p)
}

/// Writes `header` then one row per item.
pub fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    with_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(header).map_err(csv_err(path))?;
        for r in rows {
            out.write_record(r).map_err(csv_err(path))?;
        }
        out.flush().map_err(io_err(path))
    })
}
