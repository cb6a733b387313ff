//! Flat little-endian tensor files shared by every persisted series.
//!
//! Layout: `b"DFCT"`, version byte, dtype byte, layout byte, rank byte, then
//! `rank` u64 dimensions and the payload. The leading dimension is always the
//! window count; the payload length is implied by dtype, layout and dims.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::imi::{BinaryGraphSeries, MIMatrix};
use crate::irm::LinkDensitySeries;
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"DFCT";
pub const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed tensor: {0}")]
    Format(String),
}

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
    U64 = 2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Row-major over all dims.
    Dense = 0,
    /// `[windows, n]`: per window, the upper triangle of an `n x n`
    /// symmetric matrix including the diagonal, row by row.
    SymmetricPacked = 1,
    /// `[windows, n]`: per window, `n` rows of `ceil(n / 64)` adjacency words.
    BitRows = 2,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U64(Vec<u64>),
}

impl Payload {
    fn dtype(&self) -> DType {
        match self {
            Payload::F32(_) => DType::F32,
            Payload::F64(_) => DType::F64,
            Payload::U64(_) => DType::U64,
        }
    }

    fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
            Payload::U64(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub layout: Layout,
    pub dims: Vec<usize>,
    pub data: Payload,
}

/// Element count implied by a layout and its dims.
pub fn payload_len(layout: Layout, dims: &[usize]) -> Result<usize> {
    let bad = |m: &str| Err(TensorError::Format(m.to_string()));
    match layout {
        Layout::Dense => Ok(dims.iter().product()),
        Layout::SymmetricPacked | Layout::BitRows if dims.len() != 2 => bad("packed layouts need [windows, n]"),
        Layout::SymmetricPacked => Ok(dims[0] * dims[1] * (dims[1] + 1) / 2),
        Layout::BitRows => Ok(dims[0] * dims[1] * dims[1].div_ceil(64).max(1)),
    }
}

/// Incremental writer for series produced one window at a time.
pub struct TensorWriter<W: Write> {
    out: W,
    dtype: DType,
    expected: usize,
    written: usize,
}

impl<W: Write> TensorWriter<W> {
    pub fn new(mut out: W, dtype: DType, layout: Layout, dims: &[usize]) -> Result<Self> {
        let expected = payload_len(layout, dims)?;
        if dims.len() > u8::MAX as usize {
            return Err(TensorError::Format("too many dimensions".into()));
        }
        out.write_all(MAGIC)?;
        out.write_all(&[VERSION, dtype as u8, layout as u8, dims.len() as u8])?;
        for &d in dims {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        Ok(Self { out, dtype, expected, written: 0 })
    }

    fn check(&mut self, dtype: DType, n: usize) -> Result<()> {
        if dtype != self.dtype {
            return Err(TensorError::Format(format!("writing {dtype:?} into a {:?} tensor", self.dtype)));
        }
        self.written += n;
        if self.written > self.expected {
            return Err(TensorError::Format(format!("payload exceeds {} elements", self.expected)));
        }
        Ok(())
    }

    pub fn write_f32(&mut self, v: &[f32]) -> Result<()> {
        self.check(DType::F32, v.len())?;
        let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
        Ok(self.out.write_all(&bytes)?)
    }

    pub fn write_f64(&mut self, v: &[f64]) -> Result<()> {
        self.check(DType::F64, v.len())?;
        let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
        Ok(self.out.write_all(&bytes)?)
    }

    pub fn write_u64(&mut self, v: &[u64]) -> Result<()> {
        self.check(DType::U64, v.len())?;
        let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
        Ok(self.out.write_all(&bytes)?)
    }

    /// Fails unless exactly the declared number of elements was written.
    pub fn finish(mut self) -> Result<W> {
        if self.written != self.expected {
            return Err(TensorError::Format(format!(
                "wrote {} of {} elements",
                self.written, self.expected
            )));
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_tensor<W: Write>(out: W, t: &Tensor) -> Result<()> {
    let expected = payload_len(t.layout, &t.dims)?;
    if t.data.len() != expected {
        return Err(TensorError::Format(format!("payload has {} elements, dims imply {expected}", t.data.len())));
    }
    let mut w = TensorWriter::new(out, t.data.dtype(), t.layout, &t.dims)?;
    match &t.data {
        Payload::F32(v) => w.write_f32(v)?,
        Payload::F64(v) => w.write_f64(v)?,
        Payload::U64(v) => w.write_u64(v)?,
    }
    w.finish()?;
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<Tensor> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Err(TensorError::Format("bad magic".into()));
    }
    if head[4] != VERSION {
        return Err(TensorError::Format(format!("unsupported version {}", head[4])));
    }
    let dtype = match head[5] {
        0 => DType::F32,
        1 => DType::F64,
        2 => DType::U64,
        d => return Err(TensorError::Format(format!("unknown dtype {d}"))),
    };
    let layout = match head[6] {
        0 => Layout::Dense,
        1 => Layout::SymmetricPacked,
        2 => Layout::BitRows,
        l => return Err(TensorError::Format(format!("unknown layout {l}"))),
    };
    let mut dims = Vec::with_capacity(head[7] as usize);
    for _ in 0..head[7] {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        dims.push(usize::try_from(u64::from_le_bytes(b)).map_err(|_| TensorError::Format("dimension overflow".into()))?);
    }
    let n = payload_len(layout, &dims)?;
    let width = if dtype == DType::F32 { 4 } else { 8 };
    let mut bytes = vec![0u8; n * width];
    r.read_exact(&mut bytes)?;
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(TensorError::Format("trailing bytes after payload".into()));
    }
    let data = match dtype {
        DType::F32 => Payload::F32(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
        DType::F64 => Payload::F64(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
        DType::U64 => Payload::U64(bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect()),
    };
    Ok(Tensor { layout, dims, data })
}

impl Tensor {
    /// Dense f64 tensor.
    pub fn dense_f64(dims: Vec<usize>, data: Vec<f64>) -> Self {
        Tensor { layout: Layout::Dense, dims, data: Payload::F64(data) }
    }

    pub fn expect_f64(self, layout: Layout, rank: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        match self {
            Tensor { layout: l, dims, data: Payload::F64(v) } if l == layout && dims.len() == rank => Ok((dims, v)),
            t => Err(TensorError::Format(format!(
                "expected rank-{rank} {layout:?} f64, found rank-{} {:?} {:?}",
                t.dims.len(),
                t.layout,
                t.data.dtype()
            ))),
        }
    }
}

/// `[windows, n]` symmetric-packed f32 tensor of an IMI series.
pub fn mi_series_tensor<T: Real>(series: &[MIMatrix<T>]) -> Tensor {
    let n = series.first().map_or(0, |m| m.n);
    let data = series.iter().flat_map(|m| m.packed.iter().map(|x| x.to_f64_lossy() as f32)).collect();
    Tensor { layout: Layout::SymmetricPacked, dims: vec![series.len(), n], data: Payload::F32(data) }
}

/// Windows of a symmetric-packed f32 tensor. Window end indices are not
/// stored; they are left as the window ordinal.
pub fn mi_series_from_tensor(t: Tensor) -> Result<Vec<MIMatrix<f32>>> {
    let Tensor { layout: Layout::SymmetricPacked, dims, data: Payload::F32(v) } = t else {
        return Err(TensorError::Format("expected a symmetric-packed f32 tensor".into()));
    };
    let n = dims[1];
    let per = n * (n + 1) / 2;
    Ok(v.chunks_exact(per.max(1))
        .take(dims[0])
        .enumerate()
        .map(|(w, c)| MIMatrix { n, window_end_index: w, packed: c.to_vec() })
        .collect())
}

pub fn graphs_tensor(g: &BinaryGraphSeries) -> Tensor {
    Tensor {
        layout: Layout::BitRows,
        dims: vec![g.n_windows(), g.n_nodes()],
        data: Payload::U64(g.as_words().to_vec()),
    }
}

pub fn graphs_from_tensor(t: Tensor, threshold_used: f64) -> Result<BinaryGraphSeries> {
    let Tensor { layout: Layout::BitRows, dims, data: Payload::U64(v) } = t else {
        return Err(TensorError::Format("expected a bit-row u64 tensor".into()));
    };
    BinaryGraphSeries::from_words(dims[1], threshold_used, v).map_err(|e| TensorError::Format(e.to_string()))
}

/// `[windows, n_clusters, n_clusters]` dense f64.
pub fn link_density_tensor<T: Real>(h: &LinkDensitySeries<T>) -> Tensor {
    Tensor::dense_f64(
        vec![h.n_windows, h.n_clusters, h.n_clusters],
        h.values.iter().map(|x| x.to_f64_lossy()).collect(),
    )
}

pub fn link_density_from_tensor(t: Tensor) -> Result<LinkDensitySeries<f64>> {
    let (dims, values) = t.expect_f64(Layout::Dense, 3)?;
    if dims[1] != dims[2] {
        return Err(TensorError::Format(format!("link densities must be square, got {dims:?}")));
    }
    Ok(LinkDensitySeries { n_clusters: dims[1], n_windows: dims[0], values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(t: &Tensor) -> Tensor {
        let mut buf = Vec::new();
        write_tensor(&mut buf, t).unwrap();
        read_tensor(buf.as_slice()).unwrap()
    }

    #[test]
    fn dense_roundtrip() {
        let t = Tensor::dense_f64(vec![2, 3], vec![1.0, -0.5, 1e-300, f64::MAX, 0.0, 3.25]);
        assert_eq!(roundtrip(&t), t);
    }

    #[test]
    fn header_bytes() {
        let t = Tensor { layout: Layout::SymmetricPacked, dims: vec![1, 2], data: Payload::F32(vec![1.0, 2.0, 3.0]) };
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert_eq!(&buf[..8], b"DFCT\x01\x00\x01\x02");
        assert_eq!(buf.len(), 8 + 16 + 12);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 2);
    }

    #[test]
    fn truncated_and_trailing_rejected() {
        let t = Tensor::dense_f64(vec![3], vec![1.0, 2.0, 3.0]);
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert!(read_tensor(&buf[..buf.len() - 1]).is_err());
        buf.push(0);
        assert!(read_tensor(buf.as_slice()).is_err());
        assert!(read_tensor(&b"NOPE\x01\x01\x00\x00"[..]).is_err());
    }

    #[test]
    fn wrong_length_rejected() {
        let t = Tensor::dense_f64(vec![2, 2], vec![1.0]);
        assert!(write_tensor(Vec::new(), &t).is_err());
        let mut w = TensorWriter::new(Vec::new(), DType::F32, Layout::Dense, &[2]).unwrap();
        assert!(w.write_f64(&[1.0]).is_err());
        w.write_f32(&[1.0]).unwrap();
        assert!(w.finish().is_err());
    }

    #[test]
    fn graphs_roundtrip() {
        let mut g = BinaryGraphSeries::new(70, 0.3);
        g.push_edges([(0, 1), (5, 69), (63, 64)]);
        g.push_edges([]);
        let back = graphs_from_tensor(roundtrip(&graphs_tensor(&g)), 0.3).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn corrupt_graph_rejected() {
        let mut g = BinaryGraphSeries::new(3, 0.3);
        g.push_edges([(0, 1)]);
        let mut words = g.as_words().to_vec();
        words[0] |= 1; // self-edge on node 0
        assert!(BinaryGraphSeries::from_words(3, 0.3, words).is_err());
        let mut words = g.as_words().to_vec();
        words[2] |= 1; // 2 -> 0 without 0 -> 2
        assert!(BinaryGraphSeries::from_words(3, 0.3, words).is_err());
    }

    #[test]
    fn mi_series_roundtrip() {
        let m = MIMatrix { n: 3, window_end_index: 0, packed: vec![1.0f64, 0.5, 0.25, 1.0, 0.125, 0.0] };
        let back = mi_series_from_tensor(roundtrip(&mi_series_tensor(&[m.clone(), m.clone()]))).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].packed, vec![1.0f32, 0.5, 0.25, 1.0, 0.125, 0.0]);
    }

    #[test]
    fn link_density_roundtrip() {
        let h = LinkDensitySeries { n_clusters: 2, n_windows: 2, values: vec![0.5, 0.25, 0.25, 0.75, 0.1, 0.2, 0.2, 0.3] };
        assert_eq!(link_density_from_tensor(roundtrip(&link_density_tensor(&h))).unwrap(), h);
    }
}
