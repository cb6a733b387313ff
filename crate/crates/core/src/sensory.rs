//! Population-coded visuosomatosensory vector `s = [p; r; v]`.
//!
//! * proprioception: Gaussian receptive fields tiling each joint's range;
//! * touch: Gaussian receptive fields along the body surface, scaled by a
//!   saturating function of contact force;
//! * vision: binary limb raster on a fixed pixel grid, blurred with a 3x3
//!   kernel and clipped to 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::geometry::{Rect, RoundedPolygon};
use crate::dynamics::{
    chain_pose, link_segments, Arm, Body, ContactEvent, JointState, RobotParams, N_JOINTS,
};
use crate::error::{Error, Result};
use crate::scalar::{v2, Real};

pub const DEFAULT_NEURONS_PER_JOINT: usize = 8;
pub const DEFAULT_TACTILE_COUNT: usize = 60;
pub const DEFAULT_TACTILE_WIDTH_FRACTION: f64 = 0.02;
pub const DEFAULT_SATURATION_DEPTH_FRACTION: f64 = 0.05;
pub const DEFAULT_VISUAL_DIMS: (usize, usize) = (15, 15);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProprioLayout<T> {
    /// Receptive-field centers per joint, strictly increasing.
    pub centers: Vec<Vec<T>>,
    /// Receptive-field width per joint.
    pub widths: Vec<T>,
}

impl<T: Real> ProprioLayout<T> {
    /// Centers evenly spaced over each joint's limits (endpoints included),
    /// width half the spacing.
    pub fn from_limits(limits: &[[T; 2]; N_JOINTS], neurons_per_joint: usize) -> Result<Self> {
        if neurons_per_joint < 2 {
            return Err(Error::Config("need at least two proprioceptive neurons per joint".into()));
        }
        let steps = T::from_usize_lossy(neurons_per_joint - 1);
        let mut centers = Vec::with_capacity(N_JOINTS);
        let mut widths = Vec::with_capacity(N_JOINTS);
        for [lo, hi] in limits {
            let spacing = (*hi - *lo) / steps;
            centers.push((0..neurons_per_joint).map(|i| *lo + spacing * T::from_usize_lossy(i)).collect());
            widths.push(spacing * T::lit(0.5));
        }
        Ok(Self { centers, widths })
    }

    pub fn neurons_per_joint(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.centers.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Activation `exp(-(q_j - mu)^2 / (2 sigma^2))` of every neuron, joint-major.
pub fn encode_proprioception<T: Real>(q: &[T; N_JOINTS], layout: &ProprioLayout<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(layout.len());
    for (j, centers) in layout.centers.iter().enumerate() {
        let two_var = T::lit(2.0) * layout.widths[j] * layout.widths[j];
        out.extend(centers.iter().map(|&mu| (-(q[j] - mu).powi(2) / two_var).exp()));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TactileSensor<T> {
    pub body: Body,
    /// Arc-length position along the body outline.
    pub arc: T,
    pub width: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TactileLayout<T> {
    pub sensors: Vec<TactileSensor<T>>,
    pub seed: u64,
    /// Contact force giving full modulation.
    pub force_saturation: T,
}

/// Outline of a body at configuration `q`.
pub fn body_outline<T: Real>(body: Body, q: &[T; N_JOINTS], params: &RobotParams<T>) -> RoundedPolygon<T> {
    match body {
        Body::Torso => {
            let core = params.torso.core();
            RoundedPolygon::new(core.corners().to_vec(), params.torso.radius)
        }
        Body::Link { arm, index } => {
            let pose = chain_pose(q, params, arm);
            RoundedPolygon::capsule(pose.joints[index], pose.joints[index + 1], params.link_radii[body.id()])
        }
    }
}

impl<T: Real> TactileLayout<T> {
    /// Places `count` sensors uniformly over the summed outline length of all
    /// bodies. Outline lengths do not depend on the configuration.
    pub fn random(
        params: &RobotParams<T>,
        count: usize,
        width_fraction: T,
        saturation_depth_fraction: T,
        seed: u64,
    ) -> Result<Self> {
        if !(width_fraction > T::zero() && saturation_depth_fraction > T::zero()) {
            return Err(Error::Config("tactile width and saturation fractions must be positive".into()));
        }
        let q = [T::zero(); N_JOINTS];
        let lengths: Vec<(Body, T)> = Body::all().map(|b| (b, body_outline(b, &q, params).perimeter())).collect();
        let total: T = lengths.iter().map(|(_, l)| *l).sum();
        let width = total * width_fraction;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sensors = Vec::with_capacity(count);
        for _ in 0..count {
            let u = T::lit(rng.random::<f64>()) * total;
            let mut acc = T::zero();
            let mut placed = None;
            for &(body, len) in &lengths {
                if u < acc + len {
                    placed = Some(TactileSensor { body, arc: u - acc, width });
                    break;
                }
                acc += len;
            }
            let (body, len) = *lengths.last().expect("bodies");
            sensors.push(placed.unwrap_or(TactileSensor { body, arc: len * T::lit(0.5), width }));
        }
        sensors.sort_by(|a, b| a.body.id().cmp(&b.body.id()).then(a.arc.partial_cmp(&b.arc).expect("finite")));
        let min_radius = params.link_radii.iter().copied().fold(T::infinity(), T::min);
        Ok(Self {
            sensors,
            seed,
            force_saturation: params.contact_stiffness * saturation_depth_fraction * min_radius,
        })
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }
}

/// Sensor `k` responds `min(f / f_sat, 1) exp(-d^2 / (2 w_k^2))` to the
/// contact on its body nearest along the outline (`d` is the arc distance).
pub fn encode_touch<T: Real>(
    contacts: &[ContactEvent<T>],
    layout: &TactileLayout<T>,
    state: &JointState<T>,
    params: &RobotParams<T>,
) -> Vec<T> {
    let mut out = vec![T::zero(); layout.len()];
    if contacts.is_empty() {
        return out;
    }
    // contact arc coordinates per body
    let mut on_body: Vec<Vec<(T, T)>> = vec![Vec::new(); Body::COUNT];
    let mut outlines: Vec<Option<RoundedPolygon<T>>> = vec![None; Body::COUNT];
    for c in contacts {
        for body in [c.pair.0, c.pair.1] {
            let id = body.id();
            let outline = outlines[id].get_or_insert_with(|| body_outline(body, &state.q, params));
            on_body[id].push((outline.project(c.point), c.force));
        }
    }
    for (k, sensor) in layout.sensors.iter().enumerate() {
        let id = sensor.body.id();
        let Some(outline) = &outlines[id] else { continue };
        let nearest = on_body[id]
            .iter()
            .map(|&(arc, force)| (outline.arc_distance(sensor.arc, arc), force))
            .fold(None, |best: Option<(T, T)>, cand| match best {
                Some(b) if b.0 <= cand.0 => Some(b),
                _ => Some(cand),
            });
        if let Some((d, force)) = nearest {
            let gain = (force / layout.force_saturation).min(T::one());
            out[k] = gain * (-(d * d) / (T::lit(2.0) * sensor.width * sensor.width)).exp();
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisualField<T> {
    /// Lower-left corner of the covered rectangle.
    pub origin: [T; 2],
    pub extent: [T; 2],
    /// `(n_x, n_y)` pixel counts.
    pub dims: (usize, usize),
    pub kernel: [[T; 3]; 3],
}

impl<T: Real> VisualField<T> {
    pub fn kernel() -> [[T; 3]; 3] {
        let (z, q, o) = (T::zero(), T::lit(0.25), T::one());
        [[z, q, z], [q, o, q], [z, q, z]]
    }

    /// Square grid centered on the torso and large enough for the full reach.
    pub fn covering(params: &RobotParams<T>, dims: (usize, usize)) -> Result<Self> {
        if dims.0 == 0 || dims.1 == 0 {
            return Err(Error::Config("visual field needs at least one pixel".into()));
        }
        let c = params.torso.center;
        let mut reach = T::zero();
        for arm in Arm::BOTH {
            let shoulder = v2::norm(v2::sub(params.torso.shoulder(arm), c));
            let off = if arm == Arm::Right { 0 } else { 3 };
            let arm_len: T = params.link_lengths[off..off + 3].iter().copied().sum();
            let r = params.link_radii[off..off + 3].iter().copied().fold(T::zero(), T::max);
            reach = reach.max(shoulder + arm_len + r);
        }
        Ok(Self {
            origin: [c[0] - reach, c[1] - reach],
            extent: [reach * T::lit(2.0), reach * T::lit(2.0)],
            dims,
            kernel: Self::kernel(),
        })
    }

    pub fn len(&self) -> usize {
        self.dims.0 * self.dims.1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixel `(ix, iy)`; `iy = 0` is the bottom row.
    pub fn pixel(&self, ix: usize, iy: usize) -> Rect<T> {
        let w = self.extent[0] / T::from_usize_lossy(self.dims.0);
        let h = self.extent[1] / T::from_usize_lossy(self.dims.1);
        let x0 = self.origin[0] + w * T::from_usize_lossy(ix);
        let y0 = self.origin[1] + h * T::from_usize_lossy(iy);
        Rect { min: [x0, y0], max: [x0 + w, y0 + h] }
    }
}

/// Binary image: 1 where a link centerline crosses the pixel. Row-major.
pub fn rasterize<T: Real>(state: &JointState<T>, params: &RobotParams<T>, field: &VisualField<T>) -> Vec<T> {
    let (nx, ny) = field.dims;
    let segs = link_segments(&state.q, params);
    let mut img = vec![T::zero(); nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let px = field.pixel(ix, iy);
            if segs.iter().any(|[a, b]| px.intersects_segment(*a, *b)) {
                img[iy * nx + ix] = T::one();
            }
        }
    }
    img
}

/// Zero-padded 3x3 convolution of a row-major `nx` x `ny` image.
pub fn convolve3<T: Real>(img: &[T], dims: (usize, usize), kernel: &[[T; 3]; 3]) -> Vec<T> {
    let (nx, ny) = dims;
    let mut out = vec![T::zero(); nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let mut acc = T::zero();
            for (ky, row) in kernel.iter().enumerate() {
                let y = iy as isize + 1 - ky as isize;
                if y < 0 || y >= ny as isize {
                    continue;
                }
                for (kx, &w) in row.iter().enumerate() {
                    let x = ix as isize + 1 - kx as isize;
                    if x < 0 || x >= nx as isize || w == T::zero() {
                        continue;
                    }
                    acc += w * img[y as usize * nx + x as usize];
                }
            }
            out[iy * nx + ix] = acc;
        }
    }
    out
}

pub fn render_visual<T: Real>(state: &JointState<T>, params: &RobotParams<T>, field: &VisualField<T>) -> Vec<T> {
    let img = rasterize(state, params, field);
    convolve3(&img, field.dims, &field.kernel)
        .into_iter()
        .map(|v| v.min(T::one()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Proprio,
    Tactile,
    Visual,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Proprio => "proprio",
            Modality::Tactile => "tactile",
            Modality::Visual => "visual",
        }
    }
}

/// What a signal index refers to. Joint, neuron and sensor numbers are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "modality", rename_all = "lowercase")]
pub enum SignalInfo {
    Proprio { joint: usize, neuron: usize, center: f64 },
    Tactile { sensor: usize, body: String, arc: f64 },
    Visual { ix: usize, iy: usize, x: f64, y: f64 },
}

impl SignalInfo {
    pub fn modality(&self) -> Modality {
        match self {
            SignalInfo::Proprio { .. } => Modality::Proprio,
            SignalInfo::Tactile { .. } => Modality::Tactile,
            SignalInfo::Visual { .. } => Modality::Visual,
        }
    }

    /// Body or joint the signal belongs to, for tables.
    pub fn body(&self) -> String {
        match self {
            SignalInfo::Proprio { joint, .. } => format!("joint{joint}"),
            SignalInfo::Tactile { body, .. } => body.clone(),
            SignalInfo::Visual { .. } => "field".to_string(),
        }
    }

    pub fn location(&self) -> String {
        match self {
            SignalInfo::Proprio { neuron, center, .. } => format!("neuron{neuron}@{center:.4}rad"),
            SignalInfo::Tactile { arc, .. } => format!("arc{arc:.4}m"),
            SignalInfo::Visual { ix, iy, .. } => format!("px{ix}_{iy}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorLayout<T> {
    pub proprio: ProprioLayout<T>,
    pub tactile: TactileLayout<T>,
    pub visual: VisualField<T>,
}

impl<T: Real> SensorLayout<T> {
    /// 8 neurons per joint, 60 tactile sensors placed from `tactile_seed` and
    /// a 15x15 visual field.
    pub fn standard(params: &RobotParams<T>, tactile_seed: u64) -> Result<Self> {
        Ok(Self {
            proprio: ProprioLayout::from_limits(&params.joint_limits, DEFAULT_NEURONS_PER_JOINT)?,
            tactile: TactileLayout::random(
                params,
                DEFAULT_TACTILE_COUNT,
                T::lit(DEFAULT_TACTILE_WIDTH_FRACTION),
                T::lit(DEFAULT_SATURATION_DEPTH_FRACTION),
                tactile_seed,
            )?,
            visual: VisualField::covering(params, DEFAULT_VISUAL_DIMS)?,
        })
    }

    pub fn n_signals(&self) -> usize {
        self.proprio.len() + self.tactile.len() + self.visual.len()
    }

    /// Signal index -> meaning, in frame order `[p; r; v]`.
    pub fn signal_map(&self) -> Vec<SignalInfo> {
        let mut out = Vec::with_capacity(self.n_signals());
        for (j, centers) in self.proprio.centers.iter().enumerate() {
            for (i, c) in centers.iter().enumerate() {
                out.push(SignalInfo::Proprio { joint: j + 1, neuron: i + 1, center: c.to_f64_lossy() });
            }
        }
        for (k, s) in self.tactile.sensors.iter().enumerate() {
            out.push(SignalInfo::Tactile { sensor: k + 1, body: s.body.name(), arc: s.arc.to_f64_lossy() });
        }
        let (nx, ny) = self.visual.dims;
        for iy in 0..ny {
            for ix in 0..nx {
                let c = self.visual.pixel(ix, iy).center();
                out.push(SignalInfo::Visual { ix, iy, x: c[0].to_f64_lossy(), y: c[1].to_f64_lossy() });
            }
        }
        out
    }

    /// Encodes one configuration with its contacts.
    pub fn encode(
        &self,
        state: &JointState<T>,
        contacts: &[ContactEvent<T>],
        params: &RobotParams<T>,
    ) -> SensorFrame<T> {
        SensorFrame {
            p: encode_proprioception(&state.q, &self.proprio),
            r: encode_touch(contacts, &self.tactile, state, params),
            v: render_visual(state, params, &self.visual),
            t: state.t,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame<T> {
    pub p: Vec<T>,
    pub r: Vec<T>,
    pub v: Vec<T>,
    pub t: T,
}

impl<T: Real> SensorFrame<T> {
    pub fn len(&self) -> usize {
        self.p.len() + self.r.len() + self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[p; r; v]`
    pub fn values(&self) -> Vec<T> {
        let mut s = Vec::with_capacity(self.len());
        s.extend_from_slice(&self.p);
        s.extend_from_slice(&self.r);
        s.extend_from_slice(&self.v);
        s
    }
}

pub fn assemble_frame<T: Real>(
    p: Vec<T>,
    r: Vec<T>,
    v: Vec<T>,
    t: T,
    layout: &SensorLayout<T>,
) -> Result<SensorFrame<T>> {
    let expect = [layout.proprio.len(), layout.tactile.len(), layout.visual.len()];
    let got = [p.len(), r.len(), v.len()];
    if expect != got {
        return Err(Error::Config(format!(
            "sensor component lengths {got:?} do not match layout {expect:?}"
        )));
    }
    Ok(SensorFrame { p, r, v, t })
}

#[cfg(test)]
mod tests;
