//! Planar dual-arm agent: two 3-link chains on a fixed torso, driven by
//! antagonistic spring-damper muscles, with penalty self-contact.
//!
//! Joint order is right shoulder, elbow, wrist, then left shoulder, elbow,
//! wrist. The left chain is the mirror image of the right one about the
//! torso's vertical axis, so equal joint angles give mirrored poses.

mod contact;
pub mod geometry;

pub use contact::{capsule_contact, contact_pairs, detect_contacts, ContactEvent};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{v2, Real};

pub const N_JOINTS: usize = 6;
pub const LINKS_PER_ARM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    Right,
    Left,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Right, Arm::Left];

    fn offset(self) -> usize {
        match self {
            Arm::Right => 0,
            Arm::Left => LINKS_PER_ARM,
        }
    }

    /// Rotation direction of joint angles in the world frame.
    fn sign<T: Real>(self) -> T {
        match self {
            Arm::Right => T::one(),
            Arm::Left => -T::one(),
        }
    }

    /// World angle of the upper arm at `q = 0`, mirrored for the left arm.
    fn base_angle<T: Real>(self, rest_angle: T) -> T {
        match self {
            Arm::Right => rest_angle,
            Arm::Left => T::lit(std::f64::consts::PI) - rest_angle,
        }
    }
}

/// A rigid body of the agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Body {
    Link { arm: Arm, index: usize },
    Torso,
}

impl Body {
    pub const COUNT: usize = 7;

    /// Dense id: right links 0..3, left links 3..6, torso 6.
    pub fn id(self) -> usize {
        match self {
            Body::Link { arm, index } => arm.offset() + index,
            Body::Torso => 6,
        }
    }

    pub fn from_id(id: usize) -> Option<Body> {
        match id {
            0..=2 => Some(Body::Link { arm: Arm::Right, index: id }),
            3..=5 => Some(Body::Link { arm: Arm::Left, index: id - 3 }),
            6 => Some(Body::Torso),
            _ => None,
        }
    }

    pub fn all() -> impl Iterator<Item = Body> {
        (0..Self::COUNT).filter_map(Body::from_id)
    }

    pub fn name(self) -> String {
        match self {
            Body::Link { arm, index } => {
                let side = match arm {
                    Arm::Right => "right",
                    Arm::Left => "left",
                };
                let part = ["upperarm", "forearm", "hand"][index];
                format!("{side}_{part}")
            }
            Body::Torso => "torso".to_string(),
        }
    }
}

/// Eq. 1 gains of one joint's antagonistic muscle pair.
///
/// Sign convention: `delta <= 0` is damping (the torque term is `delta * qd`),
/// `beta < 0` makes co-contraction stiffen the joint toward `q = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuscleGains<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
    pub delta: T,
}

/// Fixed torso: a rounded rectangle with outer extents `width` x `height`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Torso<T> {
    pub center: [T; 2],
    pub width: T,
    pub height: T,
    /// Corner rounding; the collision core is the rectangle shrunk by it.
    pub radius: T,
}

impl<T: Real> Torso<T> {
    pub fn core(&self) -> geometry::Rect<T> {
        let hw = self.width * T::lit(0.5) - self.radius;
        let hh = self.height * T::lit(0.5) - self.radius;
        geometry::Rect {
            min: [self.center[0] - hw, self.center[1] - hh],
            max: [self.center[0] + hw, self.center[1] + hh],
        }
    }

    /// Shoulder pivots sit on the torso's top corners.
    pub fn shoulder(&self, arm: Arm) -> [T; 2] {
        let hw = self.width * T::lit(0.5);
        let y = self.center[1] + self.height * T::lit(0.5);
        match arm {
            Arm::Right => [self.center[0] + hw, y],
            Arm::Left => [self.center[0] - hw, y],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotParams<T> {
    pub link_lengths: [T; N_JOINTS],
    pub link_masses: [T; N_JOINTS],
    pub link_radii: [T; N_JOINTS],
    pub torso: Torso<T>,
    /// World angle of the right upper arm at `q = 0` (0 points outward,
    /// the default pi/2 raises both arms).
    pub rest_angle: T,
    pub muscle_gains: [MuscleGains<T>; N_JOINTS],
    /// `[q_min, q_max]` per joint.
    pub joint_limits: [[T; 2]; N_JOINTS],
    pub contact_stiffness: T,
    /// Gravitational acceleration along -y; zero disables it.
    pub gravity: T,
    /// |qd| ceiling; exceeding it is reported as divergence.
    pub max_joint_speed: T,
}

impl<T: Real> Default for RobotParams<T> {
    fn default() -> Self {
        let l = |x: f64| T::lit(x);
        let per_arm = |v: [f64; 3]| [l(v[0]), l(v[1]), l(v[2]), l(v[0]), l(v[1]), l(v[2])];
        let gains = MuscleGains {
            alpha: l(3.0),
            beta: l(-1.5),
            gamma: l(0.1),
            delta: l(-0.25),
        };
        let limits = |v: f64| [l(-v), l(v)];
        Self {
            link_lengths: per_arm([0.30, 0.25, 0.20]),
            link_masses: per_arm([1.0, 0.7, 0.4]),
            link_radii: per_arm([0.04, 0.035, 0.03]),
            torso: Torso {
                center: [l(0.0), l(0.0)],
                width: l(0.3),
                height: l(0.5),
                radius: l(0.02),
            },
            rest_angle: l(std::f64::consts::FRAC_PI_2),
            muscle_gains: [gains; N_JOINTS],
            joint_limits: [
                limits(2.6),
                limits(2.6),
                limits(2.0),
                limits(2.6),
                limits(2.6),
                limits(2.0),
            ],
            contact_stiffness: l(2000.0),
            gravity: l(0.0),
            max_joint_speed: l(200.0),
        }
    }
}

impl<T: Real> RobotParams<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for j in 0..N_JOINTS {
            for (name, v) in [
                ("link length", self.link_lengths[j]),
                ("link mass", self.link_masses[j]),
                ("link radius", self.link_radii[j]),
            ] {
                if !(v.is_finite() && v > T::zero()) {
                    return bad(format!("{name} of link {} must be positive, got {v}", j + 1));
                }
            }
            let g = self.muscle_gains[j];
            if ![g.alpha, g.beta, g.gamma, g.delta].iter().all(|x| x.is_finite()) {
                return bad(format!("muscle gains of joint {} must be finite", j + 1));
            }
            if g.delta > T::zero() {
                return bad(format!(
                    "delta of joint {} must be <= 0 (torque term is delta * qd)",
                    j + 1
                ));
            }
            let [lo, hi] = self.joint_limits[j];
            if !(lo < hi) {
                return bad(format!("joint {} limits must satisfy q_min < q_max", j + 1));
            }
        }
        let t = &self.torso;
        if !(t.width > T::zero() && t.height > T::zero() && t.radius > T::zero()) {
            return bad("torso dimensions and radius must be positive".into());
        }
        if t.radius * T::lit(2.0) >= t.width.min(t.height) {
            return bad("torso radius must be below half its smaller side".into());
        }
        if !self.rest_angle.is_finite() {
            return bad("rest angle must be finite".into());
        }
        if !(self.contact_stiffness > T::zero()) {
            return bad("contact stiffness must be positive".into());
        }
        if !(self.gravity >= T::zero() && self.max_joint_speed > T::zero()) {
            return bad("gravity must be >= 0 and max_joint_speed > 0".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointState<T> {
    pub q: [T; N_JOINTS],
    pub qd: [T; N_JOINTS],
    pub t: T,
}

impl<T: Real> JointState<T> {
    pub fn rest() -> Self {
        Self {
            q: [T::zero(); N_JOINTS],
            qd: [T::zero(); N_JOINTS],
            t: T::zero(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.q.iter().chain(&self.qd).all(|x| x.is_finite())
    }

    fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidState(format!("non-finite joint state at t = {}", self.t)))
        }
    }
}

/// Antagonistic joint torque of Eq. 1:
/// `alpha (fx - ex) + beta (fx + ex + gamma) q + delta qd`.
pub fn joint_torque<T: Real>(
    sigma_fx: T,
    sigma_ex: T,
    q: T,
    qd: T,
    gains: &MuscleGains<T>,
) -> Result<T> {
    if ![sigma_fx, sigma_ex, q, qd].iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidState(format!(
            "non-finite torque input (fx={sigma_fx}, ex={sigma_ex}, q={q}, qd={qd})"
        )));
    }
    Ok(gains.alpha * (sigma_fx - sigma_ex)
        + gains.beta * (sigma_fx + sigma_ex + gains.gamma) * q
        + gains.delta * qd)
}

/// World-frame geometry of one arm.
#[derive(Clone, Copy, Debug)]
pub struct ChainPose<T> {
    /// Joint pivots followed by the hand tip: shoulder, elbow, wrist, tip.
    pub joints: [[T; 2]; LINKS_PER_ARM + 1],
    pub coms: [[T; 2]; LINKS_PER_ARM],
    /// Absolute link angles.
    pub angles: [T; LINKS_PER_ARM],
}

pub fn chain_pose<T: Real>(q: &[T; N_JOINTS], params: &RobotParams<T>, arm: Arm) -> ChainPose<T> {
    let off = arm.offset();
    let s: T = arm.sign();
    let mut joints = [[T::zero(); 2]; LINKS_PER_ARM + 1];
    let mut coms = [[T::zero(); 2]; LINKS_PER_ARM];
    let mut angles = [T::zero(); LINKS_PER_ARM];
    joints[0] = params.torso.shoulder(arm);
    let mut theta = arm.base_angle(params.rest_angle);
    for i in 0..LINKS_PER_ARM {
        theta += s * q[off + i];
        angles[i] = theta;
        let u = v2::unit(theta);
        let len = params.link_lengths[off + i];
        coms[i] = v2::add(joints[i], v2::scale(u, len * T::lit(0.5)));
        joints[i + 1] = v2::add(joints[i], v2::scale(u, len));
    }
    ChainPose { joints, coms, angles }
}

/// Centerline segment of every link, indexed by body id.
pub fn link_segments<T: Real>(q: &[T; N_JOINTS], params: &RobotParams<T>) -> [[[T; 2]; 2]; N_JOINTS] {
    let mut out = [[[T::zero(); 2]; 2]; N_JOINTS];
    for arm in Arm::BOTH {
        let pose = chain_pose(q, params, arm);
        for i in 0..LINKS_PER_ARM {
            out[arm.offset() + i] = [pose.joints[i], pose.joints[i + 1]];
        }
    }
    out
}

/// Mass matrix and velocity-product (Coriolis/centripetal) vector of one chain.
struct ChainDynamics<T> {
    mass: [[T; 3]; 3],
    bias: [T; 3],
    /// Linear Jacobian columns of each link's center of mass.
    com_jac: [[[T; 2]; 3]; 3],
}

fn chain_dynamics<T: Real>(
    state: &JointState<T>,
    params: &RobotParams<T>,
    arm: Arm,
    pose: &ChainPose<T>,
) -> ChainDynamics<T> {
    let off = arm.offset();
    let s: T = arm.sign();
    let half = T::lit(0.5);
    let mut com_jac = [[[T::zero(); 2]; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            com_jac[i][j] = v2::scale(v2::perp(v2::sub(pose.coms[i], pose.joints[j])), s);
        }
    }
    // absolute angular rates
    let mut omega = [T::zero(); 3];
    let mut acc = T::zero();
    for i in 0..3 {
        acc += state.qd[off + i];
        omega[i] = s * acc;
    }
    let mut mass = [[T::zero(); 3]; 3];
    let mut bias = [T::zero(); 3];
    for i in 0..3 {
        let m = params.link_masses[off + i];
        let l = params.link_lengths[off + i];
        let inertia = m * l * l / T::lit(12.0);
        // centripetal acceleration of the COM with qdd = 0
        let mut a = [T::zero(); 2];
        for j in 0..=i {
            let reach = if j == i { l * half } else { params.link_lengths[off + j] };
            a = v2::sub(a, v2::scale(v2::unit(pose.angles[j]), reach * omega[j] * omega[j]));
        }
        for r in 0..=i {
            bias[r] += m * v2::dot(com_jac[i][r], a);
            for c in 0..=i {
                // angular Jacobian entries are `s` for every joint up to i
                mass[r][c] += m * v2::dot(com_jac[i][r], com_jac[i][c]) + inertia;
            }
        }
    }
    ChainDynamics { mass, bias, com_jac }
}

/// Solves a symmetric positive definite 3x3 system by Cholesky factorization.
fn solve_spd3<T: Real>(m: &[[T; 3]; 3], b: [T; 3]) -> Result<[T; 3]> {
    let mut l = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut sum = m[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(sum > T::zero()) {
                    return Err(Error::Internal(format!(
                        "mass matrix not positive definite (pivot {i} = {sum})"
                    )));
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    let mut y = [T::zero(); 3];
    for i in 0..3 {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = [T::zero(); 3];
    for i in (0..3).rev() {
        let mut sum = y[i];
        for k in i + 1..3 {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    Ok(x)
}

/// Mass matrix of one arm, exposed for diagnostics and tests.
pub fn mass_matrix<T: Real>(q: &[T; N_JOINTS], params: &RobotParams<T>, arm: Arm) -> [[T; 3]; 3] {
    let state = JointState { q: *q, qd: [T::zero(); N_JOINTS], t: T::zero() };
    let pose = chain_pose(q, params, arm);
    chain_dynamics(&state, params, arm, &pose).mass
}

/// Joint accelerations from `M(q) qdd + C(q, qd) qd + J_c^T f_c = tau` (plus
/// gravity when enabled), solved independently for each arm.
pub fn forward_dynamics<T: Real>(
    state: &JointState<T>,
    torques: &[T; N_JOINTS],
    contacts: &[ContactEvent<T>],
    params: &RobotParams<T>,
) -> Result<[T; N_JOINTS]> {
    state.check_finite()?;
    if !torques.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidState("non-finite joint torque".into()));
    }
    let mut qdd = [T::zero(); N_JOINTS];
    for arm in Arm::BOTH {
        let off = arm.offset();
        let s: T = arm.sign();
        let pose = chain_pose(&state.q, params, arm);
        let dynamics = chain_dynamics(state, params, arm, &pose);
        let mut rhs = [T::zero(); 3];
        for j in 0..3 {
            rhs[j] = torques[off + j] - dynamics.bias[j];
        }
        if params.gravity > T::zero() {
            for i in 0..3 {
                let weight = [T::zero(), -params.link_masses[off + i] * params.gravity];
                for j in 0..=i {
                    rhs[j] += v2::dot(dynamics.com_jac[i][j], weight);
                }
            }
        }
        for c in contacts {
            for (body, sign) in [(c.pair.0, T::one()), (c.pair.1, -T::one())] {
                if let Body::Link { arm: a, index } = body {
                    if a != arm {
                        continue;
                    }
                    let f = v2::scale(c.normal, c.force * sign);
                    for j in 0..=index {
                        rhs[j] += s * v2::cross(v2::sub(c.point, pose.joints[j]), f);
                    }
                }
            }
        }
        let acc = solve_spd3(&dynamics.mass, rhs)?;
        qdd[off..off + 3].copy_from_slice(&acc);
    }
    Ok(qdd)
}

/// Kinetic energy `qd^T M qd / 2` of both arms.
pub fn kinetic_energy<T: Real>(state: &JointState<T>, params: &RobotParams<T>) -> T {
    let mut e = T::zero();
    for arm in Arm::BOTH {
        let off = arm.offset();
        let m = mass_matrix(&state.q, params, arm);
        for r in 0..3 {
            for c in 0..3 {
                e += state.qd[off + r] * m[r][c] * state.qd[off + c];
            }
        }
    }
    e * T::lit(0.5)
}

/// Kinetic energy plus the conservative potentials: the passive (tonic)
/// muscle spring `-beta gamma q^2 / 2`, gravity and contact penalty.
pub fn mechanical_energy<T: Real>(state: &JointState<T>, params: &RobotParams<T>) -> T {
    let half = T::lit(0.5);
    let mut e = kinetic_energy(state, params);
    for j in 0..N_JOINTS {
        let g = params.muscle_gains[j];
        e -= half * g.beta * g.gamma * state.q[j] * state.q[j];
    }
    if params.gravity > T::zero() {
        for arm in Arm::BOTH {
            let pose = chain_pose(&state.q, params, arm);
            for i in 0..3 {
                e += params.link_masses[arm.offset() + i] * params.gravity * pose.coms[i][1];
            }
        }
    }
    for c in detect_contacts(state, params) {
        e += half * params.contact_stiffness * c.depth * c.depth;
    }
    e
}

/// Per-joint `(sigma_fx, sigma_ex)` activations.
pub type MuscleCommands<T> = [(T, T); N_JOINTS];

/// One semi-implicit Euler step of length `dt`.
///
/// Contact forces come from the incoming configuration; the returned contacts
/// are detected on the post-step configuration.
pub fn step<T: Real>(
    state: &JointState<T>,
    commands: &MuscleCommands<T>,
    params: &RobotParams<T>,
    dt: T,
) -> Result<(JointState<T>, Vec<ContactEvent<T>>)> {
    let contacts = detect_contacts(state, params);
    step_with_contacts(state, &contacts, commands, params, dt)
}

pub(crate) fn step_with_contacts<T: Real>(
    state: &JointState<T>,
    contacts: &[ContactEvent<T>],
    commands: &MuscleCommands<T>,
    params: &RobotParams<T>,
    dt: T,
) -> Result<(JointState<T>, Vec<ContactEvent<T>>)> {
    if !(dt > T::zero() && dt.is_finite()) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    let mut torques = [T::zero(); N_JOINTS];
    for j in 0..N_JOINTS {
        let (fx, ex) = commands[j];
        torques[j] = joint_torque(fx, ex, state.q[j], state.qd[j], &params.muscle_gains[j])?;
    }
    let qdd = forward_dynamics(state, &torques, contacts, params)?;
    let mut next = *state;
    for j in 0..N_JOINTS {
        next.qd[j] = state.qd[j] + dt * qdd[j];
        next.q[j] = state.q[j] + dt * next.qd[j];
        let [lo, hi] = params.joint_limits[j];
        if next.q[j] < lo {
            next.q[j] = lo;
            next.qd[j] = T::zero();
        } else if next.q[j] > hi {
            next.q[j] = hi;
            next.qd[j] = T::zero();
        }
    }
    next.t = state.t + dt;
    let speed = next.qd.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if !(speed <= params.max_joint_speed) {
        return Err(Error::Divergence {
            step: (next.t / dt).round().to_u64().unwrap_or(u64::MAX),
            speed: speed.to_f64_lossy(),
            ceiling: params.max_joint_speed.to_f64_lossy(),
        });
    }
    let after = detect_contacts(&next, params);
    Ok((next, after))
}

/// Recorded simulation: one entry per step, post-step state and contacts.
#[derive(Clone, Debug, Default)]
pub struct Trajectory<T> {
    pub states: Vec<JointState<T>>,
    pub contacts: Vec<Vec<ContactEvent<T>>>,
}

impl<T> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Integrates `n_steps` steps from `initial`, querying `commands(t)` with the
/// pre-step time.
pub fn simulate<T: Real, F>(
    initial: JointState<T>,
    params: &RobotParams<T>,
    dt: T,
    n_steps: usize,
    mut commands: F,
) -> Result<Trajectory<T>>
where
    F: FnMut(T) -> MuscleCommands<T>,
{
    params.validate()?;
    initial.check_finite()?;
    let mut traj = Trajectory {
        states: Vec::with_capacity(n_steps),
        contacts: Vec::with_capacity(n_steps),
    };
    let mut state = initial;
    let mut contacts = detect_contacts(&state, params);
    for n in 0..n_steps {
        let cmd = commands(state.t);
        let (next, after) = step_with_contacts(&state, &contacts, &cmd, params, dt).map_err(
            |e| match e {
                Error::Divergence { speed, ceiling, .. } => Error::Divergence {
                    step: n as u64 + 1,
                    speed,
                    ceiling,
                },
                other => other,
            },
        )?;
        traj.states.push(next);
        traj.contacts.push(after.clone());
        state = next;
        contacts = after;
    }
    Ok(traj)
}
