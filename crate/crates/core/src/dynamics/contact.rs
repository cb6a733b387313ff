use serde::{Deserialize, Serialize};

use super::geometry::closest_points_segments;
use super::{link_segments, Arm, Body, JointState, RobotParams, LINKS_PER_ARM};
use crate::scalar::{v2, Real};

/// Penetration between two bodies under the linear penalty model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent<T> {
    pub pair: (Body, Body),
    /// Middle of the overlap region, world frame.
    pub point: [T; 2],
    /// Unit vector from `pair.1` toward `pair.0`; the force on `pair.0` is
    /// `force * normal` and the reaction on `pair.1` its opposite.
    pub normal: [T; 2],
    pub depth: T,
    pub force: T,
}

/// Body pairs eligible for contact: links of different arms, non-adjacent
/// links of one arm, and every link except the upper arms against the torso.
pub fn contact_pairs() -> Vec<(Body, Body)> {
    let mut pairs = Vec::new();
    let links: Vec<Body> = Body::all().filter(|b| *b != Body::Torso).collect();
    for (a_i, &a) in links.iter().enumerate() {
        for &b in &links[a_i + 1..] {
            if let (Body::Link { arm: aa, index: ia }, Body::Link { arm: ab, index: ib }) = (a, b) {
                if aa == ab && ia.abs_diff(ib) == 1 {
                    continue;
                }
            }
            pairs.push((a, b));
        }
    }
    for arm in Arm::BOTH {
        for index in 1..LINKS_PER_ARM {
            pairs.push((Body::Link { arm, index }, Body::Torso));
        }
    }
    pairs
}

fn make_event<T: Real>(
    pair: (Body, Body),
    on_a: [T; 2],
    on_b: [T; 2],
    dist: T,
    ra: T,
    rb: T,
    fallback_normal: [T; 2],
    stiffness: T,
) -> Option<ContactEvent<T>> {
    let reach = ra + rb;
    if !(dist < reach) {
        return None;
    }
    let depth = reach - dist;
    let normal = if dist > T::zero() {
        v2::scale(v2::sub(on_a, on_b), T::one() / dist)
    } else {
        fallback_normal
    };
    // surfaces along the normal sit at on_a - ra n and on_b + rb n
    let point = v2::scale(
        v2::add(v2::sub(on_a, v2::scale(normal, ra)), v2::add(on_b, v2::scale(normal, rb))),
        T::lit(0.5),
    );
    Some(ContactEvent {
        pair,
        point,
        normal,
        depth,
        force: stiffness * depth,
    })
}

/// Contact between two capsules given by centerline segments and radii.
pub fn capsule_contact<T: Real>(
    pair: (Body, Body),
    seg_a: [[T; 2]; 2],
    ra: T,
    seg_b: [[T; 2]; 2],
    rb: T,
    stiffness: T,
) -> Option<ContactEvent<T>> {
    let [pa, qa] = seg_a;
    let [pb, qb] = seg_b;
    let (on_a, on_b, d) = closest_points_segments(pa, qa, pb, qb);
    // crossing centerlines: push along b's normal toward a's midpoint
    let mut n = v2::perp(v2::sub(qb, pb));
    let nl = v2::norm(n);
    n = if nl > T::zero() { v2::scale(n, T::one() / nl) } else { [T::zero(), T::one()] };
    let mid_a = v2::lerp(pa, qa, T::lit(0.5));
    if v2::dot(v2::sub(mid_a, on_b), n) < T::zero() {
        n = v2::scale(n, -T::one());
    }
    make_event(pair, on_a, on_b, d, ra, rb, n, stiffness)
}

/// Capsule-capsule and capsule-torso proximity tests on the current
/// configuration. Events are ordered as [`contact_pairs`].
pub fn detect_contacts<T: Real>(state: &JointState<T>, params: &RobotParams<T>) -> Vec<ContactEvent<T>> {
    let segs = link_segments(&state.q, params);
    let core = params.torso.core();
    let mut events = Vec::new();
    for pair in contact_pairs() {
        let a = pair.0.id();
        let ra = params.link_radii[a];
        let [pa, qa] = segs[a];
        let ev = match pair.1 {
            Body::Torso => {
                let (on_a, on_b, d) = core.closest_points_segment(pa, qa);
                let mut away = v2::sub(on_a, core.center());
                let len = v2::norm(away);
                away = if len > T::zero() {
                    v2::scale(away, T::one() / len)
                } else {
                    [T::zero(), T::one()]
                };
                make_event(pair, on_a, on_b, d, ra, params.torso.radius, away, params.contact_stiffness)
            }
            Body::Link { .. } => {
                let b = pair.1.id();
                capsule_contact(pair, segs[a], ra, segs[b], params.link_radii[b], params.contact_stiffness)
            }
        };
        events.extend(ev);
    }
    events
}
