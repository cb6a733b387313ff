use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;
use crate::dynamics::detect_contacts;

fn params() -> RobotParams<f64> {
    RobotParams::default()
}

fn layout() -> SensorLayout<f64> {
    let p = params();
    SensorLayout {
        proprio: ProprioLayout::from_limits(&p.joint_limits, DEFAULT_NEURONS_PER_JOINT).unwrap(),
        tactile: TactileLayout::random(
            &p,
            DEFAULT_TACTILE_COUNT,
            DEFAULT_TACTILE_WIDTH_FRACTION,
            DEFAULT_SATURATION_DEPTH_FRACTION,
            11,
        )
        .unwrap(),
        visual: VisualField::covering(&p, DEFAULT_VISUAL_DIMS).unwrap(),
    }
}

#[test]
fn proprio_layout_shape() {
    let l = layout().proprio;
    assert_eq!(l.len(), 48);
    for (centers, w) in l.centers.iter().zip(&l.widths) {
        assert!(*w > 0.0);
        assert!(centers.windows(2).all(|p| p[0] < p[1]));
        assert_abs_diff_eq!(*w, (centers[1] - centers[0]) / 2.0, epsilon = 1e-15);
    }
}

#[test]
fn proprio_examples() {
    let l = layout().proprio;
    let mut q = [0.0; 6];
    q[2] = l.centers[2][5];
    let a = encode_proprioception(&q, &l);
    assert_eq!(a[2 * 8 + 5], 1.0);

    q[2] = 0.5 * (l.centers[2][3] + l.centers[2][4]);
    let a = encode_proprioception(&q, &l);
    assert_abs_diff_eq!(a[2 * 8 + 3], a[2 * 8 + 4], epsilon = 1e-15);

    q[2] = l.centers[2][1] + l.widths[2];
    let a = encode_proprioception(&q, &l);
    assert_abs_diff_eq!(a[2 * 8 + 1], (-0.5f64).exp(), epsilon = 1e-15);
    assert_abs_diff_eq!(a[2 * 8 + 1], 0.6065, epsilon = 1e-4);
}

proptest! {
    #[test]
    fn proprio_lipschitz(q0 in prop::array::uniform6(-2.0f64..2.0), eps in -1e-3f64..1e-3, j in 0usize..6) {
        let l = layout().proprio;
        let mut q1 = q0;
        q1[j] += eps;
        let a = encode_proprioception(&q0, &l);
        let b = encode_proprioception(&q1, &l);
        let bound = eps.abs() / (l.widths[j] * std::f64::consts::E.sqrt());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= bound + 1e-15);
            prop_assert!(*x > 0.0 && *x <= 1.0);
        }
    }
}

#[test]
fn tactile_placement_reproducible_and_on_outline() {
    let p = params();
    let a = TactileLayout::random(&p, 60, 0.02, 0.05, 3).unwrap();
    let b = TactileLayout::random(&p, 60, 0.02, 0.05, 3).unwrap();
    assert_eq!(a, b);
    let c = TactileLayout::random(&p, 60, 0.02, 0.05, 4).unwrap();
    assert_ne!(a, c);
    let q = [0.0; 6];
    for s in &a.sensors {
        let outline = body_outline(s.body, &q, &p);
        assert!(s.arc >= 0.0 && s.arc < outline.perimeter());
        // the sensor point sits at exactly `radius` from the body core
        let pt = outline.point_at(s.arc);
        let back = outline.project(pt);
        assert!(outline.arc_distance(back, s.arc) < 1e-9);
    }
    assert_abs_diff_eq!(a.force_saturation, 2000.0 * 0.05 * 0.03, epsilon = 1e-12);
}

fn single_sensor_setup(force: f64, offset: f64) -> (Vec<f64>, TactileLayout<f64>) {
    let p = params();
    let state = JointState::rest();
    let body = Body::Link { arm: Arm::Right, index: 1 };
    let outline = body_outline(body, &state.q, &p);
    let width = 0.04;
    let arc = 0.1;
    let layout = TactileLayout {
        sensors: vec![
            TactileSensor { body, arc, width },
            TactileSensor { body: Body::Torso, arc: 0.2, width },
        ],
        seed: 0,
        force_saturation: 6.0,
    };
    let contact = ContactEvent {
        pair: (body, Body::Link { arm: Arm::Left, index: 2 }),
        point: outline.point_at(arc + offset),
        normal: [0.0, 1.0],
        depth: force / p.contact_stiffness,
        force,
    };
    (encode_touch(&[contact], &layout, &state, &p), layout)
}

#[test]
fn touch_examples() {
    let p = params();
    let l = layout();
    assert!(encode_touch(&[], &l.tactile, &JointState::rest(), &p).iter().all(|&x| x == 0.0));

    let (out, _) = single_sensor_setup(12.0, 0.0);
    assert_abs_diff_eq!(out[0], 1.0, epsilon = 1e-12);
    // torso is not part of the contact
    assert_eq!(out[1], 0.0);

    let (out, layout) = single_sensor_setup(3.0, 0.04);
    assert_abs_diff_eq!(out[0], 0.5 * (-0.5f64).exp(), epsilon = 1e-9);
    assert_abs_diff_eq!(out[0], 0.3033, epsilon = 1e-4);
    assert_eq!(layout.force_saturation, 6.0);
}

#[test]
fn visual_field_covers_reach() {
    let p = params();
    let f = VisualField::covering(&p, (15, 15)).unwrap();
    assert_eq!(f.len(), 225);
    assert_eq!(f.kernel, [[0.0, 0.25, 0.0], [0.25, 1.0, 0.25], [0.0, 0.25, 0.0]]);
    // fully stretched arms stay inside
    let v = rasterize(&JointState::rest(), &p, &f);
    let set: usize = v.iter().filter(|&&x| x == 1.0).count();
    assert!(set >= 10, "{set}");
}

#[test]
fn visual_empty_outside_extent() {
    let p = params();
    let mut f = VisualField::covering(&p, (15, 15)).unwrap();
    f.origin = [10.0, 10.0];
    assert!(render_visual(&JointState::rest(), &p, &f).iter().all(|&x| x == 0.0));
}

#[test]
fn single_pixel_blur() {
    let k = VisualField::<f64>::kernel();
    let mut img = vec![0.0; 25];
    img[2 * 5 + 2] = 1.0;
    let out = convolve3(&img, (5, 5), &k);
    assert_eq!(out[12], 1.0);
    for i in [7, 11, 13, 17] {
        assert_eq!(out[i], 0.25);
    }
    for i in [6, 8, 16, 18] {
        assert_eq!(out[i], 0.0);
    }
    assert_abs_diff_eq!(out.iter().sum::<f64>(), 2.0);
}

#[test]
fn adjacent_pixels_saturate() {
    let k = VisualField::<f64>::kernel();
    let mut img = vec![0.0; 25];
    img[12] = 1.0;
    img[13] = 1.0;
    let out = convolve3(&img, (5, 5), &k);
    assert_eq!(out[12], 1.25);
    let clipped: Vec<f64> = out.iter().map(|v| v.min(1.0)).collect();
    assert!(clipped.iter().all(|&v| (0.0..=1.0).contains(&v)));
}

/// Scatter-form convolution: every set pixel stamps the kernel around it.
fn scatter_oracle(img: &[f64], nx: usize, ny: usize, k: &[[f64; 3]; 3]) -> Vec<f64> {
    let mut out = vec![0.0; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            let v = img[y * nx + x];
            if v == 0.0 {
                continue;
            }
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (tx, ty) = (x as i64 + dx, y as i64 + dy);
                    if tx >= 0 && ty >= 0 && (tx as usize) < nx && (ty as usize) < ny {
                        out[ty as usize * nx + tx as usize] += v * k[(dy + 1) as usize][(dx + 1) as usize];
                    }
                }
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn convolution_matches_scatter_oracle(bits in prop::collection::vec(any::<bool>(), 15 * 15)) {
        let img: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let k = VisualField::<f64>::kernel();
        let fast = convolve3(&img, (15, 15), &k);
        let slow = scatter_oracle(&img, 15, 15, &k);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn activations_in_unit_interval(q in prop::array::uniform6(-2.0f64..2.0)) {
        let p = params();
        let l = layout();
        let state = JointState { q, qd: [0.0; 6], t: 0.0 };
        let contacts = detect_contacts(&state, &p);
        let frame = l.encode(&state, &contacts, &p);
        prop_assert_eq!(frame.len(), 333);
        prop_assert!(frame.values().iter().all(|v| (0.0..=1.0).contains(v)));
        // touch only on bodies named by a contact
        let touched: Vec<Body> = contacts.iter().flat_map(|c| [c.pair.0, c.pair.1]).collect();
        for (s, &r) in l.tactile.sensors.iter().zip(&frame.r) {
            if !touched.contains(&s.body) {
                prop_assert_eq!(r, 0.0);
            }
        }
    }
}

#[test]
fn frame_layout_and_index_map() {
    let l = layout();
    assert_eq!(l.n_signals(), 48 + 60 + 225);
    let f = assemble_frame(vec![0.0; 48], vec![0.0; 60], vec![0.0; 225], 0.5, &l).unwrap();
    assert_eq!(f.values(), vec![0.0; 333]);
    let map = l.signal_map();
    assert_eq!(map.len(), 333);
    assert!(matches!(map[47], SignalInfo::Proprio { joint: 6, neuron: 8, .. }));
    assert!(matches!(map[48], SignalInfo::Tactile { sensor: 1, .. }));
    assert_eq!(map[108].modality(), Modality::Visual);
    assert!(assemble_frame(vec![0.0; 47], vec![0.0; 60], vec![0.0; 225], 0.5, &l).is_err());
}

#[test]
fn frame_concatenation_order() {
    let l = layout();
    let f = assemble_frame(vec![0.1; 48], vec![0.2; 60], vec![0.3; 225], 0.0, &l).unwrap();
    let s = f.values();
    assert_eq!(s[47], 0.1);
    assert_eq!(s[48], 0.2);
    assert_eq!(s[108], 0.3);
}
