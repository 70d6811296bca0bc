use std::io::Cursor;

use nalgebra::{DVector, Vector3};
use pps_core::controller::{avoidance_constraints, repulsion, solve_tick, ControlPoint, ControllerConfig};
use pps_core::perception::{frame_to_json_line, median_filter, parse_keypoint_stream};
use pps_core::pps::{aggregate, taxel_response, AggregateOutcome};
use pps_core::skin::{load_skin_layout, TaxelWorld};
use pps_core::{BodyPart, Chain, ChainConfig, Field, Frame, Keypoint, PpsAggregate, RfConfig, SkinConfig, Stimulus};
use proptest::prelude::*;

fn field() -> Field {
    Field::from_config(&RfConfig::default()).unwrap()
}

fn taxel_up() -> TaxelWorld<f64> {
    TaxelWorld {
        position: Vector3::zeros(),
        normal: Vector3::z(),
    }
}

fn stim(p: Vector3<f64>, valence: f64) -> Stimulus<f64> {
    Stimulus {
        position: p,
        valence,
        label: Keypoint::Head,
    }
}

fn unit(v: [f64; 3]) -> Option<Vector3<f64>> {
    Vector3::from(v).try_normalize(1e-6)
}

proptest! {
    #[test]
    fn response_non_increasing_along_normal(d in 0.0..0.5f64, step in 0.0..0.1f64, theta in -1.0..1.0f64) {
        let rf = field();
        let near = taxel_response(&taxel_up(), &[stim(Vector3::new(0.0, 0.0, d), theta)], &rf);
        let far = taxel_response(&taxel_up(), &[stim(Vector3::new(0.0, 0.0, d + step), theta)], &rf);
        prop_assert!(far.activation <= near.activation);
    }

    #[test]
    fn farther_stimulus_never_changes_response(
        r in 0.0..0.44f64,
        tilt in 0.0..0.6f64,
        azimuth in 0.0..std::f64::consts::TAU,
        extra in prop::array::uniform3(-0.6..0.6f64),
        theta in -1.0..1.0f64,
    ) {
        let rf = field();
        let dir = Vector3::new(tilt.sin() * azimuth.cos(), tilt.sin() * azimuth.sin(), tilt.cos());
        let w = stim(dir * r, 0.0);
        let base = taxel_response(&taxel_up(), &[w], &rf);
        let e = stim(Vector3::from(extra), theta);
        prop_assert!(base.winner.is_some());
        prop_assume!(e.position.norm() > w.position.norm());
        let both = taxel_response(&taxel_up(), &[w, e], &rf);
        prop_assert_eq!(both.activation, base.activation);
        prop_assert_eq!(both.winner, Some(0));
    }

    #[test]
    fn crossing_distance_increases_with_valence(a in -0.9..0.95f64, b in -0.9..0.95f64) {
        prop_assume!((a - b).abs() > 1e-3);
        let rf = field();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        match (rf.crossing_distance(0.2, lo), rf.crossing_distance(0.2, hi)) {
            (Some(dl), Some(dh)) => prop_assert!(dl < dh),
            (None, _) => {}
            (Some(_), None) => prop_assert!(false, "higher valence lost the crossing"),
        }
    }

    #[test]
    fn aggregate_in_hull_with_unit_normal(
        pts in prop::collection::vec((prop::array::uniform3(-1.0..1.0f64), prop::array::uniform3(-1.0..1.0f64), 0.0..1.0f64), 1..12),
    ) {
        let mut taxels = Vec::new();
        let mut acts = Vec::new();
        for (p, n, a) in &pts {
            let Some(n) = unit(*n) else { continue };
            taxels.push(TaxelWorld { position: Vector3::from(*p), normal: n });
            acts.push(*a);
        }
        prop_assume!(!taxels.is_empty());
        if let AggregateOutcome::Active(agg) = aggregate(BodyPart::Forearm, &taxels, &acts).unwrap() {
            prop_assert!((agg.normal.norm() - 1.0).abs() < 1e-12);
            let max = acts.iter().cloned().fold(0.0, f64::max);
            prop_assert_eq!(agg.activation, max);
            let active: Vec<_> = taxels.iter().zip(&acts).filter(|(_, a)| **a > 0.0).map(|(t, _)| t.position).collect();
            for axis in 0..3 {
                let lo = active.iter().map(|p| p[axis]).fold(f64::INFINITY, f64::min);
                let hi = active.iter().map(|p| p[axis]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(agg.position[axis] >= lo - 1e-12 && agg.position[axis] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn world_normals_stay_unit(q in prop::collection::vec(-2.0..2.0f64, 7)) {
        let chain = Chain::from_config(&ChainConfig::default_arm()).unwrap();
        let skin = load_skin_layout::<f64>(&SkinConfig::default_arm(4, 6), 7).unwrap();
        let poses = chain.forward_kinematics(&DVector::from_vec(q)).unwrap();
        for w in skin.world(&poses) {
            prop_assert!((w.normal.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn taxels_move_continuously(q in prop::collection::vec(-2.0..2.0f64, 7), dq in prop::collection::vec(-1e-3..1e-3f64, 7)) {
        let chain = Chain::from_config(&ChainConfig::default_arm()).unwrap();
        let skin = load_skin_layout::<f64>(&SkinConfig::default_arm(4, 6), 7).unwrap();
        let q0 = DVector::from_vec(q);
        let q1 = &q0 + DVector::from_vec(dq);
        let a = skin.world(&chain.forward_kinematics(&q0).unwrap());
        let b = skin.world(&chain.forward_kinematics(&q1).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.position - y.position).norm() <= 5e-3);
        }
    }

    #[test]
    fn median_within_window_range(values in prop::collection::vec(-1.0..1.0f64, 1..9)) {
        let frames: Vec<Frame> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| Frame::empty(i as f64).with(Keypoint::HandR, Vector3::new(v, -v, 0.5)))
            .collect();
        let width = if values.len() % 2 == 1 { values.len() } else { values.len() - 1 };
        let out = median_filter(&frames, width).unwrap();
        let x = out.get(Keypoint::HandR).unwrap().x;
        let used = &values[values.len() - width..];
        let lo = used.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = used.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(x >= lo && x <= hi);
    }

    #[test]
    fn stream_round_trip(frames in prop::collection::vec(prop::collection::vec(prop::option::of(prop::array::uniform3(-0.3..0.3f64)), 13), 0..6)) {
        let frames: Vec<Frame> = frames
            .into_iter()
            .enumerate()
            .map(|(i, kps)| {
                let mut f = Frame::empty(i as f64 * 0.02);
                for (k, p) in Keypoint::ALL.iter().zip(kps) {
                    f.set(*k, p.map(Vector3::from));
                }
                f
            })
            .collect();
        let text: String = frames.iter().map(|f| frame_to_json_line(f) + "\n").collect();
        let parsed = parse_keypoint_stream(Cursor::new(text)).unwrap();
        prop_assert_eq!(parsed.skipped, 0);
        prop_assert_eq!(parsed.frames, frames);
    }

    #[test]
    fn larger_activation_never_widens_bounds(
        q in prop::collection::vec(-1.5..1.5f64, 7),
        n in prop::array::uniform3(-1.0..1.0f64),
        a1 in 0.0..1.0f64,
        a2 in 0.0..1.0f64,
    ) {
        let chain = Chain::from_config(&ChainConfig::default_arm()).unwrap();
        let cfg = ControllerConfig::<f64>::default();
        let Some(n) = unit(n) else { return Ok(()) };
        let q = DVector::from_vec(q);
        let poses = chain.forward_kinematics(&q).unwrap();
        let p = poses.ee().translation.vector;
        let jac = poses.world_point_jacobian(6, &p);
        let (lo_a, hi_a) = if a1 < a2 { (a1, a2) } else { (a2, a1) };
        let point = |a: f64| ControlPoint {
            aggregate: PpsAggregate { body_part: BodyPart::Hand, position: p, normal: n, activation: a, peak: 0 },
            jacobian: jac.clone(),
        };
        let weak = avoidance_constraints(&[point(lo_a)], &chain, &q, &cfg);
        let strong = avoidance_constraints(&[point(hi_a)], &chain, &q, &cfg);
        for j in 0..7 {
            prop_assert!(strong.lo[j] >= weak.lo[j]);
            prop_assert!(strong.hi[j] <= weak.hi[j]);
        }
    }

    #[test]
    fn avoidance_is_enforced_by_solution(
        q in prop::collection::vec(-1.2..1.2f64, 7),
        n in prop::array::uniform3(-1.0..1.0f64),
        a in 0.21..1.0f64,
        offset in prop::array::uniform3(-0.05..0.05f64),
    ) {
        let chain = Chain::from_config(&ChainConfig::default_arm()).unwrap();
        let cfg = ControllerConfig::<f64>::default();
        let Some(n) = unit(n) else { return Ok(()) };
        let q = DVector::from_vec(q);
        let poses = chain.forward_kinematics(&q).unwrap();
        let p = poses.ee().translation.vector;
        let cp = ControlPoint {
            aggregate: PpsAggregate { body_part: BodyPart::Hand, position: p, normal: n, activation: a, peak: 0 },
            jacobian: poses.world_point_jacobian(6, &p),
        };
        let s = repulsion(&cp, cfg.avoidance_gain);
        let bounds = avoidance_constraints(&[cp], &chain, &q, &cfg);
        prop_assume!(bounds.conflicts.is_empty());
        let mut target = *poses.ee();
        target.translation.vector += Vector3::from(offset);
        let sol = solve_tick(&chain, &q, poses.ee(), &target, &bounds, &poses.ee_jacobian(), &cfg).unwrap();
        for j in 0..7 {
            prop_assert!(sol.qdot[j] >= bounds.lo[j] - 1e-9 && sol.qdot[j] <= bounds.hi[j] + 1e-9);
            let next = q[j] + cfg.period * sol.qdot[j];
            prop_assert!(next >= chain.q_lo()[j] - 1e-9 && next <= chain.q_hi()[j] + 1e-9);
            if s[j] > 0.0 && s[j] <= bounds.hi[j] {
                prop_assert!(sol.qdot[j] >= s[j] - 1e-9);
            }
        }
    }
}

#[test]
fn no_control_points_means_nominal_bounds() {
    let chain = Chain::from_config(&ChainConfig::default_arm()).unwrap();
    let cfg = ControllerConfig::<f64>::default();
    let b = avoidance_constraints(&[], &chain, &DVector::from_element(7, 0.3), &cfg);
    assert!(b.is_nominal());
}
