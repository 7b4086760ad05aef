//! Randomized invariants across geometry, kinematics, cost, network and tree statistics.

use std::f64::consts::PI;

use proptest::prelude::*;

use parkmcts::cost::{node_value, path_cost, CostWeights, PathCost};
use parkmcts::dubins::DubinsPath;
use parkmcts::evaluator::{Network, NetworkShape, SceneEncoder};
use parkmcts::geometry::{
    footprint_polygon, min_clearance, normalize_angle, polygons_intersect, rasterize, Bounds, ConvexPolygon, GridSpec,
    Point2, Pose, VehicleFootprint,
};
use parkmcts::mcts::{SearchConfig, SearchTree, ROOT};
use parkmcts::rng;
use parkmcts::scenario::{Obstacle, ObstacleClass, Scenario, ScenarioKind};
use parkmcts::vehicle::{
    feasible_action, make_action_set, snap_pose, transition, Action, Gear, MotionState, VehicleParams,
};

/// Convex polygon with vertices on a circle at sorted, well-separated angles.
fn convex() -> impl Strategy<Value = ConvexPolygon> {
    (
        -5.0..5.0f64,
        -5.0..5.0f64,
        0.3..3.0f64,
        3usize..8,
        0.0..(2.0 * PI),
        any::<u64>(),
    )
        .prop_map(|(cx, cy, r, n, phase, seed)| {
            let mut jitter = rng::stream(seed, 0, 0);
            let slot = 2.0 * PI / n as f64;
            let vertices = (0..n)
                .map(|i| {
                    let a = phase + slot * (i as f64 + 0.35 * rand::Rng::random_range(&mut jitter, -1.0..1.0));
                    Point2::new(cx + r * a.cos(), cy + r * a.sin())
                })
                .collect();
            ConvexPolygon::new(vertices).expect("points on a circle in angular order are convex")
        })
}

fn pose() -> impl Strategy<Value = Pose> {
    (2.0..18.0f64, 2.0..18.0f64, -PI..PI).prop_map(|(x, y, h)| Pose::new(x, y, h))
}

fn lot(obstacles: Vec<ConvexPolygon>) -> Scenario {
    Scenario {
        id: "prop".into(),
        kind: ScenarioKind::Empty,
        bounds: Bounds::new(-100.0, -100.0, 100.0, 100.0),
        obstacles: obstacles
            .into_iter()
            .map(|polygon| Obstacle {
                class: ObstacleClass::Pillar,
                polygon,
            })
            .collect(),
        start: MotionState::at(Pose::new(0.0, 0.0, 0.0)),
        goal: Pose::new(10.0, 0.0, 0.0),
        vehicle: VehicleParams::default(),
    }
}

fn segments_cross(p: Point2, q: Point2, r: Point2, s: Point2) -> bool {
    let side = |a: Point2, b: Point2, c: Point2| (b - a).cross(c - a);
    let (d1, d2) = (side(r, s, p), side(r, s, q));
    let (d3, d4) = (side(p, q, r), side(p, q, s));
    d1 * d2 <= 0.0 && d3 * d4 <= 0.0
}

/// Exhaustive oracle: some vertex inside the other polygon, or some pair of edges crossing.
fn brute_intersect(a: &ConvexPolygon, b: &ConvexPolygon) -> bool {
    a.vertices().iter().any(|&v| b.contains(v))
        || b.vertices().iter().any(|&v| a.contains(v))
        || a.edges()
            .any(|(p, q)| b.edges().any(|(r, s)| segments_cross(p, q, r, s)))
}

/// Dense grid of sample points inside both bounding boxes.
fn sampled_overlap(a: &ConvexPolygon, b: &ConvexPolygon) -> bool {
    let (ba, bb) = (a.aabb(), b.aabb());
    let (x0, x1) = (ba.min.x.max(bb.min.x), ba.max.x.min(bb.max.x));
    let (y0, y1) = (ba.min.y.max(bb.min.y), ba.max.y.min(bb.max.y));
    if x0 > x1 || y0 > y1 {
        return false;
    }
    let n = 60;
    (0..=n).any(|i| {
        (0..=n).any(|j| {
            let p = Point2::new(
                x0 + (x1 - x0) * i as f64 / n as f64,
                y0 + (y1 - y0) * j as f64 / n as f64,
            );
            a.contains(p) && b.contains(p)
        })
    })
}

fn centroid(p: &ConvexPolygon) -> Point2 {
    let n = p.vertices().len() as f64;
    p.vertices()
        .iter()
        .fold(Point2::new(0.0, 0.0), |acc, &v| acc + v * (1.0 / n))
}

fn transform_pose(p: &Pose, rot: f64, shift: Point2) -> Pose {
    let q = p.position.rotate(rot) + shift;
    Pose::new(q.x, q.y, normalize_angle(p.heading + rot))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn footprint_area_is_length_times_width(p in pose(), len in 2.0..6.0f64, wid in 1.0..3.0f64, rear in 0.0..1.0f64) {
        let fp = VehicleFootprint { length: len, width: wid, rear_overhang: rear };
        let area = footprint_polygon(&fp, &p).area();
        prop_assert!((area - len * wid).abs() < 1e-9 * len * wid, "{area} vs {}", len * wid);
    }

    #[test]
    fn intersection_is_symmetric(a in convex(), b in convex()) {
        prop_assert_eq!(polygons_intersect(&a, &b), polygons_intersect(&b, &a));
    }

    #[test]
    fn intersection_agrees_with_brute_force(a in convex(), b in convex()) {
        let sat = polygons_intersect(&a, &b);
        prop_assert_eq!(sat, brute_intersect(&a, &b));
        if sampled_overlap(&a, &b) {
            prop_assert!(sat);
        }
    }

    #[test]
    fn rasterized_count_grows_under_union(a in convex(), b in convex(), res in 0.1..0.6f64) {
        let grid = GridSpec { origin: Point2::new(-10.0, -10.0), resolution: res, width: 64, height: 64 };
        let alone = rasterize(std::slice::from_ref(&a), grid).occupied_count();
        let both = rasterize(&[a, b], grid).occupied_count();
        prop_assert!(alone <= both);
    }

    #[test]
    fn clearance_shrinks_along_approach(a in convex(), b in convex(), angle in -PI..PI) {
        let dir = Point2::new(angle.cos(), angle.sin());
        let to_a = centroid(&a) - centroid(&b);
        let mut last = f64::INFINITY;
        for k in 0..41 {
            let offset = to_a + dir * (20.0 - 0.5 * k as f64);
            let moved = b.transformed(0.0, offset);
            let Ok(c) = min_clearance(&a, [&moved]) else { break };
            prop_assert!(c <= last + 1e-9, "clearance rose from {last} to {c} at step {k}");
            last = c;
        }
    }

    #[test]
    fn straight_moves_reverse_exactly(p in pose(), d in 0.05..3.0f64) {
        let params = VehicleParams::default();
        let p = snap_pose(p);
        let there = transition(&MotionState::at(p), &Action::new(d, 0.0), &params);
        let back = transition(&there, &Action::new(-d, 0.0), &params);
        prop_assert_eq!(back.pose, p);
    }

    #[test]
    fn heading_stays_normalized(p in pose(), d in -3.0..3.0f64, steer in -0.6..0.6f64) {
        let s = transition(&MotionState::at(p), &Action::new(d, steer), &VehicleParams::default());
        prop_assert!((-PI..PI).contains(&s.pose.heading), "{}", s.pose.heading);
    }

    #[test]
    fn dubins_is_no_shorter_than_straight_line(a in pose(), b in pose(), r in 1.0..8.0f64) {
        if let Some(path) = DubinsPath::shortest(&a, &b, r) {
            prop_assert!(path.length() >= a.position.distance(b.position) - 1e-9);
        }
    }

    #[test]
    fn obstacles_never_make_moves_feasible(p in pose(), idx in 0usize..14, extra in convex(), shift in (0.0..15.0f64, 0.0..15.0f64)) {
        let params = VehicleParams::default();
        let actions = make_action_set(&params, 7, 0.8).unwrap();
        let from = MotionState::at(p);
        let extra = extra.transformed(0.0, Point2::new(shift.0, shift.1));
        let without = lot(vec![]);
        let with = lot(vec![extra]);
        let action = actions.get(idx);
        if feasible_action(&from, &action, &with) {
            prop_assert!(feasible_action(&from, &action, &without));
        }
    }

    #[test]
    fn extra_obstacle_never_raises_safety(p in pose(), extra in convex(), shift in (0.0..15.0f64, 0.0..15.0f64)) {
        let params = VehicleParams::default();
        let weights = CostWeights::default();
        let states = [MotionState::at(p), transition(&MotionState::at(p), &Action::new(0.8, 0.3), &params)];
        let base = lot(vec![ConvexPolygon::rectangle(-30.0, -30.0, -29.0, -29.0).unwrap()]);
        let mut more = base.clone();
        more.obstacles.push(Obstacle { class: ObstacleClass::Vehicle, polygon: extra.transformed(0.0, Point2::new(shift.0, shift.1)) });
        if let (Ok(a), Ok(b)) = (path_cost(&states, &base, &weights), path_cost(&states, &more, &weights)) {
            prop_assert!(b.safety <= a.safety);
        }
    }

    #[test]
    fn cost_is_invariant_under_rigid_motion(
        p in pose(),
        moves in prop::collection::vec(0usize..14, 1..6),
        obstacle in convex(),
        rot in -PI..PI,
        shift in (-20.0..20.0f64, -20.0..20.0f64),
    ) {
        let params = VehicleParams::default();
        let actions = make_action_set(&params, 7, 0.8).unwrap();
        let weights = CostWeights::default();
        let mut states = vec![MotionState::at(p)];
        for i in moves {
            states.push(transition(states.last().unwrap(), &actions.get(i), &params));
        }
        let shift = Point2::new(shift.0, shift.1);
        let scene = lot(vec![obstacle.clone().transformed(0.0, Point2::new(10.0, 10.0))]);
        let moved_scene = lot(vec![scene.obstacles[0].polygon.transformed(rot, shift)]);
        let moved: Vec<MotionState> = states
            .iter()
            .map(|s| MotionState::new(transform_pose(&s.pose, rot, shift), s.gear, s.steer))
            .collect();
        match (path_cost(&states, &scene, &weights), path_cost(&moved, &moved_scene, &weights)) {
            (Ok(a), Ok(b)) => {
                for (x, y) in [(a.safety, b.safety), (a.comfort, b.comfort), (a.efficiency, b.efficiency), (a.total, b.total)] {
                    prop_assert!((x - y).abs() < 1e-9, "{a:?} vs {b:?}");
                }
            }
            (a, b) => prop_assert_eq!(a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn extending_a_path_never_raises_total(p in pose(), moves in prop::collection::vec(0usize..14, 1..8)) {
        let params = VehicleParams::default();
        let actions = make_action_set(&params, 7, 0.8).unwrap();
        let weights = CostWeights::default();
        let scene = lot(vec![ConvexPolygon::rectangle(8.0, 8.0, 9.0, 9.0).unwrap()]);
        let mut states = vec![MotionState::at(p)];
        let mut last: Option<PathCost> = None;
        for i in moves {
            states.push(transition(states.last().unwrap(), &actions.get(i), &params));
            let Ok(c) = path_cost(&states, &scene, &weights) else { break };
            if let Some(prev) = last {
                prop_assert!(c.total <= prev.total && c.raw_total() <= prev.raw_total());
            }
            last = Some(c);
        }
    }

    #[test]
    fn node_value_stays_in_unit_interval(
        v in 0.0..=1.0f64,
        comps in (-2.0..=0.0f64, -2.0..=0.0f64, -2.0..=0.0f64),
        a0 in 0.0..=1.0f64,
        share in 0.0..=1.0f64,
    ) {
        let weights = CostWeights { alpha0: a0, alpha1: (1.0 - a0) * share, ..CostWeights::default() };
        prop_assert!(weights.is_admissible());
        let cost = PathCost::from_components(comps.0, comps.1, comps.2);
        let value = node_value(v, &cost, &weights);
        prop_assert!((-1.0..=1.0).contains(&value), "{value}");
    }

    #[test]
    fn q_stays_within_propagated_values(values in prop::collection::vec(-1.0..=1.0f64, 1..30)) {
        let s = lot(vec![]);
        let cfg = SearchConfig::new(make_action_set(&s.vehicle, 3, 0.8).unwrap());
        let mut tree = SearchTree::new(&s, cfg, CostWeights::default()).unwrap();
        tree.expand(ROOT, &[1.0 / 6.0; 6], &s).unwrap();
        let n1 = tree.nodes[ROOT].children[1];
        tree.expand(n1, &[1.0 / 6.0; 6], &s).unwrap();
        let n2 = tree.nodes[n1].children[1];
        for &v in &values {
            tree.backpropagate(n2, v);
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for q in [tree.nodes[n1].q[1], tree.nodes[ROOT].q[1]] {
            prop_assert!(q >= lo - 1e-12 && q <= hi + 1e-12, "{q} outside [{lo}, {hi}]");
        }
        prop_assert_eq!(tree.nodes[ROOT].visits as usize, values.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn policy_is_a_strictly_positive_distribution(seed in any::<u64>(), scale in 0.5..1.5f64, p in pose(), gear in any::<bool>()) {
        let mut net = Network::init(NetworkShape::standard(14), &mut rng::stream(seed, 0, 0));
        net.params_mut().iter_mut().for_each(|w| *w *= scale);
        let scene = lot(vec![ConvexPolygon::rectangle(3.0, 3.0, 5.0, 4.0).unwrap()]);
        let gear = if gear { Gear::Forward } else { Gear::Reverse };
        let state = MotionState::new(p, gear, 0.2);
        let (policy, _) = net.forward(&SceneEncoder::new(&scene).encode(&state, &MotionState::at(p))).unwrap();
        let sum: f64 = policy.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9, "sum {sum}");
        prop_assert!(policy.iter().all(|&x| x > 0.0));
    }
}
