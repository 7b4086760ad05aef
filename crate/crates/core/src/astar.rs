//! Hybrid A* baseline over the same action set, cost and collision model as the tree search.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use crate::cost::{CostAccumulator, CostWeights};
use crate::dubins::DubinsPath;
use crate::geometry::Pose;
use crate::path::PlannedPath;
use crate::scenario::Scenario;
use crate::vehicle::{dubins_connects, feasible_action, transition, ActionSet, Gear, MotionState, VehicleParams};

pub const POSITION_CELL: f64 = 0.1;
pub const HEADING_BIN: f64 = 0.01;

/// Closed-set cell of a continuous state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridKey {
    pub xi: i64,
    pub yi: i64,
    pub phii: i64,
    pub gear: Gear,
}

impl GridKey {
    pub fn of(state: &MotionState) -> Self {
        Self::with_cells(state, POSITION_CELL, HEADING_BIN)
    }

    pub fn with_cells(state: &MotionState, cell: f64, bin: f64) -> Self {
        let p = state.pose;
        Self {
            xi: (p.x() / cell).floor() as i64,
            yi: (p.y() / cell).floor() as i64,
            phii: (p.heading.rem_euclid(TAU) / bin).floor() as i64,
            gear: state.gear,
        }
    }
}

/// `w_dist` times the obstacle-free Dubins length to the goal.
pub fn heuristic(state: &MotionState, goal: &Pose, params: &VehicleParams, weights: &CostWeights) -> f64 {
    DubinsPath::shortest(&state.pose, goal, params.turn_radius()).map_or(0.0, |p| weights.w_dist * p.length())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AStarConfig {
    pub action_set: ActionSet,
    pub node_limit: usize,
    pub time_limit: Duration,
    pub position_cell: f64,
    pub heading_bin: f64,
    /// Scale on the heuristic; 0 turns the search into Dijkstra.
    pub heuristic_weight: f64,
}

impl AStarConfig {
    pub fn new(action_set: ActionSet) -> Self {
        Self {
            action_set,
            node_limit: 100_000,
            time_limit: Duration::from_secs(60),
            position_cell: POSITION_CELL,
            heading_bin: HEADING_BIN,
            heuristic_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AStarTermination {
    Found,
    Exhausted,
    NodeLimit,
    TimeLimit,
}

impl AStarTermination {
    pub fn name(self) -> &'static str {
        match self {
            AStarTermination::Found => "path-found",
            AStarTermination::Exhausted => "exhausted",
            AStarTermination::NodeLimit => "node-limit",
            AStarTermination::TimeLimit => "time-limit",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AStarResult {
    pub path: Option<PlannedPath>,
    pub expanded: usize,
    /// Poses of the expanded states in expansion order.
    pub visited: Vec<Pose>,
    pub elapsed: Duration,
    pub termination: AStarTermination,
}

#[derive(Debug, Clone)]
pub struct AStarNode {
    pub state: MotionState,
    /// Cost-to-come: the negated, unclamped path cost so far.
    pub g: f64,
    pub h: f64,
    pub parent: Option<(usize, usize)>,
    acc: CostAccumulator,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    f: f64,
    seq: u64,
    node: usize,
    /// Set when this entry closes `node` onto the goal; carries the closing length.
    closing: Option<f64>,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.f.total_cmp(&other.f).then(self.seq.cmp(&other.seq))
    }
}

/// Best-first search from the scenario start. A popped state that connects to the
/// goal queues a terminal entry at its exact closed cost; the search ends when a
/// terminal entry is popped.
pub fn plan(scenario: &Scenario, config: &AStarConfig, weights: &CostWeights) -> AStarResult {
    let started = Instant::now();
    let params = &scenario.vehicle;
    let goal = scenario.goal;
    let mut nodes: Vec<AStarNode> = Vec::new();
    let mut open = BinaryHeap::new();
    let mut closed = HashSet::new();
    let mut seq = 0u64;
    let key = |s: &MotionState| GridKey::with_cells(s, config.position_cell, config.heading_bin);
    let mut visited = Vec::new();
    let finish = |path, visited: Vec<Pose>, termination| AStarResult {
        path,
        expanded: visited.len(),
        visited,
        elapsed: started.elapsed(),
        termination,
    };

    let Ok(acc) = CostAccumulator::start(&scenario.start, scenario, weights) else {
        return finish(None, Vec::new(), AStarTermination::Exhausted);
    };
    let h = config.heuristic_weight * heuristic(&scenario.start, &goal, params, weights);
    let g = -acc.cost().raw_total();
    nodes.push(AStarNode {
        state: scenario.start,
        g,
        h,
        parent: None,
        acc,
    });
    open.push(Reverse(Entry {
        f: g + h,
        seq,
        node: 0,
        closing: None,
    }));

    while let Some(Reverse(entry)) = open.pop() {
        if let Some(length) = entry.closing {
            let path = reconstruct(&nodes, entry.node, &goal, length, scenario, weights);
            return finish(path, visited, AStarTermination::Found);
        }
        let id = entry.node;
        let state = nodes[id].state;
        if !closed.insert(key(&state)) {
            continue;
        }
        if visited.len() >= config.node_limit {
            return finish(None, visited, AStarTermination::NodeLimit);
        }
        if started.elapsed() >= config.time_limit {
            return finish(None, visited, AStarTermination::TimeLimit);
        }
        visited.push(state.pose);
        if let Some(length) = dubins_connects(&state.pose, &goal, params, scenario) {
            let total = -nodes[id].acc.close_with(length, weights).cost().raw_total();
            seq += 1;
            open.push(Reverse(Entry {
                f: total,
                seq,
                node: id,
                closing: Some(length),
            }));
        }
        for (a, action) in config.action_set.actions().iter().enumerate() {
            if !feasible_action(&state, action, scenario) {
                continue;
            }
            let next = transition(&state, action, params);
            if closed.contains(&key(&next)) {
                continue;
            }
            let Ok(acc) = nodes[id].acc.extend(&next, 0, scenario, weights) else {
                continue;
            };
            let g = -acc.cost().raw_total();
            let h = config.heuristic_weight * heuristic(&next, &goal, params, weights);
            seq += 1;
            open.push(Reverse(Entry {
                f: g + h,
                seq,
                node: nodes.len(),
                closing: None,
            }));
            nodes.push(AStarNode {
                state: next,
                g,
                h,
                parent: Some((id, a)),
                acc,
            });
        }
    }
    finish(None, visited, AStarTermination::Exhausted)
}

fn reconstruct(
    nodes: &[AStarNode],
    last: usize,
    goal: &Pose,
    length: f64,
    scenario: &Scenario,
    weights: &CostWeights,
) -> Option<PlannedPath> {
    let mut states = Vec::new();
    let mut cur = Some(last);
    while let Some(i) = cur {
        states.push(nodes[i].state);
        cur = nodes[i].parent.map(|(p, _)| p);
    }
    states.reverse();
    let end = states.last()?.pose;
    let closing = DubinsPath::shortest(&end, goal, scenario.vehicle.turn_radius())?;
    debug_assert!((closing.length() - length).abs() < 1e-9);
    PlannedPath::new(states, closing, scenario, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexPolygon;
    use crate::path::{PathFile, PathStats};
    use crate::scenario::tests::open_lot;
    use crate::scenario::{Obstacle, ObstacleClass};
    use crate::vehicle::{feasible, make_action_set};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn config() -> AStarConfig {
        AStarConfig::new(make_action_set(&VehicleParams::default(), 7, 0.8).unwrap())
    }

    #[test]
    fn heuristic_examples() {
        let w = CostWeights::default();
        let p = VehicleParams::default();
        let goal = Pose::new(10.0, 3.0, 0.5);
        let behind = Pose::new(10.0 - 4.0 * 0.5f64.cos(), 3.0 - 4.0 * 0.5f64.sin(), 0.5);
        assert!((heuristic(&MotionState::at(behind), &goal, &p, &w) - w.w_dist * 4.0).abs() < 1e-9);
        assert_eq!(heuristic(&MotionState::at(goal), &goal, &p, &w), 0.0);
        // radius 1: tan(max_steer) = wheelbase
        let unit = VehicleParams {
            max_steer: 2.5f64.atan(),
            ..p
        };
        assert!((unit.turn_radius() - 1.0).abs() < 1e-12);
        let h = heuristic(
            &MotionState::at(Pose::new(0.0, 0.0, 0.0)),
            &Pose::new(0.0, 2.0, PI),
            &unit,
            &w,
        );
        assert!((h - w.w_dist * PI).abs() < 1e-9);
    }

    #[test]
    fn grid_key_quantizes() {
        let s = MotionState::new(Pose::new(1.234, -0.05, -0.005), Gear::Reverse, 0.0);
        let k = GridKey::of(&s);
        assert_eq!((k.xi, k.yi, k.gear), (12, -1, Gear::Reverse));
        assert_eq!(k.phii, ((TAU - 0.005) / HEADING_BIN).floor() as i64);
        assert_eq!(k.phii, 627);
        let top = GridKey::of(&MotionState::at(Pose::new(0.0, 0.0, TAU - 1e-9)));
        assert!(top.phii <= 628);
    }

    #[test]
    fn goal_ahead_is_straight() {
        let s = open_lot();
        let r = plan(&s, &config(), &CostWeights::default());
        assert_eq!(r.termination, AStarTermination::Found);
        let path = r.path.unwrap();
        assert!((path.length() - 3.0).abs() <= 0.05 * 3.0, "{}", path.length());
    }

    #[test]
    fn walled_goal_is_not_found() {
        let mut s = open_lot();
        s.goal = Pose::new(15.0, 10.0, 0.0);
        s.obstacles.push(Obstacle {
            class: ObstacleClass::Curb,
            polygon: ConvexPolygon::rectangle(10.0, 0.0, 10.5, 20.0).unwrap(),
        });
        let mut cfg = config();
        cfg.node_limit = 5_000;
        let r = plan(&s, &cfg, &CostWeights::default());
        assert!(r.path.is_none());
        assert!(matches!(
            r.termination,
            AStarTermination::NodeLimit | AStarTermination::Exhausted
        ));
        assert_eq!(r.expanded, 5_000);
    }

    #[test]
    fn enclosed_start_exhausts() {
        let mut s = open_lot();
        s.goal = Pose::new(15.0, 10.0, 0.0);
        for rect in [
            (3.5, 8.5, 8.5, 8.7),
            (3.5, 11.3, 8.5, 11.5),
            (3.5, 8.5, 3.7, 11.5),
            (8.3, 8.5, 8.5, 11.5),
        ] {
            s.obstacles.push(Obstacle {
                class: ObstacleClass::Curb,
                polygon: ConvexPolygon::rectangle(rect.0, rect.1, rect.2, rect.3).unwrap(),
            });
        }
        let r = plan(&s, &config(), &CostWeights::default());
        assert_eq!(r.termination, AStarTermination::Exhausted);
        assert!(r.path.is_none());
    }

    #[test]
    fn deterministic() {
        let mut s = open_lot();
        s.goal = Pose::new(12.0, 13.0, 1.2);
        let a = plan(&s, &config(), &CostWeights::default());
        let b = plan(&s, &config(), &CostWeights::default());
        assert_eq!(a.path, b.path);
        assert_eq!(a.expanded, b.expanded);
    }

    /// Checks the structural guarantees of a returned path.
    fn check_path(s: &Scenario, path: &PlannedPath, w: &CostWeights) {
        assert_eq!(path.states[0], s.start);
        let mut last_g = f64::NEG_INFINITY;
        let mut acc = CostAccumulator::start(&path.states[0], s, w).unwrap();
        for (i, pair) in path.states.windows(2).enumerate() {
            assert!(feasible(&pair[0], &pair[1], s));
            acc = acc.extend(&pair[1], i + 1, s, w).unwrap();
            let g = -acc.cost().raw_total();
            assert!(g >= last_g);
            last_g = g;
        }
        let end = path.states.last().unwrap().pose;
        assert!(dubins_connects(&end, &s.goal, &s.vehicle, s).is_some());
        let file = PathFile::new(s, "hybrid-astar", Some(path), PathStats::default());
        file.validate(s, w).unwrap();
    }

    #[test]
    fn returned_paths_are_valid() {
        for goal in [
            Pose::new(12.0, 13.0, 1.2),
            Pose::new(3.0, 14.0, PI),
            Pose::new(14.0, 6.0, -0.7),
        ] {
            let mut s = open_lot();
            s.goal = goal;
            let w = CostWeights::default();
            let r = plan(&s, &config(), &w);
            if let Some(path) = r.path {
                check_path(&s, &path, &w);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]

        #[test]
        fn dijkstra_is_no_worse_and_no_cheaper_to_run(
            arc in 1.0..3.0f64,
            bend in -0.9..0.9f64,
        ) {
            // goal on a drivable arc from the start, so a short optimum exists
            let mut s = open_lot();
            let k = bend / s.vehicle.turn_radius();
            let t = k * arc;
            s.goal = if k.abs() < 1e-9 {
                Pose::new(5.0 + arc, 10.0, 0.0)
            } else {
                Pose::new(5.0 + t.sin() / k, 10.0 + (1.0 - t.cos()) / k, t)
            };
            let w = CostWeights::default();
            let guided = plan(&s, &config(), &w);
            let mut dcfg = config();
            dcfg.heuristic_weight = 0.0;
            dcfg.node_limit = 200_000;
            let dijkstra = plan(&s, &dcfg, &w);
            prop_assert_eq!(guided.termination, AStarTermination::Found);
            prop_assert_eq!(dijkstra.termination, AStarTermination::Found);
            let (g, d) = (guided.path.unwrap(), dijkstra.path.unwrap());
            prop_assert!(-d.cost.raw_total() <= -g.cost.raw_total() + 1e-9);
            prop_assert!(dijkstra.expanded >= guided.expanded);
        }
    }
}
