//! PUCT tree search over discrete bicycle-model actions, guided by an evaluator.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::cost::{node_value, CostAccumulator, CostWeights, PathCost};
use crate::dubins::DubinsPath;
use crate::evaluator::{Evaluation, Evaluator, SceneEncoder};
use crate::geometry::Pose;
use crate::path::PlannedPath;
use crate::scenario::Scenario;
use crate::vehicle::{dubins_connects, feasible_action, transition, ActionSet, MotionState};

pub type NodeId = usize;
pub const ROOT: NodeId = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    Unexplored,
    Explored,
    Trimmed,
}

impl NodeStatus {
    pub fn name(self) -> &'static str {
        match self {
            NodeStatus::Unexplored => "unexplored",
            NodeStatus::Explored => "explored",
            NodeStatus::Trimmed => "trimmed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub state: MotionState,
    pub status: NodeStatus,
    /// Parent node and the action index leading here.
    pub parent: Option<(NodeId, usize)>,
    pub depth: usize,
    /// One entry per action once expanded; empty before.
    pub children: Vec<NodeId>,
    pub prior: Vec<f64>,
    pub q: Vec<f64>,
    pub edge_visits: Vec<u32>,
    pub visits: u32,
    /// First simulation value.
    pub value: Option<f64>,
    pub expanded: bool,
    pub dest_connected: bool,
    pub dest_connect_length: Option<f64>,
    /// Cost of the root-to-node motion; `None` for trimmed-at-birth nodes.
    pub(crate) cost: Option<CostAccumulator>,
}

impl TreeNode {
    pub(crate) fn new(
        state: MotionState,
        parent: Option<(NodeId, usize)>,
        depth: usize,
        cost: Option<CostAccumulator>,
    ) -> Self {
        Self {
            state,
            status: if cost.is_some() {
                NodeStatus::Unexplored
            } else {
                NodeStatus::Trimmed
            },
            parent,
            depth,
            children: Vec::new(),
            prior: Vec::new(),
            q: Vec::new(),
            edge_visits: Vec::new(),
            visits: 0,
            value: None,
            expanded: false,
            dest_connected: false,
            dest_connect_length: None,
            cost,
        }
    }

    pub fn path_cost(&self) -> Option<PathCost> {
        self.cost.map(|c| c.cost())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub c_puct: f64,
    pub node_limit: usize,
    pub time_limit: Duration,
    pub path_target: usize,
    pub max_depth: usize,
    pub action_set: ActionSet,
}

impl SearchConfig {
    pub fn new(action_set: ActionSet) -> Self {
        Self {
            c_puct: 1.0,
            node_limit: 20_000,
            time_limit: Duration::from_secs(60),
            path_target: 1,
            max_depth: 30,
            action_set,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.c_puct >= 0.0
            && self.node_limit > 0
            && !self.time_limit.is_zero()
            && self.path_target > 0
            && self.max_depth > 0
            && !self.action_set.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("start pose is in collision or out of bounds")]
    StartInCollision,
    #[error("destination pose is in collision or out of bounds")]
    DestinationInCollision,
    #[error("invalid search configuration")]
    InvalidConfig,
    #[error("evaluator has {evaluator} actions, action set has {actions}")]
    ActionMismatch { evaluator: usize, actions: usize },
}

/// Why a cycle could not run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Halt {
    /// Every branch is trimmed.
    Exhausted,
    /// Expanding would exceed the node limit.
    NodeLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Exhausted,
    NodeLimit,
    TimeLimit,
    PathTarget,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Exhausted => "exhausted",
            Termination::NodeLimit => "node-limit",
            Termination::TimeLimit => "time-limit",
            Termination::PathTarget => "path-target",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchTree {
    pub nodes: Vec<TreeNode>,
    pub destination: Pose,
    pub paths_found: usize,
    pub config: SearchConfig,
    pub weights: CostWeights,
    /// Completed select-expand-simulate-backpropagate cycles after the root expansion.
    pub cycles: usize,
    /// Node count when the first destination-connected node appeared.
    pub nodes_to_first_path: Option<usize>,
}

impl SearchTree {
    pub fn new(scenario: &Scenario, config: SearchConfig, weights: CostWeights) -> Result<Self, SearchError> {
        if !config.is_valid() {
            return Err(SearchError::InvalidConfig);
        }
        if !scenario.pose_is_free(&scenario.start.pose) {
            return Err(SearchError::StartInCollision);
        }
        if !scenario.pose_is_free(&scenario.goal) {
            return Err(SearchError::DestinationInCollision);
        }
        let cost =
            CostAccumulator::start(&scenario.start, scenario, &weights).map_err(|_| SearchError::StartInCollision)?;
        Ok(Self {
            nodes: vec![TreeNode::new(scenario.start, None, 0, Some(cost))],
            destination: scenario.goal,
            paths_found: 0,
            config,
            weights,
            cycles: 0,
            nodes_to_first_path: None,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[ROOT]
    }

    fn score(&self, n: &TreeNode, a: usize) -> f64 {
        let bonus = ((f64::from(n.visits) + 1.0) / (f64::from(n.edge_visits[a]) + 1.0)).sqrt();
        n.q[a] + self.config.c_puct * n.prior[a] * bonus
    }

    /// Descends by the PUCT rule to the first unexplored node.
    pub fn select(&self) -> Result<NodeId, Halt> {
        let mut id = ROOT;
        loop {
            let n = &self.nodes[id];
            match n.status {
                NodeStatus::Unexplored => return Ok(id),
                NodeStatus::Trimmed => {
                    assert_eq!(id, ROOT, "selection reached a trimmed node");
                    return Err(Halt::Exhausted);
                }
                NodeStatus::Explored => {}
            }
            let mut best: Option<(usize, f64)> = None;
            for (a, &child) in n.children.iter().enumerate() {
                if self.nodes[child].status == NodeStatus::Trimmed {
                    continue;
                }
                let s = self.score(n, a);
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((a, s));
                }
            }
            // eager trimming guarantees an explored node has a living child
            let (a, _) = best.ok_or(Halt::Exhausted)?;
            id = n.children[a];
        }
    }

    /// Spawns all children of `id`, trimming infeasible ones and spreading
    /// their prior share over the survivors.
    pub fn expand(&mut self, id: NodeId, priors: &[f64], scenario: &Scenario) -> Result<(), Halt> {
        let actions = self.config.action_set.len();
        assert_eq!(
            self.nodes[id].status,
            NodeStatus::Unexplored,
            "expand needs an unexplored node"
        );
        assert_eq!(priors.len(), actions, "prior length must match the action set");
        if self.nodes.len() + actions > self.config.node_limit {
            return Err(Halt::NodeLimit);
        }
        let (state, depth, cost) = {
            let n = &self.nodes[id];
            (n.state, n.depth, n.cost.expect("unexplored nodes carry a cost"))
        };
        let mut children = Vec::with_capacity(actions);
        for (a, action) in self.config.action_set.actions().iter().enumerate() {
            let child = transition(&state, action, &scenario.vehicle);
            let alive = depth < self.config.max_depth && feasible_action(&state, action, scenario);
            let child_cost = if alive {
                cost.extend(&child, depth + 1, scenario, &self.weights).ok()
            } else {
                None
            };
            children.push(self.nodes.len());
            self.nodes
                .push(TreeNode::new(child, Some((id, a)), depth + 1, child_cost));
        }
        let total: f64 = priors.iter().sum();
        let mut prior: Vec<f64> = priors.iter().map(|p| p / total).collect();
        let alive: Vec<bool> = children
            .iter()
            .map(|&c| self.nodes[c].status != NodeStatus::Trimmed)
            .collect();
        let survivors = alive.iter().filter(|a| **a).count();
        if survivors > 0 {
            let freed: f64 = prior.iter().zip(&alive).filter(|(_, a)| !**a).map(|(p, _)| p).sum();
            for (p, a) in prior.iter_mut().zip(&alive) {
                *p = if *a { *p + freed / survivors as f64 } else { 0.0 };
            }
        }
        let n = &mut self.nodes[id];
        n.children = children;
        n.prior = prior;
        n.q = vec![0.0; actions];
        n.edge_visits = vec![0; actions];
        n.expanded = true;
        n.status = NodeStatus::Explored;
        if survivors == 0 {
            self.trim(id);
        }
        Ok(())
    }

    /// Marks `id` trimmed and hands its prior share to its living siblings,
    /// recursing while a parent loses its last living child.
    fn trim(&mut self, id: NodeId) {
        let mut id = id;
        loop {
            self.nodes[id].status = NodeStatus::Trimmed;
            let Some((parent, a)) = self.nodes[id].parent else {
                return;
            };
            let share = std::mem::replace(&mut self.nodes[parent].prior[a], 0.0);
            let living: Vec<usize> = self.nodes[parent]
                .children
                .iter()
                .enumerate()
                .filter(|(_, &c)| self.nodes[c].status != NodeStatus::Trimmed)
                .map(|(i, _)| i)
                .collect();
            if living.is_empty() {
                id = parent;
                continue;
            }
            let each = share / living.len() as f64;
            for i in living {
                self.nodes[parent].prior[i] += each;
            }
            return;
        }
    }

    /// Blended value of `id` from the evaluator value and its path cost, plus the
    /// destination connection test.
    pub fn simulate(&mut self, id: NodeId, v: f64, scenario: &Scenario) -> f64 {
        let cost = self.nodes[id].path_cost().expect("simulated nodes carry a cost");
        let value = node_value(v, &cost, &self.weights);
        let pose = self.nodes[id].state.pose;
        if let Some(len) = dubins_connects(&pose, &self.destination, &scenario.vehicle, scenario) {
            let n = &mut self.nodes[id];
            n.dest_connected = true;
            n.dest_connect_length = Some(len);
            self.paths_found += 1;
            if self.nodes_to_first_path.is_none() {
                self.nodes_to_first_path = Some(self.nodes.len());
            }
        }
        value
    }

    /// Running-mean update of every edge from `id` to the root, keeping the best
    /// stored value of destination-connected nodes on the way up.
    pub fn backpropagate(&mut self, id: NodeId, value: f64) {
        self.nodes[id].value = Some(value);
        let mut v = value;
        let mut n = id;
        while let Some((parent, a)) = self.nodes[n].parent {
            if self.nodes[n].dest_connected {
                v = v.max(self.nodes[n].value.expect("connected nodes were simulated"));
            }
            let p = &mut self.nodes[parent];
            let count = f64::from(p.edge_visits[a]);
            p.q[a] = (count * p.q[a] + v) / (count + 1.0);
            p.edge_visits[a] += 1;
            p.visits += 1;
            n = parent;
        }
    }

    /// One select-expand-simulate-backpropagate cycle.
    pub fn cycle(&mut self, scenario: &Scenario, scene: &SceneEncoder, evaluator: &dyn Evaluator) -> Result<(), Halt> {
        let id = self.select()?;
        if self.nodes.len() + self.config.action_set.len() > self.config.node_limit {
            return Err(Halt::NodeLimit);
        }
        let state = self.nodes[id].state;
        let parent_state = self.nodes[id].parent.map_or(state, |(p, _)| self.nodes[p].state);
        let Evaluation { policy, value } = evaluator.evaluate(scene, &state, &parent_state);
        self.expand(id, &policy, scenario)?;
        let v = self.simulate(id, value, scenario);
        self.backpropagate(id, v);
        if id != ROOT {
            self.cycles += 1;
        }
        Ok(())
    }

    /// Visit-count distribution inputs: children of `id` and their edge counts.
    pub fn edge_counts(&self, id: NodeId) -> &[u32] {
        &self.nodes[id].edge_visits
    }

    /// States from the root to `id`.
    pub fn states_to(&self, id: NodeId) -> Vec<MotionState> {
        let mut out = vec![self.nodes[id].state];
        let mut n = id;
        while let Some((p, _)) = self.nodes[n].parent {
            out.push(self.nodes[p].state);
            n = p;
        }
        out.reverse();
        out
    }

    /// Text dump: one node per line.
    pub fn dump(&self) -> String {
        let mut out = String::from("id\tparent\taction\tstatus\tN\tQ\tV\tdest_connected\n");
        for (id, n) in self.nodes.iter().enumerate() {
            let (parent, action, q) = match n.parent {
                Some((p, a)) => (p.to_string(), a.to_string(), format!("{:.6}", self.nodes[p].q[a])),
                None => ("-".into(), "-".into(), "-".into()),
            };
            let v = n.value.map_or("-".into(), |v| format!("{v:.6}"));
            let _ = writeln!(
                out,
                "{id}\t{parent}\t{action}\t{}\t{}\t{q}\t{v}\t{}",
                n.status.name(),
                n.visits,
                n.dest_connected
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub tree: SearchTree,
    pub termination: Termination,
    pub elapsed: Duration,
    pub best_path: Option<PlannedPath>,
}

impl SearchResult {
    pub fn nodes_created(&self) -> usize {
        self.tree.node_count()
    }
}

pub fn run_search(
    scenario: &Scenario,
    evaluator: &dyn Evaluator,
    config: SearchConfig,
    weights: CostWeights,
) -> Result<SearchResult, SearchError> {
    let started = Instant::now();
    if evaluator.action_count() != config.action_set.len() {
        return Err(SearchError::ActionMismatch {
            evaluator: evaluator.action_count(),
            actions: config.action_set.len(),
        });
    }
    let mut tree = SearchTree::new(scenario, config, weights)?;
    let scene = SceneEncoder::new(scenario);
    let termination = loop {
        if tree.paths_found >= tree.config.path_target {
            break Termination::PathTarget;
        }
        if started.elapsed() >= tree.config.time_limit {
            break Termination::TimeLimit;
        }
        match tree.cycle(scenario, &scene, evaluator) {
            Ok(()) => {}
            Err(Halt::Exhausted) => break Termination::Exhausted,
            Err(Halt::NodeLimit) => break Termination::NodeLimit,
        }
    };
    let best_path = extract_best_path(&tree, scenario);
    Ok(SearchResult {
        tree,
        termination,
        elapsed: started.elapsed(),
        best_path,
    })
}

/// Destination-connected node with the best blended score, ties to the lowest id.
pub fn extract_best_path(tree: &SearchTree, scenario: &Scenario) -> Option<PlannedPath> {
    let w = &tree.weights;
    let mut best: Option<(NodeId, f64)> = None;
    for (id, n) in tree.nodes.iter().enumerate().filter(|(_, n)| n.dest_connected) {
        let cost = n.path_cost().expect("connected nodes carry a cost");
        let len = n.dest_connect_length.expect("connected nodes carry a length");
        let score = node_value(1.0, &cost, w) - w.w_dist * len;
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((id, score));
        }
    }
    let (id, _) = best?;
    let states = tree.states_to(id);
    let from = tree.nodes[id].state.pose;
    let closing = DubinsPath::shortest(&from, &tree.destination, scenario.vehicle.turn_radius())?;
    PlannedPath::new(states, closing, scenario, w)
}
