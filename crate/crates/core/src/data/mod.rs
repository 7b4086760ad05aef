//! Training data harvested from finished search trees.

mod dump;
mod replay;
mod split;

pub use dump::{decode_samples, encode_samples, read_samples, write_samples, SAMPLE_MAGIC};
pub use replay::{ReplayBuffer, DEFAULT_CAPACITY};
pub use split::{split_dataset, DatasetSplit};

use std::collections::BTreeSet;

use thiserror::Error;

use crate::evaluator::{SceneEncoder, TrainingSample};
use crate::geometry::{normalize_angle, Pose};
use crate::mcts::{NodeId, NodeStatus, SearchTree};
use crate::scenario::Scenario;

/// Metres charged per radian of heading difference in the sampling metric.
pub const HEADING_WEIGHT: f64 = 1.0;
pub const DEFAULT_PER_TREE: usize = 16;
pub const DEFAULT_TAU: f64 = 1.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("policy label needs at least one visited live action")]
    NoVisits,
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("dataset split needs at least 3 scenarios, got {0}")]
    TooFewScenarios(usize),
    #[error("sample file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("sample file: {0}")]
    Format(String),
}

/// Node ids split into positive and negative examples, both ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Labels {
    pub good: Vec<NodeId>,
    pub bad: Vec<NodeId>,
}

/// Good nodes lie on a root chain to any destination-connected node; every other
/// explored, untrimmed node is bad.
pub fn label_nodes(tree: &SearchTree) -> Labels {
    let mut good = BTreeSet::new();
    for (id, n) in tree.nodes.iter().enumerate() {
        if !n.dest_connected {
            continue;
        }
        let mut cur = Some(id);
        while let Some(c) = cur {
            if !good.insert(c) {
                break;
            }
            cur = tree.nodes[c].parent.map(|(p, _)| p);
        }
    }
    let eligible = |id: &NodeId| tree.nodes[*id].status == NodeStatus::Explored;
    let bad = (0..tree.nodes.len())
        .filter(|id| eligible(id) && !good.contains(id))
        .collect();
    Labels {
        good: good.into_iter().filter(eligible).collect(),
        bad,
    }
}

pub fn pose_distance(a: &Pose, b: &Pose) -> f64 {
    a.position.distance(b.position) + HEADING_WEIGHT * normalize_angle(a.heading - b.heading).abs()
}

/// Greedy farthest-point selection over `poses`, seeded with index 0; ties go to
/// the lowest index. Returns indices in selection order.
pub fn fps_indices(poses: &[Pose], k: usize) -> Vec<usize> {
    let k = k.min(poses.len());
    if k == 0 {
        return Vec::new();
    }
    let mut chosen = vec![0];
    let mut gap: Vec<f64> = poses.iter().map(|p| pose_distance(p, &poses[0])).collect();
    gap[0] = f64::NEG_INFINITY;
    while chosen.len() < k {
        let mut best = usize::MAX;
        for (i, &g) in gap.iter().enumerate() {
            if g > f64::NEG_INFINITY && (best == usize::MAX || g > gap[best]) {
                best = i;
            }
        }
        chosen.push(best);
        gap[best] = f64::NEG_INFINITY;
        for (i, g) in gap.iter_mut().enumerate() {
            if *g > f64::NEG_INFINITY {
                *g = g.min(pose_distance(&poses[i], &poses[best]));
            }
        }
    }
    chosen
}

/// Farthest-point sample of tree nodes, seeded with the lowest id.
pub fn fps_sample(tree: &SearchTree, nodes: &[NodeId], k: usize) -> Vec<NodeId> {
    let mut ids = nodes.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let poses: Vec<Pose> = ids.iter().map(|&id| tree.nodes[id].state.pose).collect();
    fps_indices(&poses, k).into_iter().map(|i| ids[i]).collect()
}

/// Visit counts sharpened by `1/tau`, computed in log space. Masked entries get 0.
pub fn policy_from_counts(counts: &[u32], live: &[bool], tau: f64) -> Result<Vec<f64>, DataError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(DataError::BadTemperature(tau));
    }
    let logs: Vec<Option<f64>> = counts
        .iter()
        .zip(live)
        .map(|(&n, &l)| (l && n > 0).then(|| f64::from(n).ln() / tau))
        .collect();
    let max = logs.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(DataError::NoVisits);
    }
    let weights: Vec<f64> = logs.iter().map(|l| l.map_or(0.0, |l| (l - max).exp())).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Training policy for an explored node; trimmed children are excluded.
pub fn policy_label(tree: &SearchTree, id: NodeId, tau: f64) -> Result<Vec<f64>, DataError> {
    let n = &tree.nodes[id];
    let live: Vec<bool> = n
        .children
        .iter()
        .map(|&c| tree.nodes[c].status != NodeStatus::Trimmed)
        .collect();
    policy_from_counts(&n.edge_visits, &live, tau)
}

fn labelable(tree: &SearchTree, id: NodeId) -> bool {
    let n = &tree.nodes[id];
    n.children
        .iter()
        .zip(&n.edge_visits)
        .any(|(&c, &v)| v > 0 && tree.nodes[c].status != NodeStatus::Trimmed)
}

/// Balanced positive and negative samples from one finished tree.
pub fn harvest(
    tree: &SearchTree,
    scenario: &Scenario,
    per_tree: usize,
    tau: f64,
) -> Result<Vec<TrainingSample>, DataError> {
    let labels = label_nodes(tree);
    let good: Vec<NodeId> = labels.good.into_iter().filter(|&id| labelable(tree, id)).collect();
    let bad: Vec<NodeId> = labels.bad.into_iter().filter(|&id| labelable(tree, id)).collect();
    let k = per_tree.min(good.len()).min(bad.len());
    if k == 0 {
        return Ok(Vec::new());
    }
    let scene = SceneEncoder::new(scenario);
    let mut out = Vec::with_capacity(2 * k);
    for (ids, r) in [(good, 1.0), (bad, 0.0)] {
        for id in fps_sample(tree, &ids, k) {
            let n = &tree.nodes[id];
            let parent = n.parent.map_or(n.state, |(p, _)| tree.nodes[p].state);
            out.push(TrainingSample {
                input: scene.encode(&n.state, &parent),
                policy: policy_label(tree, id, tau)?,
                value: r,
            });
        }
    }
    Ok(out)
}
