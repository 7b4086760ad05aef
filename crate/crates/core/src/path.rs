//! Planner output: tree or lattice motions followed by a closing Dubins segment,
//! and its on-disk form.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostAccumulator, CostWeights, PathCost};
use crate::dubins::{DubinsPath, Turn};
use crate::geometry::{normalize_angle, Pose};
use crate::scenario::Scenario;
use crate::vehicle::{feasible_action, implied_action, transition, Gear, MotionState, COLLISION_STEP};

/// Tolerance for comparing recomputed poses and costs against stored ones.
pub const PATH_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    /// Start state followed by one state per discrete action.
    pub states: Vec<MotionState>,
    pub closing: DubinsPath,
    pub cost: PathCost,
}

impl PlannedPath {
    /// Builds the path and its cost; `None` when a state collides.
    pub fn new(
        states: Vec<MotionState>,
        closing: DubinsPath,
        scenario: &Scenario,
        weights: &CostWeights,
    ) -> Option<Self> {
        let cost = motion_cost(&states, closing.length(), scenario, weights)?;
        Some(Self { states, closing, cost })
    }

    pub fn length(&self) -> f64 {
        let tree: f64 = self
            .states
            .windows(2)
            .map(|w| w[0].pose.position.distance(w[1].pose.position))
            .sum();
        tree + self.closing.length()
    }

    pub fn closing_samples(&self) -> Vec<Pose> {
        self.closing.sample(COLLISION_STEP)
    }

    pub fn gear_changes(&self) -> usize {
        let mut gears: Vec<Gear> = self.states[1..].iter().map(|s| s.gear).collect();
        gears.push(Gear::Forward);
        gears.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

fn motion_cost(
    states: &[MotionState],
    closing_length: f64,
    scenario: &Scenario,
    weights: &CostWeights,
) -> Option<PathCost> {
    let (first, rest) = states.split_first()?;
    let mut acc = CostAccumulator::start(first, scenario, weights).ok()?;
    for (i, s) in rest.iter().enumerate() {
        acc = acc.extend(s, i + 1, scenario, weights).ok()?;
    }
    Some(acc.close_with(closing_length, weights).cost())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Start,
    Motion,
    Closing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub gear: Gear,
    /// Steering angle applied on the segment that ends at this pose.
    pub steer: f64,
    pub segment: Segment,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathStats {
    pub nodes: usize,
    pub milliseconds: f64,
    pub termination: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathFile {
    pub scenario: String,
    pub planner: String,
    pub solved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<PathCost>,
    pub stats: PathStats,
    #[serde(default)]
    pub poses: Vec<PathPose>,
}

#[derive(Debug, Error)]
pub enum PathFileError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid path file {path}: {message}")]
    Parse { path: String, message: String },
    #[error("cannot encode path file: {0}")]
    Encode(#[from] toml::ser::Error),
}

/// A broken PathFile invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathViolation {
    #[error("path file belongs to scenario {found}, expected {expected}")]
    WrongScenario { expected: String, found: String },
    #[error("solved flag and pose list disagree")]
    Inconsistent,
    #[error("first pose is not the scenario start")]
    BadStart,
    #[error("pose {0} is not reachable from its predecessor with an in-range action")]
    Kinematics(usize),
    #[error("motion ending at pose {0} collides")]
    Collision(usize),
    #[error("closing segment does not reach the goal along a free forward path")]
    Closing,
    #[error("stored cost differs from the recomputed cost {0:?}")]
    Cost(Box<PathCost>),
}

impl PathFile {
    pub fn new(scenario: &Scenario, planner: &str, path: Option<&PlannedPath>, stats: PathStats) -> Self {
        let poses = path.map(|p| path_poses(p, scenario)).unwrap_or_default();
        Self {
            scenario: scenario.id.clone(),
            planner: planner.to_string(),
            solved: path.is_some(),
            cost: path.map(|p| p.cost),
            stats,
            poses,
        }
    }

    pub fn to_toml(&self) -> Result<String, PathFileError> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self, PathFileError> {
        toml::from_str(text).map_err(|e| PathFileError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), PathFileError> {
        fs::write(path, self.to_toml()?).map_err(|source| PathFileError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, PathFileError> {
        let text = fs::read_to_string(path).map_err(|source| PathFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    /// Re-checks kinematics, collisions, the closing connection and the stored cost.
    pub fn validate(&self, scenario: &Scenario, weights: &CostWeights) -> Result<(), PathViolation> {
        if self.scenario != scenario.id {
            return Err(PathViolation::WrongScenario {
                expected: scenario.id.clone(),
                found: self.scenario.clone(),
            });
        }
        if self.solved != !self.poses.is_empty() || self.solved != self.cost.is_some() {
            return Err(PathViolation::Inconsistent);
        }
        if !self.solved {
            return Ok(());
        }
        let first = &self.poses[0];
        let start = scenario.start;
        if first.segment != Segment::Start
            || !close_pose(&pose_of(first), &start.pose)
            || first.gear != start.gear
            || (first.steer - start.steer).abs() > PATH_TOLERANCE
        {
            return Err(PathViolation::BadStart);
        }
        let mut states = vec![start];
        let mut i = 1;
        while i < self.poses.len() && self.poses[i].segment == Segment::Motion {
            let p = &self.poses[i];
            let prev = *states.last().expect("start present");
            let claimed = MotionState::new(pose_of(p), p.gear, p.steer);
            let action = implied_action(&prev, &claimed);
            let reached = transition(&prev, &action, &scenario.vehicle);
            if p.steer.abs() > scenario.vehicle.max_steer + PATH_TOLERANCE || !close_pose(&reached.pose, &claimed.pose)
            {
                return Err(PathViolation::Kinematics(i));
            }
            if !feasible_action(&prev, &action, scenario) {
                return Err(PathViolation::Collision(i));
            }
            states.push(reached);
            i += 1;
        }
        let closing = &self.poses[i.min(self.poses.len())..];
        let from = states.last().expect("start present").pose;
        let dubins = DubinsPath::shortest(&from, &scenario.goal, scenario.vehicle.turn_radius())
            .ok_or(PathViolation::Closing)?;
        let expected = dubins.sample(COLLISION_STEP);
        // the closing list repeats the connection pose as its first entry
        if closing.len() != expected.len()
            || closing.iter().any(|p| p.segment != Segment::Closing)
            || closing.iter().zip(&expected).any(|(p, e)| !close_pose(&pose_of(p), e))
            || expected.iter().any(|e| !scenario.pose_is_free(e))
        {
            return Err(PathViolation::Closing);
        }
        let recomputed = motion_cost(&states, dubins.length(), scenario, weights).ok_or(PathViolation::Collision(0))?;
        let stored = self.cost.expect("solved paths carry a cost");
        let diff = [
            stored.safety - recomputed.safety,
            stored.comfort - recomputed.comfort,
            stored.efficiency - recomputed.efficiency,
            stored.total - recomputed.total,
        ];
        if diff.iter().any(|d| d.abs() > PATH_TOLERANCE) {
            return Err(PathViolation::Cost(Box::new(recomputed)));
        }
        Ok(())
    }
}

fn pose_of(p: &PathPose) -> Pose {
    Pose::new(p.x, p.y, p.heading)
}

fn close_pose(a: &Pose, b: &Pose) -> bool {
    a.position.distance(b.position) <= PATH_TOLERANCE && normalize_angle(a.heading - b.heading).abs() <= PATH_TOLERANCE
}

fn path_poses(path: &PlannedPath, scenario: &Scenario) -> Vec<PathPose> {
    let mut out: Vec<PathPose> = path
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| PathPose {
            x: s.pose.x(),
            y: s.pose.y(),
            heading: s.pose.heading,
            gear: s.gear,
            steer: s.steer,
            segment: if i == 0 { Segment::Start } else { Segment::Motion },
        })
        .collect();
    let samples = path.closing_samples();
    let len = path.closing.length();
    let n = samples.len().saturating_sub(1).max(1);
    for (i, pose) in samples.iter().enumerate() {
        let steer = match path.closing.turn_at(len * i as f64 / n as f64) {
            Turn::Left => scenario.vehicle.max_steer,
            Turn::Straight => 0.0,
            Turn::Right => -scenario.vehicle.max_steer,
        };
        out.push(PathPose {
            x: pose.x(),
            y: pose.y(),
            heading: pose.heading,
            gear: Gear::Forward,
            steer,
            segment: Segment::Closing,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::open_lot;
    use crate::vehicle::Action;

    fn sample_plan() -> (Scenario, PlannedPath) {
        let s = open_lot();
        let p = s.vehicle;
        let a = transition(&s.start, &Action::new(-0.8, 0.3), &p);
        let b = transition(&a, &Action::new(-0.8, 0.0), &p);
        let closing = DubinsPath::shortest(&b.pose, &s.goal, p.turn_radius()).unwrap();
        let plan = PlannedPath::new(vec![s.start, a, b], closing, &s, &CostWeights::default()).unwrap();
        (s, plan)
    }

    fn stats() -> PathStats {
        PathStats {
            nodes: 42,
            milliseconds: 0.0,
            termination: "path-target".into(),
        }
    }

    #[test]
    fn emitted_file_validates_and_round_trips() {
        let (s, plan) = sample_plan();
        let file = PathFile::new(&s, "mcts", Some(&plan), stats());
        file.validate(&s, &CostWeights::default()).unwrap();
        let text = file.to_toml().unwrap();
        let back = PathFile::from_toml(&text, "mem").unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_toml().unwrap(), text);
        assert_eq!(plan.gear_changes(), 1);
    }

    #[test]
    fn unsolved_file_validates() {
        let s = open_lot();
        let file = PathFile::new(&s, "hastar", None, stats());
        assert!(!file.solved);
        file.validate(&s, &CostWeights::default()).unwrap();
        let text = file.to_toml().unwrap();
        assert_eq!(PathFile::from_toml(&text, "mem").unwrap().to_toml().unwrap(), text);
    }

    #[test]
    fn tampered_pose_detected() {
        let (s, plan) = sample_plan();
        let mut file = PathFile::new(&s, "mcts", Some(&plan), stats());
        file.poses[1].x += 0.05;
        assert_eq!(
            file.validate(&s, &CostWeights::default()),
            Err(PathViolation::Kinematics(1))
        );
    }

    #[test]
    fn tampered_cost_detected() {
        let (s, plan) = sample_plan();
        let mut file = PathFile::new(&s, "mcts", Some(&plan), stats());
        file.cost.as_mut().unwrap().comfort -= 0.01;
        assert!(matches!(
            file.validate(&s, &CostWeights::default()),
            Err(PathViolation::Cost(_))
        ));
    }

    #[test]
    fn out_of_range_steer_detected() {
        let (s, plan) = sample_plan();
        let mut file = PathFile::new(&s, "mcts", Some(&plan), stats());
        file.poses[2].steer = 1.5;
        assert_eq!(
            file.validate(&s, &CostWeights::default()),
            Err(PathViolation::Kinematics(2))
        );
    }
}
