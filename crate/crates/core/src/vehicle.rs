//! Bicycle-model kinematics, the discretized action set and motion
//! feasibility checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dubins::DubinsPath;
use crate::geometry::{footprint_polygon, normalize_angle, Point2, Pose, VehicleFootprint};
use crate::scenario::Scenario;

/// Arc-length spacing of collision samples along a motion.
pub const COLLISION_STEP: f64 = 0.1;

/// Position lattice, 2^-44 m. Displacements are rounded onto it so that a
/// straight move followed by its reverse restores an on-lattice pose exactly
/// while coordinates stay within 512 m of the origin.
pub const LATTICE: f64 = 1.0 / (1u64 << 44) as f64;

/// Rounds a coordinate to the nearest lattice point (ties away from zero, so odd symmetric).
pub fn snap(v: f64) -> f64 {
    (v / LATTICE).round() * LATTICE
}

pub fn snap_pose(p: Pose) -> Pose {
    Pose {
        position: Point2::new(snap(p.position.x), snap(p.position.y)),
        heading: p.heading,
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActionSetError {
    #[error("steer_count must be odd and at least 3, got {0}")]
    BadSteerCount(usize),
    #[error("step must be positive and finite, got {0}")]
    BadStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub max_steer: f64,
    pub footprint: VehicleFootprint,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.5,
            max_steer: 0.6,
            footprint: VehicleFootprint::default(),
        }
    }
}

impl VehicleParams {
    pub fn is_valid(&self) -> bool {
        self.wheelbase > 0.0
            && self.max_steer > 0.0
            && self.max_steer < std::f64::consts::FRAC_PI_2
            && self.footprint.is_valid()
    }

    /// Tightest turning radius of the rear axle.
    pub fn turn_radius(&self) -> f64 {
        self.wheelbase / self.max_steer.tan()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gear {
    Forward,
    Reverse,
}

impl Gear {
    pub fn of_distance(distance: f64) -> Self {
        if distance < 0.0 {
            Gear::Reverse
        } else {
            Gear::Forward
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Gear::Forward => 1.0,
            Gear::Reverse => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Action {
    /// Signed travel distance; negative is reverse.
    pub distance: f64,
    pub steer: f64,
}

impl Action {
    pub fn new(distance: f64, steer: f64) -> Self {
        Self { distance, steer }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionState {
    pub pose: Pose,
    pub gear: Gear,
    /// Last applied front-wheel angle.
    pub steer: f64,
}

impl MotionState {
    pub fn new(pose: Pose, gear: Gear, steer: f64) -> Self {
        Self { pose, gear, steer }
    }

    pub fn at(pose: Pose) -> Self {
        Self::new(pose, Gear::Forward, 0.0)
    }
}

/// Discretized actions with a fixed index contract: the forward block in
/// ascending steer, then the reverse block in ascending steer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSet {
    actions: Vec<Action>,
    steer_count: usize,
    step: f64,
    max_steer: f64,
}

impl ActionSet {
    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> Action {
        self.actions[index]
    }

    pub fn steer_count(&self) -> usize {
        self.steer_count
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn max_steer(&self) -> f64 {
        self.max_steer
    }
}

pub fn make_action_set(params: &VehicleParams, steer_count: usize, step: f64) -> Result<ActionSet, ActionSetError> {
    if steer_count < 3 || steer_count.is_multiple_of(2) {
        return Err(ActionSetError::BadSteerCount(steer_count));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(ActionSetError::BadStep(step));
    }
    let half = (steer_count - 1) as f64;
    let levels: Vec<f64> = (0..steer_count)
        .map(|i| params.max_steer * (2.0 * i as f64 - half) / half)
        .collect();
    let actions = [step, -step]
        .iter()
        .flat_map(|&d| levels.iter().map(move |&s| Action::new(d, s)))
        .collect();
    Ok(ActionSet {
        actions,
        steer_count,
        step,
        max_steer: params.max_steer,
    })
}

/// One discrete step of the bicycle model; the displacement is snapped to [`LATTICE`].
pub fn transition(state: &MotionState, action: &Action, params: &VehicleParams) -> MotionState {
    let p = state.pose;
    let (s, c) = p.heading.sin_cos();
    let d = action.distance;
    let pose = Pose {
        position: Point2::new(p.position.x + snap(d * c), p.position.y + snap(d * s)),
        heading: normalize_angle(p.heading + d * action.steer.tan() / params.wheelbase),
    };
    MotionState {
        pose,
        gear: Gear::of_distance(d),
        steer: action.steer,
    }
}

/// Poses along a motion at no more than `COLLISION_STEP` spacing, endpoints
/// included. Positions follow the circular arc of the applied curvature with
/// a linear correction so the last sample lands on the discrete endpoint.
pub fn motion_samples(from: &MotionState, action: &Action, params: &VehicleParams) -> Vec<Pose> {
    let end = transition(from, action, params);
    let d = action.distance;
    let n = ((d.abs() / COLLISION_STEP) - 1e-9).ceil().max(1.0) as usize;
    let kappa = action.steer.tan() / params.wheelbase;
    let phi0 = from.pose.heading;
    let p0 = from.pose.position;
    let arc_at = |s: f64| -> Point2 {
        let len = s * d;
        if kappa.abs() < 1e-12 {
            p0 + Point2::new(phi0.cos(), phi0.sin()) * len
        } else {
            let phi = phi0 + kappa * len;
            p0 + Point2::new((phi.sin() - phi0.sin()) / kappa, -(phi.cos() - phi0.cos()) / kappa)
        }
    };
    let correction = end.pose.position - arc_at(1.0);
    (0..=n)
        .map(|i| {
            if i == n {
                return end.pose;
            }
            let s = i as f64 / n as f64;
            Pose {
                position: arc_at(s) + correction * s,
                heading: normalize_angle(phi0 + kappa * s * d),
            }
        })
        .collect()
}

/// Recovers the action that produced `to` from `from`.
pub fn implied_action(from: &MotionState, to: &MotionState) -> Action {
    let dist = from.pose.position.distance(to.pose.position);
    Action::new(to.gear.sign() * dist, to.steer)
}

pub fn feasible_action(from: &MotionState, action: &Action, scenario: &Scenario) -> bool {
    motion_samples(from, action, &scenario.vehicle)
        .iter()
        .all(|pose| scenario.pose_is_free(pose))
}

/// Collision and bounds check of the motion between two consecutive states.
pub fn feasible(from: &MotionState, to: &MotionState, scenario: &Scenario) -> bool {
    feasible_action(from, &implied_action(from, to), scenario)
}

/// Length of the shortest forward-only connection when that path is free.
pub fn dubins_connects(from: &Pose, to: &Pose, params: &VehicleParams, scenario: &Scenario) -> Option<f64> {
    let path = DubinsPath::shortest(from, to, params.turn_radius())?;
    let free = path
        .sample(COLLISION_STEP)
        .iter()
        .all(|pose| scenario.pose_is_free(pose));
    free.then(|| path.length())
}

/// Footprint polygon of a vehicle state.
pub fn body(params: &VehicleParams, pose: &Pose) -> crate::geometry::ConvexPolygon {
    footprint_polygon(&params.footprint, pose)
}
