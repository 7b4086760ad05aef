//! Path cost (safety, comfort, efficiency) and the blended node value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::min_clearance;
use crate::scenario::Scenario;
use crate::vehicle::{body, Gear, MotionState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("path state {0} collides with an obstacle")]
    Collision(usize),
    #[error("empty state sequence")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub safety_threshold: f64,
    pub w_safety: f64,
    pub w_gear: f64,
    pub w_steer: f64,
    pub w_dist: f64,
    pub alpha0: f64,
    pub alpha1: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            safety_threshold: 0.3,
            w_safety: 0.05,
            w_gear: 0.05,
            w_steer: 0.01,
            w_dist: 0.01,
            alpha0: 0.7,
            alpha1: 0.3,
        }
    }
}

impl CostWeights {
    pub fn is_admissible(&self) -> bool {
        let nonneg = [
            self.safety_threshold,
            self.w_safety,
            self.w_gear,
            self.w_steer,
            self.w_dist,
            self.alpha0,
            self.alpha1,
        ]
        .iter()
        .all(|w| *w >= 0.0 && w.is_finite());
        nonneg && self.alpha0 + self.alpha1 <= 1.0
    }
}

/// Nonpositive cost components. `total` is the component sum clamped to `[-1, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathCost {
    pub safety: f64,
    pub comfort: f64,
    pub efficiency: f64,
    pub total: f64,
}

impl PathCost {
    pub fn from_components(safety: f64, comfort: f64, efficiency: f64) -> Self {
        Self {
            safety,
            comfort,
            efficiency,
            total: (safety + comfort + efficiency).clamp(-1.0, 0.0),
        }
    }

    /// Unclamped component sum.
    pub fn raw_total(&self) -> f64 {
        self.safety + self.comfort + self.efficiency
    }
}

/// Running cost of a state sequence, extended one state at a time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostAccumulator {
    safety: f64,
    comfort: f64,
    efficiency: f64,
    last: MotionState,
}

impl CostAccumulator {
    pub fn start(state: &MotionState, scenario: &Scenario, weights: &CostWeights) -> Result<Self, CostError> {
        let safety = safety_penalty(state, scenario, weights).ok_or(CostError::Collision(0))?;
        Ok(Self {
            safety,
            comfort: 0.0,
            efficiency: 0.0,
            last: *state,
        })
    }

    /// Cost after moving to `next`; `index` only labels collision errors.
    pub fn extend(
        &self,
        next: &MotionState,
        index: usize,
        scenario: &Scenario,
        weights: &CostWeights,
    ) -> Result<Self, CostError> {
        let safety = safety_penalty(next, scenario, weights).ok_or(CostError::Collision(index))?;
        let mut comfort = self.comfort - weights.w_steer * (next.steer - self.last.steer).abs();
        if next.gear != self.last.gear {
            comfort -= weights.w_gear;
        }
        let moved = self.last.pose.position.distance(next.pose.position);
        Ok(Self {
            safety: self.safety + safety,
            comfort,
            efficiency: self.efficiency - weights.w_dist * moved,
            last: *next,
        })
    }

    /// Adds a forward-only closing connection of `length` meters.
    pub fn close_with(&self, length: f64, weights: &CostWeights) -> Self {
        let mut out = *self;
        if self.last.gear != Gear::Forward {
            out.comfort -= weights.w_gear;
        }
        out.efficiency -= weights.w_dist * length;
        out.last.gear = Gear::Forward;
        out
    }

    pub fn cost(&self) -> PathCost {
        PathCost::from_components(self.safety, self.comfort, self.efficiency)
    }
}

/// `-w_safety * max(0, threshold - clearance)`, or `None` on collision.
fn safety_penalty(state: &MotionState, scenario: &Scenario, weights: &CostWeights) -> Option<f64> {
    let fp = body(&scenario.vehicle, &state.pose);
    let clearance = min_clearance(&fp, scenario.obstacle_polygons()).ok()?;
    Some(-weights.w_safety * (weights.safety_threshold - clearance).max(0.0))
}

pub fn path_cost(states: &[MotionState], scenario: &Scenario, weights: &CostWeights) -> Result<PathCost, CostError> {
    let (first, rest) = states.split_first().ok_or(CostError::Empty)?;
    let mut acc = CostAccumulator::start(first, scenario, weights)?;
    for (i, s) in rest.iter().enumerate() {
        acc = acc.extend(s, i + 1, scenario, weights)?;
    }
    Ok(acc.cost())
}

/// Blend of the learned value and the path cost, in `[-1, 1]` for admissible weights.
pub fn node_value(v: f64, cost: &PathCost, weights: &CostWeights) -> f64 {
    weights.alpha0 * v + weights.alpha1 * cost.total
}

pub fn terminal_reward(reached: bool) -> f64 {
    if reached {
        1.0
    } else {
        0.0
    }
}
