//! Parking scenarios: obstacle layout, start and goal, vehicle.

mod gen;
mod io;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{polygons_intersect, Bounds, ConvexPolygon, Pose};
use crate::vehicle::{body, MotionState, VehicleParams};

pub use gen::{generate, GenError, GenSpec};
pub use io::{read_scenario, read_scenario_str, write_scenario, write_scenario_string, ScenarioIoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Parallel,
    Perpendicular,
    Diagonal,
    /// Open lot without obstacles; used as the easiest benchmark tier.
    Empty,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Parallel => "parallel",
            ScenarioKind::Perpendicular => "perpendicular",
            ScenarioKind::Diagonal => "diagonal",
            ScenarioKind::Empty => "empty",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "parallel" => Ok(ScenarioKind::Parallel),
            "perpendicular" => Ok(ScenarioKind::Perpendicular),
            "diagonal" => Ok(ScenarioKind::Diagonal),
            "empty" => Ok(ScenarioKind::Empty),
            other => Err(format!("unknown scenario kind `{other}`")),
        }
    }
}

/// Obstacle classes, one occupancy channel each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObstacleClass {
    Vehicle,
    Curb,
    Pillar,
}

impl ObstacleClass {
    pub const ALL: [ObstacleClass; 3] = [ObstacleClass::Vehicle, ObstacleClass::Curb, ObstacleClass::Pillar];

    pub fn channel(self) -> usize {
        match self {
            ObstacleClass::Vehicle => 0,
            ObstacleClass::Curb => 1,
            ObstacleClass::Pillar => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub class: ObstacleClass,
    pub polygon: ConvexPolygon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub kind: ScenarioKind,
    pub bounds: Bounds,
    pub obstacles: Vec<Obstacle>,
    pub start: MotionState,
    pub goal: Pose,
    pub vehicle: VehicleParams,
}

/// A failed scenario invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    BoundsInvalid,
    VehicleInvalid,
    ObstacleNotConvex,
    ObstacleOutOfBounds,
    StartOutOfBounds,
    StartInCollision,
    GoalOutOfBounds,
    GoalInCollision,
}

impl Violation {
    pub fn name(self) -> &'static str {
        match self {
            Violation::BoundsInvalid => "bounds-invalid",
            Violation::VehicleInvalid => "vehicle-invalid",
            Violation::ObstacleNotConvex => "obstacle-not-convex",
            Violation::ObstacleOutOfBounds => "obstacle-out-of-bounds",
            Violation::StartOutOfBounds => "start-out-of-bounds",
            Violation::StartInCollision => "start-in-collision",
            Violation::GoalOutOfBounds => "goal-out-of-bounds",
            Violation::GoalInCollision => "goal-in-collision",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Scenario {
    /// Length of the shortest obstacle-free Dubins path from start to goal; a search-independent difficulty rank.
    pub fn free_space_distance(&self) -> f64 {
        crate::dubins::DubinsPath::shortest(&self.start.pose, &self.goal, self.vehicle.turn_radius())
            .map_or(f64::INFINITY, |p| p.length())
    }

    pub fn obstacle_polygons(&self) -> impl Iterator<Item = &ConvexPolygon> {
        self.obstacles.iter().map(|o| &o.polygon)
    }

    /// True when the footprint at `pose` is inside the bounds and touches no obstacle.
    pub fn pose_is_free(&self, pose: &Pose) -> bool {
        let fp = body(&self.vehicle, pose);
        if !self.bounds.contains_polygon(&fp) {
            return false;
        }
        !self.collides(&fp)
    }

    pub fn collides(&self, poly: &ConvexPolygon) -> bool {
        let bb = poly.aabb();
        self.obstacles
            .iter()
            .any(|o| o.polygon.aabb().overlaps(&bb) && polygons_intersect(poly, &o.polygon))
    }

    /// Applies a rigid motion to every geometric field.
    pub fn transformed(&self, rotation: f64, translation: crate::geometry::Point2) -> Scenario {
        let move_pose = |p: &Pose| Pose {
            position: p.position.rotate(rotation) + translation,
            heading: crate::geometry::normalize_angle(p.heading + rotation),
        };
        let mut out = self.clone();
        for o in &mut out.obstacles {
            o.polygon = o.polygon.transformed(rotation, translation);
        }
        out.start.pose = move_pose(&self.start.pose);
        out.goal = move_pose(&self.goal);
        // rotated bounds are only meaningful for axis-preserving motions
        out.bounds = Bounds::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::INFINITY);
        out
    }
}

/// Every broken invariant of `s`, empty when the scenario is well formed.
pub fn validate(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let b = &s.bounds;
    if !(b.min_x < b.max_x && b.min_y < b.max_y) {
        out.push(Violation::BoundsInvalid);
    }
    if !s.vehicle.is_valid() {
        out.push(Violation::VehicleInvalid);
    }
    if s.obstacles.iter().any(|o| !o.polygon.is_strictly_convex_ccw()) {
        out.push(Violation::ObstacleNotConvex);
    }
    if s.obstacles.iter().any(|o| !b.contains_polygon(&o.polygon)) {
        out.push(Violation::ObstacleOutOfBounds);
    }
    if out.contains(&Violation::VehicleInvalid) {
        return out;
    }
    let start = body(&s.vehicle, &s.start.pose);
    if !b.contains_polygon(&start) {
        out.push(Violation::StartOutOfBounds);
    }
    if s.collides(&start) {
        out.push(Violation::StartInCollision);
    }
    let goal = body(&s.vehicle, &s.goal);
    if !b.contains_polygon(&goal) {
        out.push(Violation::GoalOutOfBounds);
    }
    if s.collides(&goal) {
        out.push(Violation::GoalInCollision);
    }
    out
}
