//! Seeded procedural generation of the three parking layouts plus open lots.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{validate, Obstacle, ObstacleClass, Scenario, ScenarioKind};
use crate::geometry::{min_clearance, Bounds, ConvexPolygon, Point2, Pose};
use crate::rng::{self, ProjectRng};
use crate::vehicle::{body, dubins_connects, snap_pose, Gear, MotionState, VehicleParams};

const MAX_ATTEMPTS: usize = 100;
/// How many leading scenarios must contain one with an unobstructed connection.
const DEGENERACY_WINDOW: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("invalid generation spec: {0}")]
    InvalidSpec(String),
    #[error("rejection sampling failed {attempts} times for scenario {index}")]
    RejectionExhausted { index: usize, attempts: usize },
    #[error("none of the first {0} scenarios admits an obstacle-free connection")]
    Degenerate(usize),
}

/// Generation ranges for one batch of scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub kind: ScenarioKind,
    pub count: usize,
    pub seed: u64,
    /// Along-row opening of the target slot in meters.
    pub slot_size: (f64, f64),
    /// Number of free-standing pillars.
    pub clutter: (usize, usize),
    /// Half-widths of the start-pose jitter: (meters, radians).
    pub start_jitter: (f64, f64),
    pub world: (f64, f64),
    pub vehicle: VehicleParams,
    /// Plan from the slot toward the free-space pose (true) or the reverse.
    pub start_in_slot: bool,
}

impl GenSpec {
    pub fn new(kind: ScenarioKind, count: usize, seed: u64) -> Self {
        let vehicle = VehicleParams::default();
        let fp = vehicle.footprint;
        let slot_size = match kind {
            ScenarioKind::Parallel => (fp.length + 0.6, fp.length + 1.4),
            ScenarioKind::Perpendicular => (fp.width + 0.6, fp.width + 1.2),
            ScenarioKind::Diagonal => (fp.width + 0.8, fp.width + 1.6),
            ScenarioKind::Empty => (0.0, 0.0),
        };
        let clutter = match kind {
            ScenarioKind::Empty => (0, 0),
            _ => (0, 4),
        };
        Self {
            kind,
            count,
            seed,
            slot_size,
            clutter,
            start_jitter: (0.15, 0.05),
            world: (20.0, 20.0),
            vehicle,
            start_in_slot: true,
        }
    }

    fn check(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::InvalidSpec(m.to_string()));
        if !self.vehicle.is_valid() {
            return bad("vehicle parameters out of range");
        }
        if !(self.world.0 >= 12.0 && self.world.1 >= 12.0) {
            return bad("world must be at least 12 m on each side");
        }
        if self.slot_size.0 > self.slot_size.1 || self.clutter.0 > self.clutter.1 {
            return bad("empty range");
        }
        if self.start_jitter.0 < 0.0 || self.start_jitter.1 < 0.0 {
            return bad("negative jitter");
        }
        let fp = self.vehicle.footprint;
        let needed = match self.kind {
            ScenarioKind::Parallel => fp.length,
            ScenarioKind::Perpendicular | ScenarioKind::Diagonal => fp.width,
            ScenarioKind::Empty => return Ok(()),
        };
        if self.slot_size.0 <= needed {
            return bad(&format!(
                "slot size {} does not exceed the vehicle dimension {needed}",
                self.slot_size.0
            ));
        }
        Ok(())
    }
}

pub fn generate(spec: &GenSpec) -> Result<Vec<Scenario>, GenError> {
    spec.check()?;
    let mut out = Vec::with_capacity(spec.count);
    for index in 0..spec.count {
        let mut rng = rng::stream(spec.seed, kind_tag(spec.kind), index as u64);
        let id = format!("{}-{:04}-{:03}", spec.kind, spec.seed, index);
        let scenario = (0..MAX_ATTEMPTS)
            .find_map(|_| {
                let s = build(spec, &id, &mut rng);
                validate(&s).is_empty().then_some(s)
            })
            .ok_or(GenError::RejectionExhausted {
                index,
                attempts: MAX_ATTEMPTS,
            })?;
        out.push(scenario);
    }
    if out.len() >= DEGENERACY_WINDOW && !out[..DEGENERACY_WINDOW].iter().any(unobstructed_connection) {
        return Err(GenError::Degenerate(DEGENERACY_WINDOW));
    }
    Ok(out)
}

fn kind_tag(kind: ScenarioKind) -> u64 {
    match kind {
        ScenarioKind::Parallel => 1,
        ScenarioKind::Perpendicular => 2,
        ScenarioKind::Diagonal => 3,
        ScenarioKind::Empty => 4,
    }
}

/// Whether start and goal connect once obstacles are removed (bounds still apply).
fn unobstructed_connection(s: &Scenario) -> bool {
    let mut open = s.clone();
    open.obstacles.clear();
    dubins_connects(&s.start.pose, &s.goal, &s.vehicle, &open).is_some()
}

struct Layout {
    obstacles: Vec<Obstacle>,
    slot_pose: Pose,
    free_pose: Pose,
}

fn build(spec: &GenSpec, id: &str, rng: &mut ProjectRng) -> Scenario {
    let layout = match spec.kind {
        ScenarioKind::Parallel => parallel(spec, rng),
        ScenarioKind::Perpendicular => perpendicular(spec, rng),
        ScenarioKind::Diagonal => diagonal(spec, rng),
        ScenarioKind::Empty => empty(spec, rng),
    };
    let bounds = Bounds::new(0.0, 0.0, spec.world.0, spec.world.1);
    let (slot, free) = (snap_pose(layout.slot_pose), snap_pose(layout.free_pose));
    let (start, goal) = if spec.start_in_slot { (slot, free) } else { (free, slot) };
    let mut obstacles: Vec<Obstacle> = layout
        .obstacles
        .into_iter()
        .filter(|o| bounds.contains_polygon(&o.polygon))
        .collect();
    add_pillars(spec, rng, &mut obstacles, &[start, goal]);
    Scenario {
        id: id.to_string(),
        kind: spec.kind,
        bounds,
        obstacles,
        start: MotionState::new(start, Gear::Forward, 0.0),
        goal,
        vehicle: spec.vehicle,
    }
}

fn uniform(rng: &mut ProjectRng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn car(center: Point2, length: f64, width: f64, angle: f64) -> Obstacle {
    Obstacle {
        class: ObstacleClass::Vehicle,
        polygon: ConvexPolygon::oriented_rectangle(center, length, width, angle).expect("positive car size"),
    }
}

fn curb(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Obstacle {
    Obstacle {
        class: ObstacleClass::Curb,
        polygon: ConvexPolygon::rectangle(min_x, min_y, max_x, max_y).expect("positive curb size"),
    }
}

/// Parked cars laid end to end from `x` in direction `dir` until the world edge.
fn car_row(
    rng: &mut ProjectRng,
    mut x: f64,
    dir: f64,
    y: f64,
    pitch_len: f64,
    car: impl Fn(Point2) -> Obstacle,
    world_w: f64,
) -> Vec<Obstacle> {
    let mut out = Vec::new();
    while x > -pitch_len && x < world_w + pitch_len {
        if rng.random_bool(0.85) {
            out.push(car(Point2::new(x, y)));
        }
        x += dir * (pitch_len + uniform(rng, 0.4, 1.6));
    }
    out
}

fn parallel(spec: &GenSpec, rng: &mut ProjectRng) -> Layout {
    let (w, h) = spec.world;
    let fp = spec.vehicle.footprint;
    let (car_len, car_wid) = (fp.length + 0.4, fp.width - 0.2);
    let slot_len = uniform(rng, spec.slot_size.0, spec.slot_size.1);
    let row_y = 0.55 + 0.5 * fp.width + 0.1;
    let x0 = uniform(rng, car_len + 0.3, (w - 8.0 - slot_len).max(car_len + 0.8));
    let x1 = x0 + slot_len;

    let mut obstacles = vec![curb(0.0, 0.0, w, 0.4)];
    obstacles.push(car(Point2::new(x0 - 0.5 * car_len, row_y), car_len, car_wid, 0.0));
    obstacles.push(car(Point2::new(x1 + 0.5 * car_len, row_y), car_len, car_wid, 0.0));
    let park = |c: Point2| car(c, car_len, car_wid, 0.0);
    obstacles.extend(car_row(rng, x0 - 1.5 * car_len - 1.0, -1.0, row_y, car_len, park, w));
    obstacles.extend(car_row(rng, x1 + 1.5 * car_len + 1.0, 1.0, row_y, car_len, park, w));
    // far kerb-side row
    let far_y = h - 0.55 - 0.5 * car_wid;
    obstacles.push(curb(0.0, h - 0.4, w, h));
    let far_x = uniform(rng, 2.0, 5.0);
    obstacles.extend(car_row(rng, far_x, 1.0, far_y, car_len, park, w));

    let slack = slot_len - fp.length;
    let rear_gap = slack * uniform(rng, 0.15, 0.45);
    let pj = spec.start_jitter.0.min(0.1);
    let slot_pose = Pose::new(
        x0 + rear_gap + fp.rear_overhang,
        row_y + uniform(rng, -pj, pj),
        uniform(rng, -spec.start_jitter.1, spec.start_jitter.1),
    );
    let free_pose = Pose::new(
        (x1 + uniform(rng, 3.0, 7.0)).min(w - fp.length - 0.5),
        uniform(rng, 5.0, 7.0),
        uniform(rng, -0.25, 0.25),
    );
    Layout {
        obstacles,
        slot_pose,
        free_pose,
    }
}

fn perpendicular(spec: &GenSpec, rng: &mut ProjectRng) -> Layout {
    let (w, h) = spec.world;
    let fp = spec.vehicle.footprint;
    let (car_len, car_wid) = (fp.length + 0.6, fp.width - 0.2);
    let opening = uniform(rng, spec.slot_size.0, spec.slot_size.1);
    let xc = uniform(rng, 0.35 * w, 0.65 * w);
    let row_y = 0.4 + 0.1 + 0.5 * car_len;

    let mut obstacles = vec![curb(0.0, 0.0, w, 0.3)];
    let park = |c: Point2| car(c, car_len, car_wid, 0.5 * PI);
    obstacles.push(park(Point2::new(xc - 0.5 * opening - 0.5 * car_wid, row_y)));
    obstacles.push(park(Point2::new(xc + 0.5 * opening + 0.5 * car_wid, row_y)));
    let pitch = car_wid + 0.6;
    obstacles.extend(car_row(
        rng,
        xc - 0.5 * opening - 1.5 * car_wid - 0.6,
        -1.0,
        row_y,
        pitch - 0.6,
        park,
        w,
    ));
    obstacles.extend(car_row(
        rng,
        xc + 0.5 * opening + 1.5 * car_wid + 0.6,
        1.0,
        row_y,
        pitch - 0.6,
        park,
        w,
    ));
    obstacles.push(curb(0.0, h - 0.3, w, h));
    let far_x = uniform(rng, 1.0, 3.0);
    obstacles.extend(car_row(rng, far_x, 1.0, h - row_y, pitch - 0.6, park, w));

    let room = (0.5 * (opening - fp.width) - 0.1).max(0.0);
    let pj = spec.start_jitter.0.min(room);
    let nose_out = rng.random_bool(0.7);
    let (heading, axle_y) = if nose_out {
        (0.5 * PI, 0.6 + fp.rear_overhang + uniform(rng, 0.0, 0.4))
    } else {
        (-0.5 * PI, 0.6 + fp.length - fp.rear_overhang + uniform(rng, 0.0, 0.4))
    };
    let slot_pose = Pose::new(
        xc + uniform(rng, -pj, pj),
        axle_y,
        heading + uniform(rng, -spec.start_jitter.1, spec.start_jitter.1),
    );
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let free_x = (xc + side * uniform(rng, 4.0, 6.5)).clamp(fp.length, w - fp.length);
    let free_pose = Pose::new(
        free_x,
        uniform(rng, 8.5, 10.5),
        if side > 0.0 { 0.0 } else { PI } + uniform(rng, -0.2, 0.2),
    );
    Layout {
        obstacles,
        slot_pose,
        free_pose,
    }
}

fn diagonal(spec: &GenSpec, rng: &mut ProjectRng) -> Layout {
    let (w, h) = spec.world;
    let fp = spec.vehicle.footprint;
    let (car_len, car_wid) = (fp.length + 0.6, fp.width - 0.2);
    let angle = uniform(rng, PI / 4.0, PI / 3.0);
    let opening = uniform(rng, spec.slot_size.0, spec.slot_size.1);
    let (sa, ca) = angle.sin_cos();
    let row_y = 0.5 + 0.5 * (car_len * sa + car_wid * ca);
    let pitch_x = (opening + car_wid) / sa;
    let xs = uniform(rng, 0.35 * w, 0.55 * w);

    let mut obstacles = vec![curb(0.0, 0.0, w, 0.3)];
    for k in 1..8 {
        for dir in [-1.0, 1.0] {
            if k > 1 && rng.random_bool(0.2) {
                continue;
            }
            let c = Point2::new(xs + dir * k as f64 * pitch_x, row_y);
            obstacles.push(car(c, car_len, car_wid, angle));
        }
    }

    let dir = Point2::new(ca, sa);
    let along = uniform(rng, -0.3, 0.2);
    let centre = Point2::new(xs, row_y) + dir * along;
    let axle = centre - dir * (0.5 * fp.length - fp.rear_overhang);
    let slot_pose = Pose::new(
        axle.x,
        axle.y,
        angle + uniform(rng, -spec.start_jitter.1, spec.start_jitter.1),
    );
    let free_pose = Pose::new(
        (xs + uniform(rng, 4.0, 7.0)).min(w - fp.length),
        uniform(rng, 9.0, 11.0),
        uniform(rng, -0.2, 0.2),
    );
    // opposite side: a plain row of perpendicular cars
    let park = |c: Point2| car(c, car_len, car_wid, 0.5 * PI);
    obstacles.push(curb(0.0, h - 0.3, w, h));
    let far_x = uniform(rng, 1.0, 3.0);
    obstacles.extend(car_row(rng, far_x, 1.0, h - 0.4 - 0.5 * car_len, car_wid, park, w));
    Layout {
        obstacles,
        slot_pose,
        free_pose,
    }
}

fn empty(spec: &GenSpec, rng: &mut ProjectRng) -> Layout {
    let (w, h) = spec.world;
    let margin = 4.0;
    let slot_pose = Pose::new(
        uniform(rng, margin, w - margin),
        uniform(rng, margin, h - margin),
        uniform(rng, -PI, PI),
    );
    let free_pose = loop {
        let p = Pose::new(
            uniform(rng, margin, w - margin),
            uniform(rng, margin, h - margin),
            uniform(rng, -PI, PI),
        );
        let d = p.position.distance(slot_pose.position);
        if (4.0..=10.0).contains(&d) {
            break p;
        }
    };
    Layout {
        obstacles: vec![],
        slot_pose,
        free_pose,
    }
}

/// Drops free-standing pillars away from the start and goal bodies.
fn add_pillars(spec: &GenSpec, rng: &mut ProjectRng, obstacles: &mut Vec<Obstacle>, keep_clear: &[Pose]) {
    let (lo, hi) = spec.clutter;
    let count = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let (w, h) = spec.world;
    let bodies: Vec<ConvexPolygon> = keep_clear.iter().map(|p| body(&spec.vehicle, p)).collect();
    let mut placed = 0;
    for _ in 0..count * 20 {
        if placed == count {
            break;
        }
        let c = Point2::new(uniform(rng, 1.0, w - 1.0), uniform(rng, 0.55 * h, h - 5.5));
        let side = uniform(rng, 0.4, 0.9);
        let poly =
            ConvexPolygon::oriented_rectangle(c, side, side, uniform(rng, 0.0, PI / 2.0)).expect("positive pillar");
        let clear = bodies.iter().all(|b| min_clearance(b, [&poly]).is_ok_and(|d| d >= 1.5));
        let overlaps = obstacles
            .iter()
            .any(|o| crate::geometry::polygons_intersect(&o.polygon, &poly));
        if clear && !overlaps {
            obstacles.push(Obstacle {
                class: ObstacleClass::Pillar,
                polygon: poly,
            });
            placed += 1;
        }
    }
}
