//! Planar primitives, vehicle footprints, convex collision tests and
//! occupancy rasterization.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used by inclusive point/polygon predicates.
const INSIDE_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon is not strictly convex with counterclockwise winding")]
    NotConvex,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("polygons are in collision")]
    Collision,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }

    /// Rotates the vector counterclockwise by `angle` radians.
    pub fn rotate(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut a = angle - two_pi * ((angle + PI) / two_pi).floor();
    // floor() can leave a value a hair above the upper edge after rounding
    if a >= PI {
        a -= two_pi;
    }
    if a < -PI {
        a = -PI;
    }
    a
}

/// Rear-axle position plus heading.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub position: Point2,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            position: Point2::new(x, y),
            heading: normalize_angle(heading),
        }
    }

    pub fn x(&self) -> f64 {
        self.position.x
    }

    pub fn y(&self) -> f64 {
        self.position.y
    }

    pub fn direction(&self) -> Point2 {
        let (s, c) = self.heading.sin_cos();
        Point2::new(c, s)
    }
}

/// Axis-aligned world rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    pub fn contains_polygon(&self, poly: &ConvexPolygon) -> bool {
        poly.vertices().iter().all(|&v| self.contains(v))
    }
}

/// Convex polygon with counterclockwise vertex order.
///
/// Deserialization does not re-check convexity; files are checked by the
/// scenario validator, which reports non-convex obstacles by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        if !vertices.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let poly = Self { vertices };
        if !poly.is_strictly_convex_ccw() {
            return Err(GeometryError::NotConvex);
        }
        Ok(poly)
    }

    /// Builds a polygon without validation. Callers guarantee the invariants.
    pub(crate) fn from_vertices_unchecked(vertices: Vec<Point2>) -> Self {
        Self { vertices }
    }

    /// Axis-aligned rectangle `[min_x, max_x] × [min_y, max_y]`.
    pub fn rectangle(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self, GeometryError> {
        Self::new(vec![
            Point2::new(min_x, min_y),
            Point2::new(max_x, min_y),
            Point2::new(max_x, max_y),
            Point2::new(min_x, max_y),
        ])
    }

    /// Rectangle of the given size centred at `center`, rotated by `angle`.
    pub fn oriented_rectangle(center: Point2, length: f64, width: f64, angle: f64) -> Result<Self, GeometryError> {
        let (hl, hw) = (0.5 * length, 0.5 * width);
        let corners = [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)];
        Self::new(
            corners
                .iter()
                .map(|&(x, y)| center + Point2::new(x, y).rotate(angle))
                .collect(),
        )
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// True when every turn is a strict left turn and the winding is
    /// counterclockwise with a single loop.
    pub fn is_strictly_convex_ccw(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let mut angle_sum = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let c = self.vertices[(i + 2) % n];
            let e1 = b - a;
            let e2 = c - b;
            if e1.norm() == 0.0 || e1.cross(e2) <= 0.0 {
                return false;
            }
            angle_sum += e1.cross(e2).atan2(e1.dot(e2));
        }
        // exterior angles of a simple convex loop sum to exactly 2π
        (angle_sum - 2.0 * PI).abs() < 1e-6
    }

    pub fn area(&self) -> f64 {
        let twice: f64 = self.edges().map(|(a, b)| a.cross(b)).sum();
        0.5 * twice
    }

    /// Inclusive containment: boundary points count as inside.
    pub fn contains(&self, p: Point2) -> bool {
        self.edges().all(|(a, b)| (b - a).cross(p - a) >= -INSIDE_EPS)
    }

    pub fn aabb(&self) -> Aabb {
        let mut bb = Aabb {
            min: Point2::new(f64::INFINITY, f64::INFINITY),
            max: Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        };
        for v in &self.vertices {
            bb.min.x = bb.min.x.min(v.x);
            bb.min.y = bb.min.y.min(v.y);
            bb.max.x = bb.max.x.max(v.x);
            bb.max.y = bb.max.y.max(v.y);
        }
        bb
    }

    /// Applies a rigid motion: rotate about the origin, then translate.
    pub fn transformed(&self, rotation: f64, translation: Point2) -> Self {
        Self::from_vertices_unchecked(
            self.vertices
                .iter()
                .map(|&v| v.rotate(rotation) + translation)
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point2,
    pub max: Point2,
}

impl Aabb {
    pub fn overlaps(&self, other: &Aabb) -> bool {
        self.min.x <= other.max.x && other.min.x <= self.max.x && self.min.y <= other.max.y && other.min.y <= self.max.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleFootprint {
    pub length: f64,
    pub width: f64,
    /// Distance from the rear axle to the rear bumper.
    pub rear_overhang: f64,
}

impl VehicleFootprint {
    pub fn is_valid(&self) -> bool {
        self.length > 0.0 && self.width > 0.0 && self.rear_overhang >= 0.0 && self.rear_overhang < self.length
    }
}

impl Default for VehicleFootprint {
    fn default() -> Self {
        Self {
            length: 4.0,
            width: 2.0,
            rear_overhang: 1.0,
        }
    }
}

/// Body rectangle of the vehicle with its rear axle at `pose`.
pub fn footprint_polygon(footprint: &VehicleFootprint, pose: &Pose) -> ConvexPolygon {
    let rear = -footprint.rear_overhang;
    let front = footprint.length - footprint.rear_overhang;
    let hw = 0.5 * footprint.width;
    let (s, c) = pose.heading.sin_cos();
    let p = pose.position;
    let corner = |lx: f64, ly: f64| Point2::new(p.x + c * lx - s * ly, p.y + s * lx + c * ly);
    ConvexPolygon::from_vertices_unchecked(vec![
        corner(rear, -hw),
        corner(front, -hw),
        corner(front, hw),
        corner(rear, hw),
    ])
}

fn project(poly: &ConvexPolygon, axis: Point2) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in poly.vertices() {
        let d = v.dot(axis);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

fn separated_along_edges(a: &ConvexPolygon, b: &ConvexPolygon) -> bool {
    a.edges().any(|(p, q)| {
        let e = q - p;
        let axis = Point2::new(e.y, -e.x);
        let (a_lo, a_hi) = project(a, axis);
        let (b_lo, b_hi) = project(b, axis);
        a_hi < b_lo || b_hi < a_lo
    })
}

/// Separating-axis overlap test. Touching boundaries count as overlap.
pub fn polygons_intersect(a: &ConvexPolygon, b: &ConvexPolygon) -> bool {
    !(separated_along_edges(a, b) || separated_along_edges(b, a))
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Euclidean distance between two disjoint convex polygons.
fn polygon_distance(a: &ConvexPolygon, b: &ConvexPolygon) -> f64 {
    let mut best = f64::INFINITY;
    for &v in a.vertices() {
        for (p, q) in b.edges() {
            best = best.min(point_segment_distance(v, p, q));
        }
    }
    for &v in b.vertices() {
        for (p, q) in a.edges() {
            best = best.min(point_segment_distance(v, p, q));
        }
    }
    best
}

/// Smallest distance from `poly` to any obstacle; `+∞` with no obstacles.
pub fn min_clearance<'a, I>(poly: &ConvexPolygon, obstacles: I) -> Result<f64, GeometryError>
where
    I: IntoIterator<Item = &'a ConvexPolygon>,
{
    let mut best = f64::INFINITY;
    for obstacle in obstacles {
        if polygons_intersect(poly, obstacle) {
            return Err(GeometryError::Collision);
        }
        best = best.min(polygon_distance(poly, obstacle));
    }
    Ok(best)
}

/// Placement of a regular grid in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Point2,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn cell_center(&self, ix: usize, iy: usize) -> Point2 {
        Point2::new(
            self.origin.x + (ix as f64 + 0.5) * self.resolution,
            self.origin.y + (iy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    /// Inclusive index range of cells whose centres can fall inside `bb`.
    fn cell_range(&self, bb: &Aabb) -> Option<(usize, usize, usize, usize)> {
        let to_index = |v: f64, o: f64| (v - o) / self.resolution - 0.5;
        let x0 = to_index(bb.min.x, self.origin.x).ceil().max(0.0);
        let y0 = to_index(bb.min.y, self.origin.y).ceil().max(0.0);
        let x1 = to_index(bb.max.x, self.origin.x).floor().min(self.width as f64 - 1.0);
        let y1 = to_index(bb.max.y, self.origin.y).floor().min(self.height as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            return None;
        }
        Some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
    }
}

/// One binary occupancy layer, row-major with `iy * width + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyLayer {
    pub grid: GridSpec,
    pub cells: Vec<bool>,
}

impl OccupancyLayer {
    pub fn empty(grid: GridSpec) -> Self {
        Self {
            grid,
            cells: vec![false; grid.cell_count()],
        }
    }

    pub fn get(&self, ix: usize, iy: usize) -> bool {
        self.cells[iy * self.grid.width + ix]
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Marks every cell whose centre lies inside or on `poly`.
    pub fn fill_polygon(&mut self, poly: &ConvexPolygon) {
        let grid = self.grid;
        let Some((x0, y0, x1, y1)) = grid.cell_range(&poly.aabb()) else {
            return;
        };
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                if poly.contains(grid.cell_center(ix, iy)) {
                    self.cells[iy * grid.width + ix] = true;
                }
            }
        }
    }
}

/// Occupancy layers, one per object class.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub grid: GridSpec,
    pub layers: Vec<OccupancyLayer>,
}

/// Cell-centre rasterization of a polygon set onto one layer.
pub fn rasterize(polygons: &[ConvexPolygon], grid: GridSpec) -> OccupancyLayer {
    assert!(grid.resolution > 0.0, "grid resolution must be positive");
    let mut layer = OccupancyLayer::empty(grid);
    for poly in polygons {
        layer.fill_polygon(poly);
    }
    layer
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x: f64, y: f64, side: f64) -> ConvexPolygon {
        ConvexPolygon::rectangle(x, y, x + side, y + side).unwrap()
    }

    fn assert_same_corners(poly: &ConvexPolygon, expected: &[(f64, f64)]) {
        for &(x, y) in expected {
            assert!(
                poly.vertices()
                    .iter()
                    .any(|v| (v.x - x).abs() < 1e-12 && (v.y - y).abs() < 1e-12),
                "missing corner ({x}, {y}) in {poly:?}"
            );
        }
    }

    #[test]
    fn footprint_axis_aligned() {
        let fp = VehicleFootprint::default();
        let poly = footprint_polygon(&fp, &Pose::new(0.0, 0.0, 0.0));
        assert_eq!(
            poly.vertices(),
            &[
                Point2::new(-1.0, -1.0),
                Point2::new(3.0, -1.0),
                Point2::new(3.0, 1.0),
                Point2::new(-1.0, 1.0)
            ]
        );
        assert!(poly.is_strictly_convex_ccw());
    }

    #[test]
    fn footprint_quarter_turn() {
        let fp = VehicleFootprint::default();
        let poly = footprint_polygon(&fp, &Pose::new(0.0, 0.0, PI / 2.0));
        assert_same_corners(&poly, &[(1.0, -1.0), (1.0, 3.0), (-1.0, 3.0), (-1.0, -1.0)]);
    }

    #[test]
    fn footprint_eighth_turn_translated() {
        let fp = VehicleFootprint::default();
        let poly = footprint_polygon(&fp, &Pose::new(2.0, 1.0, PI / 4.0));
        // rotate (-1,-1),(3,-1),(3,1),(-1,1) by 45° by hand, then shift by (2,1)
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [
            (2.0 + h * (-1.0 + 1.0), 1.0 + h * (-1.0 - 1.0)),
            (2.0 + h * (3.0 + 1.0), 1.0 + h * (3.0 - 1.0)),
            (2.0 + h * (3.0 - 1.0), 1.0 + h * (3.0 + 1.0)),
            (2.0 + h * (-1.0 - 1.0), 1.0 + h * (-1.0 + 1.0)),
        ];
        for (v, (x, y)) in poly.vertices().iter().zip(expected) {
            assert!((v.x - x).abs() < 1e-12 && (v.y - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sat_examples() {
        let unit = square(0.0, 0.0, 1.0);
        assert!(polygons_intersect(&unit, &square(0.5, 0.5, 1.0)));
        assert!(!polygons_intersect(&unit, &square(3.0, 0.0, 1.0)));
        assert!(polygons_intersect(&unit, &square(1.0, 0.0, 1.0)));
    }

    #[test]
    fn rasterize_unit_square() {
        let grid = GridSpec {
            origin: Point2::new(0.0, 0.0),
            resolution: 0.5,
            width: 4,
            height: 4,
        };
        let layer = rasterize(&[square(0.0, 0.0, 1.0)], grid);
        // brute-force oracle: enumerate all 16 centres
        let mut expected = Vec::new();
        for iy in 0..4 {
            for ix in 0..4 {
                let c = Point2::new(0.25 + 0.5 * ix as f64, 0.25 + 0.5 * iy as f64);
                if (0.0..=1.0).contains(&c.x) && (0.0..=1.0).contains(&c.y) {
                    expected.push((ix, iy));
                }
            }
        }
        assert_eq!(expected, vec![(0, 0), (1, 0), (0, 1), (1, 1)]);
        for iy in 0..4 {
            for ix in 0..4 {
                assert_eq!(layer.get(ix, iy), expected.contains(&(ix, iy)));
            }
        }
        assert_eq!(layer.occupied_count(), 4);
    }

    #[test]
    fn rasterize_empty_and_outside() {
        let grid = GridSpec {
            origin: Point2::new(0.0, 0.0),
            resolution: 0.5,
            width: 4,
            height: 4,
        };
        assert_eq!(rasterize(&[], grid).occupied_count(), 0);
        assert_eq!(rasterize(&[square(10.0, 10.0, 1.0)], grid).occupied_count(), 0);
        assert_eq!(rasterize(&[square(-5.0, -5.0, 1.0)], grid).occupied_count(), 0);
    }

    #[test]
    fn clearance_examples() {
        let unit = square(0.0, 0.0, 1.0);
        assert_eq!(min_clearance(&unit, [&square(2.0, 0.0, 1.0)]).unwrap(), 1.0);
        let d = min_clearance(&unit, [&square(2.0, 2.0, 0.5)]).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(min_clearance(&unit, []).unwrap(), f64::INFINITY);
        assert_eq!(
            min_clearance(&unit, [&square(0.5, 0.5, 1.0)]),
            Err(GeometryError::Collision)
        );
    }

    #[test]
    fn rejects_bad_polygons() {
        assert_eq!(
            ConvexPolygon::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)]),
            Err(GeometryError::TooFewVertices(2))
        );
        // clockwise square
        let cw = vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
        ];
        assert_eq!(ConvexPolygon::new(cw), Err(GeometryError::NotConvex));
        // dart shape
        let dart = vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 1.0),
            Point2::new(0.0, 2.0),
            Point2::new(0.5, 1.0),
        ];
        assert_eq!(ConvexPolygon::new(dart), Err(GeometryError::NotConvex));
    }

    #[test]
    fn angle_normalization_range() {
        for a in [-10.0, -PI, PI, 3.0 * PI, 0.0, 7.5, -PI - 1e-15] {
            let n = normalize_angle(a);
            assert!((-PI..PI).contains(&n), "{a} -> {n}");
        }
        assert_eq!(normalize_angle(PI), -PI);
    }
}
