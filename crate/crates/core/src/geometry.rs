//! Frenet-space road genomes and their planar reconstruction.
//!
//! A road is a sequence of `(curvature, cumulative arc length)` pairs. Between
//! two consecutive arc-length samples the curvature is held constant, so the
//! centerline is a chain of straight pieces and circular arcs that can be
//! integrated in closed form.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BLOCK_SIZE: usize = 50;
pub const DEFAULT_STEP: f64 = 1.0;
pub const DEFAULT_LANE_WIDTH: f64 = 4.0;
pub const DEFAULT_MAP_SIZE: f64 = 200.0;
/// Largest admissible |curvature| (1/m) of a smoothed road.
pub const CURVATURE_LIMIT: f64 = 0.1;

/// Below this |curvature| a segment is integrated as a straight chord.
const STRAIGHT_EPS: f64 = 1e-9;

/// The GA chromosome: per-point curvature and cumulative arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGenome", into = "RawGenome")]
pub struct RoadGenome {
    curvatures: Vec<f64>,
    arc_lengths: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawGenome {
    curvatures: Vec<f64>,
    arc_lengths: Vec<f64>,
}

impl TryFrom<RawGenome> for RoadGenome {
    type Error = Error;

    fn try_from(raw: RawGenome) -> Result<Self> {
        RoadGenome::new(raw.curvatures, raw.arc_lengths)
    }
}

impl From<RoadGenome> for RawGenome {
    fn from(g: RoadGenome) -> Self {
        RawGenome { curvatures: g.curvatures, arc_lengths: g.arc_lengths }
    }
}

impl RoadGenome {
    pub fn new(curvatures: Vec<f64>, arc_lengths: Vec<f64>) -> Result<Self> {
        if curvatures.is_empty() {
            return Err(Error::InvalidGenome("genome has no points".into()));
        }
        if curvatures.len() != arc_lengths.len() {
            return Err(Error::LengthMismatch {
                expected: curvatures.len(),
                actual: arc_lengths.len(),
            });
        }
        if let Some(i) = curvatures.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidGenome(format!("curvature {i} is not finite")));
        }
        let mut prev = 0.0;
        for (i, &s) in arc_lengths.iter().enumerate() {
            if !s.is_finite() || s <= prev {
                return Err(Error::InvalidGenome(format!(
                    "arc length {i} ({s}) does not strictly increase from {prev}"
                )));
            }
            prev = s;
        }
        Ok(Self { curvatures, arc_lengths })
    }

    /// Builds a genome on the uniform grid `s_i = step * (i + 1)`.
    pub fn from_curvatures(curvatures: Vec<f64>, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidGenome(format!("step {step} must be positive")));
        }
        let arc_lengths = uniform_grid(curvatures.len(), step);
        Self::new(curvatures, arc_lengths)
    }

    pub fn straight(len: usize, step: f64) -> Result<Self> {
        Self::from_curvatures(vec![0.0; len], step)
    }

    pub fn len(&self) -> usize {
        self.curvatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curvatures.is_empty()
    }

    pub fn curvatures(&self) -> &[f64] {
        &self.curvatures
    }

    pub fn arc_lengths(&self) -> &[f64] {
        &self.arc_lengths
    }

    pub fn total_length(&self) -> f64 {
        *self.arc_lengths.last().expect("genome is never empty")
    }

    /// Arc-length increments `Δs_i = s_i - s_{i-1}` with `s_{-1} = 0`.
    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        let prev = std::iter::once(0.0).chain(self.arc_lengths.iter().copied());
        self.arc_lengths.iter().zip(prev).map(|(s, p)| s - p)
    }

    /// Same arc-length grid, new curvature profile.
    pub fn with_curvatures(&self, curvatures: Vec<f64>) -> Result<Self> {
        Self::new(curvatures, self.arc_lengths.clone())
    }

    pub fn negated(&self) -> Self {
        Self {
            curvatures: self.curvatures.iter().map(|c| -c).collect(),
            arc_lengths: self.arc_lengths.clone(),
        }
    }
}

pub fn uniform_grid(len: usize, step: f64) -> Vec<f64> {
    (1..=len).map(|i| step * i as f64).collect()
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: normalize_angle(heading) }
    }

    pub fn tangent(&self) -> [f64; 2] {
        [self.heading.cos(), self.heading.sin()]
    }

    pub fn normal(&self) -> [f64; 2] {
        [-self.heading.sin(), self.heading.cos()]
    }

    /// Advances along a constant-curvature arc of length `ds`.
    pub fn advance(&self, curvature: f64, ds: f64) -> Pose {
        let (x, y, h) = advance_raw(self.x, self.y, self.heading, curvature, ds);
        Pose::new(x, y, h)
    }
}

fn advance_raw(x: f64, y: f64, heading: f64, curvature: f64, ds: f64) -> (f64, f64, f64) {
    let end_heading = heading + curvature * ds;
    if curvature.abs() < STRAIGHT_EPS {
        (x + ds * heading.cos(), y + ds * heading.sin(), end_heading)
    } else {
        let r = 1.0 / curvature;
        (
            x + r * (end_heading.sin() - heading.sin()),
            y + r * (heading.cos() - end_heading.cos()),
            end_heading,
        )
    }
}

/// Reconstructed centerline: one pose per genome point plus the start pose.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianRoad {
    pub poses: Vec<Pose>,
    /// Cumulative arc length at each pose (`0` at the start pose).
    pub stations: Vec<f64>,
    /// Curvature of the segment leaving each pose (one fewer than `poses`).
    pub curvatures: Vec<f64>,
    pub lane_width: f64,
}

/// Closest centerline point to a query position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the closest point; outside `[0, length]` when the query
    /// lies past an end, where the road is extended straight.
    pub arc: f64,
    /// Signed distance, positive to the left of the direction of travel.
    pub offset: f64,
    pub point: Pose,
}

impl CartesianRoad {
    pub fn length(&self) -> f64 {
        *self.stations.last().expect("road has at least one segment")
    }

    pub fn segments(&self) -> usize {
        self.curvatures.len()
    }

    fn segment_at(&self, arc: f64) -> usize {
        let n = self.segments();
        match self.stations[1..].iter().position(|&s| arc <= s) {
            Some(k) => k,
            None => n - 1,
        }
    }

    /// Curvature of the road at arc length `arc`; zero outside the road.
    pub fn curvature_at(&self, arc: f64) -> f64 {
        if arc < 0.0 || arc > self.length() {
            return 0.0;
        }
        self.curvatures[self.segment_at(arc)]
    }

    /// Exact centerline pose at arc length `arc`. Beyond either end the road is
    /// extended straight along its terminal heading.
    pub fn point_at(&self, arc: f64) -> Pose {
        if arc <= 0.0 {
            return self.poses[0].advance(0.0, arc);
        }
        let len = self.length();
        if arc >= len {
            return self.poses[self.poses.len() - 1].advance(0.0, arc - len);
        }
        let k = self.segment_at(arc);
        self.poses[k].advance(self.curvatures[k], arc - self.stations[k])
    }

    /// Nearest point on the exact (arc-based) centerline, extended straight
    /// beyond both ends.
    pub fn project(&self, x: f64, y: f64) -> Projection {
        let mut best: Option<(f64, f64, Pose)> = None;
        for k in 0..self.segments() {
            let (local, q) = closest_on_segment(&self.poses[k], self.curvatures[k], self.stations[k + 1] - self.stations[k], x, y);
            let d2 = (x - q.x).powi(2) + (y - q.y).powi(2);
            if best.as_ref().is_none_or(|b| d2 < b.0) {
                best = Some((d2, self.stations[k] + local, q));
            }
        }
        let (mut d2, mut arc, mut q) = best.expect("road has at least one segment");
        // Beyond either end, measure against the straight extension.
        let ends = [(0.0, self.poses[0], -1.0), (self.length(), self.poses[self.poses.len() - 1], 1.0)];
        for (station, end, dir) in ends {
            if arc == station {
                let [tx, ty] = end.tangent();
                let along = (x - end.x) * tx + (y - end.y) * ty;
                if along * dir > 0.0 {
                    q = end.advance(0.0, along);
                    arc = station + along;
                    d2 = (x - q.x).powi(2) + (y - q.y).powi(2);
                }
            }
        }
        let [tx, ty] = q.tangent();
        let cross = tx * (y - q.y) - ty * (x - q.x);
        let dist = d2.sqrt();
        Projection { arc, offset: if cross < 0.0 { -dist } else { dist }, point: q }
    }

    /// Centerline positions as `[x, y]` pairs.
    pub fn points(&self) -> Vec<[f64; 2]> {
        self.poses.iter().map(|p| [p.x, p.y]).collect()
    }
}

/// Returns `(arc offset within the segment, closest pose)`.
fn closest_on_segment(start: &Pose, curvature: f64, ds: f64, x: f64, y: f64) -> (f64, Pose) {
    if curvature.abs() < STRAIGHT_EPS {
        let [tx, ty] = start.tangent();
        let t = ((x - start.x) * tx + (y - start.y) * ty).clamp(0.0, ds);
        return (t, start.advance(curvature, t));
    }
    let radius = 1.0 / curvature.abs();
    let [nx, ny] = start.normal();
    let (cx, cy) = (start.x + nx / curvature, start.y + ny / curvature);
    // Angle from the start radius to the query radius, measured in the direction of travel.
    let (ax, ay) = (start.x - cx, start.y - cy);
    let (ux, uy) = (x - cx, y - cy);
    let ccw = (ax * uy - ay * ux).atan2(ax * ux + ay * uy);
    let travel = (ccw * curvature.signum()).rem_euclid(2.0 * PI);
    let sweep = curvature.abs() * ds;
    let local = if travel <= sweep {
        travel * radius
    } else {
        // Outside the swept angle: the nearer endpoint wins.
        let end = start.advance(curvature, ds);
        let d_start = (x - start.x).powi(2) + (y - start.y).powi(2);
        let d_end = (x - end.x).powi(2) + (y - end.y).powi(2);
        if d_start <= d_end {
            0.0
        } else {
            ds
        }
    };
    (local, start.advance(curvature, local))
}

/// Integrates the piecewise-constant curvature profile from `start`.
pub fn reconstruct(genome: &RoadGenome, start: Pose) -> CartesianRoad {
    reconstruct_with_lane_width(genome, start, DEFAULT_LANE_WIDTH)
}

pub fn reconstruct_with_lane_width(genome: &RoadGenome, start: Pose, lane_width: f64) -> CartesianRoad {
    let n = genome.len();
    let mut poses = Vec::with_capacity(n + 1);
    let mut stations = Vec::with_capacity(n + 1);
    poses.push(start);
    stations.push(0.0);
    let (mut x, mut y, mut h) = (start.x, start.y, start.heading);
    for ((&c, ds), &s) in genome.curvatures().iter().zip(genome.increments()).zip(genome.arc_lengths()) {
        (x, y, h) = advance_raw(x, y, h, c, ds);
        poses.push(Pose::new(x, y, h));
        stations.push(s);
    }
    CartesianRoad { poses, stations, curvatures: genome.curvatures().to_vec(), lane_width }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Violation {
    SelfIntersecting,
    CurvatureOutOfRange,
    OutOfMapBounds,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidityReport {
    pub valid: bool,
    pub violations: BTreeSet<Violation>,
}

impl ValidityReport {
    fn from_violations(violations: BTreeSet<Violation>) -> Self {
        Self { valid: violations.is_empty(), violations }
    }
}

/// Checks the curvature range, the map extent and self-intersection.
pub fn validate(road: &CartesianRoad, genome: &RoadGenome, map_size: f64) -> ValidityReport {
    let mut violations = BTreeSet::new();
    if genome.curvatures().iter().any(|c| c.abs() > CURVATURE_LIMIT) {
        violations.insert(Violation::CurvatureOutOfRange);
    }
    if exceeds_map(road, map_size) {
        violations.insert(Violation::OutOfMapBounds);
    }
    if self_intersects(&road.points()) {
        violations.insert(Violation::SelfIntersecting);
    }
    ValidityReport::from_violations(violations)
}

fn exceeds_map(road: &CartesianRoad, map_size: f64) -> bool {
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &road.poses {
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    max_x - min_x > map_size || max_y - min_y > map_size
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// `c` lies within the bounding box of `a`-`b` (callers ensure collinearity).
fn within_box(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    c[0] >= a[0].min(b[0]) && c[0] <= a[0].max(b[0]) && c[1] >= a[1].min(b[1]) && c[1] <= a[1].max(b[1])
}

/// Closed-segment intersection, touching and collinear overlap included.
pub fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && within_box(q1, q2, p1))
        || (d2 == 0.0 && within_box(q1, q2, p2))
        || (d3 == 0.0 && within_box(p1, p2, q1))
        || (d4 == 0.0 && within_box(p1, p2, q2))
}

/// Polyline self-intersection over non-adjacent chords. Chords are swept in
/// order of their minimum x so only x-overlapping pairs are tested exactly.
pub fn self_intersects(points: &[[f64; 2]]) -> bool {
    if points.len() < 4 {
        return false;
    }
    let chords = points.len() - 1;
    let bounds: Vec<[f64; 4]> = (0..chords)
        .map(|i| {
            let (a, b) = (points[i], points[i + 1]);
            [a[0].min(b[0]), a[0].max(b[0]), a[1].min(b[1]), a[1].max(b[1])]
        })
        .collect();
    let mut order: Vec<usize> = (0..chords).collect();
    order.sort_by(|&i, &j| bounds[i][0].total_cmp(&bounds[j][0]).then(i.cmp(&j)));
    for (rank, &i) in order.iter().enumerate() {
        for &j in &order[rank + 1..] {
            if bounds[j][0] > bounds[i][1] {
                break;
            }
            if i.abs_diff(j) < 2 || bounds[j][2] > bounds[i][3] || bounds[j][3] < bounds[i][2] {
                continue;
            }
            if segments_intersect(points[i], points[i + 1], points[j], points[j + 1]) {
                return true;
            }
        }
    }
    false
}

/// L2 distance between curvature vectors.
pub fn genome_distance(a: &RoadGenome, b: &RoadGenome) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), actual: b.len() });
    }
    Ok(curvature_distance(a.curvatures(), b.curvatures()))
}

pub(crate) fn curvature_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
