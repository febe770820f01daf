//! Desk-scale lane-keeping simulator used as the ground-truth oracle.
//!
//! The agent is a pure-pursuit controller on a kinematic bicycle. Speed tracks
//! `min(v_max, sqrt(a_lat / |κ|))` at the lookahead point under bounded
//! acceleration and braking; the realizable path curvature is capped by the
//! steering lock and by the tyre grip at the current speed. Entering a sharp
//! curve too fast therefore pushes the car wide of the lane.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::init_random;
use crate::geometry::{reconstruct_with_lane_width, validate, CartesianRoad, Pose, RoadGenome};
use crate::spline::smooth;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// m/s (70 km/h).
    pub v_max: f64,
    /// Pure-pursuit lookahead along the centerline, m.
    pub lookahead: f64,
    /// Lateral acceleration the speed planner aims for, m/s².
    pub max_lateral_accel: f64,
    /// s.
    pub timestep: f64,
    pub wheelbase: f64,
    pub car_width: f64,
    /// Fraction of the car width allowed outside the lane.
    pub tolerance: f64,
    /// Steering lock, rad.
    pub max_steer: f64,
    /// Steering slew rate, rad/s.
    pub steer_rate: f64,
    /// Lateral acceleration the tyres can deliver, m/s².
    pub grip_accel: f64,
    pub max_accel: f64,
    pub max_decel: f64,
    pub max_steps: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            v_max: 70.0 / 3.6,
            lookahead: 6.0,
            max_lateral_accel: 4.0,
            timestep: 0.1,
            wheelbase: 2.5,
            car_width: 2.0,
            tolerance: 0.3,
            max_steer: 0.6,
            steer_rate: 1.5,
            grip_accel: 8.0,
            max_accel: 2.0,
            max_decel: 6.0,
            max_steps: 10_000,
        }
    }
}

impl AgentConfig {
    pub fn check(&self) -> Result<()> {
        let positive = [
            ("v_max", self.v_max),
            ("lookahead", self.lookahead),
            ("max_lateral_accel", self.max_lateral_accel),
            ("timestep", self.timestep),
            ("wheelbase", self.wheelbase),
            ("car_width", self.car_width),
            ("max_steer", self.max_steer),
            ("steer_rate", self.steer_rate),
            ("grip_accel", self.grip_accel),
            ("max_accel", self.max_accel),
            ("max_decel", self.max_decel),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("simulator.{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.tolerance) {
            return Err(Error::Config(format!("simulator.tolerance must lie in [0, 1], got {}", self.tolerance)));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("simulator.max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Pose of the vehicle center plus speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OobEvent {
    pub trace_index: usize,
    pub lateral_offset: f64,
    pub arc_position: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub states: Vec<VehicleState>,
    pub oob_events: Vec<OobEvent>,
    pub outcome: Outcome,
    /// Simulated seconds, `states.len() * timestep`.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRoad {
    pub genome: RoadGenome,
    pub labels: Vec<bool>,
}

impl LabeledRoad {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Largest |lateral offset| that keeps the car inside the lane.
pub fn oob_threshold(lane_width: f64, car_width: f64, tolerance: f64) -> f64 {
    lane_width / 2.0 - car_width / 2.0 + tolerance * car_width
}

/// Signed lateral offset of the vehicle center when it is out of bounds.
pub fn detect_oob(state: &VehicleState, road: &CartesianRoad, tolerance: f64, car_width: f64) -> Option<f64> {
    let offset = road.project(state.pose.x, state.pose.y).offset;
    is_oob(offset, road.lane_width, car_width, tolerance).then_some(offset)
}

fn is_oob(offset: f64, lane_width: f64, car_width: f64, tolerance: f64) -> bool {
    offset.abs() > oob_threshold(lane_width, car_width, tolerance)
}

/// Kinematic bicycle referenced at the rear axle.
struct Vehicle {
    x: f64,
    y: f64,
    heading: f64,
    speed: f64,
    steer: f64,
}

impl Vehicle {
    fn center(&self, wheelbase: f64) -> (f64, f64) {
        let half = 0.5 * wheelbase;
        (self.x + half * self.heading.cos(), self.y + half * self.heading.sin())
    }

    fn state(&self, wheelbase: f64) -> VehicleState {
        let (x, y) = self.center(wheelbase);
        VehicleState { pose: Pose::new(x, y, self.heading), speed: self.speed }
    }
}

/// Drives the agent from the road's first pose until the end of the road, the
/// first out-of-bound event, or the step cap.
pub fn simulate(road: &CartesianRoad, agent: &AgentConfig) -> Result<SimulationTrace> {
    agent.check()?;
    let length = road.length();
    if length < agent.lookahead {
        return Err(Error::RoadTooShort { road_length: length, lookahead: agent.lookahead });
    }
    let start = road.poses[0];
    let half = 0.5 * agent.wheelbase;
    let mut car = Vehicle {
        x: start.x - half * start.heading.cos(),
        y: start.y - half * start.heading.sin(),
        heading: start.heading,
        speed: agent.v_max,
        steer: 0.0,
    };
    let dt = agent.timestep;
    let mut states = Vec::new();
    let mut oob_events = Vec::new();
    let mut progress = road.project(start.x, start.y).arc;

    for _ in 0..agent.max_steps {
        // Steering: pure pursuit towards the centerline point `lookahead` ahead.
        let target_arc = progress + agent.lookahead;
        let goal = road.point_at(target_arc);
        let (dx, dy) = (goal.x - car.x, goal.y - car.y);
        let dist = dx.hypot(dy).max(1e-9);
        let alpha = dy.atan2(dx) - car.heading;
        let desired = (2.0 * agent.wheelbase * alpha.sin() / dist).atan();
        let grip_limit = (agent.wheelbase * agent.grip_accel / (car.speed * car.speed).max(1e-9)).atan();
        let lock = agent.max_steer.min(grip_limit);
        let slew = agent.steer_rate * dt;
        let steer = desired.clamp(car.steer - slew, car.steer + slew).clamp(-lock, lock);

        // Speed: curvature-limited target under bounded accel/brake.
        let kappa = road.curvature_at(target_arc).abs();
        let target_speed = if kappa > 0.0 {
            agent.v_max.min((agent.max_lateral_accel / kappa).sqrt())
        } else {
            agent.v_max
        };
        let dv = (target_speed - car.speed).clamp(-agent.max_decel * dt, agent.max_accel * dt);
        let new_speed = (car.speed + dv).clamp(0.0, agent.v_max);
        let distance = 0.5 * (car.speed + new_speed) * dt;

        let moved = Pose { x: car.x, y: car.y, heading: car.heading }.advance(steer.tan() / agent.wheelbase, distance);
        car = Vehicle {
            x: moved.x,
            y: moved.y,
            heading: car.heading + steer.tan() / agent.wheelbase * distance,
            speed: new_speed,
            steer,
        };

        let state = car.state(agent.wheelbase);
        let proj = road.project(state.pose.x, state.pose.y);
        progress = proj.arc;
        states.push(state);
        if is_oob(proj.offset, road.lane_width, agent.car_width, agent.tolerance) {
            oob_events.push(OobEvent {
                trace_index: states.len() - 1,
                lateral_offset: proj.offset,
                arc_position: proj.arc,
            });
            break;
        }
        if progress >= length {
            break;
        }
    }
    let outcome = if oob_events.is_empty() { Outcome::Pass } else { Outcome::Fail };
    Ok(SimulationTrace { duration: states.len() as f64 * dt, states, oob_events, outcome })
}

/// Marks the genome point nearest (in arc length) to each OOB event.
pub fn label(genome: &RoadGenome, trace: &SimulationTrace) -> LabeledRoad {
    let mut labels = vec![false; genome.len()];
    for event in &trace.oob_events {
        labels[nearest_index(genome.arc_lengths(), event.arc_position)] = true;
    }
    LabeledRoad { genome: genome.clone(), labels }
}

fn nearest_index(arc_lengths: &[f64], position: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, s) in arc_lengths.iter().enumerate() {
        let d = (s - position).abs();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Road-level settings shared by seed generation and evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadConfig {
    pub block_size: usize,
    pub step: f64,
    pub lane_width: f64,
    pub map_size: f64,
    pub smoothing_factor: f64,
}

impl Default for RoadConfig {
    fn default() -> Self {
        Self {
            block_size: crate::geometry::DEFAULT_BLOCK_SIZE,
            step: crate::geometry::DEFAULT_STEP,
            lane_width: crate::geometry::DEFAULT_LANE_WIDTH,
            map_size: crate::geometry::DEFAULT_MAP_SIZE,
            smoothing_factor: 0.01,
        }
    }
}

impl RoadConfig {
    pub fn check(&self) -> Result<()> {
        if self.block_size < 2 {
            return Err(Error::Config(format!("geometry.block_size must be at least 2, got {}", self.block_size)));
        }
        for (name, v) in [("step", self.step), ("lane_width", self.lane_width), ("map_size", self.map_size)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("geometry.{name} must be positive, got {v}")));
            }
        }
        if !(self.smoothing_factor >= 0.0) {
            return Err(Error::Config("geometry.smoothing_factor must be non-negative".into()));
        }
        Ok(())
    }

    pub fn road(&self, genome: &RoadGenome) -> CartesianRoad {
        reconstruct_with_lane_width(genome, Pose::default(), self.lane_width)
    }

    pub fn is_valid(&self, genome: &RoadGenome) -> bool {
        validate(&self.road(genome), genome, self.map_size).valid
    }

    pub fn smooth(&self, genome: &RoadGenome) -> RoadGenome {
        smooth(genome, self.smoothing_factor)
    }
}

/// Simulates and labels one genome on the default start pose.
pub fn run_and_label(genome: &RoadGenome, roads: &RoadConfig, agent: &AgentConfig) -> Result<(SimulationTrace, LabeledRoad)> {
    let trace = simulate(&roads.road(genome), agent)?;
    let labeled = label(genome, &trace);
    Ok((trace, labeled))
}

/// Random valid roads, simulated and labeled. Deterministic in `rng_seed`.
pub fn generate_seed_pool(n: usize, rng_seed: u64, roads: &RoadConfig, agent: &AgentConfig) -> Result<Vec<LabeledRoad>> {
    use rand::SeedableRng;
    if n == 0 {
        return Err(Error::Config("seed pool size must be at least 1".into()));
    }
    roads.check()?;
    agent.check()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
    init_random(n, roads, &mut rng)?
        .iter()
        .map(|g| run_and_label(g, roads, agent).map(|(_, l)| l))
        .collect()
}
