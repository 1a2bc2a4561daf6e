//! The simulated world: a rectangular closed space with circular obstacles,
//! a unicycle-kinematics vehicle, a ray sensor, and episode bookkeeping.
//!
//! One step applies the chosen action's speed and turn-rate deltas (with
//! clamping), integrates the kinematics over one tick, then classifies the
//! outcome: collision, goal reached, timeout, or still running. Collision is
//! checked before the goal, so the two are never reported together.

use crate::geometry::{
    cast_ray, check_collision, min_deviation_in_range, wrap_angle, Obstacle, Pose2D, WorldBounds,
};
use crate::reward::RewardInputs;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("episode already ended ({reason:?}); reset before stepping")]
    SteppedAfterDone { reason: DoneReason },
    #[error(
        "world generation gave up after {attempts} placement attempts \
         ({placed} of {requested} obstacles placed)"
    )]
    PlacementFailed {
        attempts: u32,
        placed: usize,
        requested: usize,
    },
}

/// Fixed simulation constants. The defaults are the values every experiment
/// in this crate runs with; tests occasionally override them to build exact
/// arithmetic scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Integration step, seconds.
    pub dt: f64,
    /// Top linear speed, m/s. Speed is clamped into `[0, max_speed]`.
    pub max_speed: f64,
    /// Top turn rate magnitude, rad/s.
    pub max_turn_rate: f64,
    /// Linear speed change per accelerate/decelerate action, m/s.
    pub speed_step: f64,
    /// Turn-rate change per steer action, rad/s.
    pub turn_step: f64,
    /// Number of sensor rays, spread evenly over the front half circle.
    pub n_rays: usize,
    /// Sensor range, meters; ray readings clamp here.
    pub max_range: f64,
    /// Obstacles beyond this distance are ignored by the deviation signal.
    pub sensing_radius: f64,
    /// Vehicle footprint disc radius, meters.
    pub vehicle_radius: f64,
    /// Episode length cap, steps.
    pub max_steps: u32,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            max_speed: 2.0,
            max_turn_rate: 1.0,
            speed_step: 0.2,
            turn_step: 0.3,
            n_rays: 16,
            max_range: 5.0,
            sensing_radius: 5.0,
            vehicle_radius: 0.2,
            max_steps: 500,
        }
    }
}

/// Number of discrete actions.
pub const N_ACTIONS: usize = 9;

/// One of nine discrete actions: the cross product of a speed delta
/// (decelerate, hold, accelerate) and a turn-rate delta (right, hold, left).
///
/// The index encoding is `index = 3 * s + t` where `s` and `t` are 0, 1, 2
/// for minus, hold, plus: `index / 3` selects the speed delta and
/// `index % 3` the turn delta. Index 4 is the double hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action(u8);

impl Action {
    /// Every action in index order.
    pub const ALL: [Action; N_ACTIONS] = [
        Action(0),
        Action(1),
        Action(2),
        Action(3),
        Action(4),
        Action(5),
        Action(6),
        Action(7),
        Action(8),
    ];

    /// Both deltas held.
    pub const HOLD: Action = Action(4);

    pub fn new(index: usize) -> Option<Self> {
        if index < N_ACTIONS {
            Some(Self(index as u8))
        } else {
            None
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Speed delta in m/s under the given parameters.
    pub fn speed_delta(self, params: &SimParams) -> f64 {
        (f64::from(self.0 / 3) - 1.0) * params.speed_step
    }

    /// Turn-rate delta in rad/s under the given parameters.
    pub fn turn_delta(self, params: &SimParams) -> f64 {
        (f64::from(self.0 % 3) - 1.0) * params.turn_step
    }
}

/// Full kinematic state of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose2D,
    /// Linear speed, always in `[0, max_speed]`.
    pub linear_speed: f64,
    /// Turn rate, always in `[-max_turn_rate, max_turn_rate]`.
    pub angular_rate: f64,
}

/// What the agent sees. All components are normalized:
///
/// - `rays`: forward-arc distances divided by `max_range`, in `[0, 1]`
/// - `goal_distance`: straight-line distance divided by the world diagonal,
///   in `[0, 1]`
/// - `goal_bearing`: bearing relative to the heading divided by pi, in
///   `(-1, 1]`
/// - `linear_speed`: divided by `max_speed`, in `[0, 1]`
/// - `angular_rate`: divided by `max_turn_rate`, in `[-1, 1]`
///
/// [`Observation::to_vec`] flattens in exactly that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub rays: Vec<f64>,
    pub goal_distance: f64,
    pub goal_bearing: f64,
    pub linear_speed: f64,
    pub angular_rate: f64,
}

impl Observation {
    pub fn dim(&self) -> usize {
        self.rays.len() + 4
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.rays);
        v.push(self.goal_distance);
        v.push(self.goal_bearing);
        v.push(self.linear_speed);
        v.push(self.angular_rate);
        v
    }
}

/// Why an episode ended, or `Running` while it has not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoneReason {
    Running,
    Collision,
    Goal,
    Timeout,
}

impl DoneReason {
    pub fn name(self) -> &'static str {
        match self {
            DoneReason::Running => "running",
            DoneReason::Collision => "collision",
            DoneReason::Goal => "goal",
            DoneReason::Timeout => "timeout",
        }
    }
}

/// Everything one step produces.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward_inputs: RewardInputs,
    pub done: bool,
    pub done_reason: DoneReason,
}

/// A complete world description. Serializes to the JSON exchanged by the
/// CLI: exactly the fields below, with `obstacles` a list of
/// `{center_x, center_y, radius}` objects, `goal` a `[x, y]` pair and
/// `start` a `{x, y, heading}` object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub width: f64,
    pub height: f64,
    pub obstacles: Vec<Obstacle>,
    pub goal: (f64, f64),
    pub goal_tolerance: f64,
    pub start: Pose2D,
    pub rng_seed: u64,
}

impl WorldConfig {
    pub fn bounds(&self) -> WorldBounds {
        WorldBounds::from_size(self.width, self.height)
    }

    /// Checks every structural invariant, reporting the first violation.
    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: String| Err(SimError::InvalidWorld(msg));
        if !(self.width > 0.0 && self.width.is_finite()) {
            return fail(format!("width must be positive and finite, got {}", self.width));
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            return fail(format!(
                "height must be positive and finite, got {}",
                self.height
            ));
        }
        if !(self.goal_tolerance > 0.0 && self.goal_tolerance.is_finite()) {
            return fail(format!(
                "goal_tolerance must be positive and finite, got {}",
                self.goal_tolerance
            ));
        }
        let bounds = self.bounds();
        if !bounds.contains_point(self.start.x, self.start.y) {
            return fail(format!(
                "start ({}, {}) is not strictly inside the {} x {} world",
                self.start.x, self.start.y, self.width, self.height
            ));
        }
        if !bounds.contains_point(self.goal.0, self.goal.1) {
            return fail(format!(
                "goal ({}, {}) is not strictly inside the {} x {} world",
                self.goal.0, self.goal.1, self.width, self.height
            ));
        }
        for (i, obs) in self.obstacles.iter().enumerate() {
            if !(obs.radius > 0.0 && obs.radius.is_finite()) {
                return fail(format!("obstacle {i} radius must be positive, got {}", obs.radius));
            }
            if !bounds.contains_disc(obs.center_x, obs.center_y, obs.radius) {
                return fail(format!("obstacle {i} pokes outside the world bounds"));
            }
            let start_dist = self.start.distance_to(obs.center_x, obs.center_y);
            if start_dist <= obs.radius {
                return fail(format!("start lies inside obstacle {i}"));
            }
            let goal_dist =
                (self.goal.0 - obs.center_x).hypot(self.goal.1 - obs.center_y);
            if goal_dist <= obs.radius {
                return fail(format!("goal lies inside obstacle {i}"));
            }
        }
        Ok(())
    }
}

// world generation constants
const OBSTACLE_RADIUS_MIN: f64 = 0.3;
const OBSTACLE_RADIUS_MAX: f64 = 0.8;
/// Required distance from an obstacle edge to the start and goal points.
const START_GOAL_CLEARANCE: f64 = 1.5;
/// Required gap between obstacle edges, three vehicle diameters so every
/// corridor between discs stays passable at cruise speed.
const OBSTACLE_GAP: f64 = 1.2;
/// Start and goal sit this far in from their world corners.
const CORNER_INSET: f64 = 1.0;
const GOAL_TOLERANCE: f64 = 1.0;
const MAX_PLACEMENT_ATTEMPTS: u32 = 10_000;

/// Generates a world by rejection sampling: the start sits near the lower
/// left corner facing the goal near the upper right corner, and
/// `n_obstacles` discs with radii uniform in
/// [`OBSTACLE_RADIUS_MIN`, `OBSTACLE_RADIUS_MAX`] are dropped uniformly,
/// fully inside the bounds, keeping [`START_GOAL_CLEARANCE`] of clearance
/// around the start and goal and [`OBSTACLE_GAP`] between obstacle edges.
///
/// Deterministic in its arguments. Fails with
/// [`SimError::PlacementFailed`] once [`MAX_PLACEMENT_ATTEMPTS`] candidate
/// placements have been rejected, and with [`SimError::InvalidWorld`] when
/// the rectangle is too small to hold the start/goal layout at all.
pub fn generate_world(
    width: f64,
    height: f64,
    n_obstacles: usize,
    seed: u64,
) -> Result<WorldConfig, SimError> {
    if !(width > 2.0 * CORNER_INSET && height > 2.0 * CORNER_INSET) {
        return Err(SimError::InvalidWorld(format!(
            "world {width} x {height} too small for corner inset {CORNER_INSET}"
        )));
    }
    let start_xy = (CORNER_INSET, CORNER_INSET);
    let goal = (width - CORNER_INSET, height - CORNER_INSET);
    let heading = (goal.1 - start_xy.1).atan2(goal.0 - start_xy.0);
    let start = Pose2D::new(start_xy.0, start_xy.1, heading);

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut obstacles: Vec<Obstacle> = Vec::with_capacity(n_obstacles);
    let mut attempts: u32 = 0;
    while obstacles.len() < n_obstacles {
        attempts += 1;
        if attempts > MAX_PLACEMENT_ATTEMPTS {
            return Err(SimError::PlacementFailed {
                attempts: MAX_PLACEMENT_ATTEMPTS,
                placed: obstacles.len(),
                requested: n_obstacles,
            });
        }
        let radius = rng.random_range(OBSTACLE_RADIUS_MIN..=OBSTACLE_RADIUS_MAX);
        if width <= 2.0 * radius || height <= 2.0 * radius {
            continue;
        }
        let cx = rng.random_range(radius..=(width - radius));
        let cy = rng.random_range(radius..=(height - radius));

        let start_clear =
            (cx - start.x).hypot(cy - start.y) >= radius + START_GOAL_CLEARANCE;
        let goal_clear = (cx - goal.0).hypot(cy - goal.1) >= radius + START_GOAL_CLEARANCE;
        let others_clear = obstacles.iter().all(|o| {
            (cx - o.center_x).hypot(cy - o.center_y) >= radius + o.radius + OBSTACLE_GAP
        });
        if start_clear && goal_clear && others_clear {
            obstacles.push(Obstacle::new(cx, cy, radius));
        }
    }

    Ok(WorldConfig {
        width,
        height,
        obstacles,
        goal,
        goal_tolerance: GOAL_TOLERANCE,
        start,
        rng_seed: seed,
    })
}

/// A running episode: world, params, vehicle state and termination status.
#[derive(Debug, Clone)]
pub struct Simulation {
    world: WorldConfig,
    params: SimParams,
    bounds: WorldBounds,
    diagonal: f64,
    ray_offsets: Vec<f64>,
    state: VehicleState,
    steps: u32,
    done_reason: DoneReason,
}

impl Simulation {
    /// Validates the world and starts an episode at the configured start
    /// pose with zero speed and turn rate.
    pub fn new(world: WorldConfig, params: SimParams) -> Result<Self, SimError> {
        world.validate()?;
        debug_assert!(params.n_rays >= 2);
        debug_assert!(params.dt > 0.0 && params.max_speed > 0.0 && params.max_turn_rate > 0.0);
        let spread = PI / (params.n_rays - 1) as f64;
        let ray_offsets = (0..params.n_rays)
            .map(|i| -FRAC_PI_2 + i as f64 * spread)
            .collect();
        let bounds = world.bounds();
        let diagonal = world.width.hypot(world.height);
        let state = VehicleState {
            pose: world.start,
            linear_speed: 0.0,
            angular_rate: 0.0,
        };
        Ok(Self {
            world,
            params,
            bounds,
            diagonal,
            ray_offsets,
            state,
            steps: 0,
            done_reason: DoneReason::Running,
        })
    }

    /// Restarts the episode in place. Identical configurations observe
    /// identically, bit for bit.
    pub fn reset(&mut self) -> Observation {
        self.state = VehicleState {
            pose: self.world.start,
            linear_speed: 0.0,
            angular_rate: 0.0,
        };
        self.steps = 0;
        self.done_reason = DoneReason::Running;
        self.observe()
    }

    pub fn world(&self) -> &WorldConfig {
        &self.world
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn done(&self) -> bool {
        self.done_reason != DoneReason::Running
    }

    pub fn done_reason(&self) -> DoneReason {
        self.done_reason
    }

    /// The current observation; see [`Observation`] for the layout.
    pub fn observe(&self) -> Observation {
        let pose = &self.state.pose;
        let rays = self
            .ray_offsets
            .iter()
            .map(|offset| {
                let bearing = pose.heading + offset;
                cast_ray(
                    (pose.x, pose.y),
                    bearing,
                    &self.world.obstacles,
                    &self.bounds,
                    self.params.max_range,
                ) / self.params.max_range
            })
            .collect();
        let goal_distance =
            (pose.distance_to(self.world.goal.0, self.world.goal.1) / self.diagonal).clamp(0.0, 1.0);
        let goal_bearing =
            wrap_angle(pose.bearing_to(self.world.goal.0, self.world.goal.1) - pose.heading) / PI;
        Observation {
            rays,
            goal_distance,
            goal_bearing,
            linear_speed: self.state.linear_speed / self.params.max_speed,
            angular_rate: self.state.angular_rate / self.params.max_turn_rate,
        }
    }

    /// Applies one action over one tick: clamp the new speed and turn rate,
    /// integrate `x += v cos(theta) dt`, `y += v sin(theta) dt`,
    /// `theta += omega dt` (in that order, so the position uses the
    /// pre-update heading), then classify the outcome.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome, SimError> {
        if self.done() {
            return Err(SimError::SteppedAfterDone {
                reason: self.done_reason,
            });
        }
        let params = &self.params;
        let speed = (self.state.linear_speed + action.speed_delta(params))
            .clamp(0.0, params.max_speed);
        let turn_rate = (self.state.angular_rate + action.turn_delta(params))
            .clamp(-params.max_turn_rate, params.max_turn_rate);
        let heading = self.state.pose.heading;
        self.state.pose.x += speed * heading.cos() * params.dt;
        self.state.pose.y += speed * heading.sin() * params.dt;
        self.state.pose.heading = wrap_angle(heading + turn_rate * params.dt);
        self.state.linear_speed = speed;
        self.state.angular_rate = turn_rate;
        self.steps += 1;

        let collided = check_collision(
            &self.state.pose,
            params.vehicle_radius,
            &self.world.obstacles,
            &self.bounds,
        );
        let reached = !collided
            && self
                .state
                .pose
                .distance_to(self.world.goal.0, self.world.goal.1)
                <= self.world.goal_tolerance;
        self.done_reason = if collided {
            DoneReason::Collision
        } else if reached {
            DoneReason::Goal
        } else if self.steps >= params.max_steps {
            DoneReason::Timeout
        } else {
            DoneReason::Running
        };

        let deviation = if collided {
            None
        } else {
            min_deviation_in_range(
                &self.state.pose,
                &self.world.obstacles,
                params.sensing_radius,
            )
            .expect("a non-colliding vehicle center is strictly outside every obstacle")
        };

        Ok(StepOutcome {
            observation: self.observe(),
            reward_inputs: RewardInputs {
                collided,
                reached,
                speed,
                deviation,
            },
            done: self.done(),
            done_reason: self.done_reason,
        })
    }
}
