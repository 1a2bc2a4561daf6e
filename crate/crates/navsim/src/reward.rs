//! Step rewards for the navigation task.
//!
//! Two schemes are implemented:
//!
//! - **Plain**: only the episode outcome matters. Every non-terminal step
//!   pays a flat no-collision reward, hitting anything pays a large penalty,
//!   reaching the goal pays a large bonus.
//! - **Coupled**: the obstacle-avoidance reward is coupled to vehicle speed.
//!   When an obstacle is in sensing range, the step reward is scaled by a
//!   Gaussian bump `1 + exp(-(v - v_bar)^2 / 2)` peaking at the configured
//!   cruising speed `v_bar`, with a larger coefficient when the heading
//!   deviates from the obstacle by more than the angle threshold (driving
//!   past it) than when it points near the obstacle. With no obstacle in
//!   range a neutral flat reward is paid. Reaching the goal additionally
//!   pays the reach bonus on top of the step reward, since the coupled
//!   scheme has no reach case of its own.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    /// A step cannot both collide and reach the goal; the simulation never
    /// reports this, so seeing it means the inputs were assembled by hand.
    #[error("contradictory step outcome: collided and reached are both set")]
    ContradictoryOutcome,
}

/// Which reward scheme an experiment uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Plain,
    Coupled,
}

impl RewardKind {
    /// Stable lowercase name, used in file paths and result tables.
    pub fn name(self) -> &'static str {
        match self {
            RewardKind::Plain => "plain",
            RewardKind::Coupled => "coupled",
        }
    }
}

/// Everything the reward schemes need to know about one simulation step.
/// `deviation` is the minimum heading deviation over obstacles in sensing
/// range, `None` when no obstacle is in range (see
/// [`crate::geometry::min_deviation_in_range`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    pub collided: bool,
    pub reached: bool,
    pub speed: f64,
    pub deviation: Option<f64>,
}

/// Reward constants. Defaults implement the two schemes as stated above;
/// every value can be overridden from the experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Cruising speed `v_bar` the coupled scheme rewards, m/s.
    pub expected_speed: f64,
    /// Heading-deviation threshold separating the far and near branches,
    /// radians.
    pub angle_threshold: f64,
    /// Coefficient when the heading deviates beyond the threshold.
    pub far_coefficient: f64,
    /// Coefficient when the heading stays within the threshold.
    pub near_coefficient: f64,
    /// Reward on collision, both schemes.
    pub hit_penalty: f64,
    /// Coupled-scheme reward when no obstacle is in sensing range.
    pub neutral_reward: f64,
    /// Reward for reaching the goal. The plain scheme's reach case and the
    /// bonus added on top of the coupled scheme share this value.
    pub reach_bonus: f64,
    /// Plain-scheme reward for any uneventful step.
    pub no_collision_reward: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            expected_speed: 1.2,
            angle_threshold: 30f64.to_radians(),
            far_coefficient: 20.0,
            near_coefficient: 10.0,
            hit_penalty: -100.0,
            neutral_reward: 10.0,
            reach_bonus: 100.0,
            no_collision_reward: 10.0,
        }
    }
}

/// Plain scheme: outcome only.
pub fn plain_reward(
    collided: bool,
    reached: bool,
    config: &RewardConfig,
) -> Result<f64, RewardError> {
    match (collided, reached) {
        (true, true) => Err(RewardError::ContradictoryOutcome),
        (true, false) => Ok(config.hit_penalty),
        (false, true) => Ok(config.reach_bonus),
        (false, false) => Ok(config.no_collision_reward),
    }
}

/// Coupled scheme: speed-shaped obstacle reward, without the reach bonus.
///
/// `speed` must be non-negative. Collision dominates every other input.
pub fn coupled_reward(
    collided: bool,
    speed: f64,
    deviation: Option<f64>,
    config: &RewardConfig,
) -> f64 {
    debug_assert!(speed >= 0.0, "speed must be non-negative");
    if collided {
        return config.hit_penalty;
    }
    match deviation {
        Some(dev) => {
            let gap = speed - config.expected_speed;
            let gain = 1.0 + (-gap * gap / 2.0).exp();
            if dev > config.angle_threshold {
                config.far_coefficient * gain
            } else {
                config.near_coefficient * gain
            }
        }
        None => config.neutral_reward,
    }
}

/// The goal bonus: `reach_bonus` when the goal was reached, else zero.
pub fn reach_bonus(reached: bool, config: &RewardConfig) -> f64 {
    if reached {
        config.reach_bonus
    } else {
        0.0
    }
}

/// Total reward for one step under the chosen scheme. Under `Plain` the
/// reach case is already part of the scheme, so the bonus is not added
/// again; under `Coupled` it is added on top of the step reward.
pub fn step_reward(
    kind: RewardKind,
    inputs: &RewardInputs,
    config: &RewardConfig,
) -> Result<f64, RewardError> {
    match kind {
        RewardKind::Plain => plain_reward(inputs.collided, inputs.reached, config),
        RewardKind::Coupled => {
            if inputs.collided && inputs.reached {
                return Err(RewardError::ContradictoryOutcome);
            }
            Ok(coupled_reward(inputs.collided, inputs.speed, inputs.deviation, config)
                + reach_bonus(inputs.reached, config))
        }
    }
}
