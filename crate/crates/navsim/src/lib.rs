//! Desk-scale 2D navigation experiments: an unmanned ground vehicle with
//! unicycle kinematics drives a rectangular world full of circular obstacles,
//! trained with DQN or double DQN under two reward schemes (a plain
//! outcome-only reward and a speed-coupled one).
//!
//! - [`geometry`]: angle wrapping, obstacle angular intervals, ray casting,
//!   collision checks.
//! - [`simworld`]: world configuration and generation, vehicle kinematics,
//!   ray sensing, episode bookkeeping.
//! - [`reward`]: the two step-reward schemes.
//! - [`neuralnet`]: dense MLP with manual backprop and SGD + momentum.
//! - [`agent`]: replay buffer, epsilon-greedy policy, DQN/DDQN targets.
//! - [`harness`]: training loop, greedy evaluation, reward comparison table,
//!   episode export.
//! - [`cli`]: config file handling and the command-line entry points.

pub mod agent;
pub mod cli;
pub mod geometry;
pub mod harness;
pub mod neuralnet;
pub mod reward;
pub mod simworld;
