//! DQN and DDQN learners: replay buffer, epsilon-greedy policy, TD targets,
//! squared TD loss with manual gradients, and hard target-network syncs.
//!
//! The two algorithms differ only in the bootstrap target. DQN evaluates the
//! target network at its own best action; DDQN lets the online network pick
//! the action and the target network score it, which provably never exceeds
//! the DQN target on the same parameters.

use crate::neuralnet::{Gradients, MlpParams, NetError, SgdMomentum};
use crate::simworld::{Action, N_ACTIONS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("replay buffer holds {len} transitions, need {need}")]
    BufferTooSmall { len: usize, need: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("checkpoint {path}: {source}")]
    Checkpoint {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("checkpoint meta {path}: {source}")]
    CheckpointFormat {
        path: PathBuf,
        source: serde_json::Error,
    },
}

/// Which bootstrap target the learner uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dqn,
    Ddqn,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Ddqn => "ddqn",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dqn" => Ok(Algorithm::Dqn),
            "ddqn" => Ok(Algorithm::Ddqn),
            other => Err(format!("unknown algorithm {other:?}, expected dqn or ddqn")),
        }
    }
}

/// Learner hyperparameters. Every field is plain data so the whole struct
/// can sit in a config file section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Hard-copy the online params into the target net every this many
    /// gradient steps.
    pub target_sync_interval: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Env steps over which epsilon anneals linearly from start to end.
    pub epsilon_decay_steps: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ddqn,
            gamma: 0.85,
            learning_rate: 1e-4,
            momentum: 0.9,
            batch_size: 128,
            buffer_capacity: 50_000,
            target_sync_interval: 2_000,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_decay_steps: 60_000,
        }
    }
}

impl AgentConfig {
    /// Checks every hyperparameter range, reporting the offending field by
    /// name in the message.
    pub fn validate(&self) -> Result<(), AgentError> {
        let fail = |msg: String| Err(AgentError::InvalidConfig(msg));
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return fail(format!("gamma must be in [0, 1), got {}", self.gamma));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return fail(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.buffer_capacity < self.batch_size {
            return fail(format!(
                "buffer_capacity {} is smaller than batch_size {}",
                self.buffer_capacity, self.batch_size
            ));
        }
        if self.target_sync_interval == 0 {
            return fail("target_sync_interval must be at least 1".into());
        }
        for (name, eps) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
        ] {
            if !(0.0..=1.0).contains(&eps) {
                return fail(format!("{name} must be in [0, 1], got {eps}"));
            }
        }
        if self.epsilon_end > self.epsilon_start {
            return fail(format!(
                "epsilon_end {} exceeds epsilon_start {}",
                self.epsilon_end, self.epsilon_start
            ));
        }
        if self.epsilon_decay_steps == 0 {
            return fail("epsilon_decay_steps must be at least 1".into());
        }
        Ok(())
    }
}

/// Exploration rate after `env_steps` environment steps: linear from
/// `epsilon_start` to `epsilon_end` over `epsilon_decay_steps`, flat after.
pub fn epsilon_at(config: &AgentConfig, env_steps: u64) -> f64 {
    if env_steps >= config.epsilon_decay_steps {
        return config.epsilon_end;
    }
    let fraction = env_steps as f64 / config.epsilon_decay_steps as f64;
    config.epsilon_start + (config.epsilon_end - config.epsilon_start) * fraction
}

/// One experienced step, stored flattened for replay.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True when `next_state` ended the episode, so no value is
    /// bootstrapped from it.
    pub terminal: bool,
}

/// Fixed-capacity ring of transitions with a seeded uniform sampler.
/// Sampling is with replacement, so a batch may repeat an index.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    storage: Vec<Transition>,
    capacity: usize,
    next: usize,
    rng: ChaCha12Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay buffer needs capacity");
        Self {
            storage: Vec::with_capacity(capacity.min(4096)),
            capacity,
            next: 0,
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends, overwriting the oldest entry once full.
    pub fn push(&mut self, transition: Transition) {
        debug_assert!(transition.reward.is_finite());
        if self.storage.len() < self.capacity {
            self.storage.push(transition);
        } else {
            self.storage[self.next] = transition;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.storage[index]
    }

    /// Draws `batch_size` indices uniformly over the current contents.
    pub fn sample_indices(&mut self, batch_size: usize) -> Result<Vec<usize>, AgentError> {
        if self.storage.len() < batch_size {
            return Err(AgentError::BufferTooSmall {
                len: self.storage.len(),
                need: batch_size,
            });
        }
        let len = self.storage.len();
        Ok((0..batch_size)
            .map(|_| self.rng.random_range(0..len))
            .collect())
    }
}

/// Index of the largest value, lowest index on ties.
fn argmax(values: &[f64]) -> usize {
    debug_assert!(!values.is_empty());
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// DQN bootstrap target: `r + gamma * max_a Q(target, s')[a]`, or plain `r`
/// on terminal transitions.
pub fn dqn_target(
    transition: &Transition,
    target_net: &MlpParams,
    gamma: f64,
) -> Result<f64, NetError> {
    if transition.terminal {
        return Ok(transition.reward);
    }
    let q_next = target_net.forward(&transition.next_state)?;
    Ok(transition.reward + gamma * q_next[argmax(&q_next)])
}

/// DDQN bootstrap target: the online network selects the next action, the
/// target network evaluates it. `r` on terminal transitions.
pub fn ddqn_target(
    transition: &Transition,
    online_net: &MlpParams,
    target_net: &MlpParams,
    gamma: f64,
) -> Result<f64, NetError> {
    if transition.terminal {
        return Ok(transition.reward);
    }
    let q_online = online_net.forward(&transition.next_state)?;
    let q_target = target_net.forward(&transition.next_state)?;
    Ok(transition.reward + gamma * q_target[argmax(&q_online)])
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    config: AgentConfig,
    grad_steps: u64,
}

/// A learner: online and target networks, optimizer state, and counters.
#[derive(Debug, Clone)]
pub struct Agent {
    online: MlpParams,
    target: MlpParams,
    optimizer: SgdMomentum,
    config: AgentConfig,
    grad_steps: u64,
}

impl Agent {
    /// Builds a fresh agent with He-uniform initial weights. The layer
    /// sizes must end in the action count.
    pub fn new(sizes: &[usize], config: AgentConfig, net_seed: u64) -> Result<Self, AgentError> {
        config.validate()?;
        if sizes.last() != Some(&N_ACTIONS) {
            return Err(AgentError::InvalidConfig(format!(
                "network output width must equal the {N_ACTIONS} actions, got {:?}",
                sizes.last()
            )));
        }
        let online = MlpParams::init(sizes, net_seed);
        Ok(Self::from_params(online, config, 0))
    }

    /// Wraps an existing network, for scripted policies and tests. The
    /// target starts as a copy of the online net.
    pub fn from_net(online: MlpParams, config: AgentConfig) -> Result<Self, AgentError> {
        config.validate()?;
        if online.output_dim() != N_ACTIONS {
            return Err(AgentError::InvalidConfig(format!(
                "network output width must equal the {N_ACTIONS} actions, got {}",
                online.output_dim()
            )));
        }
        Ok(Self::from_params(online, config, 0))
    }

    fn from_params(online: MlpParams, config: AgentConfig, grad_steps: u64) -> Self {
        let target = online.clone();
        let optimizer = SgdMomentum::new(&online, config.learning_rate, config.momentum);
        Self {
            online,
            target,
            optimizer,
            config,
            grad_steps,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn online(&self) -> &MlpParams {
        &self.online
    }

    pub fn target(&self) -> &MlpParams {
        &self.target
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    /// Epsilon-greedy action choice. A zero epsilon is fully greedy and
    /// draws nothing from the rng; ties go to the lowest action index.
    pub fn select_action(
        &self,
        observation: &[f64],
        epsilon: f64,
        rng: &mut impl Rng,
    ) -> Result<Action, AgentError> {
        debug_assert!((0.0..=1.0).contains(&epsilon));
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            let index = rng.random_range(0..N_ACTIONS);
            return Ok(Action::new(index).expect("index drawn below N_ACTIONS"));
        }
        let q = self.online.forward(observation)?;
        Ok(Action::new(argmax(&q)).expect("argmax bounded by output width"))
    }

    /// One gradient step on a sampled batch. Returns the mean squared TD
    /// error. Targets are computed up front from the frozen nets, so no
    /// gradient flows through the target network or the action selection.
    pub fn train_step(&mut self, buffer: &mut ReplayBuffer) -> Result<f64, AgentError> {
        let batch = buffer.sample_indices(self.config.batch_size)?;
        let inv_batch = 1.0 / batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.online);
        let mut upstream = vec![0.0; self.online.output_dim()];
        let mut loss = 0.0;
        for index in batch {
            let transition = buffer.get(index);
            let target = match self.config.algorithm {
                Algorithm::Dqn => dqn_target(transition, &self.target, self.config.gamma)?,
                Algorithm::Ddqn => {
                    ddqn_target(transition, &self.online, &self.target, self.config.gamma)?
                }
            };
            let cache = self.online.forward_cached(&transition.state)?;
            let action = transition.action.index();
            let td = cache.output()[action] - target;
            loss += td * td * inv_batch;
            upstream[action] = 2.0 * td * inv_batch;
            self.online.accumulate_backward(&cache, &upstream, &mut grads)?;
            upstream[action] = 0.0;
        }
        self.optimizer.step(&mut self.online, &grads)?;
        self.grad_steps += 1;
        if self.grad_steps % self.config.target_sync_interval == 0 {
            self.sync_target();
        }
        Ok(loss)
    }

    /// Hard copy of the online parameters into the target network.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    /// Writes `<base>.net.json` (online parameters, the network checkpoint
    /// format) and `<base>.meta.json` (config and counters). The optimizer
    /// velocity and target lag are not persisted; a loaded agent restarts
    /// with the target synced and fresh momentum.
    pub fn save(&self, base: &Path) -> Result<(), AgentError> {
        let net_path = sibling(base, "net.json");
        let meta_path = sibling(base, "meta.json");
        self.online.save(&net_path)?;
        let meta = CheckpointMeta {
            config: self.config.clone(),
            grad_steps: self.grad_steps,
        };
        let file = File::create(&meta_path).map_err(|source| AgentError::Checkpoint {
            path: meta_path.clone(),
            source,
        })?;
        serde_json::to_writer_pretty(BufWriter::new(file), &meta).map_err(|source| {
            AgentError::CheckpointFormat {
                path: meta_path,
                source,
            }
        })
    }

    pub fn load(base: &Path) -> Result<Self, AgentError> {
        let net_path = sibling(base, "net.json");
        let meta_path = sibling(base, "meta.json");
        let online = MlpParams::load(&net_path)?;
        let file = File::open(&meta_path).map_err(|source| AgentError::Checkpoint {
            path: meta_path.clone(),
            source,
        })?;
        let meta: CheckpointMeta =
            serde_json::from_reader(BufReader::new(file)).map_err(|source| {
                AgentError::CheckpointFormat {
                    path: meta_path,
                    source,
                }
            })?;
        meta.config.validate()?;
        Ok(Self::from_params(online, meta.config, meta.grad_steps))
    }
}

/// `base` with `suffix` appended after a dot, keeping any existing name.
fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let mut name = base.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    base.with_file_name(name)
}
