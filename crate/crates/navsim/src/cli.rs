//! Command-line front door. One TOML file describes an experiment; the
//! subcommands train agents, compare reward schemes, and evaluate or export
//! saved checkpoints.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
//! error.

use crate::agent::{Agent, AgentConfig, Algorithm};
use crate::harness::{
    self, compare_rewards, evaluate, export_curve, export_curves_csv, export_episode,
    export_results, export_summary_csv,
    observation_dim, run_episode, train, CompareOutput, EnvSpec, ExperimentPlan, TrainOptions,
    WorldSource,
};
use crate::reward::{RewardConfig, RewardKind};
use crate::simworld::SimParams;
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad usage or a bad config file; exits with code 2.
    #[error("{0}")]
    Config(String),
    /// A failure while running a valid experiment; exits with code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<harness::HarnessError> for CliError {
    fn from(err: harness::HarnessError) -> Self {
        CliError::Runtime(err.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Dqn,
    Ddqn,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(arg: AlgorithmArg) -> Self {
        match arg {
            AlgorithmArg::Dqn => Algorithm::Dqn,
            AlgorithmArg::Ddqn => Algorithm::Ddqn,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "navsim", about = "Train and compare navigation agents in a 2D world")]
pub struct Cli {
    /// Experiment config file.
    #[arg(long, global = true, default_value = "configs/default.toml")]
    pub config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Learner variant, overriding the config.
    #[arg(long, global = true, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one agent on the first configured environment.
    Train,
    /// Train and evaluate every environment-by-reward-kind cell.
    Compare,
    /// Run greedy evaluation episodes from a checkpoint.
    Eval {
        /// Checkpoint base path (as passed to train's output).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of evaluation episodes.
        #[arg(long, default_value_t = 20)]
        episodes: u32,
    },
    /// Roll one greedy episode from a checkpoint and export its files.
    Export {
        /// Checkpoint base path.
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

/// The `[world]` section: where experiments take place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSection {
    pub seed: u64,
    pub environments: Vec<EnvSpec>,
}

impl Default for WorldSection {
    fn default() -> Self {
        Self {
            seed: 7,
            environments: vec![
                EnvSpec {
                    name: "10x15".into(),
                    width: 10.0,
                    height: 15.0,
                    n_obstacles: 8,
                },
                EnvSpec {
                    name: "25x25".into(),
                    width: 25.0,
                    height: 25.0,
                    n_obstacles: 16,
                },
            ],
        }
    }
}

/// The `[reward]` section. The angle threshold is configured in degrees
/// and converted when the experiment is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    /// Scheme used by train, eval and export.
    pub kind: RewardKind,
    /// Schemes the compare subcommand crosses with the environments.
    pub compare_kinds: Vec<RewardKind>,
    pub expected_speed: f64,
    pub angle_threshold_deg: f64,
    pub far_coefficient: f64,
    pub near_coefficient: f64,
    pub hit_penalty: f64,
    pub neutral_reward: f64,
    pub reach_bonus: f64,
    pub no_collision_reward: f64,
}

impl Default for RewardSection {
    fn default() -> Self {
        let config = RewardConfig::default();
        Self {
            kind: RewardKind::Coupled,
            compare_kinds: vec![RewardKind::Plain, RewardKind::Coupled],
            expected_speed: config.expected_speed,
            angle_threshold_deg: 30.0,
            far_coefficient: config.far_coefficient,
            near_coefficient: config.near_coefficient,
            hit_penalty: config.hit_penalty,
            neutral_reward: config.neutral_reward,
            reach_bonus: config.reach_bonus,
            no_collision_reward: config.no_collision_reward,
        }
    }
}

impl RewardSection {
    pub fn to_config(&self) -> RewardConfig {
        RewardConfig {
            expected_speed: self.expected_speed,
            angle_threshold: self.angle_threshold_deg.to_radians(),
            far_coefficient: self.far_coefficient,
            near_coefficient: self.near_coefficient,
            hit_penalty: self.hit_penalty,
            neutral_reward: self.neutral_reward,
            reach_bonus: self.reach_bonus,
            no_collision_reward: self.no_collision_reward,
        }
    }
}

/// The `[harness]` section: budgets and output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessSection {
    pub training_budget: u64,
    pub warmup_steps: u64,
    pub eval_interval: u64,
    pub n_eval: u32,
    pub n_training_runs: u32,
    pub output_dir: PathBuf,
}

impl Default for HarnessSection {
    fn default() -> Self {
        let options = TrainOptions::default();
        Self {
            training_budget: options.training_budget,
            warmup_steps: options.warmup_steps,
            eval_interval: options.eval_interval,
            n_eval: options.n_eval,
            n_training_runs: 1,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl HarnessSection {
    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            training_budget: self.training_budget,
            warmup_steps: self.warmup_steps,
            eval_interval: self.eval_interval,
            n_eval: self.n_eval,
        }
    }
}

/// One experiment, as read from the config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldSection,
    pub agent: AgentConfig,
    pub reward: RewardSection,
    pub harness: HarnessSection,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.world.environments.is_empty() {
            return fail("world.environments must list at least one environment".into());
        }
        self.agent
            .validate()
            .map_err(|err| CliError::Config(err.to_string()))?;
        if !(self.reward.expected_speed > 0.0 && self.reward.expected_speed.is_finite()) {
            return fail(format!(
                "reward.expected_speed must be positive, got {}",
                self.reward.expected_speed
            ));
        }
        if !(0.0..=180.0).contains(&self.reward.angle_threshold_deg) {
            return fail(format!(
                "reward.angle_threshold_deg must be in [0, 180], got {}",
                self.reward.angle_threshold_deg
            ));
        }
        if self.reward.compare_kinds.is_empty() {
            return fail("reward.compare_kinds must list at least one kind".into());
        }
        if self.harness.n_training_runs == 0 {
            return fail("harness.n_training_runs must be at least 1".into());
        }
        self.harness
            .train_options()
            .validate(&self.agent)
            .map_err(|err| CliError::Config(err.to_string()))
    }
}

/// Reads and parses the config file, without validating the values.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|err| CliError::Config(format!("cannot read {}: {err}", path.display())))?;
    toml::from_str(&text)
        .map_err(|err| CliError::Config(format!("cannot parse {}: {err}", path.display())))
}

/// Turns a parsed config into the experiment plan `compare` runs.
pub fn build_plan(config: &ExperimentConfig) -> ExperimentPlan {
    ExperimentPlan {
        environments: config.world.environments.clone(),
        reward_kinds: config.reward.compare_kinds.clone(),
        agent: config.agent.clone(),
        reward: config.reward.to_config(),
        sim: SimParams::default(),
        train: config.harness.train_options(),
        n_training_runs: config.harness.n_training_runs,
        seed: config.world.seed,
    }
}

fn io_err(path: &Path, err: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {err}", path.display()))
}

fn print_table(output: &CompareOutput) {
    println!(
        "{:<14} {:<9} {:>11} {:>9} {:>11}",
        "environment", "reward", "mean speed", "success", "collision"
    );
    for cell in &output.cells {
        println!(
            "{:<14} {:<9} {:>11.3} {:>9.2} {:>11.2}",
            cell.environment,
            cell.reward.name(),
            cell.mean_avg_speed,
            cell.success_rate,
            cell.collision_rate
        );
    }
    for failure in &output.failures {
        println!(
            "{:<14} {:<9} failed: {}",
            failure.environment,
            failure.reward.name(),
            failure.error
        );
    }
}

fn cmd_train(config: &ExperimentConfig) -> Result<(), CliError> {
    let env = &config.world.environments[0];
    let source = WorldSource::Generated(env.clone());
    let output = train(
        &source,
        &SimParams::default(),
        &config.agent,
        config.reward.kind,
        &config.reward.to_config(),
        &config.harness.train_options(),
        config.world.seed,
    )?;
    let out_dir = &config.harness.output_dir;
    let checkpoint = out_dir.join("checkpoint");
    output
        .agent
        .save(&checkpoint)
        .map_err(|err| CliError::Runtime(err.to_string()))?;
    let curve_path = out_dir.join("curve.json");
    export_curve(&output.curve, &curve_path)?;
    println!(
        "trained {} agent on {} for {} env steps ({} episodes)",
        config.reward.kind.name(),
        env.name,
        output.env_steps,
        output.episodes
    );
    if let Some(point) = output
        .curve
        .iter()
        .find(|p| p.step == output.selected_step)
    {
        println!(
            "selected checkpoint at step {}: success rate {:.2}, mean speed {:.3} m/s",
            point.step, point.success_rate, point.mean_speed
        );
    }
    println!(
        "wrote {}.net.json, {}.meta.json, {}",
        checkpoint.display(),
        checkpoint.display(),
        curve_path.display()
    );
    Ok(())
}

fn cmd_compare(config: &ExperimentConfig) -> Result<(), CliError> {
    let plan = build_plan(config);
    let output = compare_rewards(&plan);
    print_table(&output);
    let out_dir = &config.harness.output_dir;
    let results_path = out_dir.join("results.json");
    export_results(&output, &results_path)?;
    let summary_path = out_dir.join("summary.csv");
    export_summary_csv(&output, &summary_path)?;
    let curve_paths = export_curves_csv(&output, out_dir)?;
    println!(
        "wrote {}, {} and {} curve files",
        results_path.display(),
        summary_path.display(),
        curve_paths.len()
    );
    if output.complete {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "{} of {} cells failed; partial results written",
            output.failures.len(),
            output.failures.len() + output.cells.len()
        )))
    }
}

/// Loads a checkpoint and checks it against the observation layout.
fn load_checkpoint(checkpoint: &Path, params: &SimParams) -> Result<Agent, CliError> {
    let agent = Agent::load(checkpoint).map_err(|err| CliError::Config(err.to_string()))?;
    let expected = agent.online().input_dim();
    let observed = observation_dim(params);
    if expected != observed {
        return Err(CliError::Config(format!(
            "checkpoint input width {expected} does not match observation width {observed}"
        )));
    }
    Ok(agent)
}

fn cmd_eval(config: &ExperimentConfig, checkpoint: &Path, episodes: u32) -> Result<(), CliError> {
    if episodes == 0 {
        return Err(CliError::Config("episodes must be at least 1".into()));
    }
    let params = SimParams::default();
    let agent = load_checkpoint(checkpoint, &params)?;
    let room = WorldSource::Generated(config.world.environments[0].clone())
        .room(config.world.seed)
        .map_err(|err| CliError::Runtime(err.to_string()))?;
    let (summary, records) = evaluate(
        &agent,
        &room,
        &params,
        config.reward.kind,
        &config.reward.to_config(),
        episodes,
        config.world.seed,
        true,
    )?;
    println!(
        "evaluated {} greedy episodes: success rate {:.2}, collision rate {:.2}, mean speed {:.3} m/s",
        summary.n, summary.success_rate, summary.collision_rate, summary.mean_avg_speed
    );
    for (index, record) in records.iter().enumerate() {
        let base = config.harness.output_dir.join(format!("eval_ep_{index:03}"));
        export_episode(record, &base)?;
    }
    println!(
        "wrote {} episode exports under {}",
        records.len(),
        config.harness.output_dir.display()
    );
    Ok(())
}

fn cmd_export(config: &ExperimentConfig, checkpoint: &Path) -> Result<(), CliError> {
    let params = SimParams::default();
    let agent = load_checkpoint(checkpoint, &params)?;
    let world = WorldSource::Generated(config.world.environments[0].clone())
        .room(config.world.seed)
        .map_err(|err| CliError::Runtime(err.to_string()))?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.world.seed);
    let record = run_episode(
        world,
        &params,
        &agent,
        config.reward.kind,
        &config.reward.to_config(),
        0.0,
        &mut rng,
        true,
    )?;
    let base = config.harness.output_dir.join("episode");
    export_episode(&record, &base)?;
    println!(
        "exported a {}-step {} episode to {}.csv and {}.plot.json",
        record.n_steps,
        record.outcome.name(),
        base.display(),
        base.display()
    );
    Ok(())
}

/// Runs one parsed invocation end to end.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = load_config(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.world.seed = seed;
    }
    if let Some(algorithm) = cli.algorithm {
        config.agent.algorithm = algorithm.into();
    }
    if let Some(out) = cli.out {
        config.harness.output_dir = out;
    }
    config.validate()?;
    fs::create_dir_all(&config.harness.output_dir)
        .map_err(|err| io_err(&config.harness.output_dir, err))?;
    match &cli.command {
        Command::Train => cmd_train(&config),
        Command::Compare => cmd_compare(&config),
        Command::Eval {
            checkpoint,
            episodes,
        } => cmd_eval(&config, checkpoint, *episodes),
        Command::Export { checkpoint } => cmd_export(&config, checkpoint),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_file_is_all_defaults() {
        let config: ExperimentConfig = toml::from_str("").unwrap();
        assert_eq!(config, ExperimentConfig::default());
        config.validate().unwrap();
        assert_eq!(config.world.environments.len(), 2);
        assert_eq!(config.agent.gamma, AgentConfig::default().gamma);
        assert_eq!(
            config.harness.training_budget,
            TrainOptions::default().training_budget
        );
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = toml::from_str::<ExperimentConfig>("[agent]\nbogus_knob = 3\n").unwrap_err();
        assert!(err.to_string().contains("bogus_knob"), "{err}");
    }

    #[test]
    fn bad_gamma_is_named() {
        let config: ExperimentConfig = toml::from_str("[agent]\ngamma = 1.5\n").unwrap();
        let err = config.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("gamma"), "{err}");
    }

    #[test]
    fn angle_threshold_converts_to_radians() {
        let section = RewardSection {
            angle_threshold_deg: 45.0,
            ..RewardSection::default()
        };
        let config = section.to_config();
        assert!((config.angle_threshold - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert_eq!(
            RewardSection::default().to_config(),
            RewardConfig::default()
        );
    }

    #[test]
    fn empty_environment_list_is_rejected() {
        let config: ExperimentConfig = toml::from_str("[world]\nenvironments = []\n").unwrap();
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("environments"), "{err}");
    }

    #[test]
    fn missing_config_file_names_the_path() {
        let err = load_config(Path::new("/nonexistent/experiment.toml")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/nonexistent/experiment.toml"));
    }

    #[test]
    fn flags_override_config_fields() {
        use clap::Parser;
        let cli = Cli::try_parse_from([
            "navsim",
            "--seed",
            "99",
            "--algorithm",
            "dqn",
            "--out",
            "elsewhere",
            "train",
        ])
        .unwrap();
        assert_eq!(cli.seed, Some(99));
        assert_eq!(cli.algorithm, Some(AlgorithmArg::Dqn));
        assert_eq!(cli.out.as_deref(), Some(Path::new("elsewhere")));
        assert!(matches!(cli.command, Command::Train));
    }

    #[test]
    fn eval_defaults_to_twenty_episodes() {
        use clap::Parser;
        let cli =
            Cli::try_parse_from(["navsim", "eval", "--checkpoint", "out/checkpoint"]).unwrap();
        match cli.command {
            Command::Eval { episodes, .. } => assert_eq!(episodes, 20),
            other => panic!("parsed {other:?}"),
        }
    }

    #[test]
    fn runtime_and_config_errors_map_to_exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Runtime("x".into()).exit_code(), 1);
    }
}
