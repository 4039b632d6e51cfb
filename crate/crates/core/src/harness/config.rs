//! `key=value` run configuration.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored. Every
//! key except `problem` has a default; see [`RunConfig::default_for`].

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::aggregation::{AggregationError, ChunkPartition, TrimParams, TrimSchedule};
use crate::geometry::{IteratePair, Vector};
use crate::problems::{build_preset, GradientSample, Preset, PresetParams, SaddleProblem};
use crate::protocol::{default_step_size, Aggregator, AgentPopulation, AttackStrategy, PartitionMode};

/// A rejected configuration. `line` is 1-based; 0 means the value came from a
/// default or from the command line.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("config error (line {line}): {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Rdeg,
    Vanilla,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Rdeg => "rdeg",
            Algo::Vanilla => "vanilla",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// `1/(2L)`, or `1/(4L)` for strongly convex-strongly concave problems.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    SignFlip,
    GaussianBlast,
    ConstantShift,
    Collusive,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::SignFlip => "sign-flip",
            AttackKind::GaussianBlast => "gaussian-blast",
            AttackKind::ConstantShift => "constant-shift",
            AttackKind::Collusive => "collusive",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        [
            AttackKind::SignFlip,
            AttackKind::GaussianBlast,
            AttackKind::ConstantShift,
            AttackKind::Collusive,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionKind {
    Fixed,
    Reshuffled,
}

impl PartitionKind {
    pub fn name(self) -> &'static str {
        match self {
            PartitionKind::Fixed => "fixed",
            PartitionKind::Reshuffled => "reshuffled",
        }
    }
}

/// A fully specified, validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: Preset,
    pub dim: usize,
    pub radius: f64,
    pub mu: f64,
    pub matrix_seed: u64,
    pub algo: Algo,
    pub agents: usize,
    pub alpha: f64,
    pub delta: f64,
    pub sigma2: f64,
    pub eta: StepSize,
    pub rounds: usize,
    pub seed: u64,
    pub attack: AttackKind,
    pub attack_scale: f64,
    pub partition_mode: PartitionKind,
    pub trim: TrimSchedule,
}

/// Keys accepted in a config file, in echo order.
pub const CONFIG_KEYS: &[&str] = &[
    "problem",
    "dim",
    "radius",
    "mu",
    "matrix_seed",
    "algo",
    "agents",
    "alpha",
    "delta",
    "sigma2",
    "eta",
    "rounds",
    "seed",
    "attack",
    "attack_scale",
    "partition_mode",
    "trim",
];

impl RunConfig {
    /// Defaults: the ten-dimensional preset with radius 100, `M = 100`,
    /// `α = 0.06`, `δ = 0.05`, `σ² = 10`, automatic step size, 5000 rounds,
    /// seed 0, sign-flip attack with scale 3, fixed partition, desk trimming.
    pub fn default_for(problem: Preset) -> Self {
        let preset = PresetParams::default();
        Self {
            problem,
            dim: preset.dim,
            radius: preset.radius,
            mu: preset.mu,
            matrix_seed: preset.matrix_seed,
            algo: Algo::Rdeg,
            agents: 100,
            alpha: 0.06,
            delta: 0.05,
            sigma2: preset.sigma2,
            eta: StepSize::Auto,
            rounds: 5000,
            seed: 0,
            attack: AttackKind::SignFlip,
            attack_scale: 3.0,
            partition_mode: PartitionKind::Fixed,
            trim: TrimSchedule::Desk,
        }
    }

    pub fn preset_params(&self) -> PresetParams {
        PresetParams {
            dim: self.dim,
            radius: self.radius,
            sigma2: self.sigma2,
            mu: self.mu,
            matrix_seed: self.matrix_seed,
        }
    }

    pub fn build_problem(&self) -> Result<Box<dyn SaddleProblem>, ConfigError> {
        build_preset(self.problem, &self.preset_params())
            .map_err(|e| ConfigError::new(0, format!("problem {}: {e}", self.problem.name())))
    }

    pub fn step_size(&self, problem: &dyn SaddleProblem) -> f64 {
        match self.eta {
            StepSize::Auto => default_step_size(problem),
            StepSize::Fixed(eta) => eta,
        }
    }

    pub fn attack_strategy(&self) -> AttackStrategy {
        let s = self.attack_scale;
        match self.attack {
            AttackKind::SignFlip => AttackStrategy::SignFlip { scale: s },
            AttackKind::GaussianBlast => AttackStrategy::GaussianBlast { std: s },
            AttackKind::ConstantShift => AttackStrategy::ConstantShift {
                shift: GradientSample::new(Vector::filled(self.dim, s), Vector::filled(self.dim, s)),
            },
            AttackKind::Collusive => {
                // Target at distance |s| from the origin along the all-ones direction.
                let entry = s / (self.dim as f64).sqrt();
                AttackStrategy::Collusive {
                    target: IteratePair::new(Vector::filled(self.dim, entry), Vector::filled(self.dim, entry)),
                }
            }
        }
    }

    pub fn population(&self) -> AgentPopulation {
        AgentPopulation::generate(self.agents, self.alpha, self.attack_strategy())
            .expect("validated population parameters")
    }

    pub fn trim_params(&self) -> Result<TrimParams, AggregationError> {
        TrimParams::new(self.alpha, self.delta, self.agents, self.trim)
    }

    pub fn aggregator(&self) -> Result<Aggregator, AggregationError> {
        Ok(match self.algo {
            Algo::Vanilla => Aggregator::Mean,
            Algo::Rdeg => Aggregator::Trimmed {
                params: self.trim_params()?,
                partition: match self.partition_mode {
                    PartitionKind::Fixed => PartitionMode::Fixed(ChunkPartition::alternating(self.agents)?),
                    PartitionKind::Reshuffled => PartitionMode::Reshuffled,
                },
            },
        })
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "problem" => self.problem.name().to_string(),
            "dim" => self.dim.to_string(),
            "radius" => self.radius.to_string(),
            "mu" => self.mu.to_string(),
            "matrix_seed" => self.matrix_seed.to_string(),
            "algo" => self.algo.name().to_string(),
            "agents" => self.agents.to_string(),
            "alpha" => self.alpha.to_string(),
            "delta" => self.delta.to_string(),
            "sigma2" => self.sigma2.to_string(),
            "eta" => match self.eta {
                StepSize::Auto => "auto".to_string(),
                StepSize::Fixed(eta) => eta.to_string(),
            },
            "rounds" => self.rounds.to_string(),
            "seed" => self.seed.to_string(),
            "attack" => self.attack.name().to_string(),
            "attack_scale" => self.attack_scale.to_string(),
            "partition_mode" => self.partition_mode.name().to_string(),
            "trim" => self.trim.name().to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Canonical config text; `parse_config(&cfg.to_text()) == Ok(cfg)`.
    pub fn to_text(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|k| format!("{k}={}\n", self.value_of(k)))
            .collect()
    }

    /// Checks every module precondition. `lines` maps keys to the line that
    /// set them, for diagnostics.
    pub fn validate_with_lines(&self, lines: &HashMap<String, usize>) -> Result<(), ConfigError> {
        let at = |key: &str| lines.get(key).copied().unwrap_or(0);
        let fail = |key: &str, message: String| Err(ConfigError::new(at(key), message));

        if self.dim == 0 {
            return fail("dim", "dim must be positive".into());
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return fail("radius", format!("radius must be positive, got {}", self.radius));
        }
        if self.problem == Preset::ScScQuadratic && !(self.mu.is_finite() && self.mu > 0.0) {
            return fail("mu", format!("mu must be positive, got {}", self.mu));
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return fail("sigma2", format!("sigma2 must be nonnegative, got {}", self.sigma2));
        }
        if let StepSize::Fixed(eta) = self.eta {
            if !(eta.is_finite() && eta > 0.0) {
                return fail("eta", format!("eta must be positive or auto, got {eta}"));
            }
        }
        if self.rounds == 0 {
            return fail("rounds", "rounds must be at least 1".into());
        }
        if !self.attack_scale.is_finite() {
            return fail("attack_scale", "attack_scale must be finite".into());
        }
        if self.attack == AttackKind::GaussianBlast && self.attack_scale < 0.0 {
            return fail("attack_scale", "gaussian-blast attack_scale is a std and must be nonnegative".into());
        }
        if self.agents == 0 {
            return fail("agents", "agents must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail("delta", format!("delta must lie in (0, 1), got {}", self.delta));
        }
        match self.algo {
            Algo::Vanilla => {
                if !(self.alpha >= 0.0 && self.alpha < 1.0) {
                    return fail("alpha", format!("alpha must lie in [0, 1), got {}", self.alpha));
                }
            }
            Algo::Rdeg => {
                if !self.agents.is_multiple_of(2) || self.agents < 2 {
                    return fail(
                        "agents",
                        format!(
                            "agents={}: rdeg needs an even number of agents (at least 2) for the two-chunk trimmed-mean split",
                            self.agents
                        ),
                    );
                }
                if let Err(e) = self.trim_params() {
                    let key = match e {
                        AggregationError::AlphaOutOfRange { .. } => "alpha",
                        AggregationError::ConfidenceOutOfRange { .. } => "delta",
                        _ => "alpha",
                    };
                    let mut message = e.to_string();
                    if self.alpha >= 1.0 / 16.0 {
                        message.push_str(&format!(
                            " (alpha={} is also outside the alpha < 1/16 regime of the trimmed-mean deviation guarantee)",
                            self.alpha
                        ));
                    }
                    return fail(key, message);
                }
            }
        }
        self.build_problem().map_err(|e| ConfigError::new(at("problem"), e.message))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_with_lines(&HashMap::new())
    }

    /// Sets one key from its textual value without validating cross-key
    /// constraints.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("cannot parse {key}={value}"))
        }
        match key {
            "problem" => {
                self.problem = Preset::from_name(value).ok_or_else(|| {
                    format!("unknown problem '{value}' (expected bilinear-sec6 or scsc-quadratic)")
                })?
            }
            "dim" => self.dim = num(key, value)?,
            "radius" => self.radius = num(key, value)?,
            "mu" => self.mu = num(key, value)?,
            "matrix_seed" => self.matrix_seed = num(key, value)?,
            "algo" => {
                self.algo = match value {
                    "rdeg" => Algo::Rdeg,
                    "vanilla" => Algo::Vanilla,
                    _ => return Err(format!("unknown algo '{value}' (expected rdeg or vanilla)")),
                }
            }
            "agents" => self.agents = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "sigma2" => self.sigma2 = num(key, value)?,
            "eta" => {
                self.eta = if value == "auto" {
                    StepSize::Auto
                } else {
                    StepSize::Fixed(num(key, value)?)
                }
            }
            "rounds" => self.rounds = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "attack" => {
                self.attack = AttackKind::from_name(value).ok_or_else(|| {
                    format!(
                        "unknown attack '{value}' (expected sign-flip, gaussian-blast, constant-shift or collusive)"
                    )
                })?
            }
            "attack_scale" => self.attack_scale = num(key, value)?,
            "partition_mode" => {
                self.partition_mode = match value {
                    "fixed" => PartitionKind::Fixed,
                    "reshuffled" => PartitionKind::Reshuffled,
                    _ => return Err(format!("unknown partition_mode '{value}' (expected fixed or reshuffled)")),
                }
            }
            "trim" => {
                self.trim = TrimSchedule::from_name(value)
                    .ok_or_else(|| format!("unknown trim schedule '{value}' (expected desk or theory)"))?
            }
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Parses and validates a config file.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut pairs = Vec::new();
    let mut lines: HashMap<String, usize> = HashMap::new();
    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::new(line_no, format!("expected key=value, got '{content}'")))?;
        let (key, value) = (key.trim(), value.trim());
        if !CONFIG_KEYS.contains(&key) {
            return Err(ConfigError::new(line_no, format!("unknown key '{key}'")));
        }
        if lines.insert(key.to_string(), line_no).is_some() {
            return Err(ConfigError::new(line_no, format!("duplicate key '{key}'")));
        }
        pairs.push((key, value, line_no));
    }

    let (_, problem_name, problem_line) = pairs
        .iter()
        .find(|(k, _, _)| *k == "problem")
        .ok_or_else(|| ConfigError::new(0, "missing required key 'problem'"))?;
    let preset = Preset::from_name(problem_name).ok_or_else(|| {
        ConfigError::new(
            *problem_line,
            format!("unknown problem '{problem_name}' (expected bilinear-sec6 or scsc-quadratic)"),
        )
    })?;
    let mut cfg = RunConfig::default_for(preset);
    for (key, value, line_no) in &pairs {
        cfg.set(key, value).map_err(|m| ConfigError::new(*line_no, m))?;
    }
    cfg.validate_with_lines(&lines)?;
    Ok(cfg)
}
