//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use byzsprt::{AttackSpec, DetectorRule, Estimator, HypothesisModel, Placement, Scenario};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    OperatingPoint,
    GammaSweep,
    Sandwich,
    UnknownC,
    Validate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_estimator")]
    pub estimator: Estimator,
    pub model: ModelConfig,
    pub detector: DetectorConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    pub sweep: SweepConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unknown_c: Option<UnknownCConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateConfig>,
}

fn default_seed() -> u64 {
    1
}

fn default_estimator() -> Estimator {
    Estimator::Importance
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Gaussian { mean0: f64, mean1: f64, variance: f64 },
    Bernoulli { p0: f64, p1: f64 },
    Finite { points: Vec<f64>, mass0: Vec<f64>, mass1: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    Voting,
    SumSprt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub sensors: usize,
    #[serde(default = "default_rule")]
    pub rule: RuleKind,
    /// Vote count; defaults to `s - c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    /// Sensors fused by the sum-SPRT; defaults to all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<Vec<usize>>,
    #[serde(default = "default_horizon")]
    pub max_horizon: u64,
}

fn default_rule() -> RuleKind {
    RuleKind::Voting
}

fn default_horizon() -> u64 {
    byzsprt::trial::DEFAULT_MAX_HORIZON
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKindConfig {
    None,
    Flip,
    Suppression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKindConfig,
    #[serde(default)]
    pub compromised: usize,
    /// Suppression push beyond the midpoint, in observation units.
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
    /// Fixed sensor indices; random placement per trial when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<Vec<usize>>,
}

fn default_magnitude() -> f64 {
    10.0
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { kind: AttackKindConfig::None, compromised: 0, magnitude: default_magnitude(), fixed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Explicit symmetric thresholds `a = b`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    /// Log-spaced grid `[from, to]` with `points` entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_spaced: Option<LogGrid>,
    pub trials: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGrid {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnknownCConfig {
    pub c_bar: usize,
    pub actual: Vec<usize>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    /// Largest undecided oracle mass tolerated at the horizon.
    #[serde(default = "default_residual")]
    pub max_residual: f64,
    #[serde(default = "default_z")]
    pub max_z: f64,
}

fn default_residual() -> f64 {
    1e-9
}

fn default_z() -> f64 {
    3.0
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self { max_residual: default_residual(), max_z: default_z() }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    /// Cross-field checks that a single field's type cannot express.
    pub fn check(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        let s = self.detector.sensors;
        let c = self.attack_count();
        if s == 0 {
            return fail("detector.sensors must be at least 1".into());
        }
        if self.attack.kind != AttackKindConfig::None && c == 0 {
            return fail("attack.compromised must be positive for a flip or suppression attack".into());
        }
        if s <= 2 * c {
            return fail(format!("attack: s > 2c is required, got s={s}, c={c}"));
        }
        if self.detector.rule == RuleKind::Voting {
            let r = self.vote_count();
            if !(2 * r > s && r <= s) {
                return fail(format!("detector.r must satisfy s/2 < r <= s, got r={r}, s={s}"));
            }
        }
        if self.detector.r.is_some() && self.detector.rule == RuleKind::SumSprt {
            return fail("detector.r applies to the voting rule only".into());
        }
        if self.detector.subset.is_some() && self.detector.rule == RuleKind::Voting {
            return fail("detector.subset applies to the sum-sprt rule only".into());
        }
        if self.detector.max_horizon == 0 {
            return fail("detector.max_horizon must be positive".into());
        }
        if self.sweep.trials == 0 {
            return fail("sweep.trials must be positive".into());
        }
        let grid = self.thresholds()?;
        if grid.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
            return fail("sweep thresholds must be positive".into());
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return fail("sweep thresholds must be strictly ascending".into());
        }
        if let Some(u) = &self.unknown_c {
            if 2 * u.c_bar >= s {
                return fail(format!("unknown_c: c_bar < s/2 is required, got c_bar={}, s={s}", u.c_bar));
            }
            if let Some(c) = u.actual.iter().find(|&&c| c > u.c_bar) {
                return fail(format!("unknown_c: actual c={c} exceeds c_bar={}", u.c_bar));
            }
            if !(u.tolerance >= 0.0) {
                return fail("unknown_c.tolerance must be non-negative".into());
            }
        }
        match self.experiment {
            Experiment::UnknownC if self.unknown_c.is_none() => {
                return fail("experiment unknown-c needs an [unknown_c] block".into())
            }
            Experiment::Sandwich if self.attack.kind == AttackKindConfig::Suppression => {
                return fail("the sandwich compares against flip attacks; attack.kind must be flip or none".into())
            }
            Experiment::GammaSweep if grid.len() < 2 => {
                return fail("a gamma sweep needs at least two thresholds".into())
            }
            _ => {}
        }
        self.model()?;
        self.scenario()?;
        Ok(())
    }

    pub fn attack_count(&self) -> usize {
        match self.attack.kind {
            AttackKindConfig::None => 0,
            _ => self.attack.compromised,
        }
    }

    pub fn vote_count(&self) -> usize {
        self.detector.r.unwrap_or(self.detector.sensors - self.attack_count())
    }

    pub fn thresholds(&self) -> Result<Vec<f64>, CliError> {
        match (&self.sweep.thresholds, &self.sweep.log_spaced) {
            (Some(t), None) if !t.is_empty() => Ok(t.clone()),
            (None, Some(g)) => {
                if !(g.from > 0.0 && g.to > g.from && g.points >= 2) {
                    return Err(CliError::Config(
                        "sweep.log_spaced needs 0 < from < to and at least two points".into(),
                    ));
                }
                let step = (g.to / g.from).ln() / (g.points - 1) as f64;
                let mut grid: Vec<f64> = (0..g.points).map(|k| g.from * (step * k as f64).exp()).collect();
                grid[g.points - 1] = g.to;
                Ok(grid)
            }
            _ => Err(CliError::Config(
                "sweep needs exactly one of a non-empty `thresholds` list or `log_spaced`".into(),
            )),
        }
    }

    pub fn model(&self) -> Result<HypothesisModel<f64>, CliError> {
        let model = match &self.model {
            ModelConfig::Gaussian { mean0, mean1, variance } => {
                HypothesisModel::gaussian("gaussian", *mean0, *mean1, *variance)
            }
            ModelConfig::Bernoulli { p0, p1 } => HypothesisModel::bernoulli("bernoulli", *p0, *p1),
            ModelConfig::Finite { points, mass0, mass1 } => HypothesisModel::finite("finite", points, mass0, mass1),
        }?;
        model.kl_divergences()?;
        Ok(model)
    }

    pub fn attack_spec(&self) -> AttackSpec<f64> {
        let placement = match &self.attack.fixed {
            Some(ix) => Placement::Fixed(ix.clone()),
            None => Placement::Random,
        };
        match self.attack.kind {
            AttackKindConfig::None => AttackSpec::none(),
            AttackKindConfig::Flip => AttackSpec::flip(self.attack.compromised, placement),
            AttackKindConfig::Suppression => {
                AttackSpec::suppression(self.attack.compromised, self.attack.magnitude, placement)
            }
        }
    }

    pub fn rule(&self) -> DetectorRule {
        match self.detector.rule {
            RuleKind::Voting => DetectorRule::Voting { r: self.vote_count() },
            RuleKind::SumSprt => match &self.detector.subset {
                Some(ix) => DetectorRule::SumSprt { sensors: ix.clone() },
                None => DetectorRule::sum_all(self.detector.sensors),
            },
        }
    }

    pub fn scenario(&self) -> Result<Scenario<f64>, CliError> {
        Ok(Scenario::new(self.model()?, self.detector.sensors, self.rule(), self.attack_spec())?
            .with_max_horizon(self.detector.max_horizon)?)
    }

    /// SHA-256 of the canonical serialization, excluding where results are
    /// written.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let text = toml::to_string(&canonical).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
