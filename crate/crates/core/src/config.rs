//! Declarative experiment configuration and the built-in presets.

use serde::{Deserialize, Serialize};

use crate::combiner::{CombinerConfig, MixingRule, TransferScheme};
use crate::error::{Error, Result};
use crate::filters::{UpdateRule, DEFAULT_REGULARIZATION};
use crate::scenario::{ChangeKind, NoiseModel, RngSpec, ScenarioConfig};

fn default_regularization() -> f64 {
    DEFAULT_REGULARIZATION
}

/// One component filter of an algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub rule: UpdateRule,
    pub step_size: f64,
    #[serde(default = "default_regularization")]
    pub regularization: f64,
}

impl ComponentSpec {
    pub fn nsa(step_size: f64) -> Self {
        Self {
            rule: UpdateRule::Nsa,
            step_size,
            regularization: DEFAULT_REGULARIZATION,
        }
    }

    pub fn nlms(step_size: f64) -> Self {
        Self {
            rule: UpdateRule::Nlms,
            step_size,
            regularization: DEFAULT_REGULARIZATION,
        }
    }

    fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::invalid(
                format!("{prefix}.step_size"),
                format!("must be a finite positive number, got {}", self.step_size),
            ));
        }
        if !(self.regularization.is_finite() && self.regularization > 0.0) {
            return Err(Error::invalid(
                format!("{prefix}.regularization"),
                format!(
                    "must be a finite positive number, got {}",
                    self.regularization
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgorithmKind {
    /// A standalone component filter.
    Single {
        #[serde(flatten)]
        filter: ComponentSpec,
    },
    /// Convex combination of a fast and a slow filter.
    Combination {
        fast: ComponentSpec,
        slow: ComponentSpec,
        #[serde(default)]
        combiner: CombinerConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    /// Label used in output file names.
    pub name: String,
    #[serde(flatten)]
    pub kind: AlgorithmKind,
}

impl AlgorithmSpec {
    pub fn single(name: &str, filter: ComponentSpec) -> Self {
        Self {
            name: name.to_owned(),
            kind: AlgorithmKind::Single { filter },
        }
    }

    pub fn combination(
        name: &str,
        fast: ComponentSpec,
        slow: ComponentSpec,
        combiner: CombinerConfig,
    ) -> Self {
        Self {
            name: name.to_owned(),
            kind: AlgorithmKind::Combination {
                fast,
                slow,
                combiner,
            },
        }
    }

    pub fn is_combination(&self) -> bool {
        matches!(self.kind, AlgorithmKind::Combination { .. })
    }

    fn validate(&self, prefix: &str) -> Result<()> {
        let valid_name = !self.name.is_empty()
            && self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !valid_name {
            return Err(Error::invalid(
                format!("{prefix}.name"),
                format!(
                    "must be non-empty and use only ASCII letters, digits, '-' or '_', got {:?}",
                    self.name
                ),
            ));
        }
        match &self.kind {
            AlgorithmKind::Single { filter } => filter.validate(prefix),
            AlgorithmKind::Combination {
                fast,
                slow,
                combiner,
            } => {
                fast.validate(&format!("{prefix}.fast"))?;
                slow.validate(&format!("{prefix}.slow"))?;
                combiner.validate(&format!("{prefix}.combiner"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trials: u64,
    pub horizon: usize,
    pub seed: u64,
    /// Samples at the end of each trial treated as steady state. Defaults to
    /// the final 10% of the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_window: Option<usize>,
    /// Absolute convergence threshold. When absent, each curve is measured
    /// against its own steady state plus `convergence_margin_db`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_threshold_db: Option<f64>,
    #[serde(default = "default_convergence_margin_db")]
    pub convergence_margin_db: f64,
    /// Tolerance for the combination-optimality verdict.
    #[serde(default = "default_tol_db")]
    pub tol_db: f64,
    pub scenario: ScenarioConfig,
    pub algorithms: Vec<AlgorithmSpec>,
}

fn default_convergence_margin_db() -> f64 {
    3.0
}

fn default_tol_db() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn rng(&self) -> RngSpec {
        RngSpec::new(self.seed)
    }

    pub fn steady_window(&self) -> usize {
        self.steady_window
            .unwrap_or_else(|| (self.horizon / 10).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        let window = self.steady_window();
        if window == 0 || window >= self.horizon {
            return Err(Error::invalid(
                "steady_window",
                format!(
                    "must lie in [1, horizon = {}), got {}",
                    self.horizon, window
                ),
            ));
        }
        if let Some(t) = self.convergence_threshold_db {
            if !t.is_finite() {
                return Err(Error::invalid("convergence_threshold_db", "must be finite"));
            }
        }
        if !(self.convergence_margin_db.is_finite() && self.convergence_margin_db >= 0.0) {
            return Err(Error::invalid(
                "convergence_margin_db",
                "must be a finite non-negative number",
            ));
        }
        if !(self.tol_db.is_finite() && self.tol_db >= 0.0) {
            return Err(Error::invalid(
                "tol_db",
                "must be a finite non-negative number",
            ));
        }
        self.scenario.validate("scenario", self.horizon)?;
        if self.algorithms.is_empty() {
            return Err(Error::invalid(
                "algorithms",
                "at least one algorithm is required",
            ));
        }
        for (i, alg) in self.algorithms.iter().enumerate() {
            alg.validate(&format!("algorithms[{i}]"))?;
            if self.algorithms[..i].iter().any(|a| a.name == alg.name) {
                return Err(Error::invalid(
                    format!("algorithms[{i}].name"),
                    format!("duplicate algorithm name {:?}", alg.name),
                ));
            }
        }
        Ok(())
    }

    pub fn algorithm(&self, name: &str) -> Option<&AlgorithmSpec> {
        self.algorithms.iter().find(|a| a.name == name)
    }

    /// Built-in preset by name.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "example1" => Ok(Preset::Example1.config()),
            "example2" => Ok(Preset::Example2.config()),
            other => Err(Error::invalid(
                "preset",
                format!("unknown preset {other:?}; expected example1 or example2"),
            )),
        }
    }
}

/// The two impulsive-noise system-identification setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// `σ_I² = 10⁴/12`, 10 dB SNR, `μ₂ = 0.005`.
    Example1,
    /// `σ_I² = 10⁴/20`, 5 dB SNR, `μ₂ = 0.008`.
    Example2,
}

impl Preset {
    pub const FAST_STEP: f64 = 0.05;
    pub const IMPULSE_PROB: f64 = 0.01;
    pub const HORIZON: usize = 20_000;
    pub const CHANGE_AT: usize = 10_000;
    pub const NUM_TAPS: usize = 10;
    pub const TRIALS: u64 = 50;

    pub fn slow_step(self) -> f64 {
        match self {
            Preset::Example1 => 0.005,
            Preset::Example2 => 0.008,
        }
    }

    pub fn noise(self) -> NoiseModel {
        match self {
            Preset::Example1 => NoiseModel {
                impulse_prob: Self::IMPULSE_PROB,
                impulse_variance: 1e4 / 12.0,
                snr_db: 10.0,
            },
            Preset::Example2 => NoiseModel {
                impulse_prob: Self::IMPULSE_PROB,
                impulse_variance: 1e4 / 20.0,
                snr_db: 5.0,
            },
        }
    }

    pub fn config(self) -> ExperimentConfig {
        let fast = ComponentSpec::nsa(Self::FAST_STEP);
        let slow = ComponentSpec::nsa(self.slow_step());
        let proposed = CombinerConfig::default();
        ExperimentConfig {
            trials: Self::TRIALS,
            horizon: Self::HORIZON,
            seed: 1,
            steady_window: None,
            convergence_threshold_db: None,
            convergence_margin_db: default_convergence_margin_db(),
            tol_db: default_tol_db(),
            scenario: ScenarioConfig {
                num_taps: Self::NUM_TAPS,
                input_variance: 1.0,
                noise: self.noise(),
                change_at: Some(Self::CHANGE_AT),
                change_kind: ChangeKind::SignFlip,
            },
            algorithms: vec![
                AlgorithmSpec::combination("nsa-nsa", fast, slow, proposed),
                AlgorithmSpec::single("nsa-fast", fast),
                AlgorithmSpec::single("nsa-slow", slow),
                AlgorithmSpec::combination(
                    "nsa-nsa-no-transfer",
                    fast,
                    slow,
                    CombinerConfig {
                        transfer: TransferScheme::None,
                        ..proposed
                    },
                ),
                AlgorithmSpec::combination(
                    "nsa-nsa-squared",
                    fast,
                    slow,
                    CombinerConfig {
                        mixing_rule: MixingRule::SquaredCost,
                        ..proposed
                    },
                ),
                AlgorithmSpec::combination(
                    "nlms-nsa",
                    ComponentSpec::nlms(Self::FAST_STEP),
                    slow,
                    CombinerConfig {
                        mixing_rule: MixingRule::SquaredCost,
                        ..proposed
                    },
                ),
            ],
        }
    }
}
