//! Convex combination of two normalized sign-algorithm (NSA) adaptive filters,
//! robust to impulsive noise, together with the simulation machinery used to
//! evaluate it on system-identification problems.
//!
//! The crate is organised bottom-up:
//!
//! - [`filters`]: tap-delay line and the NSA / NLMS component filters.
//! - [`combiner`]: the mixing parameter, its sign-cost and squared-cost
//!   updates, clamping, and the windowed tracking weight transfer.
//! - [`scenario`]: unknown system, white input, and Bernoulli-Gaussian
//!   impulsive noise generation with reproducible RNG streams.
//! - [`experiment`]: Monte Carlo learning curves, steady-state EMSE
//!   estimates and combination-optimality verdicts.
//! - [`cli`]: configuration files, presets, CSV output and the `run`,
//!   `sweep` and `compare` subcommands.

pub mod cli;
pub mod combiner;
pub mod config;
pub mod error;
pub mod experiment;
pub mod filters;
pub mod scenario;

pub use combiner::{CombinerConfig, CombinerState, MixingRule, StepDiagnostics, TransferScheme};
pub use config::{AlgorithmKind, AlgorithmSpec, ComponentSpec, ExperimentConfig};
pub use error::{Error, Result};
pub use experiment::{LearningCurve, MonteCarloResult, SteadyStateReport, Verdict};
pub use filters::{FilterConfig, FilterState, TapDelayLine, UpdateRule};
pub use scenario::{ChangeKind, NoiseModel, RngSpec, ScenarioConfig, SystemModel};
