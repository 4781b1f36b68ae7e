//! Component adaptive FIR filters.
//!
//! Both filters share the same normalized correction direction
//! `x / (ε + ‖x‖²)`; the NSA scales it by `μ·sign(e)`, the NLMS baseline by
//! `μ·e`. Because the NSA only sees the sign of the error, a single large
//! impulse in the desired signal moves the weights no further than an
//! ordinary error sample would.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regularization used when none is given.
pub const DEFAULT_REGULARIZATION: f64 = 1e-4;

/// Three-valued sign: `1`, `0` or `-1`. Zero maps to zero.
#[inline]
pub fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Weight update rule of a component filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    /// Normalized sign algorithm.
    Nsa,
    /// Normalized least mean squares.
    Nlms,
}

impl UpdateRule {
    pub fn name(self) -> &'static str {
        match self {
            UpdateRule::Nsa => "nsa",
            UpdateRule::Nlms => "nlms",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub step_size: f64,
    pub regularization: f64,
    pub num_taps: usize,
}

impl FilterConfig {
    pub fn new(step_size: f64, regularization: f64, num_taps: usize) -> Result<Self> {
        let config = Self {
            step_size,
            regularization,
            num_taps,
        };
        config.validate("filter")?;
        Ok(config)
    }

    /// Checks the invariants, reporting failures under `prefix.<field>`.
    pub fn validate(&self, prefix: &str) -> Result<()> {
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
        if self.num_taps == 0 {
            return Err(Error::invalid(
                format!("{prefix}.num_taps"),
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

/// The most recent `M` input samples, newest first.
///
/// Starts zero-filled, so the first `M - 1` outputs see a partially empty
/// regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct TapDelayLine {
    samples: Vec<f64>,
}

impl TapDelayLine {
    pub fn new(num_taps: usize) -> Self {
        assert!(num_taps >= 1, "a delay line needs at least one tap");
        Self {
            samples: vec![0.0; num_taps],
        }
    }

    /// Builds a delay line holding exactly `samples` (index 0 is the newest).
    pub fn from_samples(samples: Vec<f64>) -> Self {
        assert!(!samples.is_empty(), "a delay line needs at least one tap");
        Self { samples }
    }

    /// Shifts in `sample` as the newest entry and drops the oldest.
    pub fn push(&mut self, sample: f64) {
        self.samples.rotate_right(1);
        self.samples[0] = sample;
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.samples
    }

    /// Squared Euclidean norm of the regressor.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    pub fn clear(&mut self) {
        self.samples.fill(0.0);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One adaptive FIR filter: its weights plus step-size configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    weights: Vec<f64>,
    config: FilterConfig,
}

impl FilterState {
    /// Zero-initialized filter.
    pub fn new(config: FilterConfig) -> Self {
        Self {
            weights: vec![0.0; config.num_taps],
            config,
        }
    }

    pub fn with_weights(config: FilterConfig, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != config.num_taps {
            return Err(Error::invalid(
                "weights",
                format!("expected {} taps, got {}", config.num_taps, weights.len()),
            ));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("weights", "all taps must be finite"));
        }
        Ok(Self { weights, config })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn set_weights_from(&mut self, other: &FilterState) {
        self.weights.copy_from_slice(&other.weights);
    }

    pub fn reset(&mut self) {
        self.weights.fill(0.0);
    }

    /// Filter output `wᵀx`.
    #[inline]
    pub fn predict(&self, x: &TapDelayLine) -> f64 {
        dot(&self.weights, x.as_slice())
    }

    /// `w ← w + μ·sign(e)·x / (ε + ‖x‖²)`
    pub fn nsa_update(&mut self, x: &TapDelayLine, e: f64) {
        let s = f64::from(sign(e));
        if s == 0.0 {
            return;
        }
        let gain = self.config.step_size * s / (self.config.regularization + x.energy());
        self.add_scaled(x, gain);
    }

    /// `w ← w + μ·e·x / (ε + ‖x‖²)`
    pub fn nlms_update(&mut self, x: &TapDelayLine, e: f64) {
        let gain = self.config.step_size * e / (self.config.regularization + x.energy());
        self.add_scaled(x, gain);
    }

    pub fn update(&mut self, rule: UpdateRule, x: &TapDelayLine, e: f64) {
        match rule {
            UpdateRule::Nsa => self.nsa_update(x, e),
            UpdateRule::Nlms => self.nlms_update(x, e),
        }
    }

    fn add_scaled(&mut self, x: &TapDelayLine, gain: f64) {
        debug_assert_eq!(self.weights.len(), x.len());
        for (w, xi) in self.weights.iter_mut().zip(x.as_slice()) {
            *w += gain * xi;
        }
    }
}
