//! Convex combination of a fast and a slow component filter.
//!
//! The overall output is `y = λ·y₁ + (1 − λ)·y₂` with `λ = sigmoid(a)`. The
//! auxiliary variable `a` follows a stochastic-gradient rule on either the
//! absolute error (sign cost, the default) or the squared error. With the
//! tracking transfer scheme, every `N₀` iterations `a` is checked against
//! `±a⁺`: saturating low pins `λ` to 0, saturating high pins `λ` to 1 and
//! copies the fast weights into the slow filter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{sign, FilterState, TapDelayLine, UpdateRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingRule {
    /// `a += ρ_a·sign(e)·(y₁ − y₂)·λ(1 − λ)`
    SignCost,
    /// `a += ν_a·e·(y₁ − y₂)·λ(1 − λ)`
    SquaredCost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferScheme {
    /// Plain convex combination: `a` is limited to `[−a⁺, a⁺]` every
    /// iteration and `λ = sigmoid(a)`; no weights are copied.
    None,
    /// Windowed clamp with fast-to-slow weight transfer.
    Tracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CombinerConfig {
    /// Mixing step-size of the sign-cost rule.
    pub rho_a: f64,
    /// Mixing step-size of the squared-cost rule.
    pub nu_a: f64,
    pub a_plus: f64,
    /// Transfer window length `N₀`.
    pub window: u64,
    /// Saturation margin used when reporting `λ_u`.
    pub eps_u: f64,
    pub mixing_rule: MixingRule,
    pub transfer: TransferScheme,
}

impl Default for CombinerConfig {
    fn default() -> Self {
        Self {
            rho_a: 10.0,
            nu_a: 10.0,
            a_plus: 4.0,
            window: 2,
            eps_u: 1e-2,
            mixing_rule: MixingRule::SignCost,
            transfer: TransferScheme::Tracking,
        }
    }
}

impl CombinerConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(
                    format!("{prefix}.{name}"),
                    format!("must be a finite positive number, got {v}"),
                ))
            }
        };
        positive("rho_a", self.rho_a)?;
        positive("nu_a", self.nu_a)?;
        positive("a_plus", self.a_plus)?;
        if self.window == 0 {
            return Err(Error::invalid(
                format!("{prefix}.window"),
                "must be at least 1",
            ));
        }
        if !(self.eps_u > 0.0 && self.eps_u < self.a_plus) {
            return Err(Error::invalid(
                format!("{prefix}.eps_u"),
                format!(
                    "must lie in (0, a_plus = {}), got {}",
                    self.a_plus, self.eps_u
                ),
            ));
        }
        Ok(())
    }
}

/// `1 / (1 + e^{−a})`
#[inline]
pub fn lambda_from_a(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

#[inline]
pub fn combined_output(lambda: f64, y_fast: f64, y_slow: f64) -> f64 {
    lambda * y_fast + (1.0 - lambda) * y_slow
}

#[inline]
pub fn combined_error(lambda: f64, e_fast: f64, e_slow: f64) -> f64 {
    lambda * e_fast + (1.0 - lambda) * e_slow
}

/// Sign-cost update of the auxiliary variable. Not clamped.
#[inline]
pub fn update_a_sign(a: f64, e: f64, y_fast: f64, y_slow: f64, lambda: f64, rho_a: f64) -> f64 {
    a + rho_a * f64::from(sign(e)) * (y_fast - y_slow) * lambda * (1.0 - lambda)
}

/// Squared-cost update of the auxiliary variable. Not clamped.
#[inline]
pub fn update_a_grad(a: f64, e: f64, y_fast: f64, y_slow: f64, lambda: f64, nu_a: f64) -> f64 {
    a + nu_a * e * (y_fast - y_slow) * lambda * (1.0 - lambda)
}

/// Elementwise `λ·w₁ + (1 − λ)·w₂`.
pub fn combined_weights(lambda: f64, w_fast: &[f64], w_slow: &[f64]) -> Vec<f64> {
    assert_eq!(
        w_fast.len(),
        w_slow.len(),
        "component filters must have the same length"
    );
    w_fast
        .iter()
        .zip(w_slow)
        .map(|(w1, w2)| lambda * w1 + (1.0 - lambda) * w2)
        .collect()
}

/// Mixing parameter snapped to 0 or 1 when `a` is within `eps_u` of a bound.
#[inline]
pub fn lambda_reported(a: f64, lambda: f64, a_plus: f64, eps_u: f64) -> f64 {
    if a >= a_plus - eps_u {
        1.0
    } else if a <= -a_plus + eps_u {
        0.0
    } else {
        lambda
    }
}

/// Largest sign-rule step size for which the linearized error magnitude
/// still contracts: `2|e| / ((y₁ − y₂)²·λ²·(1 − λ)²)`.
///
/// Returns `+∞` when the denominator vanishes.
pub fn rho_a_upper_bound(e: f64, y_fast: f64, y_slow: f64, lambda: f64) -> f64 {
    let diff = y_fast - y_slow;
    let g = lambda * (1.0 - lambda);
    let denom = diff * diff * g * g;
    if denom == 0.0 {
        f64::INFINITY
    } else {
        2.0 * e.abs() / denom
    }
}

/// Everything observed during one combiner iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub y_fast: f64,
    pub y_slow: f64,
    pub y: f64,
    pub e_fast: f64,
    pub e_slow: f64,
    pub e: f64,
    /// `a(n)` used for the output at this sample.
    pub a: f64,
    /// `λ(n)` used for the output at this sample.
    pub lambda: f64,
    /// `λ_u(n)`, see [`lambda_reported`].
    pub lambda_reported: f64,
    pub transfer_fired: bool,
}

/// State of a two-filter convex combination.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerState {
    pub a: f64,
    pub lambda: f64,
    /// Index of the next iteration, starting at 1.
    pub n: u64,
    pub fast: FilterState,
    pub slow: FilterState,
    pub fast_rule: UpdateRule,
    pub slow_rule: UpdateRule,
    pub config: CombinerConfig,
}

impl CombinerState {
    /// Two NSA components with `a = 0`, `λ = 0.5`.
    pub fn new(fast: FilterState, slow: FilterState, config: CombinerConfig) -> Result<Self> {
        Self::with_rules(fast, UpdateRule::Nsa, slow, UpdateRule::Nsa, config)
    }

    pub fn with_rules(
        fast: FilterState,
        fast_rule: UpdateRule,
        slow: FilterState,
        slow_rule: UpdateRule,
        config: CombinerConfig,
    ) -> Result<Self> {
        config.validate("combiner")?;
        if fast.weights().len() != slow.weights().len() {
            return Err(Error::invalid(
                "combiner.slow.num_taps",
                format!(
                    "component lengths differ ({} vs {})",
                    fast.weights().len(),
                    slow.weights().len()
                ),
            ));
        }
        Ok(Self {
            a: 0.0,
            lambda: 0.5,
            n: 1,
            fast,
            slow,
            fast_rule,
            slow_rule,
            config,
        })
    }

    pub fn num_taps(&self) -> usize {
        self.fast.weights().len()
    }

    /// Equivalent single filter `λ·w₁ + (1 − λ)·w₂` at the current `λ`.
    pub fn combined_weights(&self) -> Vec<f64> {
        combined_weights(self.lambda, self.fast.weights(), self.slow.weights())
    }

    /// Whether iteration `self.n` is a window hit, i.e. `(n − 1) mod N₀ = 0`.
    pub fn at_window(&self) -> bool {
        (self.n.wrapping_sub(1)) % self.config.window == 0
    }

    /// Tracking clamp and transfer for the iteration `self.n`.
    ///
    /// On a window hit, `a < −a⁺` sets `a = −a⁺, λ = 0`; `a ≥ a⁺` sets
    /// `a = a⁺, λ = 1` and copies the fast weights into the slow filter.
    /// Returns whether the copy happened.
    pub fn clamp_and_transfer(&mut self) -> bool {
        if !self.at_window() {
            return false;
        }
        let a_plus = self.config.a_plus;
        if self.a < -a_plus {
            self.a = -a_plus;
            self.lambda = 0.0;
        }
        if self.a >= a_plus {
            self.a = a_plus;
            self.lambda = 1.0;
            self.slow.set_weights_from(&self.fast);
            return true;
        }
        false
    }

    /// Limits `a` to `[−a⁺, a⁺]` and recomputes `λ` from it.
    fn clamp_standard(&mut self) {
        let a_plus = self.config.a_plus;
        self.a = self.a.clamp(-a_plus, a_plus);
        self.lambda = lambda_from_a(self.a);
    }

    /// One full iteration on regressor `x` and desired sample `d`.
    pub fn step(&mut self, x: &TapDelayLine, d: f64) -> StepDiagnostics {
        let a = self.a;
        let lambda = self.lambda;

        let y_fast = self.fast.predict(x);
        let y_slow = self.slow.predict(x);
        let e_fast = d - y_fast;
        let e_slow = d - y_slow;
        let y = combined_output(lambda, y_fast, y_slow);
        let e = combined_error(lambda, e_fast, e_slow);

        self.fast.update(self.fast_rule, x, e_fast);
        self.slow.update(self.slow_rule, x, e_slow);

        self.a = match self.config.mixing_rule {
            MixingRule::SignCost => update_a_sign(a, e, y_fast, y_slow, lambda, self.config.rho_a),
            MixingRule::SquaredCost => {
                update_a_grad(a, e, y_fast, y_slow, lambda, self.config.nu_a)
            }
        };
        self.lambda = lambda_from_a(self.a);

        let transfer_fired = match self.config.transfer {
            TransferScheme::Tracking => self.clamp_and_transfer(),
            TransferScheme::None => {
                self.clamp_standard();
                false
            }
        };
        self.n += 1;

        StepDiagnostics {
            y_fast,
            y_slow,
            y,
            e_fast,
            e_slow,
            e,
            a,
            lambda,
            lambda_reported: lambda_reported(a, lambda, self.config.a_plus, self.config.eps_u),
            transfer_fired,
        }
    }
}
