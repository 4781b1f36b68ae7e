//! Signal, system and noise generation for system-identification runs.
//!
//! Every random quantity of a trial is drawn from its own ChaCha stream,
//! derived from the master seed and the trial index, so the scenario is a
//! pure function of `(RngSpec, ScenarioConfig, trial)`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{dot, TapDelayLine};

/// Which independent random stream of a trial to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Input = 0,
    System = 1,
    Background = 2,
    Impulse = 3,
    Redraw = 4,
}

const STREAMS_PER_TRIAL: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub master_seed: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Stream `kind` of trial `trial`. Distinct `(trial, kind)` pairs map to
    /// distinct ChaCha stream ids under the same key.
    pub fn stream(&self, trial: u64, kind: StreamKind) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(trial * STREAMS_PER_TRIAL + kind as u64);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    /// `w₀ ← −w₀`
    SignFlip,
    /// Fresh unit-norm Gaussian draw.
    Redraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Bernoulli occurrence probability `c` of an impulse.
    pub impulse_prob: f64,
    /// Variance `σ_I²` of an impulse.
    pub impulse_variance: f64,
    /// Background Gaussian noise SNR against the clean system output.
    /// `inf` disables background noise.
    pub snr_db: f64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            impulse_prob: 0.0,
            impulse_variance: 1.0,
            snr_db: f64::INFINITY,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.impulse_prob) {
            return Err(Error::invalid(
                format!("{prefix}.impulse_prob"),
                format!("must lie in [0, 1], got {}", self.impulse_prob),
            ));
        }
        if !(self.impulse_variance.is_finite() && self.impulse_variance > 0.0) {
            return Err(Error::invalid(
                format!("{prefix}.impulse_variance"),
                format!(
                    "must be a finite positive number, got {}",
                    self.impulse_variance
                ),
            ));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::invalid(
                format!("{prefix}.snr_db"),
                format!("must be a number or +inf, got {}", self.snr_db),
            ));
        }
        Ok(())
    }

    /// `c·σ_I²`
    pub fn impulse_power(&self) -> f64 {
        self.impulse_prob * self.impulse_variance
    }
}

/// White Gaussian samples with the given variance.
pub fn gen_wgn<R: Rng + ?Sized>(n_samples: usize, variance: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::invalid(
            "variance",
            format!("must be a finite positive number, got {variance}"),
        ));
    }
    let normal = Normal::new(0.0, variance.sqrt()).expect("finite positive deviation");
    Ok((0..n_samples).map(|_| normal.sample(rng)).collect())
}

/// Bernoulli-Gaussian impulses `v = A·I`, `A ~ Bernoulli(c)`, `I ~ N(0, σ_I²)`.
///
/// Both draws are made for every sample, so the stream position does not
/// depend on `c`.
pub fn gen_bg_impulse<R: Rng + ?Sized>(
    n_samples: usize,
    model: &NoiseModel,
    rng: &mut R,
) -> Result<Vec<f64>> {
    model.validate("noise")?;
    let occurs = Bernoulli::new(model.impulse_prob).expect("probability in [0, 1]");
    let sigma = model.impulse_variance.sqrt();
    Ok((0..n_samples)
        .map(|_| {
            let hit = occurs.sample(rng);
            let amplitude: f64 = StandardNormal.sample(rng);
            if hit {
                sigma * amplitude
            } else {
                0.0
            }
        })
        .collect())
}

/// Background noise variance giving `snr_db` against the clean output power
/// `input_variance·‖w₀‖²` of a white-input FIR system.
pub fn snr_to_variance(w0: &[f64], input_variance: f64, snr_db: f64) -> f64 {
    let power = input_variance * w0.iter().map(|w| w * w).sum::<f64>();
    power / 10f64.powf(snr_db / 10.0)
}

/// `d = w₀ᵀx + g + v`
#[inline]
pub fn desired_signal(w0: &[f64], x: &TapDelayLine, g: f64, v: f64) -> f64 {
    dot(w0, x.as_slice()) + g + v
}

/// Gaussian taps scaled to unit Euclidean norm.
pub fn draw_unknown_system<R: Rng + ?Sized>(num_taps: usize, rng: &mut R) -> Vec<f64> {
    assert!(num_taps >= 1, "an unknown system needs at least one tap");
    loop {
        let taps: Vec<f64> = (0..num_taps).map(|_| StandardNormal.sample(rng)).collect();
        let norm = taps.iter().map(|w| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            return taps.into_iter().map(|w| w / norm).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub taps: Vec<f64>,
    pub change_at: Option<usize>,
    pub change_kind: ChangeKind,
}

impl SystemModel {
    /// Applies the abrupt change if `n` is the change instant. Returns whether
    /// the taps changed.
    pub fn apply_abrupt_change<R: Rng + ?Sized>(&mut self, n: usize, rng: &mut R) -> bool {
        if self.change_at != Some(n) {
            return false;
        }
        match self.change_kind {
            ChangeKind::SignFlip => self.taps.iter_mut().for_each(|w| *w = -*w),
            ChangeKind::Redraw => self.taps = draw_unknown_system(self.taps.len(), rng),
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_taps: usize,
    pub input_variance: f64,
    pub noise: NoiseModel,
    /// Sample index at which the unknown system changes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change_at: Option<usize>,
    #[serde(default = "default_change_kind")]
    pub change_kind: ChangeKind,
}

fn default_change_kind() -> ChangeKind {
    ChangeKind::SignFlip
}

impl ScenarioConfig {
    pub fn validate(&self, prefix: &str, horizon: usize) -> Result<()> {
        if self.num_taps == 0 {
            return Err(Error::invalid(
                format!("{prefix}.num_taps"),
                "must be at least 1",
            ));
        }
        if !(self.input_variance.is_finite() && self.input_variance > 0.0) {
            return Err(Error::invalid(
                format!("{prefix}.input_variance"),
                format!(
                    "must be a finite positive number, got {}",
                    self.input_variance
                ),
            ));
        }
        self.noise.validate(&format!("{prefix}.noise"))?;
        if let Some(at) = self.change_at {
            if at >= horizon {
                return Err(Error::invalid(
                    format!("{prefix}.change_at"),
                    format!("must be below the horizon {horizon}, got {at}"),
                ));
            }
        }
        Ok(())
    }
}

/// One trial's worth of signals, shared by every algorithm under test.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSignals {
    pub input: Vec<f64>,
    /// Noise-free system output `w₀(n)ᵀx(n)`.
    pub clean: Vec<f64>,
    pub desired: Vec<f64>,
    /// Unknown system before the change.
    pub initial_system: Vec<f64>,
}

impl TrialSignals {
    pub fn generate(
        config: &ScenarioConfig,
        rng: &RngSpec,
        trial: u64,
        horizon: usize,
    ) -> Result<Self> {
        config.validate("scenario", horizon)?;
        let input = gen_wgn(
            horizon,
            config.input_variance,
            &mut rng.stream(trial, StreamKind::Input),
        )?;
        let initial_system =
            draw_unknown_system(config.num_taps, &mut rng.stream(trial, StreamKind::System));
        let bg_variance =
            snr_to_variance(&initial_system, config.input_variance, config.noise.snr_db);
        let background = if bg_variance > 0.0 {
            gen_wgn(
                horizon,
                bg_variance,
                &mut rng.stream(trial, StreamKind::Background),
            )?
        } else {
            vec![0.0; horizon]
        };
        let impulses = gen_bg_impulse(
            horizon,
            &config.noise,
            &mut rng.stream(trial, StreamKind::Impulse),
        )?;

        let mut system = SystemModel {
            taps: initial_system.clone(),
            change_at: config.change_at,
            change_kind: config.change_kind,
        };
        let mut redraw = rng.stream(trial, StreamKind::Redraw);
        let mut line = TapDelayLine::new(config.num_taps);
        let mut clean = Vec::with_capacity(horizon);
        let mut desired = Vec::with_capacity(horizon);
        for n in 0..horizon {
            system.apply_abrupt_change(n, &mut redraw);
            line.push(input[n]);
            let y0 = dot(&system.taps, line.as_slice());
            clean.push(y0);
            desired.push(y0 + background[n] + impulses[n]);
        }
        Ok(Self {
            input,
            clean,
            desired,
            initial_system,
        })
    }
}
