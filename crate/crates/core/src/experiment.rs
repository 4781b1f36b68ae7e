//! Monte Carlo evaluation: learning curves, mixing trajectories, steady-state
//! EMSE estimates and combination-optimality verdicts.
//!
//! All algorithms of a trial run on the same input and desired signals.
//! Trial results are reduced in trial-index order, so the output does not
//! depend on how many worker threads were used.

use rayon::prelude::*;

use crate::combiner::CombinerState;
use crate::config::{AlgorithmKind, AlgorithmSpec, ExperimentConfig};
use crate::error::{Error, Result};
use crate::filters::{FilterConfig, FilterState, TapDelayLine, UpdateRule};
use crate::scenario::TrialSignals;

/// Number of consecutive samples a curve must stay below the threshold to
/// count as converged.
pub const CONVERGENCE_RUN: usize = 100;

/// `(w₀ − w)ᵀx`
pub fn a_priori_error(w0: &[f64], w: &[f64], x: &TapDelayLine) -> f64 {
    assert_eq!(
        w0.len(),
        w.len(),
        "weight vectors must have the same length"
    );
    w0.iter()
        .zip(w)
        .zip(x.as_slice())
        .map(|((a, b), xi)| (a - b) * xi)
        .sum()
}

/// `10·log₁₀(mean)`; a zero mean maps to `−∞`.
pub fn emse_db(mean_sq: f64) -> f64 {
    if mean_sq == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * mean_sq.log10()
    }
}

/// Mean of `e_{a,1}·e_{a,2}` over the final `window` samples of every trial.
pub fn estimate_cross_emse(fast: &[Vec<f64>], slow: &[Vec<f64>], window: usize) -> f64 {
    assert_eq!(fast.len(), slow.len(), "trial counts differ");
    assert!(!fast.is_empty() && window > 0);
    let mut sum = 0.0;
    for (a, b) in fast.iter().zip(slow) {
        assert!(
            a.len() == b.len() && a.len() >= window,
            "trajectory shorter than window"
        );
        let start = a.len() - window;
        sum += a[start..]
            .iter()
            .zip(&b[start..])
            .map(|(x, y)| x * y)
            .sum::<f64>();
    }
    sum / (window * fast.len()) as f64
}

/// Steady-state EMSE of the combination when the component a-priori errors
/// are partially uncorrelated: `J₁₂ + ΔJ₁ΔJ₂ / (ΔJ₁ + ΔJ₂)` with
/// `ΔJᵢ = Jᵢ − J₁₂`.
pub fn predicted_combined_emse(j_fast: f64, j_slow: f64, j_cross: f64) -> f64 {
    let d1 = j_fast - j_cross;
    let d2 = j_slow - j_cross;
    j_cross + d1 * d2 / (d1 + d2)
}

/// Mean steady-state mixing parameter `ΔJ₂ / (ΔJ₁ + ΔJ₂)`, limited to
/// `[1 − λ⁺, λ⁺]`.
pub fn predicted_lambda(j_fast: f64, j_slow: f64, j_cross: f64, lambda_plus: f64) -> f64 {
    let d1 = j_fast - j_cross;
    let d2 = j_slow - j_cross;
    (d2 / (d1 + d2)).clamp(1.0 - lambda_plus, lambda_plus)
}

/// First index from which the curve stays below `threshold_db` for
/// [`CONVERGENCE_RUN`] consecutive samples.
pub fn convergence_time(curve_db: &[f64], threshold_db: f64) -> Option<usize> {
    let mut run_start = 0;
    let mut run = 0;
    for (n, &v) in curve_db.iter().enumerate() {
        if v < threshold_db {
            if run == 0 {
                run_start = n;
            }
            run += 1;
            if run >= CONVERGENCE_RUN {
                return Some(run_start);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// Trailing moving average over up to `width` samples.
pub fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    assert!(width >= 1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (n, v) in values.iter().enumerate() {
        acc += v;
        if n >= width {
            acc -= values[n - width];
        }
        out.push(acc / (n + 1).min(width) as f64);
    }
    out
}

/// Trial-averaged squared a-priori error per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub mean_sq: Vec<f64>,
}

impl LearningCurve {
    pub fn db(&self) -> Vec<f64> {
        self.mean_sq.iter().map(|&v| emse_db(v)).collect()
    }

    pub fn len(&self) -> usize {
        self.mean_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_sq.is_empty()
    }

    /// Mean over the final `window` samples.
    pub fn steady_state(&self, window: usize) -> f64 {
        let start = self.mean_sq.len().saturating_sub(window);
        let tail = &self.mean_sq[start..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }

    pub fn steady_state_db(&self, window: usize) -> f64 {
        emse_db(self.steady_state(window))
    }
}

/// Trial-averaged mixing parameter and auxiliary variable per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingCurve {
    pub lambda_mean: Vec<f64>,
    pub a_mean: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    MatchesBest,
    BetterThanBoth,
    Violation,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::MatchesBest => "matches_best",
            Verdict::BetterThanBoth => "better_than_both",
            Verdict::Violation => "violation",
        }
    }
}

/// Steady-state estimates over the final window of every trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateReport {
    /// `J_ex,1`
    pub j_fast: f64,
    /// `J_ex,2`
    pub j_slow: f64,
    /// `J_ex,12`
    pub j_cross: f64,
    /// `J_ex`
    pub j_combined: f64,
    /// `J_ex,u`, using the saturated mixing parameter `λ_u`.
    pub j_reported: f64,
    /// Mean `λ` over the window.
    pub lambda_bar: f64,
    /// Within-window variance of `λ`, averaged over trials.
    pub lambda_var: f64,
    pub verdict: Verdict,
}

/// Classifies the combined EMSE against the components, comparing in dB.
///
/// `MatchesBest` when within `tol_db` of the better component;
/// `BetterThanBoth` when more than `tol_db` below it and, if the cross-EMSE
/// is below both components, within `tol_db` of
/// [`predicted_combined_emse`]; `Violation` otherwise.
pub fn check_optimality(report: &SteadyStateReport, tol_db: f64) -> Verdict {
    let best = report.j_fast.min(report.j_slow);
    let combined_db = emse_db(report.j_combined);
    let best_db = emse_db(best);
    if (combined_db - best_db).abs() <= tol_db || combined_db == best_db {
        return Verdict::MatchesBest;
    }
    if combined_db < best_db - tol_db {
        if report.j_cross < best {
            let predicted = predicted_combined_emse(report.j_fast, report.j_slow, report.j_cross);
            if (combined_db - emse_db(predicted)).abs() <= tol_db {
                return Verdict::BetterThanBoth;
            }
            return Verdict::Violation;
        }
        return Verdict::BetterThanBoth;
    }
    Verdict::Violation
}

/// Per-sample record of one algorithm over one trial.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    /// A-priori error of the overall filter.
    pub ea: Vec<f64>,
    /// Overall output `y(n)`.
    pub output: Vec<f64>,
    pub mixing: Option<MixingTrace>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MixingTrace {
    pub ea_fast: Vec<f64>,
    pub ea_slow: Vec<f64>,
    pub lambda: Vec<f64>,
    pub lambda_reported: Vec<f64>,
    pub a: Vec<f64>,
    pub transfers: usize,
}

/// Live state of one algorithm during a trial.
#[derive(Debug, Clone)]
pub enum Runner {
    Single {
        filter: FilterState,
        rule: UpdateRule,
    },
    Combination(Box<CombinerState>),
}

impl Runner {
    pub fn new(spec: &AlgorithmSpec, num_taps: usize) -> Result<Self> {
        match &spec.kind {
            AlgorithmKind::Single { filter } => Ok(Runner::Single {
                filter: FilterState::new(FilterConfig::new(
                    filter.step_size,
                    filter.regularization,
                    num_taps,
                )?),
                rule: filter.rule,
            }),
            AlgorithmKind::Combination {
                fast,
                slow,
                combiner,
            } => {
                let f = FilterState::new(FilterConfig::new(
                    fast.step_size,
                    fast.regularization,
                    num_taps,
                )?);
                let s = FilterState::new(FilterConfig::new(
                    slow.step_size,
                    slow.regularization,
                    num_taps,
                )?);
                Ok(Runner::Combination(Box::new(CombinerState::with_rules(
                    f, fast.rule, s, slow.rule, *combiner,
                )?)))
            }
        }
    }
}

fn run_algorithm(
    spec: &AlgorithmSpec,
    signals: &TrialSignals,
    num_taps: usize,
) -> Result<Trajectory> {
    let horizon = signals.input.len();
    let mut runner = Runner::new(spec, num_taps)?;
    let mut line = TapDelayLine::new(num_taps);
    let mut traj = Trajectory {
        ea: Vec::with_capacity(horizon),
        output: Vec::with_capacity(horizon),
        mixing: None,
    };
    match &mut runner {
        Runner::Single { filter, rule } => {
            for n in 0..horizon {
                line.push(signals.input[n]);
                let y = filter.predict(&line);
                traj.ea.push(signals.clean[n] - y);
                traj.output.push(y);
                filter.update(*rule, &line, signals.desired[n] - y);
            }
        }
        Runner::Combination(state) => {
            let mut mix = MixingTrace {
                ea_fast: Vec::with_capacity(horizon),
                ea_slow: Vec::with_capacity(horizon),
                lambda: Vec::with_capacity(horizon),
                lambda_reported: Vec::with_capacity(horizon),
                a: Vec::with_capacity(horizon),
                transfers: 0,
            };
            for n in 0..horizon {
                line.push(signals.input[n]);
                let d = state.step(&line, signals.desired[n]);
                let clean = signals.clean[n];
                traj.ea.push(clean - d.y);
                traj.output.push(d.y);
                mix.ea_fast.push(clean - d.y_fast);
                mix.ea_slow.push(clean - d.y_slow);
                mix.lambda.push(d.lambda);
                mix.lambda_reported.push(d.lambda_reported);
                mix.a.push(d.a);
                mix.transfers += usize::from(d.transfer_fired);
            }
            traj.mixing = Some(mix);
        }
    }
    Ok(traj)
}

/// Runs every configured algorithm on trial `trial`'s signals.
pub fn run_trial(config: &ExperimentConfig, trial: u64) -> Result<Vec<Trajectory>> {
    config.validate()?;
    run_trial_unchecked(config, trial)
}

fn run_trial_unchecked(config: &ExperimentConfig, trial: u64) -> Result<Vec<Trajectory>> {
    let signals = TrialSignals::generate(&config.scenario, &config.rng(), trial, config.horizon)?;
    config
        .algorithms
        .iter()
        .map(|spec| run_algorithm(spec, &signals, config.scenario.num_taps))
        .collect()
}

/// Per-algorithm quantities one trial contributes to the averages.
#[derive(Debug, Clone)]
struct TrialSummary {
    ea_sq: Vec<f64>,
    lambda: Vec<f64>,
    a: Vec<f64>,
    window: Option<WindowStats>,
}

#[derive(Debug, Clone, Copy, Default)]
struct WindowStats {
    j_fast: f64,
    j_slow: f64,
    j_cross: f64,
    j_combined: f64,
    j_reported: f64,
    lambda_mean: f64,
    lambda_var: f64,
}

fn summarize(traj: Trajectory, window: usize) -> TrialSummary {
    let ea_sq: Vec<f64> = traj.ea.iter().map(|e| e * e).collect();
    match traj.mixing {
        None => TrialSummary {
            ea_sq,
            lambda: Vec::new(),
            a: Vec::new(),
            window: None,
        },
        Some(mix) => {
            let start = traj.ea.len() - window;
            let w = window as f64;
            let mean = |f: &dyn Fn(usize) -> f64| (start..traj.ea.len()).map(f).sum::<f64>() / w;
            let lambda_mean = mean(&|n| mix.lambda[n]);
            let stats = WindowStats {
                j_fast: mean(&|n| mix.ea_fast[n] * mix.ea_fast[n]),
                j_slow: mean(&|n| mix.ea_slow[n] * mix.ea_slow[n]),
                j_cross: mean(&|n| mix.ea_fast[n] * mix.ea_slow[n]),
                j_combined: mean(&|n| ea_sq[n]),
                j_reported: mean(&|n| {
                    let lu = mix.lambda_reported[n];
                    let e = lu * mix.ea_fast[n] + (1.0 - lu) * mix.ea_slow[n];
                    e * e
                }),
                lambda_mean,
                lambda_var: mean(&|n| (mix.lambda[n] - lambda_mean).powi(2)),
            };
            TrialSummary {
                ea_sq,
                lambda: mix.lambda,
                a: mix.a,
                window: Some(stats),
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Accumulator {
    ea_sq: Vec<f64>,
    lambda: Vec<f64>,
    a: Vec<f64>,
    window: Option<WindowStats>,
}

impl Accumulator {
    fn new(first: TrialSummary) -> Self {
        Self {
            ea_sq: first.ea_sq,
            lambda: first.lambda,
            a: first.a,
            window: first.window,
        }
    }

    fn add(&mut self, t: &TrialSummary) {
        add_into(&mut self.ea_sq, &t.ea_sq);
        add_into(&mut self.lambda, &t.lambda);
        add_into(&mut self.a, &t.a);
        if let (Some(acc), Some(w)) = (self.window.as_mut(), t.window) {
            acc.j_fast += w.j_fast;
            acc.j_slow += w.j_slow;
            acc.j_cross += w.j_cross;
            acc.j_combined += w.j_combined;
            acc.j_reported += w.j_reported;
            acc.lambda_mean += w.lambda_mean;
            acc.lambda_var += w.lambda_var;
        }
    }
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// Averaged results for one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmResult {
    pub name: String,
    pub curve: LearningCurve,
    pub mixing: Option<MixingCurve>,
    /// Combined-filter steady-state EMSE (linear scale).
    pub steady_state: f64,
    pub report: Option<SteadyStateReport>,
}

impl AlgorithmResult {
    pub fn steady_state_db(&self) -> f64 {
        emse_db(self.steady_state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub trials: u64,
    pub steady_window: usize,
    pub algorithms: Vec<AlgorithmResult>,
}

impl MonteCarloResult {
    pub fn get(&self, name: &str) -> Option<&AlgorithmResult> {
        self.algorithms.iter().find(|a| a.name == name)
    }
}

/// Runs all trials on up to `jobs` threads and averages them.
pub fn run_monte_carlo(config: &ExperimentConfig, jobs: usize) -> Result<MonteCarloResult> {
    config.validate()?;
    let jobs = jobs.max(1);
    let window = config.steady_window();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid("jobs", e.to_string()))?;

    let chunk = (jobs * 2) as u64;
    let mut accs: Option<Vec<Accumulator>> = None;
    let mut next = 0u64;
    while next < config.trials {
        let end = (next + chunk).min(config.trials);
        let batch: Vec<Result<Vec<TrialSummary>>> = pool.install(|| {
            (next..end)
                .into_par_iter()
                .map(|trial| {
                    let trajs = run_trial_unchecked(config, trial)?;
                    Ok(trajs.into_iter().map(|t| summarize(t, window)).collect())
                })
                .collect()
        });
        for summaries in batch {
            let summaries = summaries?;
            match accs.as_mut() {
                None => accs = Some(summaries.into_iter().map(Accumulator::new).collect()),
                Some(accs) => accs.iter_mut().zip(&summaries).for_each(|(a, s)| a.add(s)),
            }
        }
        next = end;
    }

    let trials = config.trials as f64;
    let scale = |v: Vec<f64>| v.into_iter().map(|x| x / trials).collect::<Vec<f64>>();
    let algorithms = config
        .algorithms
        .iter()
        .zip(accs.expect("at least one trial"))
        .map(|(spec, acc)| {
            let curve = LearningCurve {
                mean_sq: scale(acc.ea_sq),
            };
            let steady_state = curve.steady_state(window);
            let (mixing, report) = match acc.window {
                None => (None, None),
                Some(w) => {
                    let mut report = SteadyStateReport {
                        j_fast: w.j_fast / trials,
                        j_slow: w.j_slow / trials,
                        j_cross: w.j_cross / trials,
                        j_combined: w.j_combined / trials,
                        j_reported: w.j_reported / trials,
                        lambda_bar: w.lambda_mean / trials,
                        lambda_var: w.lambda_var / trials,
                        verdict: Verdict::Violation,
                    };
                    report.verdict = check_optimality(&report, config.tol_db);
                    let mixing = MixingCurve {
                        lambda_mean: scale(acc.lambda),
                        a_mean: scale(acc.a),
                    };
                    (Some(mixing), Some(report))
                }
            };
            AlgorithmResult {
                name: spec.name.clone(),
                curve,
                mixing,
                steady_state,
                report,
            }
        })
        .collect();

    Ok(MonteCarloResult {
        trials: config.trials,
        steady_window: window,
        algorithms,
    })
}

/// Convergence threshold for `result` under `config`: the absolute threshold
/// when set, otherwise the curve's own steady state plus the margin.
pub fn convergence_threshold(config: &ExperimentConfig, result: &AlgorithmResult) -> f64 {
    config
        .convergence_threshold_db
        .unwrap_or_else(|| result.steady_state_db() + config.convergence_margin_db)
}
