//! Python bindings for `combofilter`.
//!
//! The module is importable as `combofilter_py`. Filters keep their own
//! tap-delay line, so Python code feeds one input sample and one desired
//! sample per call.

// The `#[pyfunction]` expansion converts `PyErr` into itself.
#![allow(clippy::useless_conversion)]

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use combofilter::cli::load_config;
use combofilter::combiner;
use combofilter::experiment::{self, AlgorithmResult, SteadyStateReport};
use combofilter::{
    CombinerConfig, CombinerState, Error, ExperimentConfig, FilterConfig, FilterState, MixingRule,
    StepDiagnostics, TapDelayLine, TransferScheme, UpdateRule,
};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::InvalidConfig { .. } | Error::Parse { .. } => PyValueError::new_err(err.to_string()),
        Error::Output { .. } | Error::Input { .. } => PyOSError::new_err(err.to_string()),
    }
}

fn parse_rule(name: &str) -> PyResult<UpdateRule> {
    match name {
        "nsa" => Ok(UpdateRule::Nsa),
        "nlms" => Ok(UpdateRule::Nlms),
        other => Err(PyValueError::new_err(format!(
            "unknown update rule {other:?}; expected 'nsa' or 'nlms'"
        ))),
    }
}

fn parse_mixing(name: &str) -> PyResult<MixingRule> {
    match name {
        "sign_cost" => Ok(MixingRule::SignCost),
        "squared_cost" => Ok(MixingRule::SquaredCost),
        other => Err(PyValueError::new_err(format!(
            "unknown mixing rule {other:?}; expected 'sign_cost' or 'squared_cost'"
        ))),
    }
}

fn parse_transfer(name: &str) -> PyResult<TransferScheme> {
    match name {
        "tracking" => Ok(TransferScheme::Tracking),
        "none" => Ok(TransferScheme::None),
        other => Err(PyValueError::new_err(format!(
            "unknown transfer scheme {other:?}; expected 'tracking' or 'none'"
        ))),
    }
}

/// `sign(x)` with `sign(0) = 0`.
#[pyfunction]
fn sign(x: f64) -> i8 {
    combofilter::filters::sign(x)
}

/// Logistic map from the auxiliary variable `a` to the mixing parameter.
#[pyfunction]
fn lambda_from_a(a: f64) -> f64 {
    combiner::lambda_from_a(a)
}

/// Largest mixing step size that keeps a single sign-rule update stable.
#[pyfunction]
fn rho_a_upper_bound(e: f64, y_fast: f64, y_slow: f64, lam: f64) -> f64 {
    combiner::rho_a_upper_bound(e, y_fast, y_slow, lam)
}

#[pyfunction]
fn emse_db(mean_sq: f64) -> f64 {
    experiment::emse_db(mean_sq)
}

/// TOML text of a built-in experiment, suitable for editing and passing
/// back through `run_monte_carlo(config=...)`.
#[pyfunction]
fn preset_config(name: &str) -> PyResult<String> {
    let config = ExperimentConfig::preset(name).map_err(to_py)?;
    toml::to_string(&config).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// A single adaptive transversal filter.
#[pyclass(module = "combofilter_py")]
struct Filter {
    state: FilterState,
    rule: UpdateRule,
    line: TapDelayLine,
}

#[pymethods]
impl Filter {
    #[new]
    #[pyo3(signature = (num_taps, step_size, regularization = 1e-4, rule = "nsa"))]
    fn new(num_taps: usize, step_size: f64, regularization: f64, rule: &str) -> PyResult<Self> {
        let config = FilterConfig::new(step_size, regularization, num_taps).map_err(to_py)?;
        Ok(Self {
            state: FilterState::new(config),
            rule: parse_rule(rule)?,
            line: TapDelayLine::new(num_taps),
        })
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.state.weights().to_vec()
    }

    #[getter]
    fn num_taps(&self) -> usize {
        self.line.len()
    }

    #[getter]
    fn rule(&self) -> &'static str {
        self.rule.name()
    }

    /// Shifts `sample` into the delay line, adapts on `d` and returns the
    /// a-priori error `d - y`.
    fn adapt(&mut self, sample: f64, d: f64) -> f64 {
        self.line.push(sample);
        let e = d - self.state.predict(&self.line);
        self.state.update(self.rule, &self.line, e);
        e
    }

    /// Output for an explicit regressor (newest sample first).
    fn predict(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.line.len() {
            return Err(PyValueError::new_err(format!(
                "regressor has {} entries, filter has {} taps",
                x.len(),
                self.line.len()
            )));
        }
        Ok(self.state.predict(&TapDelayLine::from_samples(x)))
    }

    fn reset(&mut self) {
        self.state.reset();
        self.line.clear();
    }

    fn __repr__(&self) -> String {
        format!(
            "Filter(num_taps={}, step_size={}, rule='{}')",
            self.line.len(),
            self.state.config().step_size,
            self.rule.name()
        )
    }
}

fn diagnostics_dict<'py>(py: Python<'py>, d: &StepDiagnostics) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new_bound(py);
    out.set_item("y_fast", d.y_fast)?;
    out.set_item("y_slow", d.y_slow)?;
    out.set_item("y", d.y)?;
    out.set_item("e_fast", d.e_fast)?;
    out.set_item("e_slow", d.e_slow)?;
    out.set_item("e", d.e)?;
    out.set_item("a", d.a)?;
    out.set_item("lambda", d.lambda)?;
    out.set_item("lambda_reported", d.lambda_reported)?;
    out.set_item("transfer_fired", d.transfer_fired)?;
    Ok(out)
}

/// Convex combination of a fast and a slow filter.
#[pyclass(module = "combofilter_py")]
struct Combiner {
    state: CombinerState,
    line: TapDelayLine,
}

#[pymethods]
impl Combiner {
    #[new]
    #[pyo3(signature = (
        num_taps,
        fast_step = 0.05,
        slow_step = 0.005,
        *,
        regularization = 1e-4,
        fast_rule = "nsa",
        slow_rule = "nsa",
        rho_a = 10.0,
        nu_a = 10.0,
        a_plus = 4.0,
        window = 2,
        eps_u = 1e-2,
        mixing_rule = "sign_cost",
        transfer = "tracking",
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        num_taps: usize,
        fast_step: f64,
        slow_step: f64,
        regularization: f64,
        fast_rule: &str,
        slow_rule: &str,
        rho_a: f64,
        nu_a: f64,
        a_plus: f64,
        window: u64,
        eps_u: f64,
        mixing_rule: &str,
        transfer: &str,
    ) -> PyResult<Self> {
        let fast = FilterConfig::new(fast_step, regularization, num_taps).map_err(to_py)?;
        let slow = FilterConfig::new(slow_step, regularization, num_taps).map_err(to_py)?;
        let config = CombinerConfig {
            rho_a,
            nu_a,
            a_plus,
            window,
            eps_u,
            mixing_rule: parse_mixing(mixing_rule)?,
            transfer: parse_transfer(transfer)?,
        };
        let state = CombinerState::with_rules(
            FilterState::new(fast),
            parse_rule(fast_rule)?,
            FilterState::new(slow),
            parse_rule(slow_rule)?,
            config,
        )
        .map_err(to_py)?;
        Ok(Self {
            state,
            line: TapDelayLine::new(num_taps),
        })
    }

    #[getter]
    fn a(&self) -> f64 {
        self.state.a
    }

    /// Current mixing parameter `λ`.
    #[getter]
    fn mixing(&self) -> f64 {
        self.state.lambda
    }

    /// Index of the next iteration (1-based).
    #[getter]
    fn n(&self) -> u64 {
        self.state.n
    }

    #[getter]
    fn fast_weights(&self) -> Vec<f64> {
        self.state.fast.weights().to_vec()
    }

    #[getter]
    fn slow_weights(&self) -> Vec<f64> {
        self.state.slow.weights().to_vec()
    }

    #[getter]
    fn combined_weights(&self) -> Vec<f64> {
        self.state.combined_weights()
    }

    /// One iteration; returns the per-sample diagnostics as a dict.
    fn step<'py>(&mut self, py: Python<'py>, sample: f64, d: f64) -> PyResult<Bound<'py, PyDict>> {
        self.line.push(sample);
        let diag = self.state.step(&self.line, d);
        diagnostics_dict(py, &diag)
    }

    /// Runs a whole record and returns `{"y", "e", "lambda", "a"}` lists.
    fn run<'py>(
        &mut self,
        py: Python<'py>,
        input: Vec<f64>,
        desired: Vec<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        if input.len() != desired.len() {
            return Err(PyValueError::new_err(format!(
                "input has {} samples, desired has {}",
                input.len(),
                desired.len()
            )));
        }
        let n = input.len();
        let (mut y, mut e, mut lam, mut a) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        py.allow_threads(|| {
            for (&x, &d) in input.iter().zip(&desired) {
                self.line.push(x);
                let diag = self.state.step(&self.line, d);
                y.push(diag.y);
                e.push(diag.e);
                lam.push(diag.lambda);
                a.push(diag.a);
            }
        });
        let out = PyDict::new_bound(py);
        out.set_item("y", y)?;
        out.set_item("e", e)?;
        out.set_item("lambda", lam)?;
        out.set_item("a", a)?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!(
            "Combiner(num_taps={}, n={}, a={:.4}, lambda={:.4})",
            self.line.len(),
            self.state.n,
            self.state.a,
            self.state.lambda
        )
    }
}

fn report_dict<'py>(py: Python<'py>, r: &SteadyStateReport) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new_bound(py);
    out.set_item("j_ex_1", r.j_fast)?;
    out.set_item("j_ex_2", r.j_slow)?;
    out.set_item("j_ex_12", r.j_cross)?;
    out.set_item("j_ex", r.j_combined)?;
    out.set_item("j_ex_u", r.j_reported)?;
    out.set_item("lambda_bar", r.lambda_bar)?;
    out.set_item("lambda_var", r.lambda_var)?;
    out.set_item("verdict", r.verdict.as_str())?;
    Ok(out)
}

fn algorithm_dict<'py>(py: Python<'py>, alg: &AlgorithmResult) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new_bound(py);
    out.set_item("emse", alg.curve.mean_sq.clone())?;
    out.set_item("emse_db", alg.curve.db())?;
    out.set_item("steady_state", alg.steady_state)?;
    out.set_item("steady_state_db", alg.steady_state_db())?;
    if let Some(m) = &alg.mixing {
        out.set_item("lambda_mean", m.lambda_mean.clone())?;
        out.set_item("a_mean", m.a_mean.clone())?;
    }
    if let Some(r) = &alg.report {
        out.set_item("report", report_dict(py, r)?)?;
    }
    Ok(out)
}

/// Runs a Monte Carlo experiment from a preset name or a TOML config path.
///
/// Returns `{"trials", "steady_window", "algorithms": {name: {...}}}`.
#[pyfunction]
#[pyo3(signature = (preset = None, *, config = None, trials = None, seed = None, horizon = None, jobs = 1))]
fn run_monte_carlo<'py>(
    py: Python<'py>,
    preset: Option<&str>,
    config: Option<PathBuf>,
    trials: Option<u64>,
    seed: Option<u64>,
    horizon: Option<usize>,
    jobs: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = match (preset, config) {
        (Some(_), Some(_)) => {
            return Err(PyValueError::new_err(
                "pass either preset or config, not both",
            ));
        }
        (_, Some(path)) => load_config(&path).map_err(to_py)?,
        (name, None) => ExperimentConfig::preset(name.unwrap_or("example1")).map_err(to_py)?,
    };
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(h) = horizon {
        cfg.horizon = h;
        if cfg.scenario.change_at.is_some_and(|c| c >= h) {
            cfg.scenario.change_at = Some(h / 2);
        }
    }
    let result = py
        .allow_threads(|| experiment::run_monte_carlo(&cfg, jobs))
        .map_err(to_py)?;

    let algorithms = PyDict::new_bound(py);
    for alg in &result.algorithms {
        algorithms.set_item(&alg.name, algorithm_dict(py, alg)?)?;
    }
    let out = PyDict::new_bound(py);
    out.set_item("trials", result.trials)?;
    out.set_item("steady_window", result.steady_window)?;
    out.set_item("algorithms", algorithms)?;
    Ok(out)
}

#[pymodule]
fn combofilter_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(sign, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_from_a, m)?)?;
    m.add_function(wrap_pyfunction!(rho_a_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(emse_db, m)?)?;
    m.add_function(wrap_pyfunction!(preset_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_monte_carlo, m)?)?;
    m.add_class::<Filter>()?;
    m.add_class::<Combiner>()?;
    Ok(())
}
