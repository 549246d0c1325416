//! Python module `bellcrbm`: the Born-rule oracle, training and evaluation
//! of conditional RBMs. Reports come back as plain dicts and lists.

use std::path::PathBuf;

use bellcrbm::evaluation;
use bellcrbm::io::{LayoutFile, Lineage, ModelFile};
use bellcrbm::oracle::{born_probabilities as born, chsh_max as chsh_max_of};
use bellcrbm::training::{self, TargetTables, TrainingSource};
use bellcrbm::{ChshSettings, ConditionVector, ConditioningLayout, DetectorAngle, Preset, Temperature, TrainingConfig};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

fn err(e: bellcrbm::Error) -> PyErr {
    match e {
        bellcrbm::Error::Io(_) => PyIOError::new_err(e.to_string()),
        bellcrbm::Error::Diverged { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Serializable value to a Python object through the `json` module.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn state(name: &str) -> PyResult<bellcrbm::TwoQubitState> {
    bellcrbm::io::named_state(name).ok_or_else(|| PyValueError::new_err(format!("unknown state '{name}'")))
}

fn layout_from(preset: Option<&str>, layout_json: Option<&str>) -> PyResult<(ConditioningLayout, Option<usize>)> {
    match (preset, layout_json) {
        (Some(_), Some(_)) => Err(PyValueError::new_err("give either preset or layout_json, not both")),
        (_, Some(text)) => {
            let file = LayoutFile::from_text(text).map_err(err)?;
            Ok((file.to_layout().map_err(err)?, file.n_hidden))
        }
        (name, None) => {
            let p: Preset = name.unwrap_or("epr-2x2").parse().map_err(err)?;
            Ok((p.layout(), Some(p.n_hidden())))
        }
    }
}

fn temp(t: f64) -> PyResult<Temperature> {
    Temperature::new(t).map_err(err)
}

/// Born-rule table `[P(++), P(+-), P(-+), P(--)]` for angles in radians.
#[pyfunction]
#[pyo3(signature = (alpha, beta, state_name = "singlet"))]
fn born_probabilities(alpha: f64, beta: f64, state_name: &str) -> PyResult<[f64; 4]> {
    Ok(born(&state(state_name)?, DetectorAngle(alpha), DetectorAngle(beta)).probs())
}

/// Largest CHSH value over the four sign placements.
#[pyfunction]
#[pyo3(signature = (a = 0.0, a_prime = std::f64::consts::FRAC_PI_2, b = std::f64::consts::FRAC_PI_4, b_prime = 3.0 * std::f64::consts::FRAC_PI_4, state_name = "singlet"))]
fn chsh_max(a: f64, a_prime: f64, b: f64, b_prime: f64, state_name: &str) -> PyResult<f64> {
    let psi = state(state_name)?;
    let settings = ChshSettings {
        a: DetectorAngle(a),
        a_prime: DetectorAngle(a_prime),
        b: DetectorAngle(b),
        b_prime: DetectorAngle(b_prime),
        ..ChshSettings::canonical()
    };
    Ok(chsh_max_of(|x, y| born(&psi, x, y), &settings).max)
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    Preset::ALL.iter().map(|p| p.name()).collect()
}

type TrialRow = (usize, usize, usize, i32, i32);

/// Simulated trials as `(state_idx, a_idx, b_idx, x_A, x_B)` with ±1 outcomes.
#[pyfunction]
#[pyo3(signature = (n_trials, seed = 7, preset = None, layout_json = None))]
fn simulate_dataset(
    n_trials: usize,
    seed: u64,
    preset: Option<&str>,
    layout_json: Option<&str>,
) -> PyResult<Vec<TrialRow>> {
    let (layout, _) = layout_from(preset, layout_json)?;
    let ds = training::simulate_dataset(&layout, n_trials, None, seed).map_err(err)?;
    Ok(ds
        .trials
        .iter()
        .map(|t| (t.condition.state, t.condition.a, t.condition.b, t.outcome.0.sign(), t.outcome.1.sign()))
        .collect())
}

/// A trained or loaded model together with its layout and lineage.
#[pyclass(module = "bellcrbm")]
struct Model {
    file: ModelFile,
}

#[pymethods]
impl Model {
    /// Train on the Born-rule tables. `config` holds any training fields
    /// (mode, n_hidden, learning_rate, epochs, seed, target_tv, restarts, ...).
    #[staticmethod]
    #[pyo3(signature = (preset = None, layout_json = None, **config))]
    fn train(
        py: Python<'_>,
        preset: Option<&str>,
        layout_json: Option<&str>,
        config: Option<&Bound<'_, pyo3::types::PyDict>>,
    ) -> PyResult<Self> {
        let (layout, hint) = layout_from(preset, layout_json)?;
        let overrides = match config {
            Some(d) => py.import("json")?.call_method1("dumps", (d,))?.extract::<String>()?,
            None => "{}".into(),
        };
        let overrides: serde_json::Value =
            serde_json::from_str(&overrides).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let mut cfg = serde_json::to_value(TrainingConfig::default()).map_err(|e| PyValueError::new_err(e.to_string()))?;
        if let Some(n) = hint {
            cfg["n_hidden"] = n.into();
        }
        for (k, v) in overrides.as_object().into_iter().flatten() {
            cfg[k] = v.clone();
        }
        let cfg: TrainingConfig = serde_json::from_value(cfg).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let targets = TargetTables::from_oracle(&layout);
        let model = py
            .detach(|| training::train(&layout, &cfg, TrainingSource::Targets(&targets)))
            .map_err(err)?;
        let final_tv = model.history.final_mean_tv();
        let lineage = Lineage {
            seed: cfg.seed,
            attempt: model.history.attempt,
            source: preset.map_or_else(|| "layout".to_owned(), |p| format!("preset {p}")),
            epochs_run: model.history.records.len(),
            final_mean_tv: final_tv.is_finite().then_some(final_tv),
            converged: model.history.converged,
            config: Some(cfg),
        };
        Ok(Self {
            file: ModelFile::new(layout, model.params, lineage).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            file: ModelFile::load(&path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            file: ModelFile::from_text(text).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.file.save(&path).map_err(err)
    }

    fn to_text(&self) -> PyResult<String> {
        self.file.to_text().map_err(err)
    }

    #[getter]
    fn converged(&self) -> bool {
        self.file.lineage.converged
    }

    #[getter]
    fn final_mean_tv(&self) -> Option<f64> {
        self.file.lineage.final_mean_tv
    }

    #[getter]
    fn n_hidden(&self) -> usize {
        self.file.params.base.n_hidden
    }

    #[getter]
    fn n_conditions(&self) -> usize {
        self.file.layout.n_conditions()
    }

    #[getter]
    fn lineage<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.file.lineage)
    }

    #[pyo3(signature = (a_idx, b_idx, state_idx = 0, temperature = 1.0))]
    fn conditional_table(&self, a_idx: usize, b_idx: usize, state_idx: usize, temperature: f64) -> PyResult<[f64; 4]> {
        let u = ConditionVector::new(a_idx, b_idx, state_idx);
        self.file.layout.check(&u).map_err(err)?;
        Ok(bellcrbm::crbm::conditional_table(&self.file.params, &u, temp(temperature)?)
            .map_err(err)?
            .probs())
    }

    /// Full evaluation report as a dict.
    #[pyo3(signature = (temperature = 1.0))]
    fn evaluate<'py>(&self, py: Python<'py>, temperature: f64) -> PyResult<Bound<'py, PyAny>> {
        let report = evaluation::evaluate(&self.file.params, &self.file.layout, temp(temperature)?).map_err(err)?;
        to_py(py, &report)
    }

    /// One row per temperature, hot to cold, with S_max, PR-box distance and signaling.
    #[pyo3(signature = (t_start = 1.0, t_end = 0.1, steps = 10))]
    fn sweep<'py>(&self, py: Python<'py>, t_start: f64, t_end: f64, steps: usize) -> PyResult<Bound<'py, PyAny>> {
        if !(t_end > 0.0 && t_start > t_end) {
            return Err(PyValueError::new_err("need t_start > t_end > 0"));
        }
        let temps = evaluation::linear_temperatures(t_start, t_end, steps).map_err(err)?;
        let sweep = evaluation::temperature_sweep(&self.file.params, &self.file.layout, &temps, &ChshSettings::canonical())
            .map_err(err)?;
        to_py(py, &sweep.rows)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(n_hidden={}, conditions={}, converged={})",
            self.file.params.base.n_hidden,
            self.file.layout.n_conditions(),
            self.file.lineage.converged
        )
    }
}

#[pymodule]
#[pyo3(name = "bellcrbm")]
fn bellcrbm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(born_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(chsh_max, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_dataset, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
