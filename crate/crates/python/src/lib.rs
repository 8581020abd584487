use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use rce_core::equilibrium::{self, CHECK_TOL, DEFAULT_SUBSET_CAP, SOLVE_TOL};
use rce_core::format::{game_to_toml, load_game, parse_game};
use rce_core::simulator::{self, DisturbancePolicy, SimulationConfig};
use rce_core::{CostModel, Feasibility, JointDistribution, LearnerConfig, PerturbedGame, RceError};

fn err(e: RceError) -> PyErr {
    match e {
        RceError::Numerical(_) => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Converts a serializable value into plain Python objects.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A finite game whose costs depend on a disturbance.
#[pyclass(name = "Game", module = "rce", frozen)]
struct PyGame(PerturbedGame);

#[pymethods]
impl PyGame {
    /// Costs are flattened as [player][disturbance][joint action], with
    /// joint actions in row-major order, player 1 slowest.
    #[new]
    fn new(action_counts: Vec<usize>, num_disturbances: usize, costs: Vec<f64>) -> PyResult<Self> {
        PerturbedGame::new(action_counts, num_disturbances, costs)
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        load_game(path).map(Self).map_err(err)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        parse_game(text, "<string>").map(Self).map_err(err)
    }

    /// The two-farmer irrigation game.
    #[staticmethod]
    fn irrigation() -> Self {
        Self(rce_core::irrigation_game())
    }

    #[getter]
    fn num_players(&self) -> usize {
        self.0.num_players()
    }

    #[getter]
    fn action_counts(&self) -> Vec<usize> {
        self.0.action_counts().to_vec()
    }

    #[getter]
    fn num_disturbances(&self) -> usize {
        self.0.num_disturbances()
    }

    #[getter]
    fn action_names(&self) -> Vec<Vec<String>> {
        self.0.action_names().to_vec()
    }

    #[getter]
    fn disturbance_names(&self) -> Vec<String> {
        self.0.disturbance_names().to_vec()
    }

    #[getter]
    fn costs(&self) -> Vec<f64> {
        self.0.costs().to_vec()
    }

    fn cost(&self, player: usize, disturbance: usize, joint: usize) -> PyResult<f64> {
        let limits = [
            ("player", player, self.0.num_players()),
            ("disturbance", disturbance, self.0.num_disturbances()),
            ("joint action", joint, self.0.num_joint_actions()),
        ];
        for (what, index, limit) in limits {
            if index >= limit {
                return Err(err(RceError::IndexOutOfRange { what, index, limit }));
            }
        }
        Ok(self.0.cost(player, disturbance, joint))
    }

    fn joint_index(&self, actions: Vec<usize>) -> PyResult<usize> {
        self.0.joint_index(&actions).map_err(err)
    }

    fn joint_label(&self, joint: usize) -> String {
        self.0.joint_label(joint)
    }

    /// Costs rescaled into [0, 1].
    fn normalized(&self) -> Self {
        Self(rce_core::normalize_costs(&self.0))
    }

    fn to_toml(&self) -> String {
        game_to_toml(&self.0)
    }

    fn __repr__(&self) -> String {
        format!(
            "Game(action_counts={:?}, num_disturbances={})",
            self.0.action_counts(),
            self.0.num_disturbances()
        )
    }
}

fn distribution(game: &PerturbedGame, probs: Vec<f64>) -> PyResult<JointDistribution> {
    JointDistribution::new(game.action_counts(), probs).map_err(err)
}

/// Deviation check of `probs` under a single disturbance.
#[pyfunction]
#[pyo3(signature = (game, probs, disturbance, tol = CHECK_TOL))]
fn check_ce<'py>(
    py: Python<'py>,
    game: &PyGame,
    probs: Vec<f64>,
    disturbance: usize,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let dist = distribution(&game.0, probs)?;
    to_py(
        py,
        &equilibrium::check_ce(&game.0, &dist, disturbance, tol).map_err(err)?,
    )
}

/// Deviation check of `probs` under every disturbance at once.
#[pyfunction]
#[pyo3(signature = (game, probs, tol = CHECK_TOL))]
fn check_rce<'py>(py: Python<'py>, game: &PyGame, probs: Vec<f64>, tol: f64) -> PyResult<Bound<'py, PyAny>> {
    let dist = distribution(&game.0, probs)?;
    to_py(py, &equilibrium::check_rce(&game.0, &dist, tol).map_err(err)?)
}

/// Returns `{"feasible": True, "probs": [...]}` or
/// `{"feasible": False, "certificate": {...}}`.
#[pyfunction]
#[pyo3(signature = (game, tol = SOLVE_TOL))]
fn find_rce<'py>(py: Python<'py>, game: &PyGame, tol: f64) -> PyResult<Bound<'py, PyAny>> {
    let value = match equilibrium::find_rce(&game.0, tol).map_err(err)? {
        Feasibility::Feasible(x) => serde_json::json!({ "feasible": true, "probs": x.probs() }),
        Feasibility::Infeasible(cert) => serde_json::json!({ "feasible": false, "certificate": cert }),
    };
    to_py(py, &value)
}

#[pyfunction]
#[pyo3(signature = (game, subset_size = None, cap = DEFAULT_SUBSET_CAP, tol = SOLVE_TOL))]
fn helly<'py>(
    py: Python<'py>,
    game: &PyGame,
    subset_size: Option<usize>,
    cap: u128,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(
        py,
        &equilibrium::helly_subset_check(&game.0, subset_size, cap, tol).map_err(err)?,
    )
}

#[pyfunction]
fn marginal(game: &PyGame, probs: Vec<f64>, player: usize) -> PyResult<Vec<f64>> {
    let dist = distribution(&game.0, probs)?;
    Ok(rce_core::marginal(&dist, player).map_err(err)?.probs().to_vec())
}

#[pyfunction]
fn expected_cost(game: &PyGame, probs: Vec<f64>, player: usize, disturbance: usize) -> PyResult<f64> {
    let dist = distribution(&game.0, probs)?;
    rce_core::expected_cost(&game.0, &dist, player, disturbance).map_err(err)
}

/// Next-action probabilities after playing `action` with regrets `regrets`.
#[pyfunction]
#[pyo3(signature = (regrets, action, inertia = None))]
fn transition_row(regrets: Vec<f64>, action: usize, inertia: Option<f64>) -> PyResult<Vec<f64>> {
    Ok(rce_core::transition_row(&regrets, action, inertia)
        .map_err(err)?
        .probs()
        .to_vec())
}

/// The momentum iterate with zero loss, from `y1` at round 1.
#[pyfunction]
fn autonomous_run(y1: f64, rounds: usize) -> Vec<f64> {
    rce_core::autonomous_run(y1, rounds)
}

fn build_config(
    game: &PerturbedGame,
    rounds: u64,
    momentum: bool,
    inertia: Option<f64>,
    disturbance: Option<&str>,
    metric_stride: Option<u64>,
) -> PyResult<SimulationConfig> {
    let mut config = SimulationConfig::new(game.num_players(), rounds);
    config.learners = vec![LearnerConfig { momentum, inertia }; game.num_players()];
    if let Some(spec) = disturbance {
        config.disturbance = serde_json::from_str::<DisturbancePolicy>(spec)
            .map_err(|e| PyValueError::new_err(format!("disturbance policy: {e}")))?;
    }
    if let Some(stride) = metric_stride {
        config.metric_stride = stride;
    }
    config.validate(game).map_err(err)?;
    Ok(config)
}

/// Runs the learners for `rounds` rounds and returns the trace as CSV text.
///
/// `disturbance` is a JSON policy such as `{"kind": "fixed", "index": 2}`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (game, rounds, seed, momentum = true, inertia = None, disturbance = None, metric_stride = None))]
fn simulate(
    py: Python<'_>,
    game: &PyGame,
    rounds: u64,
    seed: u64,
    momentum: bool,
    inertia: Option<f64>,
    disturbance: Option<&str>,
    metric_stride: Option<u64>,
) -> PyResult<String> {
    let config = build_config(&game.0, rounds, momentum, inertia, disturbance, metric_stride)?;
    let trace = py.detach(|| simulator::run(&game.0, &config, seed)).map_err(err)?;
    Ok(trace.to_csv_string())
}

/// Runs the learners and returns a summary of the final regrets and
/// equilibrium violation.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (game, rounds, seed, tol = 0.05, momentum = true, inertia = None, disturbance = None))]
fn convergence<'py>(
    py: Python<'py>,
    game: &PyGame,
    rounds: u64,
    seed: u64,
    tol: f64,
    momentum: bool,
    inertia: Option<f64>,
    disturbance: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let config = build_config(&game.0, rounds, momentum, inertia, disturbance, None)?;
    let report = py
        .detach(|| simulator::run(&game.0, &config, seed).and_then(|t| simulator::convergence_report(&t, tol)))
        .map_err(err)?;
    to_py(py, &report)
}

#[pymodule]
fn rce(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGame>()?;
    m.add_function(wrap_pyfunction!(check_ce, m)?)?;
    m.add_function(wrap_pyfunction!(check_rce, m)?)?;
    m.add_function(wrap_pyfunction!(find_rce, m)?)?;
    m.add_function(wrap_pyfunction!(helly, m)?)?;
    m.add_function(wrap_pyfunction!(marginal, m)?)?;
    m.add_function(wrap_pyfunction!(expected_cost, m)?)?;
    m.add_function(wrap_pyfunction!(transition_row, m)?)?;
    m.add_function(wrap_pyfunction!(autonomous_run, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(convergence, m)?)?;
    m.add("CHECK_TOL", CHECK_TOL)?;
    m.add("SOLVE_TOL", SOLVE_TOL)?;
    Ok(())
}
