//! Python bindings: projection, trimmed-mean aggregation, problem presets and
//! full experiment runs driven by config text.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rdeg::aggregation::{self, ChunkPartition, TrimParams, TrimSchedule};
use rdeg::geometry::{BallSet, IteratePair, Vector};
use rdeg::harness::{self, ExecOptions, HarnessError};
use rdeg::problems::{self, Preset, PresetParams, SaddleProblem};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn vector(values: Vec<f64>) -> PyResult<Vector> {
    Vector::new(values).map_err(value_err)
}

fn schedule(name: &str) -> PyResult<TrimSchedule> {
    TrimSchedule::from_name(name).ok_or_else(|| value_err(format!("unknown trim schedule '{name}'")))
}

/// Euclidean projection onto the ball of the given radius.
#[pyfunction]
fn project(v: Vec<f64>, radius: f64) -> PyResult<Vec<f64>> {
    let v = vector(v)?;
    let ball = BallSet::new(radius, v.dim()).map_err(value_err)?;
    Ok(ball.project(&v).map_err(value_err)?.into_inner())
}

/// `8α + 24 ln(4/δ)/M`, rejected outside the admissible range.
#[pyfunction]
fn compute_epsilon(alpha: f64, delta: f64, agents: usize) -> PyResult<f64> {
    aggregation::compute_epsilon(alpha, delta, agents).map_err(value_err)
}

/// Truncation level for a trimming schedule ("desk" or "theory").
#[pyfunction]
#[pyo3(signature = (alpha, delta, agents, schedule="desk"))]
fn trim_epsilon(alpha: f64, delta: f64, agents: usize, schedule: &str) -> PyResult<f64> {
    let params = TrimParams::new(alpha, delta, agents, self::schedule(schedule)?).map_err(value_err)?;
    Ok(params.epsilon())
}

#[pyfunction]
fn trimmed_mean_1d(quantile_chunk: Vec<f64>, average_chunk: Vec<f64>, epsilon: f64) -> PyResult<f64> {
    aggregation::trimmed_mean_1d(&quantile_chunk, &average_chunk, epsilon).map_err(value_err)
}

/// Coordinate-wise trimmed mean of `rows` (one per agent) with the
/// alternating even/odd chunk split. Pass `epsilon` to bypass the schedule.
#[pyfunction]
#[pyo3(signature = (rows, alpha, delta=0.05, schedule="desk", epsilon=None))]
fn trim_vectors(
    rows: Vec<Vec<f64>>,
    alpha: f64,
    delta: f64,
    schedule: &str,
    epsilon: Option<f64>,
) -> PyResult<Vec<f64>> {
    let agents = rows.len();
    let params = match epsilon {
        Some(eps) => TrimParams::with_epsilon(alpha, agents, eps),
        None => TrimParams::new(alpha, delta, agents, self::schedule(schedule)?),
    }
    .map_err(value_err)?;
    let partition = ChunkPartition::alternating(agents).map_err(value_err)?;
    let rows = rows.into_iter().map(vector).collect::<PyResult<Vec<_>>>()?;
    Ok(aggregation::trim_vectors(&rows, &params, &partition)
        .map_err(value_err)?
        .into_inner())
}

#[pyfunction]
fn mean_vectors(rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let rows = rows.into_iter().map(vector).collect::<PyResult<Vec<_>>>()?;
    Ok(aggregation::mean_vectors(&rows).map_err(value_err)?.into_inner())
}

/// Validates config text and returns its canonical form with every default
/// filled in.
#[pyfunction]
fn parse_config(text: &str) -> PyResult<String> {
    Ok(harness::parse_config(text).map_err(value_err)?.to_text())
}

/// Runs the experiment described by `config` and returns a dict with the
/// summary fields plus one list per trace column.
#[pyfunction]
#[pyo3(signature = (config, workers=1, out_dir=None))]
fn run<'py>(py: Python<'py>, config: &str, workers: usize, out_dir: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = harness::parse_config(config).map_err(value_err)?;
    let exec = ExecOptions { workers, wall_clock: false };
    let result = py
        .detach(|| harness::run_experiment(&cfg, exec, out_dir.map(std::path::Path::new)))
        .map_err(|e| match e {
            HarnessError::Config(_) => value_err(e),
            _ => PyRuntimeError::new_err(e.to_string()),
        })?;

    let s = &result.summary;
    let out = PyDict::new(py);
    out.set_item("problem", &s.problem)?;
    out.set_item("algo", &s.algo)?;
    out.set_item("config", &s.config)?;
    out.set_item("step_size", s.step_size)?;
    out.set_item("epsilon", s.epsilon)?;
    out.set_item("byzantine_agents", s.byzantine_agents)?;
    out.set_item("final_gap", s.final_gap)?;
    out.set_item("final_dist_sq", s.final_dist_sq)?;
    out.set_item("error_floor", s.error_floor)?;
    out.set_item("aborted_at_round", s.aborted_at_round)?;
    let records = &result.trace.records;
    let column = |f: fn(&rdeg::protocol::RoundRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    out.set_item("t", records.iter().map(|r| r.t).collect::<Vec<_>>())?;
    out.set_item("gap", column(|r| r.gap))?;
    out.set_item("dist_sq", column(|r| r.dist_sq))?;
    out.set_item("err_x_t", column(|r| r.err_x_t))?;
    out.set_item("err_y_t", column(|r| r.err_y_t))?;
    out.set_item("err_x_hat", column(|r| r.err_x_hat))?;
    out.set_item("err_y_hat", column(|r| r.err_y_hat))?;
    Ok(out)
}

/// A named saddle-problem preset.
#[pyclass(name = "Problem", frozen)]
struct PyProblem {
    inner: Box<dyn SaddleProblem>,
}

impl PyProblem {
    fn pair(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<IteratePair> {
        let (x, y) = (vector(x)?, vector(y)?);
        if x.dim() != self.inner.dim_x() || y.dim() != self.inner.dim_y() {
            return Err(value_err(format!(
                "expected blocks of length {} and {}",
                self.inner.dim_x(),
                self.inner.dim_y()
            )));
        }
        Ok(IteratePair::new(x, y))
    }
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (preset, dim=10, radius=100.0, sigma2=10.0, mu=0.1, matrix_seed=2021))]
    fn new(preset: &str, dim: usize, radius: f64, sigma2: f64, mu: f64, matrix_seed: u64) -> PyResult<Self> {
        let preset = Preset::from_name(preset).ok_or_else(|| value_err(format!("unknown preset '{preset}'")))?;
        let params = PresetParams { dim, radius, sigma2, mu, matrix_seed };
        let inner = problems::build_preset(preset, &params).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn smoothness(&self) -> f64 {
        self.inner.smoothness()
    }

    #[getter]
    fn strong_convexity(&self) -> f64 {
        self.inner.strong_convexity()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    #[getter]
    fn diameter(&self) -> f64 {
        self.inner.diameter()
    }

    /// `(x*, y*)`, or None when the preset has no known saddle.
    #[getter]
    fn saddle(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        self.inner
            .saddle()
            .map(|z| (z.x.as_slice().to_vec(), z.y.as_slice().to_vec()))
    }

    fn initial_point(&self) -> (Vec<f64>, Vec<f64>) {
        let z = self.inner.initial_point();
        (z.x.into_inner(), z.y.into_inner())
    }

    fn value(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        let z = self.pair(x, y)?;
        Ok(self.inner.value(&z.x, &z.y))
    }

    /// Noise-free `(∇_x f, ∇_y f)`.
    fn gradient(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let g = self.inner.population_gradient(&self.pair(x, y)?);
        Ok((g.gx.into_inner(), g.gy.into_inner()))
    }

    fn gap(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        let z = self.pair(x, y)?;
        self.inner.primal_dual_gap(&z.x, &z.y).map_err(value_err)
    }
}

#[pymodule]
fn rdeg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(compute_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(trim_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(trimmed_mean_1d, m)?)?;
    m.add_function(wrap_pyfunction!(trim_vectors, m)?)?;
    m.add_function(wrap_pyfunction!(mean_vectors, m)?)?;
    m.add_function(wrap_pyfunction!(parse_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_functions_match_the_core_crate() {
        assert_eq!(project(vec![0.0, -5.0], 2.0).unwrap(), vec![0.0, -2.0]);
        assert_eq!(trimmed_mean_1d(vec![0.0, 10.0], vec![-5.0, 5.0], 0.0).unwrap(), 2.5);
        assert_eq!(mean_vectors(vec![vec![0.0, 0.0], vec![2.0, 4.0]]).unwrap(), vec![1.0, 2.0]);
        let eps = trim_epsilon(0.06, 0.05, 100, "desk").unwrap();
        assert!((eps - (0.18 + (80.0f64).ln() / 100.0)).abs() < 1e-12);
        assert!(parse_config("problem=scsc-quadratic\n").unwrap().contains("mu=0.1\n"));
        assert!(trim_epsilon(0.06, 0.05, 100, "bogus").is_err());
    }

    #[test]
    fn problem_wrapper_checks_dimensions() {
        let p = PyProblem::new("bilinear-sec6", 3, 10.0, 0.0, 0.1, 1).unwrap();
        assert_eq!(p.gap(vec![0.0; 3], vec![0.0; 3]).unwrap(), 0.0);
        assert!(p.gap(vec![0.0; 2], vec![0.0; 3]).is_err());
        assert!(PyProblem::new("nope", 3, 10.0, 0.0, 0.1, 1).is_err());
    }
}
