use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use super::config::{Algo, ConfigError, RunConfig};
use crate::protocol::{run, ProtocolError, RunOptions, RunTrace};

pub const TRACE_HEADER: &str = "t,gap,dist_sq,err_x_t,err_y_t,err_x_hat,err_y_hat,wall_ms";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Protocol(ProtocolError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
}

impl HarnessError {
    /// Process exit code: 2 for config errors, 3 for numerical aborts, 4 for
    /// I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Protocol(ProtocolError::NumericalAbort { .. }) => 3,
            HarnessError::Protocol(_) => 2,
            HarnessError::Io { .. } => 4,
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Execution knobs that never change results (except `wall_ms`).
#[derive(Debug, Clone, Copy)]
pub struct ExecOptions {
    pub workers: usize,
    pub wall_clock: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            wall_clock: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub version: String,
    pub config: String,
    pub problem: String,
    pub algo: String,
    pub smoothness: f64,
    pub strong_convexity: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub diameter: f64,
    pub step_size: f64,
    pub epsilon: Option<f64>,
    pub byzantine_agents: usize,
    pub rounds_requested: usize,
    pub rounds_completed: usize,
    pub final_gap: Option<f64>,
    pub final_dist_sq: Option<f64>,
    pub error_floor: Option<f64>,
    pub max_error_norm: f64,
    pub aborted_at_round: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub trace: RunTrace,
    pub summary: Summary,
}

impl ExperimentOutput {
    pub fn aborted(&self) -> bool {
        self.summary.aborted_at_round.is_some()
    }
}

/// Formats a metric for CSV: NaN as `nan`, everything else in a form that
/// parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v == 0.0 || (v.abs() >= 1e-4 && v.abs() < 1e15) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn trace_csv(trace: &RunTrace) -> String {
    let mut out = String::with_capacity(64 * (trace.records.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let cols = [r.gap, r.dist_sq, r.err_x_t, r.err_y_t, r.err_x_hat, r.err_y_hat, r.wall_ms];
        out.push_str(&r.t.to_string());
        for c in cols {
            out.push(',');
            out.push_str(&format_number(c));
        }
        out.push('\n');
    }
    out
}

/// Runs one experiment. A numerical abort is not an error here: the partial
/// trace is returned with `aborted_at_round` set. When `out_dir` is given,
/// `trace.csv` and `summary.json` are written there.
pub fn run_experiment(
    cfg: &RunConfig,
    exec: ExecOptions,
    out_dir: Option<&Path>,
) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let problem = cfg.build_problem()?;
    let population = cfg.population();
    let aggregator = cfg
        .aggregator()
        .map_err(|e| ConfigError { line: 0, message: e.to_string() })?;
    let epsilon = match cfg.algo {
        Algo::Rdeg => Some(cfg.trim_params().expect("validated").epsilon()),
        Algo::Vanilla => None,
    };
    let step_size = cfg.step_size(problem.as_ref());
    let options = RunOptions {
        aggregator,
        step_size,
        rounds: cfg.rounds,
        seed: cfg.seed,
        workers: exec.workers.max(1),
        record_wall_time: exec.wall_clock,
        start: None,
    };
    let (trace, aborted_at_round) = match run(problem.as_ref(), &population, &options) {
        Ok(trace) => (trace, None),
        Err(ProtocolError::NumericalAbort { round, partial }) => (*partial, Some(round)),
        Err(e) => return Err(HarnessError::Protocol(e)),
    };

    let summary = Summary {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.to_text(),
        problem: problem.name().to_string(),
        algo: cfg.algo.name().to_string(),
        smoothness: problem.smoothness(),
        strong_convexity: problem.strong_convexity(),
        kappa: problem.kappa(),
        sigma: problem.sigma(),
        diameter: problem.diameter(),
        step_size,
        epsilon,
        byzantine_agents: population.byzantine_count(),
        rounds_requested: cfg.rounds,
        rounds_completed: trace.records.len(),
        final_gap: trace.final_gap(),
        final_dist_sq: trace.final_dist_sq().filter(|d| !d.is_nan()),
        error_floor: trace.error_floor(),
        max_error_norm: trace.max_error_norm(),
        aborted_at_round,
    };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let trace_path = dir.join("trace.csv");
        fs::write(&trace_path, trace_csv(&trace)).map_err(io_err(&trace_path))?;
        let summary_path = dir.join("summary.json");
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        fs::write(&summary_path, json + "\n").map_err(io_err(&summary_path))?;
    }
    Ok(ExperimentOutput { trace, summary })
}
