use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ConfigError, RunConfig};
use super::experiment::{format_number, io_err, run_experiment, ExecOptions, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Alpha,
    Agents,
    Sigma2,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Agents => "agents",
            SweepParam::Sigma2 => "sigma2",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "alpha" => Some(SweepParam::Alpha),
            "agents" => Some(SweepParam::Agents),
            "sigma2" => Some(SweepParam::Sigma2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: RunConfig,
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub trials: usize,
}

impl SweepSpec {
    /// Config for one grid point; trial `k` uses seed `base.seed + k`.
    pub fn point_config(&self, value: f64, trial: usize) -> Result<RunConfig, ConfigError> {
        let mut cfg = self.base.clone();
        match self.param {
            SweepParam::Alpha => cfg.alpha = value,
            SweepParam::Sigma2 => cfg.sigma2 = value,
            SweepParam::Agents => {
                if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                    return Err(ConfigError {
                        line: 0,
                        message: format!("agents sweep value {value} is not a positive integer"),
                    });
                }
                cfg.agents = value as usize;
            }
        }
        cfg.seed = self.base.seed.wrapping_add(trial as u64);
        cfg.validate().map_err(|e| ConfigError {
            line: 0,
            message: format!("{}={value}: {}", self.param.name(), e.message),
        })?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub trial: usize,
    pub seed: u64,
    pub error_floor: f64,
    pub final_dist_sq: f64,
    pub aborted_at_round: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub median_error_floor: f64,
    pub median_final_dist_sq: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
    pub points: Vec<SweepPoint>,
    /// Medians taken in the order the values were given.
    pub floor_nondecreasing: bool,
    pub floor_nonincreasing: bool,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.iter().any(|x| x.is_nan()) || v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl SweepReport {
    pub fn csv(&self) -> String {
        let mut out = format!("{},trial,seed,error_floor,final_dist_sq\n", self.param.name());
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                format_number(r.value),
                r.trial,
                r.seed,
                format_number(r.error_floor),
                format_number(r.final_dist_sq)
            ));
        }
        out
    }

    /// One line per grid point plus the monotonicity verdict.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            out.push_str(&format!(
                "{}={} median_floor={} median_dist_sq={}\n",
                self.param.name(),
                format_number(p.value),
                format_number(p.median_error_floor),
                format_number(p.median_final_dist_sq)
            ));
        }
        out.push_str(&format!(
            "median floor nondecreasing: {}, nonincreasing: {}\n",
            self.floor_nondecreasing, self.floor_nonincreasing
        ));
        out
    }
}

/// Runs every `(value, trial)` pair, in parallel across grid points, and
/// optionally writes `sweep.csv` and `sweep.json` to `out_dir`.
pub fn run_sweep(spec: &SweepSpec, workers: usize, out_dir: Option<&Path>) -> Result<SweepReport, HarnessError> {
    if spec.values.is_empty() {
        return Err(ConfigError { line: 0, message: "sweep needs at least one value".into() }.into());
    }
    if spec.trials == 0 {
        return Err(ConfigError { line: 0, message: "sweep needs at least one trial".into() }.into());
    }
    let mut jobs = Vec::with_capacity(spec.values.len() * spec.trials);
    for &value in &spec.values {
        for trial in 0..spec.trials {
            jobs.push((value, trial, spec.point_config(value, trial)?));
        }
    }

    let exec = ExecOptions::default();
    let run_job = |(value, trial, cfg): &(f64, usize, RunConfig)| -> Result<SweepRow, HarnessError> {
        let out = run_experiment(cfg, exec, None)?;
        Ok(SweepRow {
            value: *value,
            trial: *trial,
            seed: cfg.seed,
            error_floor: out.summary.error_floor.unwrap_or(f64::NAN),
            final_dist_sq: out.summary.final_dist_sq.unwrap_or(f64::NAN),
            aborted_at_round: out.summary.aborted_at_round,
        })
    };
    let rows: Vec<SweepRow> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| ConfigError { line: 0, message: e.to_string() })?;
        pool.install(|| jobs.par_iter().map(run_job).collect::<Result<_, _>>())?
    } else {
        jobs.iter().map(run_job).collect::<Result<_, _>>()?
    };

    let points: Vec<SweepPoint> = spec
        .values
        .iter()
        .map(|&value| {
            let of = |f: fn(&SweepRow) -> f64| {
                median(rows.iter().filter(|r| r.value == value).map(f).collect())
            };
            SweepPoint {
                value,
                median_error_floor: of(|r| r.error_floor),
                median_final_dist_sq: of(|r| r.final_dist_sq),
            }
        })
        .collect();
    let floors: Vec<f64> = points.iter().map(|p| p.median_error_floor).collect();
    let report = SweepReport {
        param: spec.param,
        floor_nondecreasing: floors.windows(2).all(|w| w[0] <= w[1]),
        floor_nonincreasing: floors.windows(2).all(|w| w[0] >= w[1]),
        rows,
        points,
    };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let csv_path = dir.join("sweep.csv");
        fs::write(&csv_path, report.csv()).map_err(io_err(&csv_path))?;
        let json_path = dir.join("sweep.json");
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(&json_path, json + "\n").map_err(io_err(&json_path))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::parse_config;

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(vec![1.0, f64::NAN]).is_nan());
    }

    #[test]
    fn invalid_grid_points_are_rejected_up_front() {
        let base = parse_config("problem=bilinear-sec6\nrounds=5\n").unwrap();
        let spec = SweepSpec { base: base.clone(), param: SweepParam::Agents, values: vec![20.0, 21.0], trials: 1 };
        let err = run_sweep(&spec, 1, None).unwrap_err();
        assert!(err.to_string().contains("agents=21"), "{err}");
        let spec = SweepSpec { base, param: SweepParam::Agents, values: vec![2.5], trials: 1 };
        assert!(run_sweep(&spec, 1, None).is_err());
    }

    #[test]
    fn sweep_rows_match_single_runs() {
        let base = parse_config("problem=bilinear-sec6\nrounds=30\nagents=20\nalpha=0.05\nseed=4\n").unwrap();
        let spec = SweepSpec { base, param: SweepParam::Sigma2, values: vec![1.0, 100.0], trials: 2 };
        let dir = tempfile::tempdir().unwrap();
        let parallel = run_sweep(&spec, 3, Some(dir.path())).unwrap();
        let serial = run_sweep(&spec, 1, None).unwrap();
        assert_eq!(parallel.rows.len(), 4);
        for (a, b) in parallel.rows.iter().zip(&serial.rows) {
            assert_eq!(a.error_floor.to_bits(), b.error_floor.to_bits());
        }
        let cfg = spec.point_config(100.0, 1).unwrap();
        assert_eq!(cfg.seed, 5);
        let single = run_experiment(&cfg, ExecOptions::default(), None).unwrap();
        assert_eq!(single.summary.error_floor.unwrap(), parallel.rows[3].error_floor);
        let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("sigma2,trial,seed,error_floor,final_dist_sq\n"));
    }
}
