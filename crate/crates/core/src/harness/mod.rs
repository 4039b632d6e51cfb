//! Config parsing plus the drivers for single runs and parameter sweeps.

mod config;
mod experiment;
mod sweep;

pub use config::{
    parse_config, Algo, AttackKind, ConfigError, PartitionKind, RunConfig, StepSize, CONFIG_KEYS,
};
pub use experiment::{
    format_number, run_experiment, trace_csv, ExecOptions, ExperimentOutput, HarnessError, Summary,
    TRACE_HEADER,
};
pub use sweep::{run_sweep, SweepParam, SweepPoint, SweepReport, SweepRow, SweepSpec};
