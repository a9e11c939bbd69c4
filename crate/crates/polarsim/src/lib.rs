//! Discrete-time stochastic simulator of an importance-driven message
//! exchange network with an optional odd/even polarization regime, plus
//! the metrics pipeline (trigger matrices, node scores, group power
//! ratios) and experiment orchestration used by the `polarsim` CLI.

pub mod config;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod model;

pub use config::{ConfigError, ImportanceScheme, IncrementScope, Onset, SimulationConfig};
pub use experiment::{run_sweep, run_two_phase, ExperimentSpec, MetricBundle, SweepSummary};
pub use metrics::{
    group_ratio_series, node_scores, relative_scores, trigger_matrix, RatioSeries, TriggerMatrix,
    Window,
};
pub use model::{run, EventLog, ImportanceState, Regime, Simulation};
