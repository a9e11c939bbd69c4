//! Simulation parameters and validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("n_nodes must be >= 2 (got {0})")]
    TooFewNodes(u32),
    #[error("basal_rate must be a probability in [0, 1] (got {0})")]
    BasalRateOutOfRange(f64),
    #[error(
        "basal_fanout must be >= 1 and <= n_nodes - 1 (got {fanout} with n_nodes = {n_nodes})"
    )]
    BasalFanout { fanout: u32, n_nodes: u32 },
    #[error(
        "response_fanout must be >= 1 and <= n_nodes - 1 (got {fanout} with n_nodes = {n_nodes})"
    )]
    ResponseFanout { fanout: u32, n_nodes: u32 },
    #[error("polarization_onset must be <= horizon (got {onset} with horizon = {horizon})")]
    OnsetPastHorizon { onset: u64, horizon: u64 },
    #[error("trace_interval must be >= 1")]
    ZeroTraceInterval,
    #[error("importance_scheme explicit-list must have exactly n_nodes = {expected} entries (got {got})")]
    ExplicitListLength { expected: u32, got: usize },
    #[error("importance_scheme explicit-list entries must be finite and strictly positive (entry {index} is {value})")]
    ExplicitListNonPositive { index: usize, value: f64 },
    #[error("importance_scheme explicit-list must be non-decreasing (entry {index} is {value}, previous is {previous})")]
    ExplicitListUnsorted {
        index: usize,
        value: f64,
        previous: f64,
    },
    #[error("seeds must contain at least one seed")]
    NoSeeds,
    #[error("interval must be >= 1")]
    ZeroInterval,
}

/// Step index at which the polarized regime activates, or never.
///
/// A step `k` runs polarized iff `k > onset`, so `onset` is the last
/// homogeneous step: onset = horizon/2 yields two equal phases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Onset {
    Step(u64),
    Never,
}

impl Serialize for Onset {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Onset::Step(k) => serializer.serialize_u64(*k),
            Onset::Never => serializer.serialize_str("never"),
        }
    }
}

impl<'de> Deserialize<'de> for Onset {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Step(u64),
            Word(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Step(k) => Ok(Onset::Step(k)),
            Repr::Word(w) if w == "never" => Ok(Onset::Never),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "invalid polarization_onset {w:?}: expected a step index or \"never\""
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImportanceScheme {
    /// l_i = i for i = 1..N.
    LinearRank,
    /// Caller-supplied values, must be positive and non-decreasing.
    ExplicitList(Vec<f64>),
}

/// Who receives the +1 importance increment when a node responds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IncrementScope {
    /// Every in-neighbor of a responder, regardless of group.
    #[default]
    All,
    /// Under the polarized regime, only same-parity in-neighbors.
    InGroupOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Number of nodes N; node indices are 1-based (1..=N).
    pub n_nodes: u32,
    /// Per-node per-step probability b of spontaneously creating content.
    pub basal_rate: f64,
    /// Edges emitted per basal event (c_b).
    pub basal_fanout: u32,
    /// Edges emitted per response event (c_r).
    pub response_fanout: u32,
    /// Total time steps T; steps are indexed 1..=T.
    pub horizon: u64,
    pub polarization_onset: Onset,
    pub seed: u64,
    #[serde(default = "default_scheme")]
    pub importance_scheme: ImportanceScheme,
    /// Steps between importance snapshots in the event log.
    #[serde(default = "default_trace_interval")]
    pub trace_interval: u64,
    #[serde(default)]
    pub increment_scope: IncrementScope,
}

fn default_scheme() -> ImportanceScheme {
    ImportanceScheme::LinearRank
}

fn default_trace_interval() -> u64 {
    1000
}

impl SimulationConfig {
    /// Smoke-test defaults (b = 0.01, c_b = c_r = 3). Experiment configs
    /// must spell every parameter out in the config file instead.
    pub fn smoke(n_nodes: u32, horizon: u64, seed: u64) -> Self {
        SimulationConfig {
            n_nodes,
            basal_rate: 0.01,
            basal_fanout: 3,
            response_fanout: 3,
            horizon,
            polarization_onset: Onset::Never,
            seed,
            importance_scheme: ImportanceScheme::LinearRank,
            trace_interval: 1000,
            increment_scope: IncrementScope::All,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_nodes < 2 {
            return Err(ConfigError::TooFewNodes(self.n_nodes));
        }
        if !self.basal_rate.is_finite() || !(0.0..=1.0).contains(&self.basal_rate) {
            return Err(ConfigError::BasalRateOutOfRange(self.basal_rate));
        }
        if self.basal_fanout == 0 || self.basal_fanout > self.n_nodes - 1 {
            return Err(ConfigError::BasalFanout {
                fanout: self.basal_fanout,
                n_nodes: self.n_nodes,
            });
        }
        if self.response_fanout == 0 || self.response_fanout > self.n_nodes - 1 {
            return Err(ConfigError::ResponseFanout {
                fanout: self.response_fanout,
                n_nodes: self.n_nodes,
            });
        }
        if let Onset::Step(onset) = self.polarization_onset {
            if onset > self.horizon {
                return Err(ConfigError::OnsetPastHorizon {
                    onset,
                    horizon: self.horizon,
                });
            }
        }
        if self.trace_interval == 0 {
            return Err(ConfigError::ZeroTraceInterval);
        }
        if let ImportanceScheme::ExplicitList(values) = &self.importance_scheme {
            if values.len() != self.n_nodes as usize {
                return Err(ConfigError::ExplicitListLength {
                    expected: self.n_nodes,
                    got: values.len(),
                });
            }
            for (index, &value) in values.iter().enumerate() {
                if !value.is_finite() || value <= 0.0 {
                    return Err(ConfigError::ExplicitListNonPositive { index, value });
                }
                if index > 0 && value < values[index - 1] {
                    return Err(ConfigError::ExplicitListUnsorted {
                        index,
                        value,
                        previous: values[index - 1],
                    });
                }
            }
        }
        Ok(())
    }
}
