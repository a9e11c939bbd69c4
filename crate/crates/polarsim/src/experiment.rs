//! Experiment protocols: two-phase runs and multi-seed sweeps with
//! median aggregation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, Onset, SimulationConfig};
use crate::metrics::{
    group_ratio_series, node_scores, relative_scores, trigger_matrix, MetricsError, RatioPoint,
    RatioSeries, TriggerMatrix, Window,
};
use crate::model::{run, EventLog};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub config: SimulationConfig,
    pub seeds: Vec<u64>,
    /// Checkpoint spacing for ratio series (the paper's 1K interval).
    pub interval: u64,
}

impl ExperimentSpec {
    pub fn new(config: SimulationConfig) -> Self {
        let seed = config.seed;
        ExperimentSpec {
            config,
            seeds: vec![seed],
            interval: 1000,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.config.validate()?;
        if self.seeds.is_empty() {
            return Err(ConfigError::NoSeeds);
        }
        if self.interval == 0 {
            return Err(ConfigError::ZeroInterval);
        }
        Ok(())
    }
}

/// Bottom half = nodes 1..=N/2 by initial rank, top half the rest,
/// fixed for the whole run.
pub fn half_split(n_nodes: u32) -> (Vec<u32>, Vec<u32>) {
    let half = n_nodes / 2;
    let bottom = (1..=half).collect();
    let top = (half + 1..=n_nodes).collect();
    (top, bottom)
}

/// Every derived quantity of one run: pre/post trigger matrices and
/// scores, relative scores vs the two lowest-ranked nodes, and the
/// cumulative top/bottom ratio series.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricBundle {
    pub pre_window: Window,
    pub post_window: Window,
    pub trigger_pre: TriggerMatrix,
    pub trigger_post: TriggerMatrix,
    pub scores_pre: Vec<f64>,
    pub scores_post: Vec<f64>,
    pub relative_node1_pre: Option<Vec<f64>>,
    pub relative_node1_post: Option<Vec<f64>>,
    pub relative_node2_pre: Option<Vec<f64>>,
    pub relative_node2_post: Option<Vec<f64>>,
    pub ratio_series: RatioSeries,
}

/// Pre window = homogeneous phase, post window = polarized phase.
/// With onset = never the whole run is the pre window.
pub fn phase_windows(config: &SimulationConfig) -> (Window, Window) {
    match config.polarization_onset {
        Onset::Step(onset) => (
            Window::new(1, onset),
            Window::new(onset + 1, config.horizon),
        ),
        Onset::Never => (
            Window::new(1, config.horizon),
            Window::new(config.horizon + 1, config.horizon),
        ),
    }
}

/// Compute the full metric bundle from a finished run.
pub fn compute_bundle(log: &EventLog, interval: u64) -> Result<MetricBundle, MetricsError> {
    let (pre_window, post_window) = phase_windows(&log.config);
    let n = log.config.n_nodes;
    let zero_scores = || vec![0.0; n as usize];
    let scores_for = |w: Window| -> Result<Vec<f64>, MetricsError> {
        if w.is_empty() {
            Ok(zero_scores())
        } else {
            node_scores(log, w)
        }
    };
    let relative_for = |reference: u32, w: Window| -> Result<Option<Vec<f64>>, MetricsError> {
        if w.is_empty() {
            Ok(None)
        } else {
            relative_scores(log, reference, w)
        }
    };
    let (top_set, bottom_set) = half_split(n);
    Ok(MetricBundle {
        pre_window,
        post_window,
        trigger_pre: trigger_matrix(log, pre_window)?,
        trigger_post: trigger_matrix(log, post_window)?,
        scores_pre: scores_for(pre_window)?,
        scores_post: scores_for(post_window)?,
        relative_node1_pre: relative_for(1, pre_window)?,
        relative_node1_post: relative_for(1, post_window)?,
        relative_node2_pre: relative_for(2, pre_window)?,
        relative_node2_post: relative_for(2, post_window)?,
        ratio_series: group_ratio_series(log, &top_set, &bottom_set, interval)?,
    })
}

/// One two-phase run: polarization onset forced to horizon/2, metrics
/// computed over the homogeneous and polarized halves.
pub fn run_two_phase(
    spec: &ExperimentSpec,
    seed: u64,
) -> Result<(EventLog, MetricBundle), ExperimentError> {
    let mut config = spec.config.clone();
    config.seed = seed;
    config.polarization_onset = Onset::Step(config.horizon / 2);
    config.validate()?;
    let log = run(&config)?;
    let bundle = compute_bundle(&log, spec.interval)?;
    Ok((log, bundle))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub seeds: Vec<u64>,
    pub per_seed_series: Vec<RatioSeries>,
    /// Elementwise median across seeds; a point is absent only when no
    /// seed defines it.
    pub median_series: Vec<RatioPoint>,
    pub trigger_pre: Vec<TriggerMatrix>,
    pub trigger_post: Vec<TriggerMatrix>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    })
}

/// Elementwise median of ratio series that share checkpoint steps.
pub fn median_series(series: &[RatioSeries]) -> Vec<RatioPoint> {
    let Some(first) = series.first() else {
        return Vec::new();
    };
    (0..first.points.len())
        .map(|i| {
            let step = first.points[i].step;
            let mut defined: Vec<f64> = series
                .iter()
                .filter_map(|s| s.points.get(i).and_then(|p| p.ratio))
                .collect();
            RatioPoint {
                step,
                ratio: median(&mut defined),
            }
        })
        .collect()
}

/// Independent two-phase runs per seed (parallel), median-aggregated.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepSummary, ExperimentError> {
    spec.validate()?;
    let results: Vec<(RatioSeries, TriggerMatrix, TriggerMatrix)> = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let (_, bundle) = run_two_phase(spec, seed)?;
            Ok((bundle.ratio_series, bundle.trigger_pre, bundle.trigger_post))
        })
        .collect::<Result<_, ExperimentError>>()?;
    let per_seed_series: Vec<RatioSeries> = results.iter().map(|r| r.0.clone()).collect();
    let median_series = median_series(&per_seed_series);
    Ok(SweepSummary {
        seeds: spec.seeds.clone(),
        per_seed_series,
        median_series,
        trigger_pre: results.iter().map(|r| r.1.clone()).collect(),
        trigger_post: results.into_iter().map(|r| r.2).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ExperimentSpec {
        let mut cfg = SimulationConfig::smoke(8, 400, 9);
        cfg.basal_rate = 0.1;
        ExperimentSpec {
            config: cfg,
            seeds: vec![1, 2, 3],
            interval: 100,
        }
    }

    #[test]
    fn two_phase_bundle_shapes() {
        let spec = small_spec();
        let (log, bundle) = run_two_phase(&spec, 5).unwrap();
        assert_eq!(log.snapshots.len(), 400);
        assert_eq!(bundle.pre_window, Window::new(1, 200));
        assert_eq!(bundle.post_window, Window::new(201, 400));
        assert_eq!(bundle.trigger_pre.n_nodes, 8);
        assert_eq!(bundle.scores_pre.len(), 8);
        assert_eq!(bundle.ratio_series.points.len(), 4);
        assert_eq!(bundle.ratio_series.top_set, vec![5, 6, 7, 8]);
        assert_eq!(bundle.ratio_series.bottom_set, vec![1, 2, 3, 4]);
    }

    #[test]
    fn degenerate_two_step_bundle() {
        let mut cfg = SimulationConfig::smoke(4, 2, 1);
        cfg.basal_rate = 1.0;
        let spec = ExperimentSpec {
            config: cfg,
            seeds: vec![1],
            interval: 1,
        };
        let (log, bundle) = run_two_phase(&spec, 1).unwrap();
        assert_eq!(log.snapshots.len(), 2);
        assert_eq!(bundle.pre_window, Window::new(1, 1));
        assert_eq!(bundle.post_window, Window::new(2, 2));
        assert_eq!(bundle.ratio_series.points.len(), 2);
    }

    #[test]
    fn two_phase_equals_manual_composition() {
        let spec = small_spec();
        let (log, bundle) = run_two_phase(&spec, 5).unwrap();
        let mut cfg = spec.config.clone();
        cfg.seed = 5;
        cfg.polarization_onset = Onset::Step(200);
        let manual = run(&cfg).unwrap();
        assert_eq!(log, manual);
        assert_eq!(
            bundle.trigger_pre,
            trigger_matrix(&manual, Window::new(1, 200)).unwrap()
        );
    }

    #[test]
    fn sweep_single_seed_median_is_identity() {
        let mut spec = small_spec();
        spec.seeds = vec![7];
        let summary = run_sweep(&spec).unwrap();
        assert_eq!(summary.per_seed_series.len(), 1);
        for (m, p) in summary
            .median_series
            .iter()
            .zip(&summary.per_seed_series[0].points)
        {
            assert_eq!(m.ratio, p.ratio);
            assert_eq!(m.step, p.step);
        }
    }

    #[test]
    fn sweep_repeated_seed_is_identical() {
        let mut spec = small_spec();
        spec.seeds = vec![4, 4];
        let summary = run_sweep(&spec).unwrap();
        assert_eq!(summary.per_seed_series[0], summary.per_seed_series[1]);
        assert_eq!(summary.trigger_pre[0], summary.trigger_pre[1]);
    }

    #[test]
    fn seed_permutation_permutes_outputs() {
        let mut spec = small_spec();
        spec.seeds = vec![1, 2, 3];
        let a = run_sweep(&spec).unwrap();
        spec.seeds = vec![3, 1, 2];
        let b = run_sweep(&spec).unwrap();
        assert_eq!(a.per_seed_series[0], b.per_seed_series[1]);
        assert_eq!(a.per_seed_series[2], b.per_seed_series[0]);
        for (x, y) in a.median_series.iter().zip(&b.median_series) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn median_odd_even_counts() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut Vec::new()), None);
    }
}
