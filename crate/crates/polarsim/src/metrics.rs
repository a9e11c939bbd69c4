//! Derived quantities computed from an EventLog: trigger matrices,
//! windowed node scores, relative scores, and group power-ratio series.
//! All pure functions of the log.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{parity, EventLog};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("window {start}..{end} exceeds the log horizon {horizon}")]
    WindowOutOfRange { start: u64, end: u64, horizon: u64 },
    #[error("window must be non-empty")]
    EmptyWindow,
    #[error("node index {node} out of range 1..={n_nodes}")]
    NodeOutOfRange { node: u32, n_nodes: u32 },
    #[error("top and bottom sets must be non-empty and disjoint")]
    BadGroups,
    #[error("interval must be >= 1")]
    ZeroInterval,
}

/// Inclusive 1-based step range. start > end denotes the empty window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: u64,
    pub end: u64,
}

impl Window {
    pub fn new(start: u64, end: u64) -> Self {
        Window { start, end }
    }

    pub fn is_empty(&self) -> bool {
        self.start > self.end
    }

    pub fn len(&self) -> u64 {
        if self.is_empty() {
            0
        } else {
            self.end - self.start + 1
        }
    }

    fn check(&self, log: &EventLog) -> Result<(), MetricsError> {
        if !self.is_empty() && (self.start < 1 || self.end > log.config.horizon) {
            return Err(MetricsError::WindowOutOfRange {
                start: self.start,
                end: self.end,
                horizon: log.config.horizon,
            });
        }
        Ok(())
    }
}

/// score_{i,j} counts over a window: entry (i, j) is the number of steps
/// at which i had an edge toward j and j responded.
#[derive(Clone, Debug, PartialEq)]
pub struct TriggerMatrix {
    pub n_nodes: u32,
    pub window: Window,
    counts: Vec<u64>,
}

impl TriggerMatrix {
    fn zero(n_nodes: u32, window: Window) -> Self {
        TriggerMatrix {
            n_nodes,
            window,
            counts: vec![0; (n_nodes as usize) * (n_nodes as usize)],
        }
    }

    pub fn get(&self, src: u32, dst: u32) -> u64 {
        self.counts[((src - 1) as usize) * (self.n_nodes as usize) + (dst - 1) as usize]
    }

    fn bump(&mut self, src: u32, dst: u32) {
        self.counts[((src - 1) as usize) * (self.n_nodes as usize) + (dst - 1) as usize] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row(&self, src: u32) -> &[u64] {
        let n = self.n_nodes as usize;
        let offset = ((src - 1) as usize) * n;
        &self.counts[offset..offset + n]
    }

    /// Fraction of the total count carried by cross-parity (i, j) pairs;
    /// absent when the matrix is all zero.
    pub fn cross_group_fraction(&self) -> Option<f64> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let mut cross = 0u64;
        for src in 1..=self.n_nodes {
            for dst in 1..=self.n_nodes {
                if parity(src) != parity(dst) {
                    cross += self.get(src, dst);
                }
            }
        }
        Some(cross as f64 / total as f64)
    }
}

pub fn trigger_matrix(log: &EventLog, window: Window) -> Result<TriggerMatrix, MetricsError> {
    window.check(log)?;
    let mut matrix = TriggerMatrix::zero(log.config.n_nodes, window);
    if window.is_empty() {
        return Ok(matrix);
    }
    for outcome in &log.outcomes[(window.start - 1) as usize..window.end as usize] {
        for &(src, responder) in &outcome.trigger_pairs {
            matrix.bump(src, responder);
        }
    }
    Ok(matrix)
}

/// Per-node trigger participations in the window divided by the window
/// length. Index i-1 holds node i's score.
pub fn node_scores(log: &EventLog, window: Window) -> Result<Vec<f64>, MetricsError> {
    window.check(log)?;
    if window.is_empty() {
        return Err(MetricsError::EmptyWindow);
    }
    let mut counts = vec![0u64; log.config.n_nodes as usize];
    for outcome in &log.outcomes[(window.start - 1) as usize..window.end as usize] {
        for &(src, _) in &outcome.trigger_pairs {
            counts[(src - 1) as usize] += 1;
        }
    }
    let len = window.len() as f64;
    Ok(counts.iter().map(|&c| c as f64 / len).collect())
}

/// score_i / score_reference for every node; None when the reference
/// node scored 0 in the window.
pub fn relative_scores(
    log: &EventLog,
    reference: u32,
    window: Window,
) -> Result<Option<Vec<f64>>, MetricsError> {
    if reference < 1 || reference > log.config.n_nodes {
        return Err(MetricsError::NodeOutOfRange {
            node: reference,
            n_nodes: log.config.n_nodes,
        });
    }
    let scores = node_scores(log, window)?;
    let ref_score = scores[(reference - 1) as usize];
    if ref_score == 0.0 {
        return Ok(None);
    }
    Ok(Some(scores.iter().map(|&s| s / ref_score).collect()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub step: u64,
    /// None when the bottom group's cumulative count is zero.
    pub ratio: Option<f64>,
}

/// Running cumulative top/bottom trigger-count ratio, checkpointed at
/// fixed intervals from step 1 (the paper's Fig. 3/4 trajectories).
#[derive(Clone, Debug, PartialEq)]
pub struct RatioSeries {
    pub top_set: Vec<u32>,
    pub bottom_set: Vec<u32>,
    pub interval: u64,
    pub points: Vec<RatioPoint>,
}

pub fn group_ratio_series(
    log: &EventLog,
    top_set: &[u32],
    bottom_set: &[u32],
    interval: u64,
) -> Result<RatioSeries, MetricsError> {
    if interval == 0 {
        return Err(MetricsError::ZeroInterval);
    }
    if top_set.is_empty() || bottom_set.is_empty() {
        return Err(MetricsError::BadGroups);
    }
    let n = log.config.n_nodes;
    for &node in top_set.iter().chain(bottom_set) {
        if node < 1 || node > n {
            return Err(MetricsError::NodeOutOfRange { node, n_nodes: n });
        }
    }
    let mut membership = vec![0i8; n as usize + 1];
    for &node in top_set {
        membership[node as usize] = 1;
    }
    for &node in bottom_set {
        if membership[node as usize] != 0 {
            return Err(MetricsError::BadGroups);
        }
        membership[node as usize] = -1;
    }

    let mut top_count = 0u64;
    let mut bottom_count = 0u64;
    let mut points = Vec::new();
    for outcome in &log.outcomes {
        for &(src, _) in &outcome.trigger_pairs {
            match membership[src as usize] {
                1 => top_count += 1,
                -1 => bottom_count += 1,
                _ => {}
            }
        }
        let k = outcome.step;
        if k % interval == 0 || k == log.config.horizon {
            points.push(RatioPoint {
                step: k,
                ratio: if bottom_count == 0 {
                    None
                } else {
                    Some(top_count as f64 / bottom_count as f64)
                },
            });
        }
    }
    Ok(RatioSeries {
        top_set: top_set.to_vec(),
        bottom_set: bottom_set.to_vec(),
        interval,
        points,
    })
}
