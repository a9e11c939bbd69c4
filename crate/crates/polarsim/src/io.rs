//! Config-file parsing, bit-stable serialization of logs and metrics,
//! and the CLI command implementations.
//!
//! Report bundle layout (one directory):
//!   events.csv           step,src,dst,provenance  (one row per edge)
//!   responses.csv        step,node,event           (one row per response)
//!   trigger_pre.csv      N x N counts, pre-polarization window
//!   trigger_post.csv     N x N counts, post-polarization window
//!   relative_scores.csv  per-node scores and ratios vs nodes 1 and 2
//!   ratio_series.csv     cumulative top/bottom ratio at checkpoints
//!   manifest.json        resolved config + seeds + tool version
//!
//! The manifest carries no wall-clock fields; rerunning with the same
//! config and seed reproduces every file byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ImportanceScheme, IncrementScope, Onset, SimulationConfig};
use crate::experiment::{
    compute_bundle, half_split, median_series, run_two_phase, ExperimentError, ExperimentSpec,
    MetricBundle,
};
use crate::metrics::{
    group_ratio_series, node_scores, relative_scores, trigger_matrix, MetricsError, RatioPoint,
    RatioSeries, TriggerMatrix, Window,
};
use crate::model::{
    apply_increments, init_importance, regime_at, run, Edge, EdgeSnapshot, EventLog,
    ImportanceSample, Provenance, StepOutcome,
};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments; exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// Filesystem failures or unreadable data files; exit code 3.
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(c) => c.into(),
            ExperimentError::Metrics(m) => m.into(),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------------
// config files

fn default_scheme() -> ImportanceScheme {
    ImportanceScheme::LinearRank
}

fn default_trace_interval() -> u64 {
    1000
}

fn default_interval() -> u64 {
    1000
}

/// On-disk TOML mirror of SimulationConfig + ExperimentSpec. Unknown
/// keys are rejected; the experiment-critical fields have no defaults.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    n_nodes: u32,
    basal_rate: f64,
    basal_fanout: u32,
    response_fanout: u32,
    horizon: u64,
    polarization_onset: Onset,
    seed: u64,
    #[serde(default = "default_scheme")]
    importance_scheme: ImportanceScheme,
    #[serde(default = "default_trace_interval")]
    trace_interval: u64,
    #[serde(default)]
    increment_scope: IncrementScope,
    #[serde(default)]
    seeds: Option<Vec<u64>>,
    #[serde(default = "default_interval")]
    interval: u64,
}

pub fn parse_config(path: &Path) -> Result<ExperimentSpec, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: ConfigFile =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config = SimulationConfig {
        n_nodes: file.n_nodes,
        basal_rate: file.basal_rate,
        basal_fanout: file.basal_fanout,
        response_fanout: file.response_fanout,
        horizon: file.horizon,
        polarization_onset: file.polarization_onset,
        seed: file.seed,
        importance_scheme: file.importance_scheme,
        trace_interval: file.trace_interval,
        increment_scope: file.increment_scope,
    };
    let spec = ExperimentSpec {
        seeds: file.seeds.unwrap_or_else(|| vec![config.seed]),
        interval: file.interval,
        config,
    };
    spec.validate()?;
    Ok(spec)
}

// ---------------------------------------------------------------------
// serialization

/// Resolved run description; sufficient to reproduce every other file
/// in the bundle exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool_version: String,
    pub config: SimulationConfig,
    pub seeds: Vec<u64>,
    pub interval: u64,
}

impl Manifest {
    pub fn new(config: SimulationConfig, seeds: Vec<u64>, interval: u64) -> Self {
        Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds,
            interval,
        }
    }
}

fn provenance_str(p: Provenance) -> &'static str {
    match p {
        Provenance::Basal => "basal",
        Provenance::Response => "response",
    }
}

pub fn events_csv(log: &EventLog) -> String {
    let mut out = String::from("step,src,dst,provenance\n");
    for snapshot in &log.snapshots {
        for e in &snapshot.edges {
            out.push_str(&format!(
                "{},{},{},{}\n",
                snapshot.step,
                e.src,
                e.dst,
                provenance_str(e.provenance)
            ));
        }
    }
    out
}

pub fn responses_csv(log: &EventLog) -> String {
    let mut out = String::from("step,node,event\n");
    for outcome in &log.outcomes {
        for &node in &outcome.responders {
            out.push_str(&format!("{},{node},response\n", outcome.step));
        }
    }
    out
}

/// N header-labeled columns (destination indices), N rows in source
/// order: row i, column j holds score_{i,j}.
pub fn trigger_matrix_csv(matrix: &TriggerMatrix) -> String {
    let n = matrix.n_nodes;
    let header: Vec<String> = (1..=n).map(|j| j.to_string()).collect();
    let mut out = header.join(",");
    out.push('\n');
    for src in 1..=n {
        let row: Vec<String> = matrix.row(src).iter().map(|c| c.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn opt_cell(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn rel_cell(rel: &Option<Vec<f64>>, node: u32) -> String {
    opt_cell(rel.as_ref().map(|v| v[(node - 1) as usize]))
}

pub fn relative_scores_csv(bundle: &MetricBundle) -> String {
    let mut out = String::from(
        "node,score_pre,score_post,rel_node1_pre,rel_node1_post,rel_node2_pre,rel_node2_post\n",
    );
    let n = bundle.trigger_pre.n_nodes;
    for node in 1..=n {
        let i = (node - 1) as usize;
        out.push_str(&format!(
            "{node},{},{},{},{},{},{}\n",
            bundle.scores_pre[i],
            bundle.scores_post[i],
            rel_cell(&bundle.relative_node1_pre, node),
            rel_cell(&bundle.relative_node1_post, node),
            rel_cell(&bundle.relative_node2_pre, node),
            rel_cell(&bundle.relative_node2_post, node),
        ));
    }
    out
}

pub fn ratio_series_csv(points: &[RatioPoint]) -> String {
    let mut out = String::from("step,ratio\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.step, opt_cell(p.ratio)));
    }
    out
}

/// Write via a temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn write_report_bundle(
    dir: &Path,
    log: &EventLog,
    bundle: &MetricBundle,
    manifest: &Manifest,
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let manifest_json =
        serde_json::to_string_pretty(manifest).map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(&dir.join("manifest.json"), &manifest_json)?;
    write_atomic(&dir.join("events.csv"), &events_csv(log))?;
    write_atomic(&dir.join("responses.csv"), &responses_csv(log))?;
    write_atomic(
        &dir.join("trigger_pre.csv"),
        &trigger_matrix_csv(&bundle.trigger_pre),
    )?;
    write_atomic(
        &dir.join("trigger_post.csv"),
        &trigger_matrix_csv(&bundle.trigger_post),
    )?;
    write_atomic(
        &dir.join("relative_scores.csv"),
        &relative_scores_csv(bundle),
    )?;
    write_atomic(
        &dir.join("ratio_series.csv"),
        &ratio_series_csv(&bundle.ratio_series.points),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------
// parsing a stored bundle back into an EventLog

fn bundle_dir(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().unwrap_or(Path::new(".")).to_path_buf()
    }
}

fn malformed(path: &Path, line_no: usize, why: &str) -> CliError {
    CliError::Io(format!("{}: line {line_no}: {why}", path.display()))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(&path, e))
}

/// Rebuild the full EventLog from a bundle directory (or a path to its
/// events.csv). Trigger pairs and the importance trace are recomputed
/// from the edges and responses, which determine them exactly.
pub fn read_event_log(path: &Path) -> Result<EventLog, CliError> {
    let dir = bundle_dir(path);
    let manifest = read_manifest(&dir)?;
    let config = manifest.config;
    config.validate()?;
    let horizon = config.horizon;

    let events_path = dir.join("events.csv");
    let text = fs::read_to_string(&events_path).map_err(|e| io_err(&events_path, e))?;
    let mut snapshots: Vec<EdgeSnapshot> = (1..=horizon).map(EdgeSnapshot::empty).collect();
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(malformed(&events_path, i + 1, "expected 4 fields"));
        }
        let step: u64 = fields[0]
            .parse()
            .map_err(|_| malformed(&events_path, i + 1, "bad step"))?;
        let src: u32 = fields[1]
            .parse()
            .map_err(|_| malformed(&events_path, i + 1, "bad src"))?;
        let dst: u32 = fields[2]
            .parse()
            .map_err(|_| malformed(&events_path, i + 1, "bad dst"))?;
        let provenance = match fields[3] {
            "basal" => Provenance::Basal,
            "response" => Provenance::Response,
            _ => return Err(malformed(&events_path, i + 1, "bad provenance")),
        };
        if step < 1 || step > horizon {
            return Err(malformed(&events_path, i + 1, "step out of range"));
        }
        if src == dst || src < 1 || src > config.n_nodes || dst < 1 || dst > config.n_nodes {
            return Err(malformed(&events_path, i + 1, "bad edge endpoints"));
        }
        snapshots[(step - 1) as usize].edges.push(Edge {
            src,
            dst,
            provenance,
        });
    }
    for snapshot in &mut snapshots {
        snapshot.edges.sort_by_key(|e| (e.src, e.dst));
    }

    let responses_path = dir.join("responses.csv");
    let text = fs::read_to_string(&responses_path).map_err(|e| io_err(&responses_path, e))?;
    let mut responders: Vec<Vec<u32>> = vec![Vec::new(); horizon as usize];
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 || fields[2] != "response" {
            return Err(malformed(
                &responses_path,
                i + 1,
                "expected step,node,response",
            ));
        }
        let step: u64 = fields[0]
            .parse()
            .map_err(|_| malformed(&responses_path, i + 1, "bad step"))?;
        let node: u32 = fields[1]
            .parse()
            .map_err(|_| malformed(&responses_path, i + 1, "bad node"))?;
        if step < 1 || step > horizon || node < 1 || node > config.n_nodes {
            return Err(malformed(&responses_path, i + 1, "out of range"));
        }
        responders[(step - 1) as usize].push(node);
    }

    let mut outcomes = Vec::with_capacity(horizon as usize);
    for (idx, mut nodes) in responders.into_iter().enumerate() {
        nodes.sort_unstable();
        let snapshot = &snapshots[idx];
        let mut trigger_pairs = Vec::new();
        for &node in &nodes {
            for src in snapshot.in_sources(node) {
                trigger_pairs.push((src, node));
            }
        }
        outcomes.push(StepOutcome {
            step: idx as u64 + 1,
            responders: nodes,
            trigger_pairs,
        });
    }

    // replay increments to rebuild the importance trace
    let mut importance = init_importance(&config)?;
    let mut importance_trace = vec![ImportanceSample {
        step: 0,
        values: importance.values().to_vec(),
    }];
    for (idx, outcome) in outcomes.iter().enumerate() {
        let k = idx as u64 + 1;
        apply_increments(
            &mut importance,
            outcome,
            regime_at(&config, k),
            config.increment_scope,
        );
        if k.is_multiple_of(config.trace_interval) {
            importance_trace.push(ImportanceSample {
                step: k,
                values: importance.values().to_vec(),
            });
        }
    }

    Ok(EventLog {
        config,
        snapshots,
        outcomes,
        importance_trace,
    })
}

// ---------------------------------------------------------------------
// CLI argument helpers

/// Parse "a..b" into an inclusive step range.
pub fn parse_range(text: &str) -> Result<(u64, u64), CliError> {
    let parts: Vec<&str> = text.split("..").collect();
    let err = || CliError::Config(format!("invalid range {text:?}: expected <a>..<b>"));
    if parts.len() != 2 {
        return Err(err());
    }
    let a: u64 = parts[0].parse().map_err(|_| err())?;
    let b: u64 = parts[1].parse().map_err(|_| err())?;
    if a < 1 || a > b {
        return Err(CliError::Config(format!(
            "invalid range {text:?}: need 1 <= a <= b"
        )));
    }
    Ok((a, b))
}

/// Parse "top=a..b" / "bottom=c..d" group arguments.
pub fn parse_group(text: &str, expected_key: &str) -> Result<Vec<u32>, CliError> {
    let err = || {
        CliError::Config(format!(
            "invalid group {text:?}: expected {expected_key}=<a>..<b>"
        ))
    };
    let (key, range) = text.split_once('=').ok_or_else(err)?;
    if key != expected_key {
        return Err(err());
    }
    let (a, b) = parse_range(range)?;
    if b > u64::from(u32::MAX) {
        return Err(err());
    }
    Ok((a as u32..=b as u32).collect())
}

/// Seeds argument: a comma-separated list, or a bare count k meaning
/// base_seed..base_seed+k-1.
pub fn resolve_seeds(arg: Option<&str>, spec: &ExperimentSpec) -> Result<Vec<u64>, CliError> {
    let Some(text) = arg else {
        return Ok(spec.seeds.clone());
    };
    let err = |t: &str| CliError::Config(format!("invalid seeds {t:?}: expected a list or count"));
    if text.contains(',') {
        text.split(',')
            .map(|s| s.trim().parse::<u64>().map_err(|_| err(text)))
            .collect()
    } else {
        let count: u64 = text.trim().parse().map_err(|_| err(text))?;
        if count == 0 {
            return Err(CliError::Config("seed count must be >= 1".into()));
        }
        let base = spec.config.seed;
        Ok((0..count).map(|i| base.wrapping_add(i)).collect())
    }
}

// ---------------------------------------------------------------------
// commands

/// `simulate --config <path> --out <dir>`: one run under the config's
/// own polarization onset, full report bundle.
pub fn cmd_simulate(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let spec = parse_config(config_path)?;
    let log = run(&spec.config)?;
    let bundle = compute_bundle(&log, spec.interval)?;
    let manifest = Manifest::new(spec.config.clone(), vec![spec.config.seed], spec.interval);
    write_report_bundle(out_dir, &log, &bundle, &manifest)
}

/// `metrics --log <path> --window <a..b> [--ratio top=.. bottom=..]`:
/// recompute metrics from a stored log without re-simulation.
pub fn cmd_metrics(
    log_path: &Path,
    window: (u64, u64),
    ratio_groups: Option<(Vec<u32>, Vec<u32>)>,
    interval: u64,
    out_dir: &Path,
) -> Result<(), CliError> {
    let log = read_event_log(log_path)?;
    let window = Window::new(window.0, window.1);
    let matrix = trigger_matrix(&log, window)?;
    let scores = node_scores(&log, window)?;
    let rel1 = relative_scores(&log, 1, window)?;
    let rel2 = relative_scores(&log, 2, window)?;

    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    write_atomic(&out_dir.join("trigger.csv"), &trigger_matrix_csv(&matrix))?;
    let mut scores_csv = String::from("node,score,rel_node1,rel_node2\n");
    for node in 1..=log.config.n_nodes {
        let i = (node - 1) as usize;
        scores_csv.push_str(&format!(
            "{node},{},{},{}\n",
            scores[i],
            rel_cell(&rel1, node),
            rel_cell(&rel2, node),
        ));
    }
    write_atomic(&out_dir.join("scores.csv"), &scores_csv)?;

    if let Some((top, bottom)) = ratio_groups {
        let series = group_ratio_series(&log, &top, &bottom, interval)?;
        write_atomic(
            &out_dir.join("ratio_series.csv"),
            &ratio_series_csv(&series.points),
        )?;
    }
    Ok(())
}

/// `sweep --config <path> [--seeds <list|count>] --out <dir>`: one
/// two-phase run per seed, each written as a full bundle under
/// seed_<s>/, plus the elementwise median ratio series.
pub fn cmd_sweep(
    config_path: &Path,
    seeds_arg: Option<&str>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let mut spec = parse_config(config_path)?;
    spec.seeds = resolve_seeds(seeds_arg, &spec)?;
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;

    let series: Vec<RatioSeries> = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let (log, bundle) = run_two_phase(&spec, seed)?;
            let manifest = Manifest::new(log.config.clone(), vec![seed], spec.interval);
            write_report_bundle(
                &out_dir.join(format!("seed_{seed}")),
                &log,
                &bundle,
                &manifest,
            )?;
            Ok(bundle.ratio_series)
        })
        .collect::<Result<_, CliError>>()?;

    let median = median_series(&series);
    write_atomic(
        &out_dir.join("ratio_series_median.csv"),
        &ratio_series_csv(&median),
    )?;
    let manifest = Manifest::new(spec.config.clone(), spec.seeds.clone(), spec.interval);
    let manifest_json =
        serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(&out_dir.join("manifest.json"), &manifest_json)?;
    // record the top/bottom split used by every seed's ratio series
    let (top, bottom) = half_split(spec.config.n_nodes);
    let groups = format!(
        "group,first,last\ntop,{},{}\nbottom,{},{}\n",
        top.first().unwrap(),
        top.last().unwrap(),
        bottom.first().unwrap(),
        bottom.last().unwrap()
    );
    write_atomic(&out_dir.join("groups.csv"), &groups)?;
    Ok(())
}
