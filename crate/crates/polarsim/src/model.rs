//! Core stepping rule: basal and response edge generation, response
//! sampling, importance increments, and the polarized regime.
//!
//! Node indices are 1-based throughout (l_1..l_N convention); parity of a
//! node is the parity of its 1-based index.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ImportanceScheme, IncrementScope, Onset, SimulationConfig};

/// The deterministic random stream. One stream per run, consumed in a
/// fixed order: basal draws in ascending node order, then response draws
/// in ascending node order, then response-edge destinations in ascending
/// responder order.
pub type SimRng = ChaCha8Rng;

pub fn rng_for_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Basal,
    Response,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub src: u32,
    pub dst: u32,
    pub provenance: Provenance,
}

/// Directed adjacency A^[k] for one step: unique (src, dst) pairs, no
/// self-loops, sorted by (src, dst).
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSnapshot {
    pub step: u64,
    pub edges: Vec<Edge>,
}

impl EdgeSnapshot {
    pub fn empty(step: u64) -> Self {
        EdgeSnapshot {
            step,
            edges: Vec::new(),
        }
    }

    /// Merge freshly generated emissions into one snapshot. Duplicate
    /// (src, dst) pairs collapse to a single edge; response provenance
    /// wins on merge.
    pub fn merge(step: u64, basal: Vec<Edge>, response: Vec<Edge>) -> Self {
        let mut map: BTreeMap<(u32, u32), Provenance> = BTreeMap::new();
        for e in basal {
            map.insert((e.src, e.dst), e.provenance);
        }
        for e in response {
            map.insert((e.src, e.dst), Provenance::Response);
        }
        let edges = map
            .into_iter()
            .map(|((src, dst), provenance)| Edge {
                src,
                dst,
                provenance,
            })
            .collect();
        EdgeSnapshot { step, edges }
    }

    pub fn in_sources(&self, node: u32) -> impl Iterator<Item = u32> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.dst == node)
            .map(|e| e.src)
    }

    pub fn in_degree(&self, node: u32) -> usize {
        self.in_sources(node).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

pub fn parity(node: u32) -> Parity {
    if node.is_multiple_of(2) {
        Parity::Even
    } else {
        Parity::Odd
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Homogeneous,
    OddEven,
}

/// Which regime governs step `k` under the given config.
pub fn regime_at(config: &SimulationConfig, k: u64) -> Regime {
    match config.polarization_onset {
        Onset::Step(onset) if k > onset => Regime::OddEven,
        _ => Regime::Homogeneous,
    }
}

/// The mutable importance vector l. Values only ever grow.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceState {
    values: Vec<f64>,
}

impl ImportanceState {
    pub fn from_values(values: Vec<f64>) -> Self {
        ImportanceState { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, node: u32) -> f64 {
        self.values[(node - 1) as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Current maximum, used as l_N in every denominator.
    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn increment(&mut self, node: u32) {
        self.values[(node - 1) as usize] += 1.0;
    }
}

pub fn init_importance(config: &SimulationConfig) -> Result<ImportanceState, ConfigError> {
    config.validate()?;
    let values = match &config.importance_scheme {
        ImportanceScheme::LinearRank => (1..=config.n_nodes).map(f64::from).collect(),
        ImportanceScheme::ExplicitList(values) => values.clone(),
    };
    Ok(ImportanceState::from_values(values))
}

/// Importance as seen by a node of `target` parity: same-parity values
/// kept, opposite-parity values negated (index i is node i+1).
pub fn signed_importance_view(importance: &ImportanceState, target: Parity) -> Vec<f64> {
    importance
        .values()
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if parity(i as u32 + 1) == target {
                l
            } else {
                -l
            }
        })
        .collect()
}

fn probability_from_sources(
    node: u32,
    sources: &[u32],
    importance: &ImportanceState,
    l_max: f64,
    regime: Regime,
) -> f64 {
    if sources.is_empty() {
        return 0.0;
    }
    let target = parity(node);
    let mut numerator = 0.0;
    for &src in sources {
        let l = importance.get(src);
        numerator += match regime {
            Regime::Homogeneous => l,
            Regime::OddEven => {
                if parity(src) == target {
                    l
                } else {
                    -l
                }
            }
        };
    }
    // negative polarized numerator clamps to probability 0
    let p = numerator.max(0.0) / (1.0 + l_max * sources.len() as f64);
    debug_assert!(
        (0.0..1.0).contains(&p),
        "response probability {p} out of [0,1)"
    );
    p
}

/// Probability that `node` responds given its in-edges at this step.
/// Zero in-degree gives exactly 0.
pub fn response_probability(
    node: u32,
    snapshot: &EdgeSnapshot,
    importance: &ImportanceState,
    regime: Regime,
) -> f64 {
    let sources: Vec<u32> = snapshot.in_sources(node).collect();
    probability_from_sources(node, &sources, importance, importance.max(), regime)
}

/// Pick `fanout` distinct destinations uniformly from 1..=n excluding `src`.
fn sample_destinations(rng: &mut SimRng, n_nodes: u32, src: u32, fanout: u32) -> Vec<u32> {
    rand::seq::index::sample(rng, (n_nodes - 1) as usize, fanout as usize)
        .into_iter()
        .map(|i| {
            let candidate = i as u32 + 1;
            if candidate < src {
                candidate
            } else {
                candidate + 1
            }
        })
        .collect()
}

/// Basal content creation: each node independently emits c_b edges with
/// probability b. One Bernoulli draw per node, ascending order.
pub fn generate_basal_edges(config: &SimulationConfig, rng: &mut SimRng) -> Vec<Edge> {
    let mut edges = Vec::new();
    for src in 1..=config.n_nodes {
        if rng.gen_bool(config.basal_rate) {
            for dst in sample_destinations(rng, config.n_nodes, src, config.basal_fanout) {
                edges.push(Edge {
                    src,
                    dst,
                    provenance: Provenance::Basal,
                });
            }
        }
    }
    edges
}

/// Response emissions: each responder emits c_r edges to distinct
/// uniformly chosen other nodes. Responders are processed in ascending
/// order.
pub fn generate_response_edges(
    responders: &[u32],
    config: &SimulationConfig,
    rng: &mut SimRng,
) -> Vec<Edge> {
    let mut edges = Vec::new();
    for &src in responders {
        for dst in sample_destinations(rng, config.n_nodes, src, config.response_fanout) {
            edges.push(Edge {
                src,
                dst,
                provenance: Provenance::Response,
            });
        }
    }
    edges
}

/// Responses fired at one step. A trigger pair (i, n) records that i had
/// an edge to responder n in this step's snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub step: u64,
    /// Sorted ascending.
    pub responders: Vec<u32>,
    /// (src, responder) pairs, sorted by (responder, src).
    pub trigger_pairs: Vec<(u32, u32)>,
}

impl StepOutcome {
    pub fn empty(step: u64) -> Self {
        StepOutcome {
            step,
            responders: Vec::new(),
            trigger_pairs: Vec::new(),
        }
    }
}

/// One independent Bernoulli per node with in-degree >= 1, ascending node
/// order.
pub fn sample_responses(
    snapshot: &EdgeSnapshot,
    importance: &ImportanceState,
    regime: Regime,
    rng: &mut SimRng,
) -> StepOutcome {
    let n = importance.len();
    let mut in_sources: Vec<Vec<u32>> = vec![Vec::new(); n + 1];
    for e in &snapshot.edges {
        in_sources[e.dst as usize].push(e.src);
    }
    let l_max = importance.max();
    let mut responders = Vec::new();
    let mut trigger_pairs = Vec::new();
    for node in 1..=n as u32 {
        let sources = &in_sources[node as usize];
        if sources.is_empty() {
            continue;
        }
        let p = probability_from_sources(node, sources, importance, l_max, regime);
        if rng.gen_bool(p) {
            responders.push(node);
            for &src in sources {
                trigger_pairs.push((src, node));
            }
        }
    }
    StepOutcome {
        step: snapshot.step,
        responders,
        trigger_pairs,
    }
}

/// Each trigger pair (i, n) awards +1 to node i. Under in-group-only
/// scope in the polarized regime, cross-parity pairs award nothing.
pub fn apply_increments(
    importance: &mut ImportanceState,
    outcome: &StepOutcome,
    regime: Regime,
    scope: IncrementScope,
) {
    for &(src, responder) in &outcome.trigger_pairs {
        if scope == IncrementScope::InGroupOnly
            && regime == Regime::OddEven
            && parity(src) != parity(responder)
        {
            continue;
        }
        importance.increment(src);
    }
}

/// Importance vector sampled at one step (step 0 is the initial state).
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceSample {
    pub step: u64,
    pub values: Vec<f64>,
}

/// Full time-ordered record of a run, sufficient to recompute every
/// metric without re-simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct EventLog {
    pub config: SimulationConfig,
    pub snapshots: Vec<EdgeSnapshot>,
    pub outcomes: Vec<StepOutcome>,
    pub importance_trace: Vec<ImportanceSample>,
}

impl EventLog {
    pub fn total_trigger_pairs(&self) -> u64 {
        self.outcomes
            .iter()
            .map(|o| o.trigger_pairs.len() as u64)
            .sum()
    }
}

pub struct Simulation {
    config: SimulationConfig,
    importance: ImportanceState,
    pending_response: Vec<Edge>,
    completed: u64,
    rng: SimRng,
}

impl Simulation {
    pub fn new(config: SimulationConfig) -> Result<Self, ConfigError> {
        let importance = init_importance(&config)?;
        let rng = rng_for_seed(config.seed);
        Ok(Simulation {
            config,
            importance,
            pending_response: Vec::new(),
            completed: 0,
            rng,
        })
    }

    pub fn importance(&self) -> &ImportanceState {
        &self.importance
    }

    pub fn completed_steps(&self) -> u64 {
        self.completed
    }

    /// Advance one step k = completed + 1:
    /// 1. A^[k] = basal edges of k merged with response edges carried
    ///    from step k-1 responders,
    /// 2. responses sampled on A^[k],
    /// 3. increments applied before step k+1 evaluates any probability,
    /// 4. responders' c_r edges become pending for step k+1.
    pub fn step(&mut self) -> (EdgeSnapshot, StepOutcome) {
        let k = self.completed + 1;
        let regime = regime_at(&self.config, k);
        let basal = generate_basal_edges(&self.config, &mut self.rng);
        let pending = std::mem::take(&mut self.pending_response);
        let snapshot = EdgeSnapshot::merge(k, basal, pending);
        let outcome = sample_responses(&snapshot, &self.importance, regime, &mut self.rng);
        apply_increments(
            &mut self.importance,
            &outcome,
            regime,
            self.config.increment_scope,
        );
        self.pending_response =
            generate_response_edges(&outcome.responders, &self.config, &mut self.rng);
        self.completed = k;
        (snapshot, outcome)
    }
}

/// Execute the full horizon and record everything.
pub fn run(config: &SimulationConfig) -> Result<EventLog, ConfigError> {
    let mut sim = Simulation::new(config.clone())?;
    let mut snapshots = Vec::with_capacity(config.horizon as usize);
    let mut outcomes = Vec::with_capacity(config.horizon as usize);
    let mut importance_trace = vec![ImportanceSample {
        step: 0,
        values: sim.importance().values().to_vec(),
    }];
    for k in 1..=config.horizon {
        let (snapshot, outcome) = sim.step();
        snapshots.push(snapshot);
        outcomes.push(outcome);
        if k % config.trace_interval == 0 {
            importance_trace.push(ImportanceSample {
                step: k,
                values: sim.importance().values().to_vec(),
            });
        }
    }
    Ok(EventLog {
        config: config.clone(),
        snapshots,
        outcomes,
        importance_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(values: &[f64]) -> ImportanceState {
        ImportanceState::from_values(values.to_vec())
    }

    fn snapshot_with(step: u64, pairs: &[(u32, u32)]) -> EdgeSnapshot {
        let edges = pairs
            .iter()
            .map(|&(src, dst)| Edge {
                src,
                dst,
                provenance: Provenance::Basal,
            })
            .collect();
        EdgeSnapshot::merge(step, edges, Vec::new())
    }

    #[test]
    fn linear_rank_init() {
        let cfg = SimulationConfig::smoke(4, 10, 1);
        let imp = init_importance(&cfg).unwrap();
        assert_eq!(imp.values(), &[1.0, 2.0, 3.0, 4.0]);
        let cfg2 = SimulationConfig::smoke(2, 10, 1);
        let mut cfg2 = cfg2;
        cfg2.basal_fanout = 1;
        cfg2.response_fanout = 1;
        assert_eq!(init_importance(&cfg2).unwrap().values(), &[1.0, 2.0]);
    }

    #[test]
    fn explicit_list_passthrough_with_ties() {
        let mut cfg = SimulationConfig::smoke(3, 10, 1);
        cfg.basal_fanout = 2;
        cfg.response_fanout = 2;
        cfg.importance_scheme = ImportanceScheme::ExplicitList(vec![0.5, 0.5, 2.0]);
        assert_eq!(init_importance(&cfg).unwrap().values(), &[0.5, 0.5, 2.0]);
    }

    #[test]
    fn signed_view_examples() {
        let l = state(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(
            signed_importance_view(&l, Parity::Even),
            vec![-1.0, 2.0, -3.0, 4.0]
        );
        assert_eq!(
            signed_importance_view(&l, Parity::Odd),
            vec![1.0, -2.0, 3.0, -4.0]
        );
        let ties = state(&[5.0, 5.0]);
        assert_eq!(signed_importance_view(&ties, Parity::Even), vec![-5.0, 5.0]);
    }

    #[test]
    fn response_probability_hand_values() {
        let l = state(&[1.0, 2.0, 3.0, 4.0]);
        // node 3 receiving from {1, 4}: (1+4)/(1+4*2) = 5/9
        let snap = snapshot_with(1, &[(1, 3), (4, 3)]);
        let p = response_probability(3, &snap, &l, Regime::Homogeneous);
        assert!((p - 5.0 / 9.0).abs() < 1e-12);
        // node 2 (even) from {1, 4} polarized: (-1+4)/9 = 1/3
        let snap = snapshot_with(1, &[(1, 2), (4, 2)]);
        let p = response_probability(2, &snap, &l, Regime::OddEven);
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
        // node 2 (even) from {1, 3} polarized: raw negative, clamped to 0
        let snap = snapshot_with(1, &[(1, 2), (3, 2)]);
        assert_eq!(response_probability(2, &snap, &l, Regime::OddEven), 0.0);
        // zero in-degree
        assert_eq!(
            response_probability(1, &EdgeSnapshot::empty(1), &l, Regime::Homogeneous),
            0.0
        );
    }

    #[test]
    fn basal_zero_rate_is_empty() {
        let mut cfg = SimulationConfig::smoke(10, 1, 3);
        cfg.basal_rate = 0.0;
        let mut rng = rng_for_seed(cfg.seed);
        assert!(generate_basal_edges(&cfg, &mut rng).is_empty());
    }

    #[test]
    fn basal_exhaustive_fanout() {
        let mut cfg = SimulationConfig::smoke(4, 1, 3);
        cfg.basal_rate = 1.0;
        cfg.basal_fanout = 3;
        let mut rng = rng_for_seed(9);
        let edges = generate_basal_edges(&cfg, &mut rng);
        assert_eq!(edges.len(), 12);
        for src in 1..=4u32 {
            let dsts: Vec<u32> = edges
                .iter()
                .filter(|e| e.src == src)
                .map(|e| e.dst)
                .collect();
            let mut sorted = dsts.clone();
            sorted.sort_unstable();
            let expected: Vec<u32> = (1..=4).filter(|&d| d != src).collect();
            assert_eq!(sorted, expected);
        }
    }

    #[test]
    fn basal_structural_properties_over_seeds() {
        let mut cfg = SimulationConfig::smoke(40, 1, 0);
        cfg.basal_rate = 1.0;
        cfg.basal_fanout = 3;
        for seed in 0..1000u64 {
            let mut rng = rng_for_seed(seed);
            let edges = generate_basal_edges(&cfg, &mut rng);
            assert_eq!(edges.len(), 40 * 3);
            for src in 1..=40u32 {
                let dsts: Vec<u32> = edges
                    .iter()
                    .filter(|e| e.src == src)
                    .map(|e| e.dst)
                    .collect();
                assert_eq!(dsts.len(), 3);
                assert!(dsts.iter().all(|&d| d != src && (1..=40).contains(&d)));
                let mut dedup = dsts.clone();
                dedup.sort_unstable();
                dedup.dedup();
                assert_eq!(dedup.len(), 3, "destinations must be distinct per source");
            }
        }
    }

    #[test]
    fn response_edges_examples() {
        let cfg = SimulationConfig::smoke(4, 1, 3);
        let mut cfg = cfg;
        cfg.response_fanout = 3;
        let mut rng = rng_for_seed(1);
        assert!(generate_response_edges(&[], &cfg, &mut rng).is_empty());
        let edges = generate_response_edges(&[3], &cfg, &mut rng);
        let mut dsts: Vec<u32> = edges.iter().map(|e| e.dst).collect();
        dsts.sort_unstable();
        assert_eq!(dsts, vec![1, 2, 4]);
        assert!(edges.iter().all(|e| e.src == 3));
    }

    #[test]
    fn response_edges_structural_over_seeds() {
        let cfg = SimulationConfig::smoke(40, 1, 0);
        for seed in 0..200u64 {
            let mut rng = rng_for_seed(seed);
            let edges = generate_response_edges(&[1, 2], &cfg, &mut rng);
            assert_eq!(edges.len(), 6);
            for src in [1u32, 2] {
                let dsts: Vec<u32> = edges
                    .iter()
                    .filter(|e| e.src == src)
                    .map(|e| e.dst)
                    .collect();
                assert_eq!(dsts.len(), 3);
                assert!(dsts.iter().all(|&d| d != src));
                let mut dedup = dsts.clone();
                dedup.sort_unstable();
                dedup.dedup();
                assert_eq!(dedup.len(), 3);
            }
        }
    }

    #[test]
    fn increments_examples() {
        let mut l = state(&[1.0, 2.0, 3.0, 4.0]);
        let outcome = StepOutcome {
            step: 1,
            responders: vec![3],
            trigger_pairs: vec![(1, 3), (4, 3)],
        };
        apply_increments(&mut l, &outcome, Regime::Homogeneous, IncrementScope::All);
        assert_eq!(l.values(), &[2.0, 2.0, 3.0, 5.0]);

        let mut l = state(&[1.0, 2.0, 3.0]);
        let outcome = StepOutcome {
            step: 1,
            responders: vec![1, 3],
            trigger_pairs: vec![(2, 1), (2, 3)],
        };
        apply_increments(&mut l, &outcome, Regime::Homogeneous, IncrementScope::All);
        assert_eq!(l.values(), &[1.0, 4.0, 3.0]);

        let mut l = state(&[1.0, 2.0, 3.0]);
        apply_increments(
            &mut l,
            &StepOutcome::empty(1),
            Regime::Homogeneous,
            IncrementScope::All,
        );
        assert_eq!(l.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn in_group_only_scope_skips_cross_parity() {
        let mut l = state(&[1.0, 2.0, 3.0, 4.0]);
        let outcome = StepOutcome {
            step: 1,
            responders: vec![3],
            trigger_pairs: vec![(1, 3), (4, 3)],
        };
        apply_increments(
            &mut l,
            &outcome,
            Regime::OddEven,
            IncrementScope::InGroupOnly,
        );
        // (1,3) same parity -> +1; (4,3) cross parity -> skipped
        assert_eq!(l.values(), &[2.0, 2.0, 3.0, 4.0]);
        // homogeneous regime ignores scope
        let mut l = state(&[1.0, 2.0, 3.0, 4.0]);
        apply_increments(
            &mut l,
            &outcome,
            Regime::Homogeneous,
            IncrementScope::InGroupOnly,
        );
        assert_eq!(l.values(), &[2.0, 2.0, 3.0, 5.0]);
    }

    #[test]
    fn sample_responses_empty_snapshot() {
        let l = state(&[1.0, 2.0, 3.0]);
        let mut rng = rng_for_seed(0);
        let out = sample_responses(&EdgeSnapshot::empty(1), &l, Regime::Homogeneous, &mut rng);
        assert!(out.responders.is_empty());
        assert!(out.trigger_pairs.is_empty());
    }

    #[test]
    fn polarized_cancellation_never_fires() {
        // node 2 (even) receives only from {1, 3}: numerator -4, p = 0
        let l = state(&[1.0, 2.0, 3.0, 4.0]);
        let snap = snapshot_with(1, &[(1, 2), (3, 2)]);
        for seed in 0..500u64 {
            let mut rng = rng_for_seed(seed);
            let out = sample_responses(&snap, &l, Regime::OddEven, &mut rng);
            assert!(!out.responders.contains(&2));
        }
    }

    #[test]
    fn single_edge_response_frequency_matches_probability() {
        // node 1 with a single in-edge from node 4: p = 4/(1+4) = 0.8
        let l = state(&[1.0, 2.0, 3.0, 4.0]);
        let snap = snapshot_with(1, &[(4, 1)]);
        let trials = 100_000;
        let mut hits = 0u64;
        let mut rng = rng_for_seed(42);
        for _ in 0..trials {
            let out = sample_responses(&snap, &l, Regime::Homogeneous, &mut rng);
            if out.responders.contains(&1) {
                hits += 1;
            }
        }
        let freq = hits as f64 / trials as f64;
        assert!((freq - 0.8).abs() < 0.01, "freq = {freq}");
    }

    #[test]
    fn merge_dedupes_and_response_wins() {
        let basal = vec![
            Edge {
                src: 1,
                dst: 2,
                provenance: Provenance::Basal,
            },
            Edge {
                src: 1,
                dst: 3,
                provenance: Provenance::Basal,
            },
        ];
        let response = vec![
            Edge {
                src: 1,
                dst: 2,
                provenance: Provenance::Response,
            },
            Edge {
                src: 1,
                dst: 2,
                provenance: Provenance::Response,
            },
        ];
        let snap = EdgeSnapshot::merge(5, basal, response);
        assert_eq!(snap.edges.len(), 2);
        assert_eq!(snap.edges[0].provenance, Provenance::Response);
        assert_eq!(snap.edges[1].provenance, Provenance::Basal);
    }

    #[test]
    fn quiescent_step() {
        let mut cfg = SimulationConfig::smoke(5, 10, 1);
        cfg.basal_rate = 0.0;
        let mut sim = Simulation::new(cfg).unwrap();
        let (snap, out) = sim.step();
        assert!(snap.edges.is_empty());
        assert!(out.responders.is_empty());
        assert_eq!(sim.importance().values(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn two_node_forced_exchange() {
        let mut cfg = SimulationConfig::smoke(2, 50, 7);
        cfg.basal_rate = 1.0;
        cfg.basal_fanout = 1;
        cfg.response_fanout = 1;
        let log = run(&cfg).unwrap();
        for snap in &log.snapshots {
            let pairs: Vec<(u32, u32)> = snap.edges.iter().map(|e| (e.src, e.dst)).collect();
            assert_eq!(pairs, vec![(1, 2), (2, 1)]);
        }
        // first step: l = (1,2), p_1 = 2/3, p_2 = 1/3
        let l = init_importance(&cfg).unwrap();
        let p1 = response_probability(1, &log.snapshots[0], &l, Regime::Homogeneous);
        let p2 = response_probability(2, &log.snapshots[0], &l, Regime::Homogeneous);
        assert!((p1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((p2 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn run_zero_horizon() {
        let cfg = SimulationConfig::smoke(4, 0, 1);
        let log = run(&cfg).unwrap();
        assert!(log.snapshots.is_empty());
        assert!(log.outcomes.is_empty());
        assert_eq!(log.config, cfg);
        assert_eq!(log.importance_trace.len(), 1);
    }

    #[test]
    fn run_is_deterministic() {
        let mut cfg = SimulationConfig::smoke(10, 500, 123);
        cfg.basal_rate = 0.05;
        cfg.polarization_onset = Onset::Step(250);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn regime_switch_boundaries() {
        let mut cfg = SimulationConfig::smoke(4, 10, 1);
        cfg.polarization_onset = Onset::Step(5);
        assert_eq!(regime_at(&cfg, 5), Regime::Homogeneous);
        assert_eq!(regime_at(&cfg, 6), Regime::OddEven);
        cfg.polarization_onset = Onset::Step(0);
        assert_eq!(regime_at(&cfg, 1), Regime::OddEven);
        cfg.polarization_onset = Onset::Never;
        assert_eq!(regime_at(&cfg, 1), Regime::Homogeneous);
    }

    #[test]
    fn never_onset_stays_homogeneous() {
        let mut cfg = SimulationConfig::smoke(6, 300, 5);
        cfg.basal_rate = 0.2;
        let log = run(&cfg).unwrap();
        // no polarized clamp can occur: recompute every probability both
        // ways and check they agree
        let mut imp = init_importance(&cfg).unwrap();
        for (snap, out) in log.snapshots.iter().zip(&log.outcomes) {
            for node in 1..=6u32 {
                let hom = response_probability(node, snap, &imp, Regime::Homogeneous);
                if snap.in_degree(node) == 0 {
                    assert_eq!(hom, 0.0);
                }
            }
            apply_increments(&mut imp, out, Regime::Homogeneous, cfg.increment_scope);
        }
    }

    proptest! {
        #[test]
        fn probability_always_in_unit_interval(
            values in proptest::collection::vec(0.001f64..100.0, 2..12),
            edges in proptest::collection::vec((1u32..12, 1u32..12), 0..30),
            polarized in proptest::bool::ANY,
        ) {
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = sorted.len() as u32;
            let l = ImportanceState::from_values(sorted);
            let pairs: Vec<(u32, u32)> = edges
                .into_iter()
                .filter(|&(s, d)| s != d && s <= n && d <= n)
                .collect();
            let snap = snapshot_with(1, &pairs);
            let regime = if polarized { Regime::OddEven } else { Regime::Homogeneous };
            for node in 1..=n {
                let p = response_probability(node, &snap, &l, regime);
                prop_assert!((0.0..1.0).contains(&p));
                if snap.in_degree(node) == 0 {
                    prop_assert_eq!(p, 0.0);
                }
            }
        }

        #[test]
        fn signed_views_are_elementwise_negations(
            values in proptest::collection::vec(0.001f64..50.0, 2..20),
        ) {
            let mut sorted = values;
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let l = ImportanceState::from_values(sorted);
            let even = signed_importance_view(&l, Parity::Even);
            let odd = signed_importance_view(&l, Parity::Odd);
            for (e, o) in even.iter().zip(&odd) {
                prop_assert_eq!(*e, -*o);
            }
        }

        #[test]
        fn conservation_on_random_runs(
            seed in 0u64..10_000,
            n in 3u32..12,
            horizon in 1u64..80,
            rate in 0.0f64..0.5,
        ) {
            let mut cfg = SimulationConfig::smoke(n, horizon, seed);
            cfg.basal_rate = rate;
            cfg.basal_fanout = 2.min(n - 1);
            cfg.response_fanout = 2.min(n - 1);
            cfg.polarization_onset = Onset::Step(horizon / 2);
            let log = run(&cfg).unwrap();
            let mut sim = Simulation::new(cfg).unwrap();
            let initial_sum = sim.importance().sum();
            for _ in 0..horizon { sim.step(); }
            let gained = sim.importance().sum() - initial_sum;
            prop_assert_eq!(gained, log.total_trigger_pairs() as f64);
            // importance never decreases and snapshots stay clean
            for snap in &log.snapshots {
                for e in &snap.edges {
                    prop_assert_ne!(e.src, e.dst);
                }
                let mut keys: Vec<(u32, u32)> =
                    snap.edges.iter().map(|e| (e.src, e.dst)).collect();
                let before = keys.len();
                keys.dedup();
                prop_assert_eq!(keys.len(), before);
            }
        }

        #[test]
        fn adding_max_in_edge_never_decreases_probability(
            values in proptest::collection::vec(0.001f64..100.0, 2..10),
            source_bits in proptest::collection::vec(proptest::bool::ANY, 10),
        ) {
            let mut sorted = values;
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = sorted.len() as u32;
            let l = ImportanceState::from_values(sorted);
            // the maximum node is node n (values sorted non-decreasing)
            let target = 1u32;
            let sources: Vec<(u32, u32)> = (2..n) // exclude node n and the target
                .filter(|&s| source_bits[(s % 10) as usize])
                .map(|s| (s, target))
                .collect();
            let before = response_probability(
                target, &snapshot_with(1, &sources), &l, Regime::Homogeneous);
            let mut with_max = sources.clone();
            with_max.push((n, target));
            let after = response_probability(
                target, &snapshot_with(1, &with_max), &l, Regime::Homogeneous);
            prop_assert!(after >= before - 1e-15);
        }
    }
}
