//! Network and data model: node placement, neighbourhoods, cache nodes,
//! data pieces, timing constants, and the seeded grid instance generator.
//!
//! All energies are joules. Configs state battery sizes in watt-hours and
//! convert once, at generation time.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const JOULES_PER_WH: f64 = 3600.0;

/// Relative slack on the neighbourhood threshold so that points lying exactly
/// on the range boundary are not lost to rounding in `gamma * rho`.
const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index into [`NetworkInstance::edges`].
pub type EdgeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub position: Position,
    pub energy_j: f64,
    pub is_cache: bool,
}

/// A directed link `from -> to`; `eps_j` is paid by `from` per data piece sent.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub eps_j: f64,
    /// Worst-case one-hop delay of this link, when measured per link.
    pub delay_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPiece {
    pub source: NodeId,
    pub consumer: NodeId,
    /// Pieces generated per time cycle.
    pub gen_rate: f64,
    /// Pieces requested per time cycle.
    pub cons_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub tau_s: f64,
    pub l_hop_ms: f64,
    pub l_max_ms: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            tau_s: 1.0,
            l_hop_ms: 28.0,
            l_max_ms: 120.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub gamma: f64,
    pub rho_m: f64,
    /// Energy one node spends to report its status over the local-area radio.
    pub report_cost_j: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("node ids must be dense and ordered: position {position} holds id {id}")]
    NodeOrder { position: usize, id: usize },
    #[error("node {0} has a non-finite position")]
    BadPosition(NodeId),
    #[error("node {0} has non-positive or non-finite energy")]
    BadEnergy(NodeId),
    #[error("cache set must be a strict minority: {caches} caches vs {others} other nodes")]
    TooManyCaches { caches: usize, others: usize },
    #[error("cache {cache} ({cache_j} J) must hold more energy than field node {node} ({node_j} J)")]
    CacheEnergy {
        cache: NodeId,
        cache_j: f64,
        node: NodeId,
        node_j: f64,
    },
    #[error("edge {from}->{to} references an unknown node or is a self loop")]
    BadEdge { from: NodeId, to: NodeId },
    #[error("edge {from}->{to} appears more than once")]
    DuplicateEdge { from: NodeId, to: NodeId },
    #[error("edge {from}->{to} has no reverse edge")]
    AsymmetricEdge { from: NodeId, to: NodeId },
    #[error("edge {from}->{to} needs a positive finite cost, got {eps}")]
    BadEdgeCost { from: NodeId, to: NodeId, eps: f64 },
    #[error("edge {from}->{to} spans {dist} m, beyond range {range} m")]
    OutOfRange {
        from: NodeId,
        to: NodeId,
        dist: f64,
        range: f64,
    },
    #[error("edge {from}->{to} has an invalid delay {delay}")]
    BadEdgeDelay { from: NodeId, to: NodeId, delay: f64 },
    #[error("data piece {piece}: {reason}")]
    BadPiece { piece: usize, reason: &'static str },
    #[error("invalid parameter {name} = {value}")]
    BadParameter { name: &'static str, value: f64 },
}

/// Plain undirected adjacency with sorted neighbour lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<NodeId>>,
}

impl Graph {
    /// Builds a graph with `n` nodes; duplicate pairs and self loops are ignored.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in pairs {
            if u == v {
                continue;
            }
            adj[u].push(NodeId(v));
            adj[v].push(NodeId(u));
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Self { adj }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.adj[u.0]
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adj[u.0].binary_search(&v).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Breadth-first hop distances from `src`; `None` marks unreachable nodes.
    pub fn hop_distances(&self, src: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.adj.len()];
        let mut queue = VecDeque::new();
        dist[src.0] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u.0].unwrap();
            for &v in &self.adj[u.0] {
                if dist[v.0].is_none() {
                    dist[v.0] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// Undirected neighbour pairs `(u, v)` with `u < v` such that
/// `gamma * rho >= distance(u, v)`.
pub fn build_neighborhoods(positions: &[Position], rho: f64, gamma: f64) -> Vec<(NodeId, NodeId)> {
    let range = gamma * rho;
    let mut pairs = Vec::new();
    for (u, pu) in positions.iter().enumerate() {
        for (v, pv) in positions.iter().enumerate().skip(u + 1) {
            if within_range(pu.distance(pv), range) {
                pairs.push((NodeId(u), NodeId(v)));
            }
        }
    }
    pairs
}

#[inline]
fn within_range(dist: f64, range: f64) -> bool {
    dist <= range * (1.0 + RANGE_SLACK)
}

/// Immutable problem instance. Construct through [`NetworkInstance::new`] or
/// [`generate_instance`]; both validate every model invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "InstanceFile", try_from = "InstanceFile")]
pub struct NetworkInstance {
    nodes: Vec<Node>,
    /// Directed edges sorted by `(from, to)`.
    edges: Vec<Edge>,
    data: Vec<DataPiece>,
    timing: Timing,
    radio: RadioParams,
    out_start: Vec<usize>,
    caches: Vec<NodeId>,
    graph: Graph,
}

impl NetworkInstance {
    pub fn new(
        nodes: Vec<Node>,
        mut edges: Vec<Edge>,
        data: Vec<DataPiece>,
        timing: Timing,
        radio: RadioParams,
    ) -> Result<Self, TopologyError> {
        check_param("tau_s", timing.tau_s, |x| x > 0.0)?;
        check_param("l_hop_ms", timing.l_hop_ms, |x| x > 0.0)?;
        check_param("l_max_ms", timing.l_max_ms, |x| x > 0.0)?;
        check_param("gamma", radio.gamma, |x| x > 0.0 && x <= 1.0)?;
        check_param("rho_m", radio.rho_m, |x| x > 0.0)?;
        check_param("report_cost_j", radio.report_cost_j, |x| x >= 0.0)?;

        for (i, node) in nodes.iter().enumerate() {
            if node.id.0 != i {
                return Err(TopologyError::NodeOrder {
                    position: i,
                    id: node.id.0,
                });
            }
            if !node.position.x.is_finite() || !node.position.y.is_finite() {
                return Err(TopologyError::BadPosition(node.id));
            }
            if !(node.energy_j.is_finite() && node.energy_j > 0.0) {
                return Err(TopologyError::BadEnergy(node.id));
            }
        }

        let caches: Vec<NodeId> = nodes.iter().filter(|n| n.is_cache).map(|n| n.id).collect();
        let others = nodes.len() - caches.len();
        if caches.len() >= others && !caches.is_empty() {
            return Err(TopologyError::TooManyCaches {
                caches: caches.len(),
                others,
            });
        }
        let weakest_cache = nodes
            .iter()
            .filter(|n| n.is_cache)
            .min_by(|a, b| a.energy_j.total_cmp(&b.energy_j));
        let strongest_field = nodes
            .iter()
            .filter(|n| !n.is_cache)
            .max_by(|a, b| a.energy_j.total_cmp(&b.energy_j));
        if let (Some(c), Some(f)) = (weakest_cache, strongest_field) {
            if c.energy_j <= f.energy_j {
                return Err(TopologyError::CacheEnergy {
                    cache: c.id,
                    cache_j: c.energy_j,
                    node: f.id,
                    node_j: f.energy_j,
                });
            }
        }

        let n = nodes.len();
        let range = radio.gamma * radio.rho_m;
        for e in &edges {
            if e.from.0 >= n || e.to.0 >= n || e.from == e.to {
                return Err(TopologyError::BadEdge {
                    from: e.from,
                    to: e.to,
                });
            }
            if !(e.eps_j.is_finite() && e.eps_j > 0.0) {
                return Err(TopologyError::BadEdgeCost {
                    from: e.from,
                    to: e.to,
                    eps: e.eps_j,
                });
            }
            if let Some(d) = e.delay_ms {
                if !(d.is_finite() && d > 0.0) {
                    return Err(TopologyError::BadEdgeDelay {
                        from: e.from,
                        to: e.to,
                        delay: d,
                    });
                }
            }
            let dist = nodes[e.from.0].position.distance(&nodes[e.to.0].position);
            if !within_range(dist, range) {
                return Err(TopologyError::OutOfRange {
                    from: e.from,
                    to: e.to,
                    dist,
                    range,
                });
            }
        }
        edges.sort_by_key(|e| (e.from, e.to));
        for w in edges.windows(2) {
            if w[0].from == w[1].from && w[0].to == w[1].to {
                return Err(TopologyError::DuplicateEdge {
                    from: w[0].from,
                    to: w[0].to,
                });
            }
        }
        let mut out_start = vec![0usize; n + 1];
        for e in &edges {
            out_start[e.from.0 + 1] += 1;
        }
        for i in 0..n {
            out_start[i + 1] += out_start[i];
        }
        let find = |u: NodeId, v: NodeId| {
            edges[out_start[u.0]..out_start[u.0 + 1]]
                .binary_search_by_key(&v, |e| e.to)
                .is_ok()
        };
        for e in &edges {
            if !find(e.to, e.from) {
                return Err(TopologyError::AsymmetricEdge {
                    from: e.from,
                    to: e.to,
                });
            }
        }

        for (i, d) in data.iter().enumerate() {
            let bad = |reason| TopologyError::BadPiece { piece: i, reason };
            if d.source.0 >= n || d.consumer.0 >= n {
                return Err(bad("endpoint out of range"));
            }
            if d.source == d.consumer {
                return Err(bad("source equals consumer"));
            }
            if nodes[d.source.0].is_cache || nodes[d.consumer.0].is_cache {
                return Err(bad("endpoints must not be cache nodes"));
            }
            if !(d.gen_rate.is_finite() && d.gen_rate > 0.0) {
                return Err(bad("generation rate must be positive"));
            }
            if !(d.cons_rate.is_finite() && d.cons_rate > 0.0) {
                return Err(bad("consumption rate must be positive"));
            }
        }

        let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e.from.0, e.to.0)).collect();
        let graph = Graph::from_pairs(n, &pairs);

        Ok(Self {
            nodes,
            edges,
            data,
            timing,
            radio,
            out_start,
            caches,
            graph,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, u: NodeId) -> &Node {
        &self.nodes[u.0]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    /// Outgoing edge ids of `u`, ordered by target.
    pub fn out_edges(&self, u: NodeId) -> std::ops::Range<EdgeId> {
        self.out_start[u.0]..self.out_start[u.0 + 1]
    }

    pub fn edge_id(&self, from: NodeId, to: NodeId) -> Option<EdgeId> {
        let range = self.out_edges(from);
        let start = range.start;
        self.edges[range]
            .binary_search_by_key(&to, |e| e.to)
            .ok()
            .map(|i| start + i)
    }

    pub fn data(&self) -> &[DataPiece] {
        &self.data
    }

    pub fn timing(&self) -> &Timing {
        &self.timing
    }

    pub fn radio(&self) -> &RadioParams {
        &self.radio
    }

    pub fn caches(&self) -> &[NodeId] {
        &self.caches
    }

    pub fn is_cache(&self, u: NodeId) -> bool {
        self.nodes[u.0].is_cache
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn initial_energies(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.energy_j).collect()
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile::from(self.clone())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("instance serialization is total");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn check_param(name: &'static str, value: f64, ok: impl Fn(f64) -> bool) -> Result<(), TopologyError> {
    if value.is_finite() && ok(value) {
        Ok(())
    } else {
        Err(TopologyError::BadParameter { name, value })
    }
}

// ---------------------------------------------------------------------------
// On-disk format

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub energy_j: f64,
    pub is_cache: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub u: usize,
    pub v: usize,
    pub eps_j: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub tau_s: f64,
    pub l_hop_ms: f64,
    pub l_max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioRecord {
    pub gamma: f64,
    pub rho_m: f64,
    pub report_cost_j: f64,
}

/// The JSON instance document. Every directed edge is listed on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    pub data: Vec<DataPiece>,
    pub timing: TimingRecord,
    pub radio: RadioRecord,
}

impl From<NetworkInstance> for InstanceFile {
    fn from(inst: NetworkInstance) -> Self {
        InstanceFile {
            nodes: inst
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.id.0,
                    x: n.position.x,
                    y: n.position.y,
                    energy_j: n.energy_j,
                    is_cache: n.is_cache,
                })
                .collect(),
            edges: inst
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    u: e.from.0,
                    v: e.to.0,
                    eps_j: e.eps_j,
                    delay_ms: e.delay_ms,
                })
                .collect(),
            data: inst.data.clone(),
            timing: TimingRecord {
                tau_s: inst.timing.tau_s,
                l_hop_ms: inst.timing.l_hop_ms,
                l_max_ms: inst.timing.l_max_ms,
            },
            radio: RadioRecord {
                gamma: inst.radio.gamma,
                rho_m: inst.radio.rho_m,
                report_cost_j: inst.radio.report_cost_j,
            },
        }
    }
}

impl TryFrom<InstanceFile> for NetworkInstance {
    type Error = TopologyError;

    fn try_from(file: InstanceFile) -> Result<Self, Self::Error> {
        let nodes = file
            .nodes
            .into_iter()
            .map(|n| Node {
                id: NodeId(n.id),
                position: Position::new(n.x, n.y),
                energy_j: n.energy_j,
                is_cache: n.is_cache,
            })
            .collect();
        let edges = file
            .edges
            .into_iter()
            .map(|e| Edge {
                from: NodeId(e.u),
                to: NodeId(e.v),
                eps_j: e.eps_j,
                delay_ms: e.delay_ms,
            })
            .collect();
        NetworkInstance::new(
            nodes,
            edges,
            file.data,
            Timing {
                tau_s: file.timing.tau_s,
                l_hop_ms: file.timing.l_hop_ms,
                l_max_ms: file.timing.l_max_ms,
            },
            RadioParams {
                gamma: file.radio.gamma,
                rho_m: file.radio.rho_m,
                report_cost_j: file.radio.report_cost_j,
            },
        )
    }
}

// ---------------------------------------------------------------------------
// Generation

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Radio energy model used to derive per-piece link costs and report costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    /// Field (low-power) radio transmit power.
    pub tx_power_dbm: f64,
    /// Local-area radio power used for status reports.
    pub lan_power_dbm: f64,
    pub piece_bytes: f64,
    pub bitrate_bps: f64,
    pub report_airtime_s: f64,
    pub eps_override_j: Option<f64>,
    pub report_cost_override_j: Option<f64>,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            tx_power_dbm: -25.0,
            lan_power_dbm: 15.0,
            piece_bytes: 9.0,
            bitrate_bps: 250_000.0,
            report_airtime_s: 1e-3,
            eps_override_j: None,
            report_cost_override_j: None,
        }
    }
}

impl EnergyModel {
    /// Field-radio lifetimes land in the 10^2-10^4 hour range with the
    /// simulation battery sizes; the local-area radio stays 30 dB above.
    pub fn hour_scale() -> Self {
        Self {
            tx_power_dbm: 40.0,
            lan_power_dbm: 70.0,
            ..Self::default()
        }
    }

    pub fn piece_airtime_s(&self) -> f64 {
        self.piece_bytes * 8.0 / self.bitrate_bps
    }

    pub fn eps_j(&self) -> f64 {
        self.eps_override_j
            .unwrap_or_else(|| dbm_to_watts(self.tx_power_dbm) * self.piece_airtime_s())
    }

    pub fn report_cost_j(&self) -> f64 {
        self.report_cost_override_j
            .unwrap_or_else(|| dbm_to_watts(self.lan_power_dbm) * self.report_airtime_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    pub spacing_m: f64,
}

impl GridConfig {
    pub fn square(side: usize, spacing_m: f64) -> Self {
        Self {
            rows: side,
            cols: side,
            spacing_m,
        }
    }

    pub fn node_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Row-major positions.
    pub fn positions(&self) -> Vec<Position> {
        let mut out = Vec::with_capacity(self.node_count());
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(Position::new(c as f64 * self.spacing_m, r as f64 * self.spacing_m));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub grid: GridConfig,
    pub cache_fraction: f64,
    pub consumers: usize,
    pub node_energy_wh: (f64, f64),
    pub cache_energy_wh: (f64, f64),
    /// Inclusive range of integer pieces per cycle for both rates.
    pub rate_range: (u32, u32),
    pub timing: Timing,
    pub gamma: f64,
    pub rho_m: f64,
    pub energy: EnergyModel,
    pub max_retries: usize,
}

impl GeneratorConfig {
    /// Square grid, 1.5 m spacing, `gamma * rho = 1.8 m` (4-neighbourhood).
    pub fn simulation(side: usize, consumers: usize) -> Self {
        Self {
            grid: GridConfig::square(side, 1.5),
            cache_fraction: 0.2,
            consumers,
            node_energy_wh: (30.0, 50.0),
            cache_energy_wh: (100.0, 150.0),
            rate_range: (1, 8),
            timing: Timing::default(),
            gamma: 0.6,
            rho_m: 3.0,
            energy: EnergyModel::default(),
            max_retries: 100,
        }
    }

    /// [`GeneratorConfig::simulation`] with [`EnergyModel::hour_scale`].
    pub fn hour_scale(side: usize, consumers: usize) -> Self {
        Self {
            energy: EnergyModel::hour_scale(),
            ..Self::simulation(side, consumers)
        }
    }

    /// 3 x 6 testbed layout, 1.2 m spacing, 2 m neighbourhood, 4 caches.
    pub fn replica(consumers: usize) -> Self {
        Self {
            grid: GridConfig {
                rows: 3,
                cols: 6,
                spacing_m: 1.2,
            },
            cache_fraction: 4.0 / 18.0,
            consumers,
            node_energy_wh: (0.1, 1.0),
            cache_energy_wh: (3.0, 3.0),
            rate_range: (1, 8),
            timing: Timing::default(),
            gamma: 2.0 / 3.0,
            rho_m: 3.0,
            energy: EnergyModel::default(),
            max_retries: 100,
        }
    }

    pub fn cache_count(&self) -> usize {
        (self.cache_fraction * self.grid.node_count() as f64).round() as usize
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        validate_config(self)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("no usable instance after {0} attempts (consumers unreachable within the delay bound)")]
    Degenerate(usize),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

fn validate_config(cfg: &GeneratorConfig) -> Result<(), GenerateError> {
    let bad = |msg: String| Err(GenerateError::Config(msg));
    let n = cfg.grid.node_count();
    if n < 3 {
        return bad(format!("grid must hold at least 3 nodes, got {n}"));
    }
    if !(cfg.grid.spacing_m.is_finite() && cfg.grid.spacing_m > 0.0) {
        return bad("grid spacing must be positive".into());
    }
    if !(0.0..1.0).contains(&cfg.cache_fraction) {
        return bad(format!("cache fraction {} outside [0, 1)", cfg.cache_fraction));
    }
    let caches = cfg.cache_count();
    if caches == 0 {
        return bad("cache fraction yields no cache nodes".into());
    }
    let others = n - caches.min(n);
    if caches >= others {
        return bad(format!(
            "cache fraction {} gives {caches} caches for {others} other nodes; caches must be a strict minority",
            cfg.cache_fraction
        ));
    }
    if cfg.consumers == 0 {
        return bad("at least one consumer is required".into());
    }
    if cfg.consumers > others {
        return bad(format!(
            "{} consumers exceed the {others} non-cache nodes",
            cfg.consumers
        ));
    }
    if others < 2 {
        return bad("need at least two non-cache nodes".into());
    }
    let (lo, hi) = cfg.node_energy_wh;
    let (clo, chi) = cfg.cache_energy_wh;
    if !(lo > 0.0 && lo <= hi && clo <= chi) {
        return bad("energy ranges must be positive and ordered".into());
    }
    if clo <= hi {
        return bad("cache energies must exceed every field node energy".into());
    }
    let (rlo, rhi) = cfg.rate_range;
    if rlo == 0 || rlo > rhi {
        return bad("rate range must be positive and ordered".into());
    }
    Ok(())
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Draws a grid instance. The same `(config, seed)` always yields the same
/// instance; instances where some consumer has no cache within the delay
/// bound are redrawn up to `max_retries` times.
pub fn generate_instance(cfg: &GeneratorConfig, seed: u64) -> Result<NetworkInstance, GenerateError> {
    validate_config(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = cfg.grid.positions();
    let n = positions.len();
    let pairs = build_neighborhoods(&positions, cfg.rho_m, cfg.gamma);
    let eps = cfg.energy.eps_j();
    let mut edges = Vec::with_capacity(pairs.len() * 2);
    for &(u, v) in &pairs {
        for (from, to) in [(u, v), (v, u)] {
            edges.push(Edge {
                from,
                to,
                eps_j: eps,
                delay_ms: None,
            });
        }
    }
    let graph = Graph::from_pairs(n, &pairs.iter().map(|&(u, v)| (u.0, v.0)).collect::<Vec<_>>());
    let max_hops = (cfg.timing.l_max_ms / cfg.timing.l_hop_ms).floor() as usize;

    for _attempt in 0..cfg.max_retries.max(1) {
        let mut cache_ids = index::sample(&mut rng, n, cfg.cache_count()).into_vec();
        cache_ids.sort_unstable();
        let mut is_cache = vec![false; n];
        for &c in &cache_ids {
            is_cache[c] = true;
        }
        let nodes: Vec<Node> = (0..n)
            .map(|i| {
                let wh = if is_cache[i] {
                    uniform(&mut rng, cfg.cache_energy_wh)
                } else {
                    uniform(&mut rng, cfg.node_energy_wh)
                };
                Node {
                    id: NodeId(i),
                    position: positions[i],
                    energy_j: wh * JOULES_PER_WH,
                    is_cache: is_cache[i],
                }
            })
            .collect();
        let field: Vec<usize> = (0..n).filter(|&i| !is_cache[i]).collect();
        let consumer_slots = index::sample(&mut rng, field.len(), cfg.consumers).into_vec();
        let (rlo, rhi) = cfg.rate_range;
        let data: Vec<DataPiece> = consumer_slots
            .into_iter()
            .map(|slot| {
                let consumer = field[slot];
                let mut s = rng.random_range(0..field.len() - 1);
                if s >= slot {
                    s += 1;
                }
                DataPiece {
                    source: NodeId(field[s]),
                    consumer: NodeId(consumer),
                    gen_rate: rng.random_range(rlo..=rhi) as f64,
                    cons_rate: rng.random_range(rlo..=rhi) as f64,
                }
            })
            .collect();

        let cache_dist: Vec<Vec<Option<usize>>> = cache_ids
            .iter()
            .map(|&c| graph.hop_distances(NodeId(c)))
            .collect();
        let usable = data.iter().all(|d| {
            cache_dist.iter().any(|dist| {
                matches!(dist[d.consumer.0], Some(h) if h <= max_hops) && dist[d.source.0].is_some()
            })
        });
        if !usable {
            continue;
        }
        let radio = RadioParams {
            gamma: cfg.gamma,
            rho_m: cfg.rho_m,
            report_cost_j: cfg.energy.report_cost_j(),
        };
        return Ok(NetworkInstance::new(nodes, edges, data, cfg.timing, radio)?);
    }
    Err(GenerateError::Degenerate(cfg.max_retries.max(1)))
}
