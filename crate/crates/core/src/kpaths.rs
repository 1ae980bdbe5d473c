//! Loopless k-shortest paths (Yen) and the per-piece path sets that feed
//! the schedulers.
//!
//! Ties between equal-cost paths are broken by lexicographic node sequence,
//! so every query has exactly one answer.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{Graph, NetworkInstance, NodeId};

/// A simple path, stored in the direction data travels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Path {
    nodes: Vec<NodeId>,
}

impl Path {
    /// Panics on fewer than two nodes; a path always has at least one hop.
    pub fn new(nodes: Vec<NodeId>) -> Self {
        assert!(nodes.len() >= 2, "a path needs at least one hop");
        Self { nodes }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn hop_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn first(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn last(&self) -> NodeId {
        *self.nodes.last().unwrap()
    }

    pub fn worst_case_delay_ms(&self, l_hop_ms: f64) -> f64 {
        self.hop_count() as f64 * l_hop_ms
    }

    /// Consecutive `(from, to)` hops.
    pub fn hops(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn reversed(&self) -> Path {
        let mut nodes = self.nodes.clone();
        nodes.reverse();
        Path { nodes }
    }

    /// True when every hop is an edge of `graph` and no node repeats.
    pub fn is_simple_in(&self, graph: &Graph) -> bool {
        let mut seen = HashSet::with_capacity(self.nodes.len());
        self.nodes.iter().all(|&u| u.0 < graph.node_count() && seen.insert(u))
            && self.hops().all(|(u, v)| graph.has_edge(u, v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathMetric {
    /// Unit cost per hop; delay bound is `hops * l_hop`.
    #[default]
    Hops,
    /// Per-link worst-case delays from the instance (falling back to `l_hop`
    /// on links without a measurement).
    LinkDelay,
}

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("one-hop delay estimation needs at least one sample")]
    EmptySamples,
    #[error("delay sample {0} is not a finite non-negative number")]
    BadSample(f64),
    #[error("path sets were built for {expected} pieces, instance has {found}")]
    PieceCount { expected: usize, found: usize },
    #[error("piece {piece}: {reason}")]
    Invalid { piece: usize, reason: String },
}

/// Worst-case one-hop delay: the largest measured sample.
pub fn estimate_l_hop(samples: &[f64]) -> Result<f64, PathError> {
    let mut best: Option<f64> = None;
    for &s in samples {
        if !(s.is_finite() && s >= 0.0) {
            return Err(PathError::BadSample(s));
        }
        best = Some(best.map_or(s, |b: f64| b.max(s)));
    }
    best.ok_or(PathError::EmptySamples)
}

/// One-hop delay measurements, uniformly spread between a floor and the
/// worst case observed on the deployment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneHopDelayModel {
    pub min_ms: f64,
    pub max_ms: f64,
}

impl Default for OneHopDelayModel {
    fn default() -> Self {
        Self {
            min_ms: 10.0,
            max_ms: 28.0,
        }
    }
}

impl OneHopDelayModel {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.random_range(self.min_ms..=self.max_ms)
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    cost: f64,
    nodes: Vec<NodeId>,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.nodes.cmp(&other.nodes))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry(f64, NodeId);

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn path_cost<W: Fn(NodeId, NodeId) -> f64>(nodes: &[NodeId], weight: &W) -> f64 {
    nodes.windows(2).map(|w| weight(w[0], w[1])).sum()
}

/// Cheapest `from -> dst` path that avoids `blocked` nodes and the directed
/// hops in `cut`; among equally cheap paths the lexicographically smallest.
fn lex_shortest<W: Fn(NodeId, NodeId) -> f64>(
    graph: &Graph,
    from: NodeId,
    dst: NodeId,
    blocked: &[bool],
    cut: &HashSet<(NodeId, NodeId)>,
    weight: &W,
) -> Option<Vec<NodeId>> {
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[dst.0] = 0.0;
    heap.push(HeapEntry(0.0, dst));
    while let Some(HeapEntry(d, x)) = heap.pop() {
        if d > dist[x.0] {
            continue;
        }
        for &u in graph.neighbors(x) {
            if blocked[u.0] || cut.contains(&(u, x)) {
                continue;
            }
            let nd = d + weight(u, x);
            if nd < dist[u.0] {
                dist[u.0] = nd;
                heap.push(HeapEntry(nd, u));
            }
        }
    }
    if !dist[from.0].is_finite() {
        return None;
    }
    let mut nodes = vec![from];
    let mut cur = from;
    while cur != dst {
        let next = graph.neighbors(cur).iter().copied().find(|&v| {
            !blocked[v.0]
                && !cut.contains(&(cur, v))
                && dist[v.0].is_finite()
                && dist[v.0] + weight(cur, v) == dist[cur.0]
        })?;
        nodes.push(next);
        cur = next;
    }
    Some(nodes)
}

/// Up to `k` loopless `src -> dst` paths by hop count, ordered by
/// (hops, node sequence). Empty when `dst` is unreachable or `src == dst`.
pub fn yen_k_shortest(graph: &Graph, src: NodeId, dst: NodeId, k: usize) -> Vec<Path> {
    yen_k_shortest_weighted(graph, src, dst, k, |_, _| 1.0)
}

/// [`yen_k_shortest`] with positive per-hop weights.
pub fn yen_k_shortest_weighted<W>(graph: &Graph, src: NodeId, dst: NodeId, k: usize, weight: W) -> Vec<Path>
where
    W: Fn(NodeId, NodeId) -> f64,
{
    if k == 0 || src == dst {
        return Vec::new();
    }
    let n = graph.node_count();
    let mut blocked = vec![false; n];
    let no_cut = HashSet::new();
    let Some(first) = lex_shortest(graph, src, dst, &blocked, &no_cut, &weight) else {
        return Vec::new();
    };
    let mut found: Vec<Vec<NodeId>> = vec![first];
    let mut pool: BTreeSet<Candidate> = BTreeSet::new();

    while found.len() < k {
        let last = found.last().unwrap().clone();
        for i in 0..last.len() - 1 {
            let spur = last[i];
            let root = &last[..=i];
            let cut: HashSet<(NodeId, NodeId)> = found
                .iter()
                .filter(|p| p.len() > i + 1 && &p[..=i] == root)
                .map(|p| (p[i], p[i + 1]))
                .collect();
            for &u in &root[..i] {
                blocked[u.0] = true;
            }
            if let Some(tail) = lex_shortest(graph, spur, dst, &blocked, &cut, &weight) {
                let mut nodes = root[..i].to_vec();
                nodes.extend_from_slice(&tail);
                if !found.contains(&nodes) {
                    let cost = path_cost(&nodes, &weight);
                    pool.insert(Candidate { cost, nodes });
                }
            }
            for &u in &root[..i] {
                blocked[u.0] = false;
            }
        }
        match pool.pop_first() {
            Some(c) => found.push(c.nodes),
            None => break,
        }
    }
    found.into_iter().map(Path::new).collect()
}

/// Candidate routes for one data piece through one cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachePaths {
    pub cache: NodeId,
    /// Cache to consumer, already filtered by the access-delay bound.
    pub consumer_paths: Vec<Path>,
    /// Source to cache, unfiltered.
    pub source_paths: Vec<Path>,
}

impl CachePaths {
    pub fn is_usable(&self) -> bool {
        !self.consumer_paths.is_empty() && !self.source_paths.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecePaths {
    pub piece: usize,
    pub caches: Vec<CachePaths>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSets {
    pub k: usize,
    #[serde(default)]
    pub metric: PathMetric,
    pub pieces: Vec<PiecePaths>,
}

/// Worst-case end-to-end delay of `path` under `metric`.
pub fn path_delay_ms(instance: &NetworkInstance, path: &Path, metric: PathMetric) -> f64 {
    let l_hop = instance.timing().l_hop_ms;
    match metric {
        PathMetric::Hops => path.worst_case_delay_ms(l_hop),
        PathMetric::LinkDelay => path
            .hops()
            .map(|(u, v)| link_delay(instance, u, v).unwrap_or(l_hop))
            .sum(),
    }
}

fn link_delay(instance: &NetworkInstance, u: NodeId, v: NodeId) -> Option<f64> {
    instance.edge_id(u, v).and_then(|e| instance.edge(e).delay_ms)
}

/// True when `path` meets the access-delay threshold of `instance`.
pub fn meets_delay_bound(instance: &NetworkInstance, path: &Path, metric: PathMetric) -> bool {
    path_delay_ms(instance, path, metric) <= instance.timing().l_max_ms
}

/// For every data piece and every cache: the `k` shortest cache-to-consumer
/// paths that meet the access-delay bound, and the `k` shortest
/// cache-to-source paths (oriented source to cache), without a bound.
pub fn compute_path_sets(instance: &NetworkInstance, k: usize) -> PathSets {
    compute_path_sets_with(instance, k, PathMetric::Hops)
}

pub fn compute_path_sets_with(instance: &NetworkInstance, k: usize, metric: PathMetric) -> PathSets {
    let graph = instance.graph();
    let l_hop = instance.timing().l_hop_ms;
    let shortest = |a: NodeId, b: NodeId| match metric {
        PathMetric::Hops => yen_k_shortest(graph, a, b, k),
        PathMetric::LinkDelay => yen_k_shortest_weighted(graph, a, b, k, |u, v| {
            link_delay(instance, u, v).unwrap_or(l_hop)
        }),
    };
    let pieces = instance
        .data()
        .iter()
        .enumerate()
        .map(|(i, d)| PiecePaths {
            piece: i,
            caches: instance
                .caches()
                .iter()
                .map(|&p| CachePaths {
                    cache: p,
                    consumer_paths: shortest(p, d.consumer)
                        .into_iter()
                        .filter(|path| meets_delay_bound(instance, path, metric))
                        .collect(),
                    source_paths: shortest(p, d.source).iter().map(Path::reversed).collect(),
                })
                .collect(),
        })
        .collect();
    PathSets { k, metric, pieces }
}

impl PathSets {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("path set serialization is total");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Checks that the sets fit `instance`: endpoints, adjacency, simplicity,
    /// set sizes, and the access-delay bound on every consumer path.
    pub fn validate(&self, instance: &NetworkInstance) -> Result<(), PathError> {
        if self.pieces.len() != instance.data().len() {
            return Err(PathError::PieceCount {
                expected: self.pieces.len(),
                found: instance.data().len(),
            });
        }
        let graph = instance.graph();
        for (i, (pp, d)) in self.pieces.iter().zip(instance.data()).enumerate() {
            let invalid = |reason: String| PathError::Invalid { piece: i, reason };
            if pp.piece != i {
                return Err(invalid(format!("entry labelled as piece {}", pp.piece)));
            }
            for cp in &pp.caches {
                if !instance.is_cache(cp.cache) {
                    return Err(invalid(format!("node {} is not a cache", cp.cache)));
                }
                if cp.consumer_paths.len() > self.k || cp.source_paths.len() > self.k {
                    return Err(invalid(format!("more than k = {} paths", self.k)));
                }
                for p in &cp.consumer_paths {
                    if p.first() != cp.cache || p.last() != d.consumer || !p.is_simple_in(graph) {
                        return Err(invalid(format!("bad consumer path {:?}", p.nodes())));
                    }
                    if !meets_delay_bound(instance, p, self.metric) {
                        return Err(invalid(format!("consumer path {:?} exceeds the delay bound", p.nodes())));
                    }
                }
                for p in &cp.source_paths {
                    if p.first() != d.source || p.last() != cp.cache || !p.is_simple_in(graph) {
                        return Err(invalid(format!("bad source path {:?}", p.nodes())));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{generate_instance, GeneratorConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids(v: &[usize]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    #[test]
    fn triangle() {
        // A=0, B=1, C=2
        let g = Graph::from_pairs(3, &[(0, 1), (1, 2), (0, 2)]);
        let paths = yen_k_shortest(&g, NodeId(0), NodeId(2), 2);
        assert_eq!(paths, vec![Path::new(ids(&[0, 2])), Path::new(ids(&[0, 1, 2]))]);
        let all = yen_k_shortest(&g, NodeId(0), NodeId(2), 5);
        assert_eq!(all.len(), 2);
    }

    #[test]
    fn unreachable_and_degenerate_queries() {
        let g = Graph::from_pairs(4, &[(0, 1), (2, 3)]);
        assert!(yen_k_shortest(&g, NodeId(0), NodeId(3), 3).is_empty());
        assert!(yen_k_shortest(&g, NodeId(0), NodeId(0), 3).is_empty());
        assert!(yen_k_shortest(&g, NodeId(0), NodeId(1), 0).is_empty());
    }

    #[test]
    fn ties_break_lexicographically() {
        // Square 0-1-3, 0-2-3: both two hops.
        let g = Graph::from_pairs(4, &[(0, 2), (2, 3), (0, 1), (1, 3)]);
        let paths = yen_k_shortest(&g, NodeId(0), NodeId(3), 2);
        assert_eq!(paths[0].nodes(), ids(&[0, 1, 3]).as_slice());
        assert_eq!(paths[1].nodes(), ids(&[0, 2, 3]).as_slice());
    }

    #[test]
    fn weighted_mode_prefers_cheap_links() {
        let g = Graph::from_pairs(3, &[(0, 1), (1, 2), (0, 2)]);
        let w = |u: NodeId, v: NodeId| if (u.0, v.0) == (0, 2) || (u.0, v.0) == (2, 0) { 10.0 } else { 1.0 };
        let paths = yen_k_shortest_weighted(&g, NodeId(0), NodeId(2), 2, w);
        assert_eq!(paths[0].nodes(), ids(&[0, 1, 2]).as_slice());
        assert_eq!(paths[1].nodes(), ids(&[0, 2]).as_slice());
    }

    #[test]
    fn l_hop_is_the_worst_sample() {
        assert_eq!(estimate_l_hop(&[17.0, 19.0, 22.0, 28.0]).unwrap(), 28.0);
        assert_eq!(estimate_l_hop(&[10.0]).unwrap(), 10.0);
        assert_eq!(estimate_l_hop(&[]), Err(PathError::EmptySamples));
        assert!(matches!(estimate_l_hop(&[1.0, f64::NAN]), Err(PathError::BadSample(_))));
    }

    #[test]
    fn l_hop_converges_to_model_maximum() {
        let model = OneHopDelayModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<f64> = (0..10_000).map(|_| model.sample(&mut rng)).collect();
        let est = estimate_l_hop(&samples).unwrap();
        assert!(est <= 28.0 && est > 27.95, "estimate {est}");
    }

    fn line_instance(hops: usize) -> NetworkInstance {
        use crate::topology::*;
        // cache 0, consumer at the far end, source next to the cache.
        let n = hops + 2;
        let mut file = InstanceFile {
            nodes: Vec::new(),
            edges: Vec::new(),
            data: vec![DataPiece {
                source: NodeId(n - 1),
                consumer: NodeId(hops),
                gen_rate: 1.0,
                cons_rate: 1.0,
            }],
            timing: TimingRecord { tau_s: 1.0, l_hop_ms: 28.0, l_max_ms: 120.0 },
            radio: RadioRecord { gamma: 1.0, rho_m: 1.5, report_cost_j: 0.0 },
        };
        for i in 0..=hops {
            file.nodes.push(NodeRecord { id: i, x: i as f64, y: 0.0, energy_j: if i == 0 { 100.0 } else { 10.0 }, is_cache: i == 0 });
        }
        // extra source node hanging off the far end, so the source side is long too.
        file.nodes.push(NodeRecord { id: n - 1, x: hops as f64 + 1.0, y: 0.0, energy_j: 10.0, is_cache: false });
        for i in 0..n - 1 {
            file.edges.push(EdgeRecord { u: i, v: i + 1, eps_j: 1.0, delay_ms: None });
            file.edges.push(EdgeRecord { u: i + 1, v: i, eps_j: 1.0, delay_ms: None });
        }
        NetworkInstance::try_from(file).unwrap()
    }

    #[test]
    fn consumer_paths_are_delay_filtered() {
        let four = compute_path_sets(&line_instance(4), 3);
        assert_eq!(four.pieces[0].caches[0].consumer_paths.len(), 1);
        assert_eq!(four.pieces[0].caches[0].consumer_paths[0].hop_count(), 4);
        let five = compute_path_sets(&line_instance(5), 3);
        assert!(five.pieces[0].caches[0].consumer_paths.is_empty());
        // Source side of the 5-hop line is 6 hops and is kept.
        let src = &five.pieces[0].caches[0].source_paths;
        assert_eq!(src.len(), 1);
        assert_eq!(src[0].hop_count(), 6);
        assert_eq!(src[0].first(), NodeId(6));
        assert_eq!(src[0].last(), NodeId(0));
    }

    #[test]
    fn path_sets_validate_and_round_trip() {
        let inst = generate_instance(&GeneratorConfig::simulation(5, 6), 9).unwrap();
        let sets = compute_path_sets(&inst, 4);
        sets.validate(&inst).unwrap();
        let back = PathSets::from_json(&sets.to_json()).unwrap();
        assert_eq!(sets, back);
        assert_eq!(compute_path_sets(&inst, 4).to_json(), sets.to_json());
    }

    #[test]
    fn link_delay_metric_uses_edge_delays() {
        let inst = line_instance(4);
        let mut file = inst.to_file();
        for e in &mut file.edges {
            e.delay_ms = Some(20.0);
        }
        let inst = NetworkInstance::try_from(file).unwrap();
        let p = Path::new(ids(&[0, 1, 2, 3, 4]));
        assert_eq!(path_delay_ms(&inst, &p, PathMetric::LinkDelay), 80.0);
        assert_eq!(path_delay_ms(&inst, &p, PathMetric::Hops), 112.0);
        let sets = compute_path_sets_with(&inst, 2, PathMetric::LinkDelay);
        sets.validate(&inst).unwrap();
    }

    #[test]
    fn validate_rejects_tampered_sets() {
        let inst = line_instance(4);
        let mut sets = compute_path_sets(&inst, 2);
        sets.pieces[0].caches[0].consumer_paths[0] = Path::new(ids(&[0, 2]));
        assert!(sets.validate(&inst).is_err());
    }
}
