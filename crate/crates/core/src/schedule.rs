//! Decision variables, lifetime algebra and the greedy DataCacheAccess
//! scheduler.
//!
//! Lifetimes are measured in time cycles: a node holding `E` joules whose
//! outgoing edges carry `a_uv` pieces per cycle at `eps_uv` joules per piece
//! lasts `E / sum(eps_uv * a_uv)` cycles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kpaths::{meets_delay_bound, Path, PathMetric, PathSets};
use crate::topology::{EdgeId, NetworkInstance, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Source to cache, at the generation rate.
    Source,
    /// Cache to consumer, at the consumption rate.
    Consumer,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("data piece {piece} has no cache with both a source path and a delay-feasible consumer path")]
    Infeasible { piece: usize },
    #[error("path sets cover {found} pieces but the instance has {expected}")]
    PieceCount { expected: usize, found: usize },
    #[error("energy vector has {found} entries, instance has {expected} nodes")]
    EnergyCount { expected: usize, found: usize },
    #[error("assignment for piece {piece} is invalid: {reason}")]
    Invalid { piece: usize, reason: String },
}

/// Chosen cache and path pair for one data piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub piece: usize,
    pub cache: NodeId,
    /// Source to cache.
    pub source_path: Path,
    /// Cache to consumer.
    pub consumer_path: Path,
}

/// One assignment per data piece, in piece order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Schedule {
    pub assignments: Vec<Assignment>,
}

/// A directed hop whose indicator `x^{role,piece}_{uv}` is 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Indicator {
    pub piece: usize,
    pub role: Role,
    pub from: NodeId,
    pub to: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeLoadRow {
    pub from: NodeId,
    pub to: NodeId,
    pub rate: f64,
    pub eps_j: f64,
}

/// Aggregate rate `a_uv` (pieces per cycle) per directed edge, indexed by
/// [`EdgeId`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoadVector {
    rates: Vec<f64>,
}

impl LoadVector {
    pub fn zeros(instance: &NetworkInstance) -> Self {
        Self {
            rates: vec![0.0; instance.edges().len()],
        }
    }

    pub fn from_rates(rates: Vec<f64>) -> Self {
        Self { rates }
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn rate(&self, edge: EdgeId) -> f64 {
        self.rates[edge]
    }

    /// Adds `rate` to every hop of `path`. Panics if a hop is not an edge.
    pub fn add_path(&mut self, instance: &NetworkInstance, path: &Path, rate: f64) {
        for (u, v) in path.hops() {
            let e = instance
                .edge_id(u, v)
                .unwrap_or_else(|| panic!("hop {u}->{v} is not an edge"));
            self.rates[e] += rate;
        }
    }

    /// Energy spent by `u` per cycle: `sum_v eps_uv * a_uv`.
    pub fn node_drain(&self, instance: &NetworkInstance, u: NodeId) -> f64 {
        instance
            .out_edges(u)
            .map(|e| instance.edge(e).eps_j * self.rates[e])
            .sum()
    }

    pub fn node_drains(&self, instance: &NetworkInstance) -> Vec<f64> {
        (0..instance.node_count())
            .map(|u| self.node_drain(instance, NodeId(u)))
            .collect()
    }

    pub fn is_active(&self, instance: &NetworkInstance, u: NodeId) -> bool {
        instance.out_edges(u).any(|e| self.rates[e] > 0.0)
    }
}

impl Schedule {
    pub fn load(&self, instance: &NetworkInstance) -> LoadVector {
        let mut load = LoadVector::zeros(instance);
        for a in &self.assignments {
            let d = &instance.data()[a.piece];
            load.add_path(instance, &a.source_path, d.gen_rate);
            load.add_path(instance, &a.consumer_path, d.cons_rate);
        }
        load
    }

    pub fn indicators(&self) -> Vec<Indicator> {
        let mut out = Vec::new();
        for a in &self.assignments {
            for (role, path) in [(Role::Source, &a.source_path), (Role::Consumer, &a.consumer_path)] {
                out.extend(path.hops().map(|(from, to)| Indicator {
                    piece: a.piece,
                    role,
                    from,
                    to,
                }));
            }
        }
        out
    }

    /// Nonzero entries of the load vector, in edge order.
    pub fn edge_load_table(&self, instance: &NetworkInstance) -> Vec<EdgeLoadRow> {
        let load = self.load(instance);
        instance
            .edges()
            .iter()
            .zip(load.rates())
            .filter(|(_, &r)| r > 0.0)
            .map(|(e, &rate)| EdgeLoadRow {
                from: e.from,
                to: e.to,
                rate,
                eps_j: e.eps_j,
            })
            .collect()
    }

    /// Re-checks every structural invariant and the delay bound on each
    /// consumer path.
    pub fn validate(&self, instance: &NetworkInstance, metric: PathMetric) -> Result<(), ScheduleError> {
        self.validate_structure(instance)?;
        for (i, a) in self.assignments.iter().enumerate() {
            if !meets_delay_bound(instance, &a.consumer_path, metric) {
                return Err(ScheduleError::Invalid {
                    piece: i,
                    reason: "consumer path exceeds the access-delay threshold".to_string(),
                });
            }
        }
        Ok(())
    }

    /// Endpoints, cache membership and path simplicity, without the delay
    /// bound.
    pub fn validate_structure(&self, instance: &NetworkInstance) -> Result<(), ScheduleError> {
        if self.assignments.len() != instance.data().len() {
            return Err(ScheduleError::PieceCount {
                expected: instance.data().len(),
                found: self.assignments.len(),
            });
        }
        let graph = instance.graph();
        for (i, a) in self.assignments.iter().enumerate() {
            let bad = |reason: &str| ScheduleError::Invalid {
                piece: i,
                reason: reason.to_string(),
            };
            let d = &instance.data()[i];
            if a.piece != i {
                return Err(bad("assignment out of order"));
            }
            if a.cache.0 >= instance.node_count() || !instance.is_cache(a.cache) {
                return Err(bad("chosen node is not a cache"));
            }
            if a.source_path.first() != d.source || a.source_path.last() != a.cache {
                return Err(bad("source path does not run from the source to the cache"));
            }
            if a.consumer_path.first() != a.cache || a.consumer_path.last() != d.consumer {
                return Err(bad("consumer path does not run from the cache to the consumer"));
            }
            if !a.source_path.is_simple_in(graph) || !a.consumer_path.is_simple_in(graph) {
                return Err(bad("path is not a simple path of the network"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schedule serialization is total");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// `E_u / drain`; infinite when the node spends nothing.
pub fn lifetime_from(energy_j: f64, drain_j_per_cycle: f64) -> f64 {
    if drain_j_per_cycle > 0.0 {
        energy_j / drain_j_per_cycle
    } else {
        f64::INFINITY
    }
}

/// Lifetime of `u` in cycles under `load`, from its initial energy.
pub fn node_lifetime(instance: &NetworkInstance, load: &LoadVector, u: NodeId) -> f64 {
    lifetime_from(instance.node(u).energy_j, load.node_drain(instance, u))
}

/// Minimum node lifetime over nodes with an active outgoing edge; infinite
/// when nothing is scheduled.
pub fn network_lifetime(instance: &NetworkInstance, schedule: &Schedule) -> f64 {
    lifetime_under(instance, &schedule.load(instance), &instance.initial_energies())
}

/// [`network_lifetime`] for an arbitrary load and energy vector.
pub fn lifetime_under(instance: &NetworkInstance, load: &LoadVector, energies: &[f64]) -> f64 {
    (0..instance.node_count())
        .map(|u| lifetime_from(energies[u], load.node_drain(instance, NodeId(u))))
        .fold(f64::INFINITY, f64::min)
}

/// Pieces in scheduling order: consumption rate descending, then index.
pub fn processing_order(instance: &NetworkInstance) -> Vec<usize> {
    let mut order: Vec<usize> = (0..instance.data().len()).collect();
    let data = instance.data();
    order.sort_by(|&a, &b| data[b].cons_rate.total_cmp(&data[a].cons_rate).then(a.cmp(&b)));
    order
}

/// Greedy DataCacheAccess from initial energies.
pub fn data_cache_access(instance: &NetworkInstance, path_sets: &PathSets) -> Result<Schedule, ScheduleError> {
    data_cache_access_with_energies(instance, path_sets, &instance.initial_energies())
}

/// Greedy DataCacheAccess with `energies` standing in for `E_u` (residual
/// energies when rescheduling mid-run).
///
/// Pieces are taken in [`processing_order`]. For each, every cache with both
/// path sets nonempty and every (source path, consumer path) pair is scored
/// by the minimum lifetime over the nodes of the two paths, counting loads
/// already committed plus the candidate's own. The best pair is committed
/// before moving on; ties keep the first in (cache, i, j) order.
pub fn data_cache_access_with_energies(
    instance: &NetworkInstance,
    path_sets: &PathSets,
    energies: &[f64],
) -> Result<Schedule, ScheduleError> {
    let pieces = instance.data();
    if path_sets.pieces.len() != pieces.len() {
        return Err(ScheduleError::PieceCount {
            expected: pieces.len(),
            found: path_sets.pieces.len(),
        });
    }
    if energies.len() != instance.node_count() {
        return Err(ScheduleError::EnergyCount {
            expected: instance.node_count(),
            found: energies.len(),
        });
    }
    let mut drain = vec![0.0f64; instance.node_count()];
    let mut chosen: Vec<Option<Assignment>> = vec![None; pieces.len()];
    let mut extra: Vec<(NodeId, f64)> = Vec::new();

    for d in processing_order(instance) {
        let piece = &pieces[d];
        let mut best: Option<(f64, usize, usize, usize)> = None;
        for (ci, cp) in path_sets.pieces[d].caches.iter().enumerate() {
            for (i, sp) in cp.source_paths.iter().enumerate() {
                for (j, cpath) in cp.consumer_paths.iter().enumerate() {
                    extra.clear();
                    push_drain(instance, sp, piece.gen_rate, &mut extra);
                    push_drain(instance, cpath, piece.cons_rate, &mut extra);
                    let score = pair_score(sp, cpath, &extra, &drain, energies);
                    if best.is_none_or(|(b, ..)| score > b) {
                        best = Some((score, ci, i, j));
                    }
                }
            }
        }
        let (_, ci, i, j) = best.ok_or(ScheduleError::Infeasible { piece: d })?;
        let cp = &path_sets.pieces[d].caches[ci];
        let a = Assignment {
            piece: d,
            cache: cp.cache,
            source_path: cp.source_paths[i].clone(),
            consumer_path: cp.consumer_paths[j].clone(),
        };
        extra.clear();
        push_drain(instance, &a.source_path, piece.gen_rate, &mut extra);
        push_drain(instance, &a.consumer_path, piece.cons_rate, &mut extra);
        for &(u, x) in &extra {
            drain[u.0] += x;
        }
        chosen[d] = Some(a);
    }
    Ok(Schedule {
        assignments: chosen.into_iter().map(|a| a.expect("every piece is scheduled")).collect(),
    })
}

fn push_drain(instance: &NetworkInstance, path: &Path, rate: f64, out: &mut Vec<(NodeId, f64)>) {
    for (u, v) in path.hops() {
        let e = instance.edge_id(u, v).expect("path hop is an edge");
        out.push((u, instance.edge(e).eps_j * rate));
    }
}

fn pair_score(sp: &Path, cpath: &Path, extra: &[(NodeId, f64)], drain: &[f64], energies: &[f64]) -> f64 {
    let mut score = f64::INFINITY;
    for &u in sp.nodes().iter().chain(cpath.nodes()) {
        let added: f64 = extra.iter().filter(|(w, _)| *w == u).map(|(_, x)| x).sum();
        score = score.min(lifetime_from(energies[u.0], drain[u.0] + added));
    }
    score
}

/// Best integral assignment over every combination of (cache, source path,
/// consumer path) per piece, maximizing [`network_lifetime`]. Exponential in
/// the number of pieces; meant for small instances. `None` when some piece
/// has no usable cache.
pub fn exhaustive_best(instance: &NetworkInstance, path_sets: &PathSets) -> Option<(Schedule, f64)> {
    let options: Vec<Vec<Assignment>> = path_sets
        .pieces
        .iter()
        .enumerate()
        .map(|(d, pp)| {
            let mut v = Vec::new();
            for cp in &pp.caches {
                for sp in &cp.source_paths {
                    for cpath in &cp.consumer_paths {
                        v.push(Assignment {
                            piece: d,
                            cache: cp.cache,
                            source_path: sp.clone(),
                            consumer_path: cpath.clone(),
                        });
                    }
                }
            }
            v
        })
        .collect();
    if options.iter().any(Vec::is_empty) {
        return None;
    }
    let mut idx = vec![0usize; options.len()];
    let mut best: Option<(Schedule, f64)> = None;
    loop {
        let schedule = Schedule {
            assignments: idx.iter().zip(&options).map(|(&i, o)| o[i].clone()).collect(),
        };
        let t = network_lifetime(instance, &schedule);
        if best.as_ref().is_none_or(|(_, b)| t > *b) {
            best = Some((schedule, t));
        }
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return best;
            }
            idx[pos] += 1;
            if idx[pos] < options[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}
