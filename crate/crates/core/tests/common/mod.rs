#![allow(dead_code)]

use edgecache::topology::{Edge, Graph, Node, Position, RadioParams, Timing};
use edgecache::{DataPiece, NetworkInstance, NodeId};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random spanning tree plus `extra` random chords.
pub fn random_connected_pairs<R: Rng>(rng: &mut R, n: usize, extra: usize) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut pairs = Vec::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        pairs.push((order[i], order[j]));
    }
    for _ in 0..extra {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            pairs.push((u, v));
        }
    }
    pairs
}

/// Every simple path from `s` to `t`, shortest first and lexicographic among
/// equal lengths.
pub fn all_simple_paths(g: &Graph, s: NodeId, t: NodeId) -> Vec<Vec<NodeId>> {
    fn walk(g: &Graph, t: NodeId, stack: &mut Vec<NodeId>, seen: &mut [bool], out: &mut Vec<Vec<NodeId>>) {
        let u = *stack.last().unwrap();
        if u == t {
            out.push(stack.clone());
            return;
        }
        for &v in g.neighbors(u) {
            if !seen[v.0] {
                seen[v.0] = true;
                stack.push(v);
                walk(g, t, stack, seen, out);
                stack.pop();
                seen[v.0] = false;
            }
        }
    }
    let mut out = Vec::new();
    if s == t {
        return out;
    }
    let mut seen = vec![false; g.node_count()];
    seen[s.0] = true;
    walk(g, t, &mut vec![s], &mut seen, &mut out);
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

/// Hand-built instance on an abstract graph. Nodes are packed well inside
/// radio range so any pair may be linked; every directed edge costs `eps_j`.
pub fn hand_instance(
    energies: &[f64],
    caches: &[usize],
    pairs: &[(usize, usize)],
    eps_j: f64,
    data: &[(usize, usize, f64, f64)],
) -> NetworkInstance {
    let nodes = energies
        .iter()
        .enumerate()
        .map(|(i, &e)| Node {
            id: NodeId(i),
            position: Position::new(i as f64 * 1e-3, 0.0),
            energy_j: e,
            is_cache: caches.contains(&i),
        })
        .collect();
    let mut undirected: Vec<(usize, usize)> = pairs.iter().filter(|(u, v)| u != v).map(|&(u, v)| (u.min(v), u.max(v))).collect();
    undirected.sort_unstable();
    undirected.dedup();
    let mut edges = Vec::new();
    for &(u, v) in &undirected {
        for (a, b) in [(u, v), (v, u)] {
            edges.push(Edge {
                from: NodeId(a),
                to: NodeId(b),
                eps_j,
                delay_ms: None,
            });
        }
    }
    let data = data
        .iter()
        .map(|&(s, c, g, r)| DataPiece {
            source: NodeId(s),
            consumer: NodeId(c),
            gen_rate: g,
            cons_rate: r,
        })
        .collect();
    NetworkInstance::new(
        nodes,
        edges,
        data,
        Timing::default(),
        RadioParams {
            gamma: 1.0,
            rho_m: 1.0,
            report_cost_j: 0.0,
        },
    )
    .expect("valid hand-built instance")
}
