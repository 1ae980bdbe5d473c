mod common;

use common::{hand_instance, random_connected_pairs, rng};
use edgecache::kpaths::PathSets;
use edgecache::schedule::{exhaustive_best, Role};
use edgecache::{
    compute_path_sets, data_cache_access, generate_instance, network_lifetime, GeneratorConfig, NetworkInstance, NodeId,
    Path, Schedule,
};
use rand::Rng;

fn drains_of(inst: &NetworkInstance, picks: &[(usize, &Path, &Path)]) -> Vec<f64> {
    let mut drain = vec![0.0; inst.node_count()];
    for &(d, sp, cp) in picks {
        let piece = inst.data()[d];
        for (path, rate) in [(sp, piece.gen_rate), (cp, piece.cons_rate)] {
            for h in path.nodes().windows(2) {
                let e = inst.edge_id(h[0], h[1]).unwrap();
                drain[h[0].0] += inst.edge(e).eps_j * rate;
            }
        }
    }
    drain
}

fn min_life(inst: &NetworkInstance, drain: &[f64], over: impl Iterator<Item = NodeId>) -> f64 {
    over.map(|u| {
        if drain[u.0] > 0.0 {
            inst.node(u).energy_j / drain[u.0]
        } else {
            f64::INFINITY
        }
    })
    .fold(f64::INFINITY, f64::min)
}

/// Straight re-derivation of the greedy rule: pieces by consumption rate
/// (descending, then index), each takes the first pair maximizing the
/// minimum lifetime over its own nodes given everything committed so far.
fn greedy_rescan(inst: &NetworkInstance, sets: &PathSets) -> Vec<(NodeId, Path, Path)> {
    let mut order: Vec<usize> = (0..inst.data().len()).collect();
    order.sort_by(|&a, &b| {
        inst.data()[b]
            .cons_rate
            .partial_cmp(&inst.data()[a].cons_rate)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut committed: Vec<(usize, Path, Path)> = Vec::new();
    let mut out = vec![None; inst.data().len()];
    for d in order {
        let mut best: Option<(f64, NodeId, Path, Path)> = None;
        for cp in &sets.pieces[d].caches {
            for sp in &cp.source_paths {
                for cpath in &cp.consumer_paths {
                    let mut picks: Vec<(usize, &Path, &Path)> = committed.iter().map(|(d, a, b)| (*d, a, b)).collect();
                    picks.push((d, sp, cpath));
                    let drain = drains_of(inst, &picks);
                    let score = min_life(inst, &drain, sp.nodes().iter().chain(cpath.nodes()).copied());
                    if best.as_ref().is_none_or(|b| score > b.0) {
                        best = Some((score, cp.cache, sp.clone(), cpath.clone()));
                    }
                }
            }
        }
        let (_, c, sp, cpath) = best.expect("usable cache");
        committed.push((d, sp.clone(), cpath.clone()));
        out[d] = Some((c, sp, cpath));
    }
    out.into_iter().map(Option::unwrap).collect()
}

#[test]
fn dca_matches_an_independent_greedy_rescan() {
    for seed in 0..12 {
        let inst = generate_instance(&GeneratorConfig::simulation(5 + seed as usize % 3, 4 + seed as usize % 5), seed).unwrap();
        let sets = compute_path_sets(&inst, 4);
        let s = data_cache_access(&inst, &sets).unwrap();
        let want = greedy_rescan(&inst, &sets);
        for (a, (c, sp, cp)) in s.assignments.iter().zip(&want) {
            assert_eq!(a.cache, *c, "seed {seed} piece {}", a.piece);
            assert_eq!(&a.source_path, sp);
            assert_eq!(&a.consumer_path, cp);
        }
    }
}

#[test]
fn lifetime_equals_min_energy_over_drain() {
    for seed in 0..8 {
        let inst = generate_instance(&GeneratorConfig::hour_scale(6, 7), seed).unwrap();
        let sets = compute_path_sets(&inst, 4);
        let s = data_cache_access(&inst, &sets).unwrap();
        let picks: Vec<_> = s.assignments.iter().map(|a| (a.piece, &a.source_path, &a.consumer_path)).collect();
        let drain = drains_of(&inst, &picks);
        let want = min_life(&inst, &drain, (0..inst.node_count()).map(NodeId));
        let got = network_lifetime(&inst, &s);
        assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");
    }
}

#[test]
fn load_recomputed_from_indicators() {
    for seed in 0..8 {
        let inst = generate_instance(&GeneratorConfig::simulation(6, 8), seed).unwrap();
        let sets = compute_path_sets(&inst, 4);
        let s = data_cache_access(&inst, &sets).unwrap();
        let mut drain = vec![0.0; inst.node_count()];
        for ind in s.indicators() {
            let piece = inst.data()[ind.piece];
            let rate = match ind.role {
                Role::Source => piece.gen_rate,
                Role::Consumer => piece.cons_rate,
            };
            let e = inst.edge_id(ind.from, ind.to).unwrap();
            drain[ind.from.0] += rate * inst.edge(e).eps_j;
        }
        let load = s.load(&inst);
        for (u, want) in drain.iter().enumerate() {
            let got = load.node_drain(&inst, NodeId(u));
            assert!((got - want).abs() <= 1e-12 * want.max(1e-30), "node {u}: {got} vs {want}");
        }
        let table: f64 = s.edge_load_table(&inst).iter().map(|r| r.rate * r.eps_j).sum();
        let total: f64 = drain.iter().sum();
        assert!((table - total).abs() <= 1e-12 * total);
    }
}

/// Exhaustive search written independently of the library's version.
fn brute_force(inst: &NetworkInstance, sets: &PathSets) -> f64 {
    let options: Vec<Vec<(&Path, &Path)>> = sets
        .pieces
        .iter()
        .map(|pp| {
            pp.caches
                .iter()
                .flat_map(|cp| cp.source_paths.iter().flat_map(move |sp| cp.consumer_paths.iter().map(move |c| (sp, c))))
                .collect()
        })
        .collect();
    let mut best = 0.0f64;
    let mut idx = vec![0usize; options.len()];
    loop {
        let picks: Vec<_> = idx.iter().enumerate().map(|(d, &i)| (d, options[d][i].0, options[d][i].1)).collect();
        let drain = drains_of(inst, &picks);
        best = best.max(min_life(inst, &drain, (0..inst.node_count()).map(NodeId)));
        let mut d = 0;
        loop {
            if d == idx.len() {
                return best;
            }
            idx[d] += 1;
            if idx[d] < options[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn small_random_instance(seed: u64) -> NetworkInstance {
    let mut r = rng(seed);
    let n = r.random_range(6..=10);
    let extra = r.random_range(2..8);
    let pairs = random_connected_pairs(&mut r, n, extra);
    let caches = vec![0, 1];
    let mut energies: Vec<f64> = (0..n).map(|_| r.random_range(50.0..100.0)).collect();
    energies[0] = 500.0;
    energies[1] = 400.0;
    let pieces = r.random_range(1..=2);
    let data: Vec<_> = (0..pieces)
        .map(|i| (2 + i, n - 1 - i, r.random_range(1..=8) as f64, r.random_range(1..=8) as f64))
        .collect();
    hand_instance(&energies, &caches, &pairs, 0.01, &data)
}

#[test]
fn exhaustive_search_agrees_with_brute_force_and_bounds_dca() {
    let mut checked = 0;
    for seed in 0..40 {
        let inst = small_random_instance(seed);
        let sets = compute_path_sets(&inst, 3);
        let Some((best, life)) = exhaustive_best(&inst, &sets) else { continue };
        let want = brute_force(&inst, &sets);
        assert!((life - want).abs() <= 1e-12 * want, "seed {seed}: {life} vs {want}");
        assert!((network_lifetime(&inst, &best) - life).abs() <= 1e-12 * life);
        let dca = data_cache_access(&inst, &sets).unwrap();
        assert!(network_lifetime(&inst, &dca) <= life * (1.0 + 1e-12));
        checked += 1;
    }
    assert!(checked >= 30);
}

#[test]
fn schedule_json_round_trip() {
    let inst = generate_instance(&GeneratorConfig::simulation(5, 5), 3).unwrap();
    let sets = compute_path_sets(&inst, 4);
    let s = data_cache_access(&inst, &sets).unwrap();
    assert_eq!(Schedule::from_json(&s.to_json()).unwrap(), s);
    s.validate(&inst, sets.metric).unwrap();
}
