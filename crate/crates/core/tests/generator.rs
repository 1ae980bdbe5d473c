use edgecache::topology::GenerateError;
use edgecache::{generate_instance, GeneratorConfig, NetworkInstance};

#[test]
fn same_seed_same_instance() {
    for side in 5..=8 {
        let cfg = GeneratorConfig::hour_scale(side, 9);
        let a = generate_instance(&cfg, 17).unwrap();
        let b = generate_instance(&cfg, 17).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = generate_instance(&cfg, 18).unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }
}

#[test]
fn json_round_trip_is_lossless() {
    for seed in 0..10 {
        let inst = generate_instance(&GeneratorConfig::simulation(6, 10), seed).unwrap();
        let back = NetworkInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(back.to_json(), inst.to_json());
        assert_eq!(back.initial_energies(), inst.initial_energies());
    }
}

#[test]
fn generated_instances_respect_the_model() {
    for seed in 0..20 {
        let cfg = GeneratorConfig::simulation(5 + seed as usize % 4, 5 + seed as usize % 10);
        let inst = generate_instance(&cfg, seed).unwrap();
        assert_eq!(inst.caches().len(), cfg.cache_count());
        let weakest_cache = inst.caches().iter().map(|&c| inst.node(c).energy_j).fold(f64::INFINITY, f64::min);
        let strongest_field = inst.nodes().iter().filter(|n| !n.is_cache).map(|n| n.energy_j).fold(0.0, f64::max);
        assert!(weakest_cache > strongest_field);
        let mut consumers: Vec<_> = inst.data().iter().map(|d| d.consumer).collect();
        consumers.sort();
        consumers.dedup();
        assert_eq!(consumers.len(), inst.data().len());
        for d in inst.data() {
            assert!(!inst.is_cache(d.source) && !inst.is_cache(d.consumer));
            assert!((1.0..=8.0).contains(&d.gen_rate) && d.gen_rate.fract() == 0.0);
            assert!((1.0..=8.0).contains(&d.cons_rate) && d.cons_rate.fract() == 0.0);
        }
        for e in inst.edges() {
            assert!(inst.edge_id(e.to, e.from).is_some());
        }
    }
}

#[test]
fn too_many_consumers_is_rejected() {
    let cfg = GeneratorConfig::simulation(5, 21);
    assert!(matches!(generate_instance(&cfg, 0), Err(GenerateError::Config(_))));
}
