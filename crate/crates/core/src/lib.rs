//! Lifetime-aware data caching for multi-hop industrial edge networks.
//!
//! Data pieces flow from a source node to a cache node and from there to a
//! consumer within an access-delay bound. The crate picks caches and routes
//! to keep the first node death as late as possible:
//!
//! - [`topology`]: the network and data model, and a seeded grid generator
//! - [`kpaths`]: k shortest loopless paths and the per-piece candidate sets
//! - [`schedule`]: lifetime algebra and the greedy static scheduler (DCA)
//! - [`lpbench`]: the fractional flow relaxation that bounds every schedule
//! - [`dynamic`]: the event-driven simulator, periodic rescheduling (DCA+)
//!   and proportionally fair path rotation (PFR)
//! - [`metrics`]: energy consumption rate and total variation distance
//! - [`experiment`]: algorithm dispatch, sweeps and CSV output
//!
//! ```
//! use edgecache::{compute_path_sets, data_cache_access, generate_instance, network_lifetime, GeneratorConfig};
//!
//! let inst = generate_instance(&GeneratorConfig::simulation(5, 4), 7).unwrap();
//! let sets = compute_path_sets(&inst, 4);
//! let schedule = data_cache_access(&inst, &sets).unwrap();
//! assert!(network_lifetime(&inst, &schedule) > 0.0);
//! ```

pub mod dynamic;
pub mod experiment;
pub mod kpaths;
pub mod lpbench;
pub mod metrics;
pub mod schedule;
pub mod topology;

pub use dynamic::{
    fast_forward, run_dca_plus, run_pfr, run_static, DcaPlusOptions, DynamicError, EnergyState, PfrOptions,
    RotationPlan, SimulationTrace, StartCell,
};
pub use experiment::{run_algorithm, run_sweep, Algorithm, RunOutcome, RunParams, SweepConfig, SweepRow};
pub use kpaths::{compute_path_sets, estimate_l_hop, yen_k_shortest, Path, PathMetric, PathSets};
pub use lpbench::{build_lp, solve_lp, LpModel, LpSolution, LpStatus};
pub use metrics::{energy_consumption_rate, total_variation_distance, RunSummary};
pub use schedule::{data_cache_access, network_lifetime, node_lifetime, LoadVector, Schedule, ScheduleError};
pub use topology::{
    build_neighborhoods, generate_instance, DataPiece, GeneratorConfig, NetworkInstance, NodeId, TopologyError,
};
