//! Event-driven energy simulation: static schedules, periodic centralized
//! rescheduling (DCA+) and proportionally fair path rotation (PFR).
//!
//! Drains are piecewise constant, so the simulator jumps straight from one
//! event to the next. Energy is kept in integer attojoules; every deduction
//! moves the same amount from `remaining` to `consumed`, which keeps the
//! books balanced exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kpaths::{Path, PathSets};
use crate::schedule::{data_cache_access_with_energies, Assignment, Schedule, ScheduleError};
use crate::topology::{NetworkInstance, NodeId};

const AJ_PER_J: f64 = 1e18;

pub fn joules_to_aj(j: f64) -> u128 {
    (j * AJ_PER_J).round() as u128
}

pub fn aj_to_joules(aj: u128) -> f64 {
    aj as f64 / AJ_PER_J
}

#[derive(Debug, Error, PartialEq)]
pub enum DynamicError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("schedule places no load on the network; nothing ever dies")]
    NoLoad,
    #[error("rescheduling at t = {time_s} s failed: {source}")]
    MidRunInfeasible { time_s: f64, source: ScheduleError },
    #[error("data piece {piece} has no usable (cache, path) cell to rotate through")]
    NoRotationCell { piece: usize },
    #[error("gave up after {0} periods or rotations without a node death; the lifetime is far longer than the period")]
    PeriodCap(usize),
    #[error("parameter {name} must be finite and positive, got {value}")]
    BadParameter { name: &'static str, value: f64 },
}

/// Per-node energy books and the simulation clock.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyState {
    initial: Vec<u128>,
    remaining: Vec<u128>,
    consumed: Vec<u128>,
    clock_s: f64,
}

impl EnergyState {
    pub fn new(initial_j: &[f64]) -> Self {
        let initial: Vec<u128> = initial_j.iter().map(|&j| joules_to_aj(j)).collect();
        Self {
            remaining: initial.clone(),
            consumed: vec![0; initial.len()],
            initial,
            clock_s: 0.0,
        }
    }

    pub fn clock_s(&self) -> f64 {
        self.clock_s
    }

    pub fn node_count(&self) -> usize {
        self.initial.len()
    }

    pub fn remaining_aj(&self) -> &[u128] {
        &self.remaining
    }

    pub fn consumed_aj(&self) -> &[u128] {
        &self.consumed
    }

    pub fn initial_aj(&self) -> &[u128] {
        &self.initial
    }

    pub fn remaining_j(&self) -> Vec<f64> {
        self.remaining.iter().map(|&a| aj_to_joules(a)).collect()
    }

    pub fn consumed_j(&self) -> Vec<f64> {
        self.consumed.iter().map(|&a| aj_to_joules(a)).collect()
    }

    /// `remaining + consumed == initial` for every node.
    pub fn is_balanced(&self) -> bool {
        (0..self.initial.len()).all(|u| self.remaining[u] + self.consumed[u] == self.initial[u])
    }

    fn totals(&self) -> (u128, u128) {
        (self.remaining.iter().sum(), self.consumed.iter().sum())
    }

    fn spend(&mut self, u: usize, aj: u128) {
        let aj = aj.min(self.remaining[u]);
        self.remaining[u] -= aj;
        self.consumed[u] += aj;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advance {
    /// The horizon was reached with every node alive.
    Horizon,
    /// `NodeId` ran dry; the clock stops at its death time.
    Death(NodeId),
    /// Infinite horizon and no drain anywhere: nothing happened.
    Idle,
}

/// Advances the clock to the horizon or to the earliest node death,
/// whichever comes first, deducting `drain * dt` from every node. `drains_w`
/// are in joules per second. Ties between simultaneous deaths go to the
/// lowest node id.
pub fn fast_forward(state: &mut EnergyState, drains_w: &[f64], horizon_s: f64) -> Advance {
    assert_eq!(drains_w.len(), state.node_count(), "one drain per node");
    let mut first: Option<(f64, usize)> = None;
    for (u, &w) in drains_w.iter().enumerate() {
        if w > 0.0 {
            let t = state.remaining[u] as f64 / (w * AJ_PER_J);
            if first.is_none_or(|(b, _)| t < b) {
                first = Some((t, u));
            }
        }
    }
    let (dt, dying) = match first {
        Some((t, u)) if t <= horizon_s => (t, Some(u)),
        _ if horizon_s.is_infinite() => return Advance::Idle,
        _ => (horizon_s, None),
    };
    for (u, &w) in drains_w.iter().enumerate() {
        if Some(u) == dying {
            let all = state.remaining[u];
            state.spend(u, all);
        } else if w > 0.0 {
            state.spend(u, joules_to_aj(w * dt));
        }
    }
    state.clock_s += dt;
    match dying {
        Some(u) => Advance::Death(NodeId(u)),
        None => Advance::Horizon,
    }
}

/// Cycle-by-cycle reference integrator over a piecewise-constant drain
/// timeline `(duration_s, drains_w)`. Each cycle every node pays
/// `drain * tau`; a node that cannot pay a full cycle dies part way through
/// it. Returns the death time and node (if any) and the final energies.
pub fn step_cycles(
    initial_j: &[f64],
    timeline: &[(f64, Vec<f64>)],
    tau_s: f64,
) -> (Option<(f64, NodeId)>, Vec<f64>) {
    let mut energy = initial_j.to_vec();
    let mut clock = 0.0;
    for (duration, drains) in timeline {
        let cycles = (duration / tau_s).round() as u64;
        for _ in 0..cycles {
            let mut death: Option<(f64, usize)> = None;
            for (u, &w) in drains.iter().enumerate() {
                if w > 0.0 && energy[u] <= w * tau_s {
                    let t = energy[u] / w;
                    if death.is_none_or(|(b, _)| t < b) {
                        death = Some((t, u));
                    }
                }
            }
            if let Some((t, dead)) = death {
                for (u, &w) in drains.iter().enumerate() {
                    energy[u] = if u == dead { 0.0 } else { (energy[u] - w * t).max(0.0) };
                }
                return (Some((clock + t, NodeId(dead))), energy);
            }
            for (u, &w) in drains.iter().enumerate() {
                energy[u] -= w * tau_s;
            }
            clock += tau_s;
        }
    }
    (None, energy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum EventKind {
    Start,
    /// A new schedule took effect (DCA+ period or the static schedule).
    ScheduleSwitch { period: usize },
    /// A piece moved to a new (cache row, path column) cell.
    Rotation { piece: usize, row: usize, col: usize },
    ReportBurst { period: usize },
    NodeDeath { node: NodeId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time_s: f64,
    #[serde(flatten)]
    pub kind: EventKind,
    /// Network totals right after the event, in attojoules.
    pub remaining_aj: u128,
    pub consumed_aj: u128,
}

/// An interval of constant drains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrainSegment {
    pub start_s: f64,
    pub duration_s: f64,
    pub drains_w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub tau_s: f64,
    pub events: Vec<TraceEvent>,
    pub segments: Vec<DrainSegment>,
    pub lifetime_s: f64,
    pub dead_node: NodeId,
    pub initial_aj: u128,
    pub initial_j: Vec<f64>,
    pub remaining_j: Vec<f64>,
    pub consumed_j: Vec<f64>,
    pub report_bursts: usize,
    /// Energy spent on status reports, in attojoules.
    pub report_aj: u128,
    /// True when the dying node ran out while paying for a report.
    pub died_reporting: bool,
}

impl SimulationTrace {
    pub fn lifetime_cycles(&self) -> f64 {
        self.lifetime_s / self.tau_s
    }

    pub fn lifetime_hours(&self) -> f64 {
        self.lifetime_s / 3600.0
    }

    pub fn total_consumed_j(&self) -> f64 {
        self.consumed_j.iter().sum()
    }

    /// Every event balances: remaining + consumed equals the initial total.
    pub fn is_balanced(&self) -> bool {
        self.events.iter().all(|e| e.remaining_aj + e.consumed_aj == self.initial_aj)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trace serialization is total");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

struct Recorder {
    tau_s: f64,
    state: EnergyState,
    events: Vec<TraceEvent>,
    segments: Vec<DrainSegment>,
    report_bursts: usize,
    report_aj: u128,
}

impl Recorder {
    fn new(instance: &NetworkInstance) -> Self {
        let mut r = Self {
            tau_s: instance.timing().tau_s,
            state: EnergyState::new(&instance.initial_energies()),
            events: Vec::new(),
            segments: Vec::new(),
            report_bursts: 0,
            report_aj: 0,
        };
        r.event(EventKind::Start);
        r
    }

    fn event(&mut self, kind: EventKind) {
        let (remaining_aj, consumed_aj) = self.state.totals();
        self.events.push(TraceEvent {
            time_s: self.state.clock_s,
            kind,
            remaining_aj,
            consumed_aj,
        });
    }

    fn advance(&mut self, drains_w: &[f64], horizon_s: f64) -> Advance {
        let start_s = self.state.clock_s;
        let adv = fast_forward(&mut self.state, drains_w, horizon_s);
        if adv != Advance::Idle {
            self.segments.push(DrainSegment {
                start_s,
                duration_s: self.state.clock_s - start_s,
                drains_w: drains_w.to_vec(),
            });
        }
        if let Advance::Death(u) = adv {
            self.event(EventKind::NodeDeath { node: u });
        }
        adv
    }

    /// Charges `cost_j` to every node. Returns the first node that could not
    /// pay, which is then dead.
    fn report_burst(&mut self, period: usize, cost_j: f64) -> Option<NodeId> {
        let cost = joules_to_aj(cost_j);
        let mut dead = None;
        for u in 0..self.state.node_count() {
            let paid = cost.min(self.state.remaining[u]);
            self.state.spend(u, paid);
            self.report_aj += paid;
            if paid < cost || (cost > 0 && self.state.remaining[u] == 0) {
                dead.get_or_insert(NodeId(u));
            }
        }
        self.report_bursts += 1;
        self.event(EventKind::ReportBurst { period });
        if let Some(u) = dead {
            self.event(EventKind::NodeDeath { node: u });
        }
        dead
    }

    fn finish(self, dead_node: NodeId, died_reporting: bool) -> SimulationTrace {
        SimulationTrace {
            tau_s: self.tau_s,
            lifetime_s: self.state.clock_s,
            dead_node,
            initial_aj: self.state.initial.iter().sum(),
            initial_j: self.state.initial.iter().map(|&a| aj_to_joules(a)).collect(),
            remaining_j: self.state.remaining_j(),
            consumed_j: self.state.consumed_j(),
            events: self.events,
            segments: self.segments,
            report_bursts: self.report_bursts,
            report_aj: self.report_aj,
            died_reporting,
        }
    }
}

/// Per-node drain in J/s under `schedule`.
pub fn schedule_drains_w(instance: &NetworkInstance, schedule: &Schedule) -> Vec<f64> {
    let tau = instance.timing().tau_s;
    schedule
        .load(instance)
        .node_drains(instance)
        .into_iter()
        .map(|d| d / tau)
        .collect()
}

/// Runs one fixed schedule until the first node death.
pub fn run_static(instance: &NetworkInstance, schedule: &Schedule) -> Result<SimulationTrace, DynamicError> {
    schedule.validate_structure(instance)?;
    let drains = schedule_drains_w(instance, schedule);
    let mut rec = Recorder::new(instance);
    rec.event(EventKind::ScheduleSwitch { period: 0 });
    match rec.advance(&drains, f64::INFINITY) {
        Advance::Death(u) => Ok(rec.finish(u, false)),
        _ => Err(DynamicError::NoLoad),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcaPlusOptions {
    /// Rescheduling period `alpha * tau`, in seconds.
    pub period_s: f64,
    /// Per-node energy charged for each status report burst.
    pub report_cost_j: f64,
    pub max_periods: usize,
}

impl DcaPlusOptions {
    pub fn new(instance: &NetworkInstance, period_s: f64) -> Self {
        Self {
            period_s,
            report_cost_j: instance.radio().report_cost_j,
            max_periods: 200_000,
        }
    }
}

/// Periodic rescheduling: every period DCA runs on the residual energy map,
/// the schedule is held for one period (or until a node dies), then every
/// node pays for one status report.
pub fn run_dca_plus(
    instance: &NetworkInstance,
    path_sets: &PathSets,
    options: DcaPlusOptions,
) -> Result<SimulationTrace, DynamicError> {
    if !(options.period_s.is_finite() && options.period_s > 0.0) {
        return Err(DynamicError::BadParameter {
            name: "period_s",
            value: options.period_s,
        });
    }
    let mut rec = Recorder::new(instance);
    for period in 0..options.max_periods {
        let energies = rec.state.remaining_j();
        let schedule = match data_cache_access_with_energies(instance, path_sets, &energies) {
            Ok(s) => s,
            Err(e) if period == 0 => return Err(e.into()),
            Err(e) => {
                return Err(DynamicError::MidRunInfeasible {
                    time_s: rec.state.clock_s,
                    source: e,
                })
            }
        };
        let drains = schedule_drains_w(instance, &schedule);
        rec.event(EventKind::ScheduleSwitch { period });
        match rec.advance(&drains, options.period_s) {
            Advance::Death(u) => return Ok(rec.finish(u, false)),
            Advance::Idle => return Err(DynamicError::NoLoad),
            Advance::Horizon => {}
        }
        if drains.iter().all(|&w| w == 0.0) && options.report_cost_j == 0.0 {
            return Err(DynamicError::NoLoad);
        }
        if let Some(u) = rec.report_burst(period + 1, options.report_cost_j) {
            return Ok(rec.finish(u, true));
        }
    }
    Err(DynamicError::PeriodCap(options.max_periods))
}

/// One (cache, path) cell of a piece's rotation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationCell {
    pub cache: NodeId,
    pub source_path: Path,
    pub consumer_path: Path,
    /// Smallest initial energy on either path.
    pub min_energy_j: f64,
}

/// Rotation matrix for one piece: rows are caches, columns path ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceRotation {
    pub piece: usize,
    pub cells: Vec<Vec<Option<RotationCell>>>,
    /// Largest `min_energy_j` over all cells.
    pub eps_d: f64,
    pub cursor: (usize, usize),
}

impl PieceRotation {
    fn columns(&self) -> usize {
        self.cells.first().map_or(0, Vec::len)
    }

    pub fn current(&self) -> &RotationCell {
        self.cells[self.cursor.0][self.cursor.1]
            .as_ref()
            .expect("cursor rests on a nonempty cell")
    }

    pub fn usable_cells(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_some()).count()
    }

    /// Fraction of the period spent on the current cell.
    pub fn dwell_fraction(&self) -> f64 {
        self.current().min_energy_j / self.eps_d
    }

    /// Next nonempty cell, walking along the row first and wrapping to the
    /// next cache, then back to the first.
    pub fn advance(&mut self) {
        let cols = self.columns();
        let rows = self.cells.len();
        let (mut i, mut j) = self.cursor;
        for _ in 0..rows * cols {
            j += 1;
            if j >= cols {
                j = 0;
                i += 1;
                if i >= rows {
                    i = 0;
                }
            }
            if self.cells[i][j].is_some() {
                break;
            }
        }
        self.cursor = (i, j);
    }

    fn settle(&mut self) {
        if self.cells[self.cursor.0][self.cursor.1].is_none() {
            self.advance();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StartCell {
    /// First cache, shortest path.
    #[default]
    First,
    /// A seeded uniformly random nonempty cell per piece.
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationPlan {
    pub pieces: Vec<PieceRotation>,
}

impl RotationPlan {
    /// Cell `(i, j)` pairs the `j`-th source path and the `j`-th consumer
    /// path of cache `i`; it is empty when either does not exist.
    pub fn new(instance: &NetworkInstance, path_sets: &PathSets, start: StartCell) -> Result<Self, DynamicError> {
        let mut rng = match start {
            StartCell::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            StartCell::First => None,
        };
        let k = path_sets.k;
        let mut pieces = Vec::with_capacity(path_sets.pieces.len());
        for (d, pp) in path_sets.pieces.iter().enumerate() {
            let cells: Vec<Vec<Option<RotationCell>>> = pp
                .caches
                .iter()
                .map(|cp| {
                    (0..k)
                        .map(|j| match (cp.source_paths.get(j), cp.consumer_paths.get(j)) {
                            (Some(sp), Some(cpath)) => Some(RotationCell {
                                cache: cp.cache,
                                min_energy_j: sp
                                    .nodes()
                                    .iter()
                                    .chain(cpath.nodes())
                                    .map(|&u| instance.node(u).energy_j)
                                    .fold(f64::INFINITY, f64::min),
                                source_path: sp.clone(),
                                consumer_path: cpath.clone(),
                            }),
                            _ => None,
                        })
                        .collect()
                })
                .collect();
            let eps_d = cells
                .iter()
                .flatten()
                .flatten()
                .map(|c| c.min_energy_j)
                .fold(0.0, f64::max);
            if eps_d <= 0.0 || k == 0 {
                return Err(DynamicError::NoRotationCell { piece: d });
            }
            let mut rot = PieceRotation {
                piece: d,
                cells,
                eps_d,
                cursor: (0, 0),
            };
            if let Some(rng) = rng.as_mut() {
                let filled: Vec<(usize, usize)> = rot
                    .cells
                    .iter()
                    .enumerate()
                    .flat_map(|(i, row)| row.iter().enumerate().filter(|(_, c)| c.is_some()).map(move |(j, _)| (i, j)))
                    .collect();
                rot.cursor = filled[rng.random_range(0..filled.len())];
            }
            rot.settle();
            pieces.push(rot);
        }
        Ok(Self { pieces })
    }

    /// Assignments of the cells under the cursors.
    pub fn current_schedule(&self) -> Schedule {
        Schedule {
            assignments: self
                .pieces
                .iter()
                .map(|p| {
                    let c = p.current();
                    Assignment {
                        piece: p.piece,
                        cache: c.cache,
                        source_path: c.source_path.clone(),
                        consumer_path: c.consumer_path.clone(),
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfrOptions {
    /// Rotation period `alpha * tau`, in seconds.
    pub period_s: f64,
    pub start: StartCell,
    pub max_rotations: usize,
}

impl PfrOptions {
    pub fn new(period_s: f64) -> Self {
        Self {
            period_s,
            start: StartCell::First,
            max_rotations: 500_000,
        }
    }
}

/// Proportionally fair rotation: every piece cycles through its cells on an
/// independent timer, staying `(E_d(i,j) / eps_d) * period` on each. Pieces
/// with a single usable cell never switch. No reports are sent.
pub fn run_pfr(instance: &NetworkInstance, path_sets: &PathSets, options: PfrOptions) -> Result<SimulationTrace, DynamicError> {
    if !(options.period_s.is_finite() && options.period_s > 0.0) {
        return Err(DynamicError::BadParameter {
            name: "period_s",
            value: options.period_s,
        });
    }
    let mut plan = RotationPlan::new(instance, path_sets, options.start)?;
    let mut rec = Recorder::new(instance);
    for p in &plan.pieces {
        rec.event(EventKind::Rotation {
            piece: p.piece,
            row: p.cursor.0,
            col: p.cursor.1,
        });
    }
    let mut left: Vec<f64> = plan
        .pieces
        .iter()
        .map(|p| {
            if p.usable_cells() > 1 {
                p.dwell_fraction() * options.period_s
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let mut rotations = 0usize;
    loop {
        let drains = schedule_drains_w(instance, &plan.current_schedule());
        let step = left.iter().copied().fold(f64::INFINITY, f64::min);
        match rec.advance(&drains, step) {
            Advance::Death(u) => return Ok(rec.finish(u, false)),
            Advance::Idle => return Err(DynamicError::NoLoad),
            Advance::Horizon => {}
        }
        for (d, l) in left.iter_mut().enumerate() {
            if *l == step {
                let p = &mut plan.pieces[d];
                p.advance();
                *l = p.dwell_fraction() * options.period_s;
                rec.event(EventKind::Rotation {
                    piece: d,
                    row: p.cursor.0,
                    col: p.cursor.1,
                });
                rotations += 1;
            } else {
                *l -= step;
            }
        }
        if rotations > options.max_rotations {
            return Err(DynamicError::PeriodCap(options.max_rotations));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kpaths::compute_path_sets;
    use crate::schedule::{data_cache_access, network_lifetime};
    use crate::topology::*;

    #[test]
    fn linear_depletion() {
        let mut s = EnergyState::new(&[10.0, 50.0]);
        let adv = fast_forward(&mut s, &[1.0, 1.0], 100.0);
        assert_eq!(adv, Advance::Death(NodeId(0)));
        assert_eq!(s.clock_s(), 10.0);
        assert_eq!(s.remaining_j(), vec![0.0, 40.0]);
        assert!(s.is_balanced());
    }

    #[test]
    fn zero_drain_jumps_to_horizon() {
        let mut s = EnergyState::new(&[10.0, 50.0]);
        assert_eq!(fast_forward(&mut s, &[0.0, 0.0], 100.0), Advance::Horizon);
        assert_eq!(s.clock_s(), 100.0);
        assert_eq!(s.remaining_j(), vec![10.0, 50.0]);
        assert_eq!(fast_forward(&mut s, &[0.0, 0.0], f64::INFINITY), Advance::Idle);
    }

    #[test]
    fn simultaneous_deaths_pick_lowest_id() {
        let mut s = EnergyState::new(&[10.0, 20.0]);
        assert_eq!(fast_forward(&mut s, &[2.0, 4.0], 100.0), Advance::Death(NodeId(0)));
        assert_eq!(s.remaining_aj(), &[0, 0]);
    }

    #[test]
    fn stepping_oracle_matches_hand_count() {
        let (death, energy) = step_cycles(&[10.0, 7.0], &[(4.0, vec![1.0, 2.0]), (100.0, vec![3.0, 0.0])], 1.0);
        // Node 1 survives the first 3 cycles with 1 J, then dies half way
        // through the 4th.
        assert_eq!(death, Some((3.5, NodeId(1))));
        assert_eq!(energy, vec![6.5, 0.0]);
    }

    fn line() -> NetworkInstance {
        // s(0) - a(1) - p(2) - b(3) - c(4), eps = 1 J, tau = 1 s
        let mut f = InstanceFile {
            nodes: Vec::new(),
            edges: Vec::new(),
            data: vec![DataPiece { source: NodeId(0), consumer: NodeId(4), gen_rate: 2.0, cons_rate: 1.0 }],
            timing: TimingRecord { tau_s: 1.0, l_hop_ms: 28.0, l_max_ms: 120.0 },
            radio: RadioRecord { gamma: 1.0, rho_m: 1.5, report_cost_j: 1.0 },
        };
        for (i, e) in [100.0, 14.0, 1000.0, 50.0, 100.0].into_iter().enumerate() {
            f.nodes.push(NodeRecord { id: i, x: i as f64, y: 0.0, energy_j: e, is_cache: i == 2 });
        }
        for i in 0..4 {
            f.edges.push(EdgeRecord { u: i, v: i + 1, eps_j: 1.0, delay_ms: None });
            f.edges.push(EdgeRecord { u: i + 1, v: i, eps_j: 1.0, delay_ms: None });
        }
        NetworkInstance::try_from(f).unwrap()
    }

    #[test]
    fn static_run_matches_analytic_lifetime() {
        let inst = line();
        let sets = compute_path_sets(&inst, 4);
        let s = data_cache_access(&inst, &sets).unwrap();
        let trace = run_static(&inst, &s).unwrap();
        assert_eq!(network_lifetime(&inst, &s), 7.0);
        assert_eq!(trace.lifetime_s, 7.0);
        assert_eq!(trace.dead_node, NodeId(1));
        assert_eq!(trace.consumed_j[4], 0.0);
        assert_eq!(trace.consumed_j[3], 7.0);
        assert!(trace.is_balanced());
        assert_eq!(trace.report_bursts, 0);
    }

    #[test]
    fn dca_plus_reports_every_period() {
        let inst = line();
        let sets = compute_path_sets(&inst, 4);
        let trace = run_dca_plus(&inst, &sets, DcaPlusOptions::new(&inst, 2.0)).unwrap();
        // Relay 1 pays 2 J/s plus 1 J per report: 14 -> 10 -> 9 -> 5 -> 4,
        // then runs dry exactly at the end of the third period.
        let bursts: Vec<f64> = trace
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::ReportBurst { .. }))
            .map(|e| e.time_s)
            .collect();
        assert_eq!(bursts, vec![2.0, 4.0]);
        assert_eq!(trace.lifetime_s, 6.0);
        assert!(!trace.died_reporting);
        assert!(trace.is_balanced());
        assert_eq!(trace.report_aj, joules_to_aj(2.0 * 5.0));
        let costly = DcaPlusOptions { report_cost_j: 4.0, ..DcaPlusOptions::new(&inst, 2.0) };
        let trace = run_dca_plus(&inst, &sets, costly).unwrap();
        // 14 -> 10 -> 6 -> 2, and the second report cannot be paid.
        assert_eq!(trace.lifetime_s, 4.0);
        assert!(trace.died_reporting);
        assert_eq!(trace.dead_node, NodeId(1));
        assert!(trace.is_balanced());
        let free = DcaPlusOptions { report_cost_j: 0.0, ..DcaPlusOptions::new(&inst, 2.0) };
        let trace = run_dca_plus(&inst, &sets, free).unwrap();
        assert_eq!(trace.lifetime_s, 7.0);
        assert_eq!(trace.report_aj, 0);
    }

    #[test]
    fn dwell_and_cursor_walk() {
        let cell = |e: f64| {
            Some(RotationCell {
                cache: NodeId(0),
                source_path: Path::new(vec![NodeId(1), NodeId(0)]),
                consumer_path: Path::new(vec![NodeId(0), NodeId(2)]),
                min_energy_j: e,
            })
        };
        let mut p = PieceRotation {
            piece: 0,
            cells: vec![vec![cell(50e3), cell(100e3)], vec![cell(80e3), cell(60e3)]],
            eps_d: 100e3,
            cursor: (0, 0),
        };
        assert_eq!(p.dwell_fraction() * 10.0, 5.0);
        let mut seen = vec![p.cursor];
        for _ in 0..4 {
            p.advance();
            seen.push(p.cursor);
        }
        assert_eq!(seen, vec![(0, 0), (0, 1), (1, 0), (1, 1), (0, 0)]);
        p.cells[1][0] = None;
        p.cursor = (0, 1);
        p.advance();
        assert_eq!(p.cursor, (1, 1));
    }

    #[test]
    fn single_cell_pfr_equals_static() {
        let inst = line();
        let sets = compute_path_sets(&inst, 4);
        let s = data_cache_access(&inst, &sets).unwrap();
        let a = run_static(&inst, &s).unwrap();
        let b = run_pfr(&inst, &sets, PfrOptions::new(3.0)).unwrap();
        assert_eq!(a.lifetime_s, b.lifetime_s);
        assert_eq!(a.remaining_j, b.remaining_j);
        assert_eq!(a.consumed_j, b.consumed_j);
        assert_eq!(b.report_aj, 0);
    }

    #[test]
    fn trace_json_round_trip() {
        let inst = line();
        let sets = compute_path_sets(&inst, 4);
        let t = run_dca_plus(&inst, &sets, DcaPlusOptions::new(&inst, 2.0)).unwrap();
        assert_eq!(SimulationTrace::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn bad_period_is_rejected() {
        let inst = line();
        let sets = compute_path_sets(&inst, 4);
        assert!(matches!(run_pfr(&inst, &sets, PfrOptions::new(0.0)), Err(DynamicError::BadParameter { .. })));
    }
}
