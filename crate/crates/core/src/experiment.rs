//! Running algorithms on instances and sweeping over grid sizes, consumer
//! counts and replications.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamic::{run_dca_plus, run_pfr, run_static, DcaPlusOptions, DynamicError, PfrOptions, SimulationTrace, StartCell};
use crate::kpaths::{compute_path_sets, PathSets};
use crate::lpbench::{build_lp_with, solve_lp, LpOptions, LpSolution, LpStatus};
use crate::metrics::{MetricsError, RunSummary};
use crate::schedule::{data_cache_access, Schedule, ScheduleError};
use crate::topology::{generate_instance, GeneratorConfig, GridConfig, NetworkInstance};

pub const DEFAULT_K: usize = 4;
pub const DEFAULT_ALPHA_TAU_H: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "dca")]
    Dca,
    #[serde(rename = "dca+")]
    DcaPlus,
    #[serde(rename = "pfr")]
    Pfr,
    #[serde(rename = "lp")]
    Lp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Dca, Algorithm::DcaPlus, Algorithm::Pfr, Algorithm::Lp];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Dca => "dca",
            Algorithm::DcaPlus => "dca+",
            Algorithm::Pfr => "pfr",
            Algorithm::Lp => "lp",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?} (expected dca, dca+, pfr or lp)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunParams {
    /// `alpha * tau` in seconds, for DCA+ and PFR.
    pub period_s: f64,
    pub start: StartCell,
    pub lp: LpOptions,
    /// Overrides the instance's report cost for DCA+.
    pub report_cost_j: Option<f64>,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            period_s: DEFAULT_ALPHA_TAU_H * 3600.0,
            start: StartCell::First,
            lp: LpOptions::default(),
            report_cost_j: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Simulated {
        trace: SimulationTrace,
        /// The schedule for DCA; the adaptive algorithms have none.
        schedule: Option<Schedule>,
    },
    Bound(LpSolution),
}

impl RunOutcome {
    pub fn lifetime_h(&self, instance: &NetworkInstance) -> f64 {
        match self {
            RunOutcome::Simulated { trace, .. } => trace.lifetime_hours(),
            RunOutcome::Bound(sol) => sol.t * instance.timing().tau_s / 3600.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("infeasible instance: {0}")]
    Infeasible(String),
    #[error("{0}")]
    MidRun(DynamicError),
    #[error("LP solver stopped with status {0:?}")]
    Lp(LpStatus),
    #[error("{0}")]
    Failed(String),
}

impl RunError {
    pub fn status(&self) -> &'static str {
        match self {
            RunError::Infeasible(_) => "infeasible",
            RunError::MidRun(_) => "mid-run-infeasible",
            RunError::Lp(LpStatus::Infeasible) => "lp-infeasible",
            RunError::Lp(LpStatus::Unbounded) => "lp-unbounded",
            RunError::Lp(_) => "lp-iteration-limit",
            RunError::Failed(_) => "failed",
        }
    }
}

impl From<ScheduleError> for RunError {
    fn from(e: ScheduleError) -> Self {
        RunError::Infeasible(e.to_string())
    }
}

impl From<DynamicError> for RunError {
    fn from(e: DynamicError) -> Self {
        match e {
            DynamicError::Schedule(s) => s.into(),
            DynamicError::NoRotationCell { .. } => RunError::Infeasible(e.to_string()),
            DynamicError::MidRunInfeasible { .. } => RunError::MidRun(e),
            other => RunError::Failed(other.to_string()),
        }
    }
}

impl From<MetricsError> for RunError {
    fn from(e: MetricsError) -> Self {
        RunError::Failed(e.to_string())
    }
}

pub fn run_algorithm(
    instance: &NetworkInstance,
    path_sets: &PathSets,
    algorithm: Algorithm,
    params: &RunParams,
) -> Result<RunOutcome, RunError> {
    match algorithm {
        Algorithm::Dca => {
            let schedule = data_cache_access(instance, path_sets)?;
            let trace = run_static(instance, &schedule)?;
            Ok(RunOutcome::Simulated {
                trace,
                schedule: Some(schedule),
            })
        }
        Algorithm::DcaPlus => {
            let mut opts = DcaPlusOptions::new(instance, params.period_s);
            if let Some(c) = params.report_cost_j {
                opts.report_cost_j = c;
            }
            let trace = run_dca_plus(instance, path_sets, opts)?;
            Ok(RunOutcome::Simulated { trace, schedule: None })
        }
        Algorithm::Pfr => {
            let opts = PfrOptions {
                start: params.start,
                ..PfrOptions::new(params.period_s)
            };
            let trace = run_pfr(instance, path_sets, opts)?;
            Ok(RunOutcome::Simulated { trace, schedule: None })
        }
        Algorithm::Lp => {
            let sol = solve_lp(&build_lp_with(instance, params.lp));
            match sol.status {
                LpStatus::Optimal | LpStatus::Infinite => Ok(RunOutcome::Bound(sol)),
                s => Err(RunError::Lp(s)),
            }
        }
    }
}

/// One CSV row. Metric columns are empty when the run did not complete, and
/// the energy columns are always empty for the LP bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub side: Option<usize>,
    pub nodes: usize,
    pub caches: usize,
    pub consumers: usize,
    pub algo: String,
    pub seed: u64,
    pub lifetime_h: Option<f64>,
    pub energy_rate_j_per_h: Option<f64>,
    pub tvd_all: Option<f64>,
    pub tvd_field: Option<f64>,
    pub status: String,
}

pub const CSV_HEADER: &str = "side,nodes,caches,consumers,algo,seed,lifetime_h,energy_rate_j_per_h,tvd_all,tvd_field,status";

/// Grid side for square instances.
pub fn infer_side(nodes: usize) -> Option<usize> {
    let s = (nodes as f64).sqrt().round() as usize;
    (s * s == nodes).then_some(s)
}

impl SweepRow {
    pub fn from_result(
        instance: &NetworkInstance,
        side: Option<usize>,
        seed: u64,
        algorithm: Algorithm,
        result: &Result<RunOutcome, RunError>,
    ) -> Self {
        let mut row = SweepRow {
            side,
            nodes: instance.node_count(),
            caches: instance.caches().len(),
            consumers: instance.data().len(),
            algo: algorithm.tag().to_string(),
            seed,
            lifetime_h: None,
            energy_rate_j_per_h: None,
            tvd_all: None,
            tvd_field: None,
            status: "ok".to_string(),
        };
        match result {
            Ok(RunOutcome::Simulated { trace, .. }) => match RunSummary::from_trace(instance, trace, algorithm.tag(), seed) {
                Ok(s) => {
                    row.lifetime_h = Some(s.lifetime_h);
                    row.energy_rate_j_per_h = Some(s.energy_rate_j_per_h);
                    row.tvd_all = Some(s.tvd_all);
                    row.tvd_field = Some(s.tvd_field);
                }
                Err(_) => row.status = "failed".to_string(),
            },
            Ok(outcome @ RunOutcome::Bound(_)) => row.lifetime_h = Some(outcome.lifetime_h(instance)),
            Err(e) => row.status = e.status().to_string(),
        }
        row
    }

    fn failed(side: usize, cfg: &GeneratorConfig, algorithm: Algorithm, seed: u64, status: &str) -> Self {
        SweepRow {
            side: Some(side),
            nodes: cfg.grid.node_count(),
            caches: cfg.cache_count(),
            consumers: cfg.consumers,
            algo: algorithm.tag().to_string(),
            seed,
            lifetime_h: None,
            energy_rate_j_per_h: None,
            tvd_all: None,
            tvd_field: None,
            status: status.to_string(),
        }
    }

    fn sort_key(&self) -> (Option<usize>, usize, usize, u64) {
        let algo = Algorithm::from_str(&self.algo).map_or(usize::MAX, |a| a as usize);
        (self.side, self.consumers, algo, self.seed)
    }

    pub fn key(&self) -> RowKey {
        RowKey {
            side: self.side,
            consumers: self.consumers,
            algo: self.algo.clone(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RowKey {
    pub side: Option<usize>,
    pub consumers: usize,
    pub algo: String,
    pub seed: u64,
}

pub fn sort_rows(rows: &mut [SweepRow]) {
    rows.sort_by_key(|r| r.sort_key());
}

pub fn write_rows_csv<W: io::Write>(writer: W, rows: &[SweepRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: io::Read>(reader: R) -> Result<Vec<SweepRow>, csv::Error> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub sides: Vec<usize>,
    pub consumers: Vec<usize>,
    pub reps: usize,
    pub base_seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub k: usize,
    pub alpha_tau_h: f64,
    /// Template for every cell; grid side and consumer count are replaced.
    pub generator: GeneratorConfig,
    pub start: StartCell,
}

impl SweepConfig {
    /// Sides 5 to 8, 5 to 14 consumers, the three schedulers, on the
    /// hour-scale energy preset.
    pub fn standard(reps: usize) -> Self {
        Self {
            sides: vec![5, 6, 7, 8],
            consumers: (5..=14).collect(),
            reps,
            base_seed: 1,
            algorithms: vec![Algorithm::Dca, Algorithm::DcaPlus, Algorithm::Pfr],
            k: DEFAULT_K,
            alpha_tau_h: DEFAULT_ALPHA_TAU_H,
            generator: GeneratorConfig::hour_scale(5, 5),
            start: StartCell::First,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.reps == 0 {
            return Err("replications must be at least 1".into());
        }
        if self.sides.is_empty() || self.consumers.is_empty() || self.algorithms.is_empty() {
            return Err("sides, consumer counts and algorithms must be nonempty".into());
        }
        if self.k == 0 {
            return Err("k must be at least 1".into());
        }
        if !(self.alpha_tau_h.is_finite() && self.alpha_tau_h > 0.0) {
            return Err(format!("alpha*tau must be positive, got {}", self.alpha_tau_h));
        }
        for &side in &self.sides {
            for &c in &self.consumers {
                self.cell_config(side, c).validate().map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }

    pub fn cell_config(&self, side: usize, consumers: usize) -> GeneratorConfig {
        let mut cfg = self.generator.clone();
        cfg.grid = GridConfig::square(side, self.generator.grid.spacing_m);
        cfg.consumers = consumers;
        cfg
    }

    pub fn row_count(&self) -> usize {
        self.sides.len() * self.consumers.len() * self.reps * self.algorithms.len()
    }
}

/// Seed of replication `rep` in a cell; shared by every algorithm so runs
/// are paired.
pub fn cell_seed(base: u64, side: usize, consumers: usize, rep: usize) -> u64 {
    base.wrapping_mul(1_000_000_007)
        .wrapping_add((side as u64) << 40)
        .wrapping_add((consumers as u64) << 24)
        .wrapping_add(rep as u64)
}

/// Runs every (side, consumers, replication) on the current rayon pool and
/// returns the rows sorted by (side, consumers, algorithm, seed). Rows whose
/// key is in `done` are skipped.
pub fn run_sweep(config: &SweepConfig, done: &HashSet<RowKey>) -> Vec<SweepRow> {
    let mut jobs = Vec::new();
    for &side in &config.sides {
        for &c in &config.consumers {
            for rep in 0..config.reps {
                let seed = cell_seed(config.base_seed, side, c, rep);
                let todo: Vec<Algorithm> = config
                    .algorithms
                    .iter()
                    .copied()
                    .filter(|a| {
                        !done.contains(&RowKey {
                            side: Some(side),
                            consumers: c,
                            algo: a.tag().to_string(),
                            seed,
                        })
                    })
                    .collect();
                if !todo.is_empty() {
                    jobs.push((side, c, seed, todo));
                }
            }
        }
    }
    let params = RunParams {
        period_s: config.alpha_tau_h * 3600.0,
        start: config.start,
        ..RunParams::default()
    };
    let mut rows: Vec<SweepRow> = jobs
        .par_iter()
        .flat_map_iter(|(side, c, seed, algos)| {
            let cfg = config.cell_config(*side, *c);
            match generate_instance(&cfg, *seed) {
                Ok(inst) => {
                    let sets = compute_path_sets(&inst, config.k);
                    algos
                        .iter()
                        .map(|&a| {
                            let result = run_algorithm(&inst, &sets, a, &params);
                            SweepRow::from_result(&inst, Some(*side), *seed, a, &result)
                        })
                        .collect::<Vec<_>>()
                }
                Err(_) => algos
                    .iter()
                    .map(|&a| SweepRow::failed(*side, &cfg, a, *seed, "degenerate"))
                    .collect(),
            }
        })
        .collect();
    sort_rows(&mut rows);
    rows
}

/// Mean and quartiles of one metric over the completed runs of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
        })
    }
}

/// Linear interpolation between closest ranks on sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellAggregate {
    pub side: Option<usize>,
    pub consumers: usize,
    pub algo: String,
    pub runs: usize,
    pub ok: usize,
    pub lifetime_h: Option<Stats>,
    pub energy_rate_j_per_h: Option<Stats>,
    pub tvd_all: Option<Stats>,
    pub tvd_field: Option<Stats>,
}

pub fn aggregate(rows: &[SweepRow]) -> Vec<CellAggregate> {
    let mut cells: BTreeMap<(Option<usize>, usize, usize, String), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        let order = Algorithm::from_str(&r.algo).map_or(usize::MAX, |a| a as usize);
        cells.entry((r.side, r.consumers, order, r.algo.clone())).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((side, consumers, _, algo), rs)| {
            let ok: Vec<&&SweepRow> = rs.iter().filter(|r| r.status == "ok").collect();
            let col = |f: fn(&SweepRow) -> Option<f64>| Stats::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            CellAggregate {
                side,
                consumers,
                algo,
                runs: rs.len(),
                ok: ok.len(),
                lifetime_h: col(|r| r.lifetime_h),
                energy_rate_j_per_h: col(|r| r.energy_rate_j_per_h),
                tvd_all: col(|r| r.tvd_all),
                tvd_field: col(|r| r.tvd_field),
            }
        })
        .collect()
}

pub fn write_aggregates_csv<W: io::Write>(writer: W, cells: &[CellAggregate]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let metrics = ["lifetime_h", "energy_rate_j_per_h", "tvd_all", "tvd_field"];
    let mut header = vec!["side".to_string(), "consumers".into(), "algo".into(), "runs".into(), "ok".into()];
    for m in metrics {
        for s in ["mean", "q1", "median", "q3"] {
            header.push(format!("{m}_{s}"));
        }
    }
    w.write_record(&header)?;
    for c in cells {
        let mut rec = vec![
            c.side.map_or(String::new(), |s| s.to_string()),
            c.consumers.to_string(),
            c.algo.clone(),
            c.runs.to_string(),
            c.ok.to_string(),
        ];
        for s in [c.lifetime_h, c.energy_rate_j_per_h, c.tvd_all, c.tvd_field] {
            match s {
                Some(s) => rec.extend([s.mean, s.q1, s.median, s.q3].iter().map(|v| v.to_string())),
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
