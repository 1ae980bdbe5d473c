use std::collections::HashSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use edgecache::dynamic::StartCell;
use edgecache::experiment::{
    aggregate, infer_side, read_rows_csv, run_algorithm, run_sweep, sort_rows, write_aggregates_csv, write_rows_csv,
    Algorithm, RunOutcome, RunParams, SweepConfig, SweepRow, DEFAULT_ALPHA_TAU_H, DEFAULT_K,
};
use edgecache::kpaths::{compute_path_sets_with, PathMetric, PathSets};
use edgecache::lpbench::{build_lp_with, LpOptions};
use edgecache::topology::{generate_instance, GenerateError, GeneratorConfig, NetworkInstance};

const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_MID_RUN: u8 = 4;

#[derive(Parser)]
#[command(name = "edgecache", version, about = "Cache placement, routing and lifetime experiments for edge networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a grid instance and write it as JSON.
    Generate(GenerateArgs),
    /// Run one algorithm on an instance and print a CSV summary row.
    Run(RunArgs),
    /// Sweep grid sizes, consumer counts and replications.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 1.5 m grid, 1.8 m radio range, radio-derived link costs.
    Simulation,
    /// Simulation layout with link and report costs scaled up so lifetimes
    /// land in the hundreds to thousands of hours.
    HourScale,
    /// 3 x 6 grid, 1.2 m spacing, 2 m range (ignores --grid).
    Replica,
}

#[derive(Args)]
struct GeneratorArgs {
    #[arg(long, value_enum, default_value = "simulation")]
    preset: Preset,
    /// Fraction of nodes that are caches.
    #[arg(long)]
    cache_frac: Option<f64>,
    /// Per-piece link cost in joules, overriding the radio-derived value.
    #[arg(long)]
    eps_j: Option<f64>,
    /// Per-node report cost in joules.
    #[arg(long)]
    report_cost_j: Option<f64>,
}

impl GeneratorArgs {
    fn config(&self, side: usize, consumers: usize) -> GeneratorConfig {
        let mut cfg = match self.preset {
            Preset::Simulation => GeneratorConfig::simulation(side, consumers),
            Preset::HourScale => GeneratorConfig::hour_scale(side, consumers),
            Preset::Replica => GeneratorConfig::replica(consumers),
        };
        if let Some(f) = self.cache_frac {
            cfg.cache_fraction = f;
        }
        if self.eps_j.is_some() {
            cfg.energy.eps_override_j = self.eps_j;
        }
        if self.report_cost_j.is_some() {
            cfg.energy.report_cost_override_j = self.report_cost_j;
        }
        cfg
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Grid side; the grid has side x side nodes.
    #[arg(long, default_value_t = 5)]
    grid: usize,
    #[arg(long, default_value_t = 5)]
    consumers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    generator: GeneratorArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Hops,
    LinkDelay,
}

#[derive(Args)]
struct RunArgs {
    instance: PathBuf,
    #[arg(long, value_parser = parse_algorithm)]
    algo: Algorithm,
    /// Paths per (cache, endpoint) pair.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Rescheduling / rotation period alpha*tau, in hours.
    #[arg(long, default_value_t = DEFAULT_ALPHA_TAU_H)]
    alpha_tau_h: f64,
    #[arg(long, value_enum, default_value = "hops")]
    metric: MetricArg,
    /// Label for the seed column.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Start every PFR rotation at a random cell drawn from this seed.
    #[arg(long)]
    random_start: Option<u64>,
    /// Add the cache-inclusion rows to the LP.
    #[arg(long)]
    cache_inclusion: bool,
    /// Override the report cost of DCA+ (joules per node and report).
    #[arg(long)]
    report_cost_j: Option<f64>,
    /// Write the simulation event log as JSON.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the DCA schedule as JSON.
    #[arg(long)]
    schedule_out: Option<PathBuf>,
    #[arg(long)]
    paths_out: Option<PathBuf>,
    /// Use previously computed path sets instead of recomputing them.
    #[arg(long)]
    paths_in: Option<PathBuf>,
    /// Write the LP model in LP text format.
    #[arg(long)]
    lp_dump: Option<PathBuf>,
    /// Re-check the delay bound on every consumer path; exit nonzero on a
    /// violation.
    #[arg(long)]
    validate: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Grid sides, e.g. `5,6,7,8` or `5-8`.
    #[arg(long, default_value = "5-8", value_parser = parse_list)]
    sides: IntList,
    /// Consumer counts, e.g. `5-14`.
    #[arg(long, default_value = "5-14", value_parser = parse_list)]
    consumers: IntList,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "dca,dca+,pfr", value_delimiter = ',', value_parser = parse_algorithm)]
    algos: Vec<Algorithm>,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA_TAU_H)]
    alpha_tau_h: f64,
    #[arg(long, value_enum, default_value = "hour-scale")]
    preset: Preset,
    #[arg(long)]
    cache_frac: Option<f64>,
    #[arg(long)]
    eps_j: Option<f64>,
    #[arg(long)]
    report_cost_j: Option<f64>,
    /// Per-run CSV output.
    #[arg(long)]
    out: PathBuf,
    /// Per-cell mean and quartiles.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Keep rows already in --out and run only the missing ones.
    #[arg(long)]
    resume: bool,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

#[derive(Clone)]
struct IntList(Vec<usize>);

fn parse_list(s: &str) -> Result<IntList, String> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if let Some((a, b)) = part.split_once('-') {
            let a: usize = a.trim().parse().map_err(|e| format!("{part}: {e}"))?;
            let b: usize = b.trim().parse().map_err(|e| format!("{part}: {e}"))?;
            if a > b {
                return Err(format!("empty range {part}"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|e| format!("{part}: {e}"))?);
        }
    }
    Ok(IntList(out))
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: 1, error: e.into() }
    }
}

fn fail(code: u8, error: anyhow::Error) -> Failure {
    Failure { code, error }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("EDGECACHE_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: EDGECACHE_THREADS must be a positive integer, got {n:?}");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn generate(args: GenerateArgs) -> Result<(), Failure> {
    let cfg = args.generator.config(args.grid, args.consumers);
    let inst = generate_instance(&cfg, args.seed).map_err(|e| match e {
        GenerateError::Degenerate(_) => fail(EXIT_INFEASIBLE, e.into()),
        _ => fail(EXIT_CONFIG, e.into()),
    })?;
    write_file(&args.output, &inst.to_json())?;
    Ok(())
}

fn load_instance(path: &Path) -> Result<NetworkInstance, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(|e| fail(EXIT_CONFIG, e))?;
    NetworkInstance::from_json(&text)
        .with_context(|| format!("parsing instance {}", path.display()))
        .map_err(|e| fail(EXIT_CONFIG, e))
}

fn run(args: RunArgs) -> Result<(), Failure> {
    if args.k == 0 {
        return Err(fail(EXIT_CONFIG, anyhow!("--k must be at least 1")));
    }
    if !(args.alpha_tau_h.is_finite() && args.alpha_tau_h > 0.0) {
        return Err(fail(EXIT_CONFIG, anyhow!("--alpha-tau-h must be positive")));
    }
    let inst = load_instance(&args.instance)?;
    let metric = match args.metric {
        MetricArg::Hops => PathMetric::Hops,
        MetricArg::LinkDelay => PathMetric::LinkDelay,
    };
    let sets = match &args.paths_in {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .map_err(|e| fail(EXIT_CONFIG, e))?;
            let sets = PathSets::from_json(&text)
                .with_context(|| format!("parsing path sets {}", p.display()))
                .map_err(|e| fail(EXIT_CONFIG, e))?;
            sets.validate(&inst).map_err(|e| fail(EXIT_CONFIG, e.into()))?;
            sets
        }
        None => compute_path_sets_with(&inst, args.k, metric),
    };
    if let Some(p) = &args.paths_out {
        write_file(p, &sets.to_json())?;
    }
    let lp = LpOptions {
        cache_inclusion: args.cache_inclusion,
    };
    if let Some(p) = &args.lp_dump {
        write_file(p, &build_lp_with(&inst, lp).to_lp_format())?;
    }
    if args.validate {
        sets.validate(&inst).context("path sets fail validation")?;
    }

    let params = RunParams {
        period_s: args.alpha_tau_h * 3600.0,
        start: args.random_start.map_or(StartCell::First, StartCell::Random),
        lp,
        report_cost_j: args.report_cost_j,
    };
    let result = run_algorithm(&inst, &sets, args.algo, &params);
    if let Ok(RunOutcome::Simulated { trace, schedule }) = &result {
        if let Some(p) = &args.trace {
            write_file(p, &trace.to_json())?;
        }
        if let Some(s) = schedule {
            if args.validate {
                s.validate(&inst, sets.metric).context("schedule violates the access-delay bound")?;
            }
            if let Some(p) = &args.schedule_out {
                write_file(p, &s.to_json())?;
            }
        }
    }
    let row = SweepRow::from_result(&inst, infer_side(inst.node_count()), args.seed, args.algo, &result);
    let mut out = Vec::new();
    write_rows_csv(&mut out, &[row]).context("formatting CSV")?;
    io::stdout().write_all(&out)?;
    match result {
        Ok(_) => Ok(()),
        Err(e) => {
            let code = match e.status() {
                "infeasible" => EXIT_INFEASIBLE,
                "mid-run-infeasible" => EXIT_MID_RUN,
                _ => 1,
            };
            Err(fail(code, e.into()))
        }
    }
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let gen = GeneratorArgs {
        preset: args.preset,
        cache_frac: args.cache_frac,
        eps_j: args.eps_j,
        report_cost_j: args.report_cost_j,
    };
    if let Preset::Replica = args.preset {
        return Err(fail(EXIT_CONFIG, anyhow!("the replica preset has a fixed layout and cannot be swept over grid sides")));
    }
    let generator = gen.config(5, 5);
    let config = SweepConfig {
        sides: args.sides.0,
        consumers: args.consumers.0,
        reps: args.reps,
        base_seed: args.seed,
        algorithms: args.algos,
        k: args.k,
        alpha_tau_h: args.alpha_tau_h,
        generator,
        start: StartCell::First,
    };
    config.validate().map_err(|e| fail(EXIT_CONFIG, anyhow!(e)))?;

    let mut previous: Vec<SweepRow> = Vec::new();
    if args.resume && args.out.exists() {
        let file = fs::File::open(&args.out).with_context(|| format!("opening {}", args.out.display()))?;
        previous = read_rows_csv(file).with_context(|| format!("reading {}", args.out.display()))?;
    }
    let done: HashSet<_> = previous.iter().map(SweepRow::key).collect();
    let mut rows = run_sweep(&config, &done);
    rows.extend(previous);
    sort_rows(&mut rows);

    let mut out = Vec::new();
    write_rows_csv(&mut out, &rows).context("formatting CSV")?;
    fs::write(&args.out, out).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(p) = &args.summary {
        let mut out = Vec::new();
        write_aggregates_csv(&mut out, &aggregate(&rows)).context("formatting summary")?;
        fs::write(p, out).with_context(|| format!("writing {}", p.display()))?;
    }
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        eprintln!("{failed} of {} runs did not complete; see the status column", rows.len());
    }
    Ok(())
}
