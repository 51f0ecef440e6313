//! `stormroute`: validate grids, run single episodes, and sweep policies.
//!
//! Exit codes: 0 on success, 1 when an input fails validation, 2 when a run fails.

mod settings;

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use stormroute::belief::{candidate_segments, posterior_update, CallModel, Observations};
use stormroute::engine::{EpisodeMetrics, PolicyTrace};
use stormroute::experiment::{gnuplot_stub, summarize, sweep, write_rows_csv, ExperimentPlan};
use stormroute::generate::{desk_scenario, generate_grid, GridGenParams};
use stormroute::grid::{build_grid, Grid, GridDocument, LineIx, SegmentIx, Site};
use stormroute::mcts::{mcts_search, GridLookahead, TreeDump};
use stormroute::policies::{make_policy, LookaheadPolicy, PolicyConfig};
use stormroute::rollout::{heuristic_tour, optimal_tour_dp, tour_solver, SamplePath, N_DP_MAX};
use stormroute::storm::{Scenario, ScenarioConfig};

use settings::{Settings, Tuning};

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "STORMROUTE_OUT";

#[derive(Parser)]
#[command(name = "stormroute", version, about = "Storm damage assessment and repair routing on radial grids")]
struct Cli {
    /// More log output; repeat for debug detail.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a grid file and print its size.
    Validate { grid: PathBuf },
    /// Write a random radial grid with a matching road network.
    GenerateGrid(GenerateArgs),
    /// Run one episode with the tree-search policy.
    RunMcts {
        #[command(flatten)]
        run: RunArgs,
        /// Write the last search tree of the episode as JSON.
        #[arg(long)]
        dump_tree: Option<PathBuf>,
    },
    /// Run one episode with the call-escalation baseline.
    RunEscalation(RunArgs),
    /// Run one episode with the posterior-optimal oracle.
    RunOracle(RunArgs),
    /// Run every cell of an experiment plan and write CSV and a summary.
    Sweep(SweepArgs),
    /// Print the fault posterior after the calls placed by a given time.
    InspectBelief(InspectArgs),
    /// Time the exact and heuristic tour solvers on random fault sets.
    RolloutBench(BenchArgs),
    /// Search once from the depot and write the tree as JSON.
    DumpTree(DumpArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Start from the field-scale circuit statistics instead of the desk grid.
    #[arg(long)]
    field_scale: bool,
    #[arg(long)]
    circuits: Option<usize>,
    #[arg(long)]
    devices: Option<usize>,
    #[arg(long)]
    lines: Option<usize>,
    #[arg(long)]
    customers: Option<u32>,
    #[arg(long)]
    minutes_per_unit: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    #[arg(long)]
    grid: PathBuf,
    /// Scenario JSON; a random-track desk storm when absent.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    tuning: Tuning,
    /// Include every decision in the report.
    #[arg(long)]
    trace: bool,
    /// Report file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    plan: PathBuf,
    /// Output directory; defaults to the plan's, then $STORMROUTE_OUT, then the working directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    workers: Option<usize>,
    /// Also write a gnuplot script describing the CSV columns.
    #[arg(long)]
    gnuplot_stub: bool,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Clock in minutes; calls placed up to then are revealed. Defaults to the end of the call window.
    #[arg(long)]
    at: Option<f64>,
    /// Segment visited before `at`, revealing its true faults; repeatable.
    #[arg(long)]
    visit: Vec<usize>,
    #[arg(long, default_value_t = 0.01)]
    threshold: f64,
    #[arg(long, default_value_t = stormroute::belief::MAX_CANDIDATES)]
    max_candidates: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    grid: PathBuf,
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long, default_value_t = 4)]
    min_faults: usize,
    #[arg(long, default_value_t = 8)]
    max_faults: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Decision time in minutes; defaults to the end of the call window.
    #[arg(long)]
    at: Option<f64>,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<stormroute::Error> for Failure {
    fn from(e: stormroute::Error) -> Self {
        Failure { code: if e.is_validation() { 1 } else { 2 }, err: e.into() }
    }
}

fn invalid(e: impl Display) -> Failure {
    Failure { code: 1, err: anyhow::anyhow!("{e}") }
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, err: e.into() }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Validate { grid } => validate(&grid),
        Command::GenerateGrid(args) => generate(args),
        Command::RunMcts { run, dump_tree } => run_one("mcts", run, dump_tree),
        Command::RunEscalation(run) => run_one("escalation", run, None),
        Command::RunOracle(run) => run_one("oracle", run, None),
        Command::Sweep(args) => run_sweep(args),
        Command::InspectBelief(args) => inspect(args),
        Command::RolloutBench(args) => bench(args),
        Command::DumpTree(args) => dump_tree(args),
    }
}

fn load_grid(path: &Path) -> Result<Grid, Failure> {
    let doc = GridDocument::load(path).map_err(stormroute::Error::from)?;
    Ok(build_grid(&doc).map_err(stormroute::Error::from)?)
}

fn load_scenario(grid: &Grid, args: &ScenarioArgs) -> Result<Scenario, Failure> {
    let mut cfg = match &args.scenario {
        Some(path) => ScenarioConfig::load(path).map_err(invalid)?,
        None => desk_scenario(0, 0.1),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(rho) = args.rho {
        cfg.rho = rho;
    }
    cfg.validate().map_err(invalid)?;
    Ok(Scenario::generate(grid, &cfg))
}

fn load_settings(t: &Tuning, base: Settings) -> Result<Settings, Failure> {
    let base = match &t.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| path.display().to_string()).map_err(invalid)?;
            serde_json::from_str(&text).with_context(|| path.display().to_string()).map_err(invalid)?
        }
        None => base,
    };
    let s = t.apply(base);
    s.policy.validate()?;
    if !(s.run.cap_minutes > 0.0 && s.run.poll_minutes > 0.0) {
        return Err(invalid("cap_minutes and poll_minutes must be positive"));
    }
    Ok(s)
}

/// Writes `text` to `path`, or stdout when there is no path.
fn emit(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(runtime)?;
            }
            fs::write(p, text).with_context(|| p.display().to_string()).map_err(runtime)
        }
        None => match std::io::stdout().write_all(text.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(runtime(e)),
            _ => Ok(()),
        },
    }
}

fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn validate(path: &Path) -> Outcome {
    let g = load_grid(path)?;
    let n = g.circuits().len();
    let devices: usize = (0..n).map(|c| g.device_count(stormroute::grid::CircuitIx(c))).sum();
    println!("grid {}", path.display());
    println!("circuits {n}");
    println!("segments {}", g.segment_count());
    println!("devices {devices} ({:.1} per circuit)", devices as f64 / n as f64);
    println!("lines {} ({:.1} per circuit)", g.line_count(), g.line_count() as f64 / n as f64);
    println!("customers {}", g.total_customers());
    println!("road nodes {}, edges {}, connected", g.road().len(), g.road().edge_count());
    Ok(())
}

fn generate(a: GenerateArgs) -> Outcome {
    let mut p = if a.field_scale { GridGenParams::field_scale(10, a.seed) } else { GridGenParams::desk(a.seed) };
    p.circuits = a.circuits.unwrap_or(p.circuits);
    p.devices_per_circuit = a.devices.unwrap_or(p.devices_per_circuit);
    p.lines_per_circuit = a.lines.unwrap_or(p.lines_per_circuit);
    p.customers_per_circuit = a.customers.unwrap_or(p.customers_per_circuit);
    p.minutes_per_unit = a.minutes_per_unit.unwrap_or(p.minutes_per_unit);
    p.validate().map_err(invalid)?;
    let doc = generate_grid(&p);
    build_grid(&doc).map_err(stormroute::Error::from)?;
    emit(a.out.as_deref(), &(doc.to_json_pretty() + "\n"))
}

#[derive(Serialize)]
struct RunReport<'a> {
    policy: &'a str,
    seed: u64,
    rho: f64,
    true_faults: usize,
    metrics: EpisodeMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<PolicyTrace>,
}

fn run_one(policy: &str, args: RunArgs, tree_out: Option<PathBuf>) -> Outcome {
    let grid = load_grid(&args.scenario.grid)?;
    let scenario = load_scenario(&grid, &args.scenario)?;
    let s = load_settings(&args.tuning, Settings::default())?;
    let started = Instant::now();
    let (metrics, trace, tree) = if policy == "mcts" {
        let mut p = LookaheadPolicy::new(s.policy.clone())?;
        if tree_out.is_some() {
            p = p.keep_tree();
        }
        let (m, t) = stormroute::engine::run_episode(&grid, &scenario, &mut p, &s.run)?;
        (m, t, p.last_tree.take())
    } else {
        let mut p = make_policy(policy, &s.policy)?;
        let (m, t) = stormroute::engine::run_episode(&grid, &scenario, p.as_mut(), &s.run)?;
        (m, t, None)
    };
    log::info!("{policy} episode finished in {:.2} s", started.elapsed().as_secs_f64());
    if let Some(path) = tree_out {
        match tree {
            Some(t) => emit(Some(&path), &to_json(&t))?,
            None => log::warn!("no search ran during the episode; {} not written", path.display()),
        }
    }
    let report = RunReport {
        policy,
        seed: scenario.config.seed,
        rho: scenario.config.rho,
        true_faults: scenario.realization.faults.len(),
        metrics,
        trace: args.trace.then_some(trace),
    };
    emit(args.out.as_deref(), &to_json(&report))
}

fn run_sweep(a: SweepArgs) -> Outcome {
    let mut plan = ExperimentPlan::load(&a.plan).map_err(|e| match e {
        stormroute::Error::Io(io) => invalid(format!("{}: {io}", a.plan.display())),
        other => other.into(),
    })?;
    let s = load_settings(&a.tuning, Settings { policy: plan.policy.clone(), run: plan.run.clone() })?;
    plan.policy = s.policy;
    plan.run = s.run;
    let grid = load_grid(&plan.grid)?;
    let out_dir = a
        .out_dir
        .or_else(|| plan.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    let started = Instant::now();
    let result = match a.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(runtime)?
            .install(|| sweep(&grid, &plan)),
        None => sweep(&grid, &plan),
    };
    log::info!("{} cells in {:.1} s", plan.cells().len(), started.elapsed().as_secs_f64());

    fs::create_dir_all(&out_dir).with_context(|| out_dir.display().to_string()).map_err(runtime)?;
    let csv_path = out_dir.join("metrics.csv");
    let file = fs::File::create(&csv_path).with_context(|| csv_path.display().to_string()).map_err(runtime)?;
    write_rows_csv(&result.rows, file)?;
    let summary = summarize(&result);
    emit(Some(&out_dir.join("summary.json")), &to_json(&summary))?;
    if a.gnuplot_stub {
        emit(Some(&out_dir.join("metrics.gp")), &gnuplot_stub("metrics.csv"))?;
    }

    println!("{:<12} {:>6} {:>7} {:>5} {:>14} {:>10}", "policy", "rho", "n_iter", "n", "outage_hours", "std_err");
    for c in &summary.cells {
        println!(
            "{:<12} {:>6} {:>7} {:>5} {:>14.2} {:>10.2}",
            c.policy, c.rho, c.n_iter, c.episodes, c.outage_hours.mean, c.outage_hours.stderr
        );
    }
    println!("wrote {}", csv_path.display());
    if result.failed.is_empty() {
        Ok(())
    } else {
        Err(runtime(anyhow::anyhow!(
            "{} of {} cells failed; see summary.json",
            result.failed.len(),
            plan.cells().len()
        )))
    }
}

/// Calls placed by `at`, with the given segments visited beforehand at that time.
fn evidence_at(grid: &Grid, scenario: &Scenario, at: f64, visits: &[usize]) -> Result<Observations, Failure> {
    let mut obs = Observations::new(grid);
    for &s in visits {
        if s >= grid.segment_count() {
            return Err(invalid(format!("segment {s} out of range (grid has {})", grid.segment_count())));
        }
        let seg = SegmentIx(s);
        let found: Vec<LineIx> =
            grid.segment(seg).lines.iter().copied().filter(|l| scenario.realization.is_faulted(*l)).collect();
        obs.record_visit(grid, seg, &found, at);
    }
    Ok(obs)
}

#[derive(Serialize)]
struct BeliefReport {
    candidates: Vec<usize>,
    belief: stormroute::belief::BeliefDump,
}

fn inspect(a: InspectArgs) -> Outcome {
    let grid = load_grid(&a.scenario.grid)?;
    let scenario = load_scenario(&grid, &a.scenario)?;
    let window = scenario.realization.call_window;
    let at = a.at.unwrap_or(window);
    let obs = evidence_at(&grid, &scenario, at, &a.visit)?;
    let calls = scenario.realization.new_calls(&grid, &vec![None; grid.segment_count()], -1.0, at);
    let model = CallModel { rho: scenario.config.rho, window, now: at };
    let belief = posterior_update(&grid, &scenario.priors, &calls, &obs, model, a.max_candidates)
        .map_err(|e| runtime(stormroute::Error::from(e)))?;
    let report = BeliefReport {
        candidates: candidate_segments(&grid, &belief, a.threshold).into_iter().map(|s| s.0).collect(),
        belief: belief.dump(&grid),
    };
    emit(None, &to_json(&report))
}

fn bench(a: BenchArgs) -> Outcome {
    if a.min_faults > a.max_faults || a.instances == 0 {
        return Err(invalid("need instances > 0 and min_faults <= max_faults"));
    }
    let grid = load_grid(&a.grid)?;
    if a.max_faults > grid.segment_count() {
        return Err(invalid(format!("grid has only {} segments", grid.segment_count())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut csv =
        String::from("instance,faults,dp_outage_minutes,heuristic_outage_minutes,gap_pct,dp_micros,heuristic_micros\n");
    for i in 0..a.instances {
        let n = rng.gen_range(a.min_faults..=a.max_faults);
        let mut faults = std::collections::BTreeMap::new();
        while faults.len() < n {
            faults.insert(SegmentIx(rng.gen_range(0..grid.segment_count())), rng.gen_range(20.0..180.0));
        }
        let path = SamplePath::from_faults(&grid, Site::Depot, &faults);
        let t = Instant::now();
        let heuristic = heuristic_tour(&path);
        let h_us = t.elapsed().as_micros();
        let (dp, dp_us) = if n <= N_DP_MAX {
            let t = Instant::now();
            let v = optimal_tour_dp(&path).map_err(|e| runtime(stormroute::Error::from(e)))?;
            (Some(v.outage_minutes), Some(t.elapsed().as_micros()))
        } else {
            (None, None)
        };
        let opt = |v: Option<String>| v.unwrap_or_default();
        let gap = dp.map(|d| if d > 0.0 { 100.0 * (heuristic.outage_minutes - d) / d } else { 0.0 });
        csv.push_str(&format!(
            "{i},{n},{},{},{},{},{h_us}\n",
            opt(dp.map(|d| d.to_string())),
            heuristic.outage_minutes,
            opt(gap.map(|g| format!("{g:.4}"))),
            opt(dp_us.map(|u| u.to_string())),
        ));
    }
    emit(a.out.as_deref(), &csv)
}

#[derive(Serialize)]
struct TreeReport {
    action: usize,
    root_values: Vec<(usize, f64, u64)>,
    tree: TreeDump,
}

fn dump_tree(a: DumpArgs) -> Outcome {
    let grid = load_grid(&a.scenario.grid)?;
    let scenario = load_scenario(&grid, &a.scenario)?;
    let s = load_settings(&a.tuning, Settings::default())?;
    let window = scenario.realization.call_window;
    let at = a.at.unwrap_or(window);
    let calls = scenario.realization.new_calls(&grid, &vec![None; grid.segment_count()], -1.0, at);
    let model = CallModel { rho: scenario.config.rho, window, now: at };
    let PolicyConfig { mcts, threshold, solver, max_candidates } = &s.policy;
    let belief = posterior_update(&grid, &scenario.priors, &calls, &Observations::new(&grid), model, *max_candidates)
        .map_err(|e| runtime(stormroute::Error::from(e)))?;
    let solver = tour_solver(solver).expect("validated");
    let look = GridLookahead::new(&grid, &belief, &scenario.config.repair_classes, solver.as_ref(), mcts, *threshold);
    let result = mcts_search(&look, look.root(Site::Depot), mcts).map_err(|e| runtime(stormroute::Error::from(e)))?;
    let report = TreeReport {
        action: result.action.0,
        root_values: result.root_values.iter().map(|(a, v, n)| (a.0, *v, *n)).collect(),
        tree: result.tree.dump(),
    };
    emit(a.out.as_deref(), &to_json(&report))
}
