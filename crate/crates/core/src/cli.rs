//! Command-line front end.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dispatch::{DispatchConfig, DispatchInstance, DispatcherKind, JobOrder, WithinNode};
use crate::sim::{replay_instances, run_simulation, write_replay_csv, SimConfig, SimReport};
use crate::system::{validate_all, SystemConfig, SystemModel};
use crate::workload::{self, generate, render_swf, write_jsonl, JobRecord, PredictorMode, SwfOptions, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "hpc-dispatch", version, about = "Constraint-programming HPC job dispatchers and a trace-driven simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one dispatcher on a trace.
    Simulate(SimulateArgs),
    /// Simulate several dispatchers on the same trace and tabulate the results.
    Compare(CompareArgs),
    /// Re-run saved instances under two dispatchers and write per-instance ratios.
    Replay(ReplayArgs),
    /// Write a synthetic trace.
    GenTrace(GenTraceArgs),
    /// Check a system, trace or instance file.
    Validate(ValidateArgs),
}

/// Everything a run needs; loadable from TOML, where unknown keys are errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: String,
    pub trace: Option<PathBuf>,
    /// Generate this many Eurora-like jobs instead of reading a trace.
    pub synthetic: Option<usize>,
    pub seed: u64,
    pub limit: Option<usize>,
    pub predictor: String,
    /// Per-invocation budget in ms; 0 means none.
    pub budget_ms: u64,
    pub node_limit: Option<u64>,
    pub window: usize,
    pub within_node: String,
    pub job_order: String,
    pub greedy_fallback: bool,
    pub hcp_max_iterations: u32,
    pub min_interval: i64,
    pub retry_interval: i64,
    pub strict_kill: bool,
    pub max_idle_fallbacks: Option<u32>,
    pub wall_cap_s: Option<u64>,
    pub cores_per_node: i64,
    pub out: PathBuf,
    pub dump_instances: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            system: "eurora".into(),
            trace: None,
            synthetic: None,
            seed: 1,
            limit: None,
            predictor: "oracle".into(),
            budget_ms: 2000,
            node_limit: None,
            window: 100,
            within_node: "exact".into(),
            job_order: "start".into(),
            greedy_fallback: false,
            hcp_max_iterations: 10,
            min_interval: 0,
            retry_interval: 60,
            strict_kill: false,
            max_idle_fallbacks: None,
            wall_cap_s: None,
            cores_per_node: 16,
            out: PathBuf::from("out"),
            dump_instances: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML file with defaults for every option below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// System preset (eurora, kit-forhlr2, gpu-scarce) or TOML file.
    #[arg(long)]
    pub system: Option<String>,
    /// Trace file (.swf, otherwise JSON lines).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Generate this many Eurora-like jobs instead of reading a trace.
    #[arg(long)]
    pub synthetic: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep only the first N jobs of the trace.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, value_parser = ["oracle", "last2"])]
    pub predictor: Option<String>,
    /// Per-invocation budget in milliseconds; 0 disables it.
    #[arg(long)]
    pub budget_ms: Option<u64>,
    /// Cap on search decisions per solve.
    #[arg(long)]
    pub node_limit: Option<u64>,
    /// Queued jobs handed to the model.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, value_parser = ["exact", "literal"])]
    pub within_node: Option<String>,
    #[arg(long, value_parser = ["start", "priority"])]
    pub job_order: Option<String>,
    /// Dispatch greedily when a model finds no schedule.
    #[arg(long)]
    pub greedy_fallback: bool,
    #[arg(long)]
    pub hcp_max_iterations: Option<u32>,
    /// Minimum seconds between dispatcher invocations.
    #[arg(long)]
    pub min_interval: Option<i64>,
    #[arg(long)]
    pub retry_interval: Option<i64>,
    /// End jobs at their predicted duration.
    #[arg(long)]
    pub strict_kill: bool,
    /// Give up after this many consecutive failed invocations.
    #[arg(long)]
    pub max_idle_fallbacks: Option<u32>,
    /// Give up after this many wall-clock seconds.
    #[arg(long)]
    pub wall_cap_s: Option<u64>,
    /// Cores per node when reading SWF.
    #[arg(long)]
    pub cores_per_node: Option<i64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Save every dispatch instance into this directory.
    #[arg(long)]
    pub dump_instances: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "pcp20")]
    pub dispatcher: DispatcherKind,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Comma-separated dispatcher names; ratios are relative to the first.
    #[arg(long, value_delimiter = ',', default_value = "pcp20,pcp19,hcp19")]
    pub dispatchers: Vec<DispatcherKind>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Directory of instance files.
    #[arg(long)]
    pub instances: PathBuf,
    /// The two dispatchers to compare.
    #[arg(long, value_delimiter = ',', num_args = 1, default_value = "pcp20,pcp19")]
    pub pair: Vec<DispatcherKind>,
    #[arg(long, default_value_t = 2000)]
    pub budget_ms: u64,
    #[arg(long)]
    pub node_limit: Option<u64>,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TracePreset {
    EuroraLike,
    GpuScarce,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TraceFormat {
    Jsonl,
    Swf,
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    #[arg(long, value_enum, default_value = "eurora-like")]
    pub preset: TracePreset,
    /// Generator settings as TOML; overrides the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub jobs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "jsonl")]
    pub format: TraceFormat,
    /// Cores per node assumed when writing SWF.
    #[arg(long, default_value_t = 16)]
    pub cores_per_node: i64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value = "eurora")]
    pub system: String,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub cores_per_node: i64,
}

/// A bad option value detected before any work starts.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

impl RunArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { c.$f = v.clone().into(); } )* };
        }
        take!(system, predictor, budget_ms, window, within_node, job_order, hcp_max_iterations);
        take!(min_interval, retry_interval, cores_per_node, out, seed);
        macro_rules! take_opt {
            ($($f:ident),*) => { $( if self.$f.is_some() { c.$f = self.$f.clone(); } )* };
        }
        take_opt!(trace, synthetic, limit, node_limit, max_idle_fallbacks, wall_cap_s, dump_instances);
        c.greedy_fallback |= self.greedy_fallback;
        c.strict_kill |= self.strict_kill;
        if c.trace.is_some() == c.synthetic.is_some() {
            return Err(usage("give exactly one of --trace or --synthetic"));
        }
        Ok(c)
    }
}

impl RunConfig {
    fn system(&self) -> anyhow::Result<Arc<SystemModel>> {
        let config = SystemConfig::preset_or_file(&self.system).map_err(|e| usage(e.to_string()))?;
        Ok(Arc::new(SystemModel::build(&config)?))
    }

    fn jobs(&self) -> anyhow::Result<Vec<JobRecord>> {
        let jobs = match (&self.trace, self.synthetic) {
            (Some(path), _) => {
                let opts = SwfOptions {
                    cores_per_node: self.cores_per_node,
                    ..Default::default()
                };
                let (jobs, stats) =
                    workload::load_trace(path, &opts).with_context(|| format!("reading {}", path.display()))?;
                if let Some(s) = stats {
                    log::info!("swf: {} jobs, {} malformed lines skipped", s.parsed, s.malformed);
                }
                jobs
            }
            (None, Some(n)) => generate(&SynthConfig::eurora_like(n, self.seed))?,
            (None, None) => unreachable!("checked in resolve"),
        };
        Ok(workload::prefix(jobs, self.limit))
    }

    fn sim_config(&self, dispatcher: DispatcherKind) -> anyhow::Result<SimConfig> {
        let dispatch = DispatchConfig {
            budget: (self.budget_ms > 0).then(|| Duration::from_millis(self.budget_ms)),
            node_limit: self.node_limit,
            window: self.window.max(1),
            within_node: match self.within_node.as_str() {
                "exact" => WithinNode::Exact,
                "literal" => WithinNode::Literal,
                other => return Err(usage(format!("unknown within_node '{other}'"))),
            },
            job_order: match self.job_order.as_str() {
                "start" => JobOrder::StartFirst,
                "priority" => JobOrder::PriorityFirst,
                other => return Err(usage(format!("unknown job_order '{other}'"))),
            },
            greedy_fallback: self.greedy_fallback,
            hcp_max_iterations: self.hcp_max_iterations.max(1),
        };
        Ok(SimConfig {
            dispatcher,
            predictor: self.predictor.parse::<PredictorMode>().map_err(usage)?,
            dispatch,
            min_interval: self.min_interval.max(0),
            retry_interval: self.retry_interval.max(1),
            strict_kill: self.strict_kill,
            max_idle_fallbacks: self.max_idle_fallbacks,
            wall_clock_cap: self.wall_cap_s.map(Duration::from_secs),
            dump_dir: self.dump_instances.clone(),
        })
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// jobs.csv, events.log, summary.csv and invocations.csv under `dir`.
pub fn write_outputs(dir: &Path, report: &SimReport) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    report.write_jobs_csv(create(&dir.join("jobs.csv"))?)?;
    report.write_events(create(&dir.join("events.log"))?)?;
    report.write_summary_csv(create(&dir.join("summary.csv"))?)?;
    report.write_invocations_csv(create(&dir.join("invocations.csv"))?)?;
    Ok(())
}

fn simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let cfg = args.run.resolve()?;
    let system = cfg.system()?;
    let sim = cfg.sim_config(args.dispatcher)?;
    let jobs = cfg.jobs()?;
    let report = run_simulation(&jobs, system, &sim)?;
    write_outputs(&cfg.out, &report)?;
    println!("{}", SimReport::SUMMARY_HEADER);
    println!("{}", report.summary_row());
    if let crate::sim::Outcome::Dnf(why) = &report.outcome {
        eprintln!("run did not finish: {why}");
    }
    Ok(())
}

fn fmt_cell(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(x) => format!("{x:.digits$}"),
        None => "∞".to_string(),
    }
}

/// Side-by-side table; an unfinished run shows ∞.
pub fn comparison_table(reports: &[SimReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:>16} {:>14} {:>12} {:>12} {:>10}\n",
        "dispatcher", "avg disp. [ms]", "total sim [s]", "avg slowdown", "avg wait [s]", "fallbacks"
    ));
    let value = |r: &SimReport| -> [Option<f64>; 4] {
        if r.finished() {
            [
                Some(r.avg_dispatch_ms()),
                Some(r.wall.as_secs_f64()),
                Some(r.slowdown_stats().0),
                Some(r.wait_stats().0),
            ]
        } else {
            [None; 4]
        }
    };
    for r in reports {
        let v = value(r);
        out.push_str(&format!(
            "{:<14} {:>16} {:>14} {:>12} {:>12} {:>10}\n",
            format!("{}-{}", r.dispatcher, r.predictor),
            fmt_cell(v[0], 2),
            fmt_cell(v[1], 2),
            fmt_cell(v[2], 3),
            fmt_cell(v[3], 1),
            r.fallbacks()
        ));
    }
    if reports.len() > 1 {
        let base = value(&reports[0]);
        for r in &reports[1..] {
            let v = value(r);
            // 0/0 is not a DNF, so it gets '-' rather than ∞
            let ratio = |k: usize| match (base[k], v[k]) {
                (Some(a), Some(b)) if b != 0.0 => format!("{:.3}", a / b),
                (Some(0.0), Some(_)) => "-".to_string(),
                _ => "∞".to_string(),
            };
            out.push_str(&format!(
                "{:<14} {:>16} {:>14} {:>12} {:>12}\n",
                format!("ratio/{}", r.dispatcher),
                ratio(0),
                ratio(1),
                ratio(2),
                ratio(3)
            ));
        }
    }
    out
}

fn compare(args: &CompareArgs) -> anyhow::Result<()> {
    if args.dispatchers.is_empty() {
        return Err(usage("no dispatcher given"));
    }
    let cfg = args.run.resolve()?;
    let system = cfg.system()?;
    let jobs = cfg.jobs()?;
    let mut sims = Vec::new();
    for &kind in &args.dispatchers {
        let mut sim = cfg.sim_config(kind)?;
        sim.dump_dir = sim.dump_dir.map(|d| d.join(kind.as_str()));
        sims.push(sim);
    }
    // parallel runs would eat each other's time budgets on too few cores
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let results: Vec<_> = if cores >= sims.len() {
        std::thread::scope(|scope| {
            let handles: Vec<_> = sims
                .iter()
                .map(|sim| {
                    let (jobs, system) = (&jobs, system.clone());
                    scope.spawn(move || run_simulation(jobs, system, sim))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("simulation thread")).collect()
        })
    } else {
        sims.iter().map(|sim| run_simulation(&jobs, system.clone(), sim)).collect()
    };
    let mut reports = Vec::new();
    for r in results {
        reports.push(r?);
    }
    std::fs::create_dir_all(&cfg.out)?;
    let mut summary = create(&cfg.out.join("compare.csv"))?;
    writeln!(summary, "{}", SimReport::SUMMARY_HEADER)?;
    for r in &reports {
        writeln!(summary, "{}", r.summary_row())?;
        write_outputs(&cfg.out.join(r.dispatcher.as_str()), r)?;
    }
    summary.flush()?;
    print!("{}", comparison_table(&reports));
    Ok(())
}

fn replay(args: &ReplayArgs) -> anyhow::Result<()> {
    let [a, b] = args.pair[..] else {
        return Err(usage("--pair takes exactly two dispatchers"));
    };
    let paths: Vec<PathBuf> = std::fs::read_dir(&args.instances)
        .with_context(|| format!("reading {}", args.instances.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    let cfg = DispatchConfig {
        budget: (args.budget_ms > 0).then(|| Duration::from_millis(args.budget_ms)),
        node_limit: args.node_limit,
        ..Default::default()
    };
    let (rows, skipped) = replay_instances(&paths, [a, b], &cfg);
    for (p, why) in &skipped {
        eprintln!("skipped {}: {why}", p.display());
    }
    match &args.out {
        Some(path) => write_replay_csv(create(path)?, [a, b], &rows)?,
        None => write_replay_csv(std::io::stdout().lock(), [a, b], &rows)?,
    }
    Ok(())
}

fn gen_trace(args: &GenTraceArgs) -> anyhow::Result<()> {
    let cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            SynthConfig::from_toml(&text).map_err(|e| usage(e.to_string()))?
        }
        None => match args.preset {
            TracePreset::EuroraLike => SynthConfig::eurora_like(args.jobs, args.seed),
            TracePreset::GpuScarce => SynthConfig::gpu_scarce(args.jobs, args.seed),
        },
    };
    let jobs = generate(&cfg)?;
    let mut w = create(&args.out)?;
    match args.format {
        TraceFormat::Jsonl => write_jsonl(&mut w, &jobs)?,
        TraceFormat::Swf => {
            let opts = SwfOptions {
                cores_per_node: args.cores_per_node,
                ..Default::default()
            };
            render_swf(&mut w, &jobs, &opts)?
        }
    }
    w.flush()?;
    eprintln!("wrote {} jobs to {}", jobs.len(), args.out.display());
    Ok(())
}

fn validate(args: &ValidateArgs) -> anyhow::Result<()> {
    let mut problems = 0;
    if let Some(path) = &args.instance {
        let inst = DispatchInstance::load(path).with_context(|| format!("reading {}", path.display()))?;
        let allocs = inst.running_allocations();
        match validate_all(&inst.system, &allocs) {
            Ok(()) => println!("instance t={}: {} running jobs, allocations valid", inst.t, allocs.len()),
            Err(v) => {
                println!("instance t={}: {v}", inst.t);
                problems += 1;
            }
        }
        for j in &inst.queued {
            if j.q > inst.t {
                println!("queued job {} arrives after t", j.job_id);
                problems += 1;
            }
        }
    } else {
        let config = SystemConfig::preset_or_file(&args.system).map_err(|e| usage(e.to_string()))?;
        let system = SystemModel::build(&config)?;
        println!("{system}");
        if let Some(path) = &args.trace {
            let opts = SwfOptions {
                cores_per_node: args.cores_per_node,
                ..Default::default()
            };
            let (jobs, stats) = workload::load_trace(path, &opts).with_context(|| format!("reading {}", path.display()))?;
            if let Some(s) = stats {
                println!(
                    "swf: {} parsed, {} comments, {} malformed, {} bad runtime, {} bad processors",
                    s.parsed, s.comments, s.malformed, s.bad_runtime, s.bad_processors
                );
            }
            let misfits: Vec<u64> = jobs.iter().filter(|j| !j.fits(&system)).map(|j| j.job_id).collect();
            println!("trace: {} jobs, {} never fit this system", jobs.len(), misfits.len());
            problems += misfits.len();
        }
    }
    if problems > 0 {
        bail!("{problems} problem(s) found");
    }
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Compare(a) => compare(a),
        Command::Replay(a) => replay(a),
        Command::GenTrace(a) => gen_trace(a),
        Command::Validate(a) => validate(a),
    }
}

/// Parses arguments, runs, and maps the outcome to an exit code:
/// 0 success, 1 runtime failure, 2 usage error.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e:#}");
            2
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
