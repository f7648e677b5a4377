//! Command-line front end: `run`, `bench`, `export-plots` and `gen-scenarios`.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 collision,
//! 3 timeout (including a baseline that found no plan).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::sim::{
    compute_metrics, desk_scenes, run_episode, with_crossing_obstacle, CrossingSpec, EpisodeMeta,
    EpisodeRecord, EpisodeResult, EpisodeRow, EpisodeSetup, EpisodeSummary, EpisodeTiming, Method,
    Mode, Outcome, RunConfig, Scenario,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_COLLISION: u8 = 2;
pub const EXIT_TIMEOUT: u8 = 3;

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "RAMP_THREADS";

/// Version written at the top of every plot-data file.
pub const PLOT_SCHEMA_VERSION: u32 = 1;

/// Iteration budget given to RRT* in benchmarks when the run config sets
/// none, so results do not depend on machine speed.
pub const BENCH_RRT_ITERATIONS: usize = 3000;

#[derive(Debug, Parser)]
#[command(name = "ramp", version, about = "Reactive MPPI planning over configuration-space distances")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and write its record.
    Run(RunArgs),
    /// Run the methods x scenarios x seeds cross product and summarize it.
    Bench(BenchArgs),
    /// Convert episode records into per-episode CSV time series.
    ExportPlots(ExportArgs),
    /// Write the generated desk scenes as scenario files.
    GenScenarios(GenArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario JSON file.
    pub scenario: PathBuf,
    #[arg(long, default_value = "ramp")]
    pub method: Method,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "deterministic")]
    pub mode: Mode,
    /// Output directory for the record files.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Run configuration JSON (planner, follower, csdf, rrt); defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Benchmark configuration JSON file.
    pub config: PathBuf,
    /// Overrides the output directory from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the execution mode from the config.
    #[arg(long)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Directory holding `*.summary.json` / `*.rows.jsonl` records.
    pub records: PathBuf,
    /// Output directory; defaults to the records directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 5)]
    pub count: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value = "scenarios")]
    pub out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::ExportPlots(a) => cmd_export_plots(&a).map(|_| EXIT_OK),
        Command::GenScenarios(a) => cmd_gen_scenarios(&a).map(|_| EXIT_OK),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })
}

pub fn outcome_exit_code(outcome: Outcome) -> u8 {
    match outcome {
        Outcome::Success => EXIT_OK,
        Outcome::Collision => EXIT_COLLISION,
        Outcome::Timeout | Outcome::NoPlan => EXIT_TIMEOUT,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Header of a record, stored next to its rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordSummary {
    pub meta: EpisodeMeta,
    pub summary: EpisodeSummary,
    pub degraded_iterations: u64,
}

fn record_stem(meta: &EpisodeMeta) -> String {
    format!("{}_{}_seed{}", meta.scenario, meta.method, meta.seed)
}

/// Writes `<stem>.rows.jsonl`, `<stem>.summary.json` and `<stem>.timing.json`
/// into `dir` and returns the stem path.
pub fn write_record(dir: &Path, result: &EpisodeResult) -> Result<PathBuf> {
    create_dir(dir)?;
    let rec = &result.record;
    let stem = dir.join(record_stem(&rec.meta));
    let header = RecordSummary {
        meta: rec.meta.clone(),
        summary: rec.summary.clone(),
        degraded_iterations: rec.degraded_iterations,
    };
    write_file(&stem.with_extension("rows.jsonl"), rec.rows_jsonl())?;
    write_file(
        &stem.with_extension("summary.json"),
        serde_json::to_string_pretty(&header).expect("summary serializes"),
    )?;
    write_file(
        &stem.with_extension("timing.json"),
        serde_json::to_string_pretty(&result.timing).expect("timing serializes"),
    )?;
    Ok(stem)
}

/// Reads a record written by [`write_record`] from its summary file.
pub fn read_record(summary_path: &Path) -> Result<EpisodeRecord> {
    let header: RecordSummary = read_json(summary_path)?;
    let name = summary_path
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.strip_suffix(".summary.json"))
        .ok_or_else(|| Error::invalid(format!("{} is not a summary file", summary_path.display())))?;
    let rows_path = summary_path.with_file_name(format!("{name}.rows.jsonl"));
    let text = fs::read_to_string(&rows_path).map_err(|e| Error::io(&rows_path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: EpisodeRow = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: rows_path.clone(),
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(EpisodeRecord {
        meta: header.meta,
        summary: header.summary,
        rows,
        degraded_iterations: header.degraded_iterations,
    })
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig> {
    let config = match path {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

pub fn cmd_run(args: &RunArgs) -> Result<u8> {
    let scenario = Scenario::from_file(&args.scenario)?;
    scenario.validate()?;
    let config = load_run_config(args.config.as_deref())?;
    let setup = EpisodeSetup::new(&scenario, &config.csdf, args.seed)?;
    let result = run_episode(&setup, args.method, &config, args.seed, args.mode)?;
    let stem = write_record(&args.out, &result)?;
    let s = &result.record.summary;
    println!(
        "{} {} seed {}: {} after {} ticks, length {:.3} rad, min clearance {:.3} m ({})",
        s.scenario,
        s.method,
        s.seed,
        s.outcome.as_str(),
        s.ticks,
        s.executed_length,
        s.min_clearance,
        stem.display()
    );
    Ok(outcome_exit_code(s.outcome))
}

/// Benchmark description read by `ramp bench`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Glob of scenario files, relative to the config file's directory.
    pub scenarios: String,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_bench_out")]
    pub out: PathBuf,
    /// Episodes run concurrently.
    #[serde(default = "default_parallel")]
    pub parallel: usize,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub run: RunConfig,
    /// Adds a constant-velocity crossing obstacle to every episode.
    #[serde(default)]
    pub crossing: Option<CrossingSpec>,
    /// Also write every episode record under `<out>/records`.
    #[serde(default)]
    pub write_records: bool,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_bench_out() -> PathBuf {
    PathBuf::from("bench_out")
}

fn default_parallel() -> usize {
    1
}

impl BenchmarkConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut config: Self = read_json(path)?;
        config.base_dir = path.parent().map(Path::to_path_buf);
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("a benchmark needs at least one method and one seed"));
        }
        if self.parallel == 0 {
            return Err(Error::invalid("parallel must be at least 1"));
        }
        self.run.validate()
    }

    /// Matching scenario files in sorted order.
    pub fn scenario_paths(&self) -> Result<Vec<PathBuf>> {
        let pattern = match &self.base_dir {
            Some(dir) if Path::new(&self.scenarios).is_relative() => {
                dir.join(&self.scenarios).to_string_lossy().into_owned()
            }
            _ => self.scenarios.clone(),
        };
        let entries = glob::glob(&pattern)
            .map_err(|e| Error::invalid(format!("bad scenario glob {pattern:?}: {e}")))?;
        let mut paths: Vec<PathBuf> = entries.filter_map(|p| p.ok()).collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::invalid(format!("no scenario files match {pattern:?}")));
        }
        Ok(paths)
    }

    fn episode_config(&self) -> RunConfig {
        let mut run = self.run.clone();
        if run.rrt.max_iterations.is_none() {
            run.rrt.max_iterations = Some(BENCH_RRT_ITERATIONS);
        }
        run
    }
}

/// Per-episode rows and per-method summaries of one benchmark.
#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub results: Vec<EpisodeResult>,
    /// Deterministic CSV body.
    pub csv: String,
    pub timing_csv: String,
    pub table: String,
}

const CSV_HEADER: [&str; 22] = [
    "kind",
    "scenario",
    "method",
    "seed",
    "outcome",
    "success",
    "collision",
    "ticks",
    "duration",
    "executed_length",
    "planned_length",
    "min_clearance",
    "mean_clearance",
    "first_feasible_generation",
    "generations",
    "episodes",
    "success_rate",
    "collision_free_rate",
    "normalized_length",
    "safety_cm_mean",
    "safety_cm_std",
    "safety_tick_mean_cm",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_string(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

struct Job {
    setup: usize,
    method: Method,
    seed: u64,
}

/// Runs the benchmark on `threads` workers.
pub fn run_benchmark(config: &BenchmarkConfig, threads: usize) -> Result<BenchOutput> {
    config.validate()?;
    let run = config.episode_config();
    let mut scenarios = Vec::new();
    for path in config.scenario_paths()? {
        let s = Scenario::from_file(&path)?;
        s.validate()?;
        scenarios.push(s);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;

    // One setup per (scenario, seed) shared by every method.
    let keys: Vec<(usize, u64)> = (0..scenarios.len())
        .flat_map(|i| config.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let setups: Vec<Result<EpisodeSetup>> = pool.install(|| {
        keys.par_iter()
            .map(|&(i, seed)| bench_setup(&scenarios[i], &run, config.crossing.as_ref(), seed))
            .collect()
    });
    let mut errors = Vec::new();
    for (&(i, seed), s) in keys.iter().zip(&setups) {
        if let Err(e) = s {
            errors.push(format!("{} seed {seed}: {e}", scenarios[i].name));
        }
    }
    if !errors.is_empty() {
        return Err(Error::invalid(format!("episode setup failed:\n  {}", errors.join("\n  "))));
    }
    let setups: Vec<EpisodeSetup> = setups.into_iter().map(|s| s.expect("checked")).collect();
    let jobs: Vec<Job> = keys
        .iter()
        .enumerate()
        .flat_map(|(k, &(_, seed))| config.methods.iter().map(move |&method| Job { setup: k, method, seed }))
        .collect();
    let outcomes: Vec<Result<EpisodeResult>> = pool.install(|| {
        jobs.par_iter()
            .map(|j| run_episode(&setups[j.setup], j.method, &run, j.seed, config.mode))
            .collect()
    });
    let mut results = Vec::with_capacity(jobs.len());
    for (j, r) in jobs.iter().zip(outcomes) {
        match r {
            Ok(r) => results.push(r),
            Err(e) => errors.push(format!(
                "{} {} seed {}: {e}",
                setups[j.setup].scenario.name, j.method, j.seed
            )),
        }
    }
    if !errors.is_empty() {
        return Err(Error::invalid(format!("episodes failed:\n  {}", errors.join("\n  "))));
    }
    summarize(config, results)
}

fn bench_setup(
    scenario: &Scenario,
    run: &RunConfig,
    crossing: Option<&CrossingSpec>,
    seed: u64,
) -> Result<EpisodeSetup> {
    let setup = EpisodeSetup::new(scenario, &run.csdf, seed)?;
    let Some(spec) = crossing else {
        return Ok(setup);
    };
    let stream = SeedStream::new(seed).derive("scenario").derive(&scenario.name);
    let dynamic = with_crossing_obstacle(
        scenario,
        &setup.chain,
        &setup.start,
        &setup.goal,
        &run.csdf,
        spec,
        scenario.pairs.clearance,
        stream,
    )?;
    EpisodeSetup::new(&dynamic, &run.csdf, seed)
}

fn summarize(config: &BenchmarkConfig, results: Vec<EpisodeResult>) -> Result<BenchOutput> {
    let mut rows = vec![CSV_HEADER.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    let mut timing = vec![[
        "scenario",
        "method",
        "seed",
        "first_feasible_seconds",
        "converged_seconds",
        "planning_seconds",
        "wall_seconds",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect::<Vec<_>>()];
    for r in &results {
        let s = &r.record.summary;
        let mut row = vec![
            "episode".to_string(),
            s.scenario.clone(),
            s.method.to_string(),
            s.seed.to_string(),
            s.outcome.as_str().to_string(),
            s.success.to_string(),
            s.collision.to_string(),
            s.ticks.to_string(),
            s.duration.to_string(),
            s.executed_length.to_string(),
            opt(s.planned_length),
            s.min_clearance.to_string(),
            s.mean_clearance.to_string(),
            opt(s.first_feasible_generation),
            s.generations.to_string(),
        ];
        row.resize(CSV_HEADER.len(), String::new());
        rows.push(row);
        let t: &EpisodeTiming = &r.timing;
        timing.push(vec![
            s.scenario.clone(),
            s.method.to_string(),
            s.seed.to_string(),
            opt(t.first_feasible_seconds),
            opt(t.converged_seconds),
            t.planning_seconds.to_string(),
            t.wall_seconds.to_string(),
        ]);
    }

    let by_method = |m: Method| -> Vec<&EpisodeResult> {
        results.iter().filter(|r| r.record.meta.method == m).collect()
    };
    let baseline: Option<Vec<EpisodeSummary>> = config
        .methods
        .contains(&Method::RrtStar)
        .then(|| by_method(Method::RrtStar).iter().map(|r| r.record.summary.clone()).collect());
    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<12} {:>8} {:>8} {:>9} {:>18} {:>10} {:>14}",
        "method", "episodes", "success", "coll-free", "plan time (s)", "norm len", "safety (cm)"
    );
    for &m in &config.methods {
        let group = by_method(m);
        let summaries: Vec<EpisodeSummary> = group.iter().map(|r| r.record.summary.clone()).collect();
        let times: Vec<Option<f64>> = group
            .iter()
            .map(|r| match m {
                Method::RrtStar => r.timing.converged_seconds,
                _ => r.timing.first_feasible_seconds,
            })
            .collect();
        let base = baseline.as_deref().filter(|_| m != Method::RrtStar);
        let metrics = compute_metrics(&summaries, None, base)?;
        let timed = compute_metrics(&summaries, Some(&times), None)?;
        let mut row = vec![String::new(); CSV_HEADER.len()];
        row[0] = "summary".into();
        row[2] = m.to_string();
        row[15] = metrics.episodes.to_string();
        row[16] = metrics.success_rate.to_string();
        row[17] = metrics.collision_free_rate.to_string();
        row[18] = opt(metrics.normalized_length);
        row[19] = metrics.safety_cm_mean.to_string();
        row[20] = metrics.safety_cm_std.to_string();
        row[21] = metrics.safety_tick_mean_cm.to_string();
        rows.push(row);
        let plan = match (timed.planning_time_mean, timed.planning_time_std) {
            (Some(a), Some(b)) => format!("{a:.3} ± {b:.3}"),
            _ => "-".into(),
        };
        let _ = writeln!(
            table,
            "{:<12} {:>8} {:>8.3} {:>9.3} {:>18} {:>10} {:>14}",
            m.as_str(),
            metrics.episodes,
            metrics.success_rate,
            metrics.collision_free_rate,
            plan,
            metrics.normalized_length.map_or("-".into(), |v| format!("{v:.3}")),
            format!("{:.2} ± {:.2}", metrics.safety_cm_mean, metrics.safety_cm_std),
        );
    }
    Ok(BenchOutput {
        results,
        csv: csv_string(rows),
        timing_csv: csv_string(timing),
        table,
    })
}

/// Worker count: the environment override, else the configured value.
pub fn thread_count(configured: usize) -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(configured)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<u8> {
    let mut config = BenchmarkConfig::from_file(&args.config)?;
    if let Some(out) = &args.out {
        config.out = out.clone();
    }
    if let Some(mode) = args.mode {
        config.mode = mode;
    }
    let out = match &config.base_dir {
        Some(dir) if config.out.is_relative() && args.out.is_none() => dir.join(&config.out),
        _ => config.out.clone(),
    };
    let bench = run_benchmark(&config, thread_count(config.parallel))?;
    create_dir(&out)?;
    write_file(&out.join("bench.csv"), &bench.csv)?;
    write_file(&out.join("timing.csv"), &bench.timing_csv)?;
    write_file(&out.join("summary.txt"), &bench.table)?;
    if config.write_records {
        let dir = out.join("records");
        for r in &bench.results {
            write_record(&dir, r)?;
        }
    }
    print!("{}", bench.table);
    Ok(EXIT_OK)
}

/// Plot-data CSV for one record: `t, csdf, s_star, u_norm` and `h` when the
/// orientation constraint was active.
pub fn plot_csv(record: &EpisodeRecord) -> String {
    let with_h = record.rows.iter().any(|r| r.h.is_some());
    let mut header = vec!["t", "csdf", "s_star", "u_norm"];
    if with_h {
        header.push("h");
    }
    let mut rows = vec![header.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    for r in &record.rows {
        let u_norm = r.u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut row = vec![r.t.to_string(), opt(r.csdf), r.s_star.to_string(), u_norm.to_string()];
        if with_h {
            row.push(opt(r.h));
        }
        rows.push(row);
    }
    format!("# schema_version={PLOT_SCHEMA_VERSION}\n{}", csv_string(rows))
}

/// Writes one `<stem>.plot.csv` per record found in `args.records`.
pub fn cmd_export_plots(args: &ExportArgs) -> Result<Vec<PathBuf>> {
    let dir = &args.records;
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut summaries: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".summary.json"))
        .collect();
    summaries.sort();
    if summaries.is_empty() {
        return Err(Error::invalid(format!("no episode records in {}", dir.display())));
    }
    let out = args.out.clone().unwrap_or_else(|| dir.clone());
    create_dir(&out)?;
    let mut written = Vec::new();
    for path in summaries {
        let record = read_record(&path)?;
        let target = out.join(format!("{}.plot.csv", record_stem(&record.meta)));
        write_file(&target, plot_csv(&record))?;
        written.push(target);
    }
    println!("wrote {} plot files to {}", written.len(), out.display());
    Ok(written)
}

pub fn cmd_gen_scenarios(args: &GenArgs) -> Result<Vec<PathBuf>> {
    create_dir(&args.out)?;
    let mut written = Vec::new();
    for s in desk_scenes(args.count, args.seed) {
        let path = args.out.join(format!("{}.json", s.name));
        write_file(&path, s.to_json())?;
        written.push(path);
    }
    println!("wrote {} scenarios to {}", written.len(), args.out.display());
    Ok(written)
}
