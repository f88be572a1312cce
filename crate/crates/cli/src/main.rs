use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use exvmc::config::{ConfigError, RunConfig};
use exvmc::harness::{
    bench_overlap, bridge_bench, selfcheck, write_bridge_csv, write_overlap_csv, BridgeBenchOptions, OverlapBenchOptions,
    SelfcheckOptions,
};
use exvmc::numerics::PfaffianOptions;
use exvmc::pretraining::{align_payloads, load_selectors, load_structures, PretrainError, DEFAULT_BANDWIDTH};
use exvmc::training::{optimize, TrainError};
use serde::de::DeserializeOwned;
use serde::Serialize;

const EXIT_FAILURE: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "exvmc", version, about = "Multi-state variational Monte Carlo")]
struct Cli {
    /// Overrides the seed of the config or benchmark.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides where artifacts are written.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Validate and print the resolved configuration without computing.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize the states described by a run config.
    Run { config: PathBuf },
    /// Single-state vs MSIS overlap variance on exact Hermite states.
    BenchOverlap {
        /// JSON options; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        states: Option<Vec<usize>>,
        #[arg(long)]
        n_batch: Option<usize>,
        #[arg(long)]
        batches: Option<usize>,
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Bridge-sampling ratio error against sample size and iteration count.
    BridgeBench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        sample_sizes: Option<Vec<usize>>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Align orbital payloads along the structure graph and validate selectors.
    Align {
        structures: PathBuf,
        #[arg(long)]
        selectors: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BANDWIDTH)]
        bandwidth: f64,
        /// Kabsch-align geometries before measuring RMSD.
        #[arg(long)]
        kabsch: bool,
    },
    /// Fast invariant battery.
    Selfcheck {
        #[arg(long, hide = true)]
        inject_pfaffian_sign_fault: bool,
    },
}

enum Failure {
    Config(String),
    Diverged(String),
    Check(String),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Diverged(_) => EXIT_DIVERGED,
            Failure::Check(_) => EXIT_CHECK,
            Failure::Other(_) => EXIT_FAILURE,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(c) => c.into(),
            e @ TrainError::Diverged { .. } => Failure::Diverged(e.to_string()),
            e => Failure::Other(e.into()),
        }
    }
}

impl From<PretrainError> for Failure {
    fn from(e: PretrainError) -> Self {
        match e {
            PretrainError::Schema { .. }
            | PretrainError::Payload { .. }
            | PretrainError::Io(_)
            | PretrainError::DuplicateId(_)
            | PretrainError::UnknownId(_)
            | PretrainError::Mismatch { .. }
            | PretrainError::Empty
            | PretrainError::Selector(_)
            | PretrainError::Bandwidth(_) => Failure::Config(e.to_string()),
            e => Failure::Other(e.into()),
        }
    }
}

fn read_options<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| Failure::Config(format!("{}: {}: {}", path.display(), e.path(), e.inner())))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    println!("{}", serde_json::to_string_pretty(value).context("serializing output")?);
    Ok(())
}

fn output_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.output_dir.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_artifact(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn cmd_run(cli: &Cli, path: &Path) -> Result<(), Failure> {
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = &cli.output_dir {
        config.output_dir = dir.clone();
    }
    config.validate()?;
    if cli.dry_run {
        println!("{}", config.to_json());
        return Ok(());
    }
    let artifacts = optimize(&config)?;
    for e in &artifacts.report.energies {
        println!("state {}: E = {:.6} +- {:.6}", e.state, e.energy, e.stderr);
    }
    let n = artifacts.report.overlap.len();
    for s in 0..n {
        for t in s + 1..n {
            println!("overlap ({s}, {t}): {:+.4}", artifacts.report.overlap[s][t]);
        }
    }
    println!("report: {}", artifacts.report_path.display());
    Ok(())
}

fn cmd_bench_overlap(cli: &Cli, cmd: &Command) -> Result<(), Failure> {
    let Command::BenchOverlap { config, states, n_batch, batches, repetitions } = cmd else { unreachable!() };
    let mut opts: OverlapBenchOptions = read_options(config.as_deref())?;
    if let Some(v) = states {
        opts.states = v.clone();
    }
    opts.n_batch = n_batch.unwrap_or(opts.n_batch);
    opts.batches = batches.unwrap_or(opts.batches);
    opts.repetitions = repetitions.unwrap_or(opts.repetitions);
    opts.seed = cli.seed.unwrap_or(opts.seed);
    if opts.states.iter().any(|&s| s == 0 || opts.n_batch < 2 * s) || opts.batches < 2 {
        return Err(Failure::Config("need 1 <= S <= n_batch / 2 and at least 2 batches".into()));
    }
    if cli.dry_run {
        return print_json(&opts);
    }
    let rows = bench_overlap(&opts).context("overlap benchmark")?;
    let mut csv = Vec::new();
    write_overlap_csv(&mut csv, &rows)?;
    let path = write_artifact(&output_dir(cli, "out/bench"), "bench_overlap.csv", &csv)?;
    for &s in &opts.states {
        let block: Vec<_> = rows.iter().filter(|r| r.n_states == s).collect();
        let wins = block.iter().filter(|r| r.msis_wins()).count();
        let within = block.iter().filter(|r| r.var_msis <= r.bound_msis).count();
        println!("S={s}: MSIS lower variance in {wins}/{} repetitions, within bound in {within}/{}", block.len(), block.len());
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_bridge_bench(cli: &Cli, cmd: &Command) -> Result<(), Failure> {
    let Command::BridgeBench { config, sample_sizes, iterations } = cmd else { unreachable!() };
    let mut opts: BridgeBenchOptions = read_options(config.as_deref())?;
    if let Some(v) = sample_sizes {
        opts.sample_sizes = v.clone();
    }
    opts.iterations = iterations.unwrap_or(opts.iterations);
    opts.seed = cli.seed.unwrap_or(opts.seed);
    if !(opts.clip > 1.0) || opts.fixtures.iter().any(|f| f.states.is_empty() || f.dim == 0) {
        return Err(Failure::Config("clip must exceed 1 and every fixture needs states and a dimension".into()));
    }
    if cli.dry_run {
        return print_json(&opts);
    }
    let rows = bridge_bench(&opts).context("bridge benchmark")?;
    let mut csv = Vec::new();
    write_bridge_csv(&mut csv, &rows)?;
    let path = write_artifact(&output_dir(cli, "out/bench"), "bridge_bench.csv", &csv)?;
    for r in rows.iter().filter(|r| r.iteration == opts.iterations) {
        println!("{} N={}: max rel error {:.2e}, residual {:.2e}", r.fixture, r.n_samples, r.max_rel_error, r.residual);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_align(cli: &Cli, cmd: &Command) -> Result<(), Failure> {
    let Command::Align { structures, selectors, bandwidth, kabsch } = cmd else { unreachable!() };
    let payloads = load_structures(structures)?;
    let selectors = selectors.as_deref().map(load_selectors).transpose()?;
    if cli.dry_run {
        println!("{} structures, {} selectors", payloads.len(), selectors.as_ref().map_or(0, Vec::len));
        return Ok(());
    }
    let out = align_payloads(&payloads, selectors.as_deref(), *bandwidth, *kabsch)?;
    let json = serde_json::to_vec_pretty(&out).context("serializing alignment")?;
    let path = write_artifact(&output_dir(cli, "out/align"), "aligned.json", &json)?;
    println!("root {}, order {:?}", out.graph.root, out.graph.order);
    for e in &out.edges {
        println!("edge {} -> {}: distance {:.3e} -> {:.3e}", e.parent, e.child, e.distance_before, e.distance_after);
    }
    println!("wrote {}", path.display());
    if let Some(report) = &out.selectors {
        if !report.ok() {
            for (s, t) in &report.violations {
                eprintln!("selector pair ({s}, {t}) violates det(Pi_s^T Pi_t) = delta_st");
            }
            return Err(Failure::Check(format!("{} selector pairs violate orthogonality", report.violations.len())));
        }
    }
    Ok(())
}

fn cmd_selfcheck(cli: &Cli, inject: bool) -> Result<(), Failure> {
    if cli.dry_run {
        println!("pfaffian-oracle, pfaffian-determinant, procrustes-recovery, msis-bound, ess-bounds, snap-continuity");
        return Ok(());
    }
    let opts = SelfcheckOptions { pfaffian: PfaffianOptions { track_swap_sign: !inject } };
    let report = selfcheck(opts);
    for c in &report.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("{status} {:<22} {:>9.1} ms  {}", c.name, c.elapsed_ms, c.detail);
    }
    if report.passed() {
        Ok(())
    } else {
        let n = report.checks.iter().filter(|c| !c.passed).count();
        Err(Failure::Check(format!("{n} checks failed")))
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { config } => cmd_run(cli, config),
        cmd @ Command::BenchOverlap { .. } => cmd_bench_overlap(cli, cmd),
        cmd @ Command::BridgeBench { .. } => cmd_bridge_bench(cli, cmd),
        cmd @ Command::Align { .. } => cmd_align(cli, cmd),
        Command::Selfcheck { inject_pfaffian_sign_fault } => cmd_selfcheck(cli, *inject_pfaffian_sign_fault),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.unwrap_or(0);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(EXIT_FAILURE);
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("config error: {m}"),
                Failure::Diverged(m) => eprintln!("aborted: {m}"),
                Failure::Check(m) => eprintln!("check failed: {m}"),
                Failure::Other(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}
