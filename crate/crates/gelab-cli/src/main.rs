//! `gelab`: simulate the bi-parental Moran model, check its generator
//! exactly, sample the limiting diffusion, and run convergence experiments.
//!
//! Exit codes: 0 on success, 1 when a check or acceptance criterion fails,
//! 2 on usage or I/O errors.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gelab_core::feller::{drifted_feller_em, feller_exact_sample, DiffusionParams};
use gelab_core::generator::{check_identity, random_state, IdentityTag};
use gelab_core::harness::acceptance;
use gelab_core::harness::config::{ExperimentConfig, ModelChoice, SimKind};
use gelab_core::harness::experiment::{
    effective_workers, run_experiment, simulate_csv, summarize_raw_csv,
};
use gelab_core::rng::{SeedSpec, StreamRole};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "gelab",
    version,
    about = "Genetic-element Moran model laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulator and write the per-replicate time series as CSV.
    Simulate(SimulateArgs),
    /// Verify the closed-form generator identities in exact arithmetic.
    GeneratorCheck(GeneratorCheckArgs),
    /// Draw endpoint samples of the limiting diffusion.
    FellerSample(FellerSampleArgs),
    /// Run a full convergence experiment from a config file.
    Compare(CompareArgs),
    /// Summarize a raw per-replicate CSV into per-time mean/SE rows.
    Report(ReportArgs),
    /// Run the acceptance suite and write a verdict CSV.
    Accept(AcceptArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// jump | graph
    #[arg(long, default_value = "jump")]
    model: String,
    /// Population size (overrides the config's first N)
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    #[arg(long)]
    replicates: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Key-value config file providing defaults for the remaining knobs
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated recording times (t_end is always included)
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GeneratorCheckArgs {
    /// Population size of the random test states
    #[arg(long = "N", default_value_t = 5)]
    n: u64,
    /// Number of random states per identity
    #[arg(long, default_value_t = 20)]
    states: u64,
    #[arg(long, default_value_t = acceptance::DEFAULT_SEED)]
    seed: u64,
    /// Check a single identity (rho1, rho1_sq, rho2, rho3, rho2_rho1, rho1_cubed)
    #[arg(long)]
    identity: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FellerSampleArgs {
    /// Starting value z >= 0
    #[arg(long)]
    z: f64,
    /// Horizon t > 0
    #[arg(long)]
    t: f64,
    /// Number of samples
    #[arg(long, default_value_t = 1000)]
    n: u64,
    #[arg(long, default_value_t = acceptance::DEFAULT_SEED)]
    seed: u64,
    /// Immigration rate (switches to the Euler scheme)
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    /// Per-element acquisition rate
    #[arg(long, default_value_t = 0.0)]
    nu: f64,
    /// Per-element loss rate
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    /// Selection strength
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Euler step; required when any drift parameter is nonzero
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Key-value experiment config
    #[arg(long)]
    config: PathBuf,
    /// Override the config's report path
    #[arg(long)]
    out_report: Option<PathBuf>,
    /// Override the config's raw CSV directory
    #[arg(long)]
    out_raw_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Raw per-replicate CSV produced by `simulate` or `compare`
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AcceptArgs {
    #[arg(long, default_value_t = acceptance::DEFAULT_SEED)]
    seed: u64,
    /// Where to write the verdict CSV
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Simulate(args) => simulate(args),
        Command::GeneratorCheck(args) => generator_check(args),
        Command::FellerSample(args) => feller_sample(args),
        Command::Compare(args) => compare(args),
        Command::Report(args) => report(args),
        Command::Accept(args) => accept(args),
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::parse(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let mut cfg = load_config(args.config.as_deref())?;
    let kind = match args.model.as_str() {
        "jump" => SimKind::Jump,
        "graph" => SimKind::Graph,
        other => bail!("--model must be jump or graph, got `{other}`"),
    };
    cfg.model = match kind {
        SimKind::Jump => ModelChoice::Jump,
        SimKind::Graph => ModelChoice::Graph,
    };
    if let Some(t) = args.t_end {
        cfg.t_end = t;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(spec) = &args.grid {
        cfg.grid = spec
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .with_context(|| format!("bad grid time `{s}`"))
            })
            .collect::<Result<_>>()?;
    }
    let n = args
        .n
        .or_else(|| cfg.n_values.first().copied())
        .context("no N given")?;
    cfg.n_values = vec![n];
    cfg.validate()?;
    let bytes = simulate_csv(kind, n, &cfg, effective_workers())?;
    write_out(&args.out, &bytes)?;
    println!(
        "wrote {} ({} replicates, N={n})",
        args.out.display(),
        cfg.replicates
    );
    Ok(ExitCode::SUCCESS)
}

fn generator_check(args: GeneratorCheckArgs) -> Result<ExitCode> {
    let tags: Vec<IdentityTag> = match &args.identity {
        None => IdentityTag::ALL.to_vec(),
        Some(name) => {
            vec![IdentityTag::parse(name).with_context(|| {
                format!(
                    "unknown identity `{name}`; expected one of {}",
                    IdentityTag::ALL.map(|t| t.name()).join(", ")
                )
            })?]
        }
    };
    if args.n == 0 || args.states == 0 {
        bail!("--N and --states must be >= 1");
    }
    let mut csv = String::from("state_id,identity,lhs,rhs,abs_diff\n");
    let mut bad = 0u64;
    for tag in tags {
        let mut rng = SeedSpec::new(args.seed, tag as u64).stream(StreamRole::StateGen);
        for sid in 0..args.states {
            let x = random_state(&mut rng, args.n..=args.n, 6)?;
            let check = check_identity(tag, &x);
            if !check.holds() {
                bad += 1;
            }
            writeln!(
                csv,
                "{sid},{},{},{},{}",
                tag.name(),
                check.lhs,
                check.rhs,
                check.abs_diff
            )
            .unwrap();
        }
    }
    if let Some(out) = &args.out {
        write_out(out, csv.as_bytes())?;
    } else {
        print!("{csv}");
    }
    if bad > 0 {
        eprintln!("{bad} identity evaluations had nonzero difference");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn feller_sample(args: FellerSampleArgs) -> Result<ExitCode> {
    let drifted = args.mu != 0.0 || args.nu != 0.0 || args.beta != 0.0 || args.alpha != 0.0;
    let mut csv = String::from("sample,value\n");
    if drifted || args.dt.is_some() {
        let dt = args
            .dt
            .context("--dt is required for the drifted (Euler) sampler")?;
        let params = DiffusionParams {
            z0: args.z,
            mu: args.mu,
            linear: args.nu - args.beta - args.alpha,
        };
        let mut rng = SeedSpec::new(args.seed, 0).stream(StreamRole::FellerEm);
        for i in 0..args.n {
            let v = drifted_feller_em(&params, args.t, dt, &mut rng)?;
            writeln!(csv, "{i},{v}").unwrap();
        }
    } else {
        let mut rng = SeedSpec::new(args.seed, 0).stream(StreamRole::FellerExact);
        for i in 0..args.n {
            let v = feller_exact_sample(args.z, args.t, &mut rng)?;
            writeln!(csv, "{i},{v}").unwrap();
        }
    }
    match &args.out {
        Some(out) => write_out(out, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn compare(args: CompareArgs) -> Result<ExitCode> {
    let mut cfg = load_config(Some(&args.config))?;
    if let Some(p) = &args.out_report {
        cfg.out_report = Some(p.display().to_string());
    }
    if let Some(p) = &args.out_raw_dir {
        cfg.out_raw_dir = Some(p.display().to_string());
    }
    let output = run_experiment(&cfg, effective_workers())?;
    let report_path = PathBuf::from(cfg.out_report.as_deref().unwrap_or("report.csv"));
    write_out(&report_path, &output.report.to_csv())?;
    println!("wrote {}", report_path.display());
    let raw_dir = PathBuf::from(cfg.out_raw_dir.as_deref().unwrap_or("."));
    for raw in &output.raw {
        let path = raw_dir.join(&raw.name);
        write_out(&path, &raw.bytes)?;
        println!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn report(args: ReportArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let bytes = summarize_raw_csv(&text).map_err(|e| anyhow::anyhow!(e))?;
    match &args.out {
        Some(out) => write_out(out, &bytes)?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(ExitCode::SUCCESS)
}

fn accept(args: AcceptArgs) -> Result<ExitCode> {
    let results = acceptance::run_all(args.seed);
    for r in &results {
        println!("{}", r.line());
    }
    if let Some(out) = &args.out {
        write_out(out, &acceptance::verdict_csv(&results))?;
    }
    if results.iter().all(|r| r.passed) {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}
