use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use brwcap::capacity::{
    cap_exact, cap_lower_bound, cap_monte_carlo, cap_upper_bound, CapacityResult, MonteCarloOptions,
};
use brwcap::green::GreenEvaluator;
use brwcap::harness::{
    fit_exponent, read_records, run_experiment, run_selftest, write_report, ExperimentConfig,
    ExponentFit, FitError, Statistic,
};
use brwcap::lattice::LatticeStepDistribution;
use brwcap::tree_walk::read_points_csv;

#[derive(Parser)]
#[command(
    name = "brwcap",
    version,
    about = "Branching random walk range capacity experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run trials over an n-grid and append records to a CSV file.
    Run(RunArgs),
    /// Fit log-log exponents to a results file.
    Fit(FitArgs),
    /// Write a markdown summary and SVG plots.
    Report(ReportArgs),
    /// Run the built-in oracle checks.
    Selftest,
    /// Capacity of a point set read from CSV (header x1,..,xd).
    Cap(CapArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key=value file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    n_min: Option<String>,
    #[arg(long)]
    n_max: Option<String>,
    #[arg(long)]
    ratio: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Skip Green sums and capacities.
    #[arg(long)]
    no_capacity: bool,
    /// Any other config key, e.g. `--set mc-walkers=128`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    extra: Vec<String>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Statistic name, or `all`.
    #[arg(long, default_value = "cap")]
    stat: String,
    #[arg(long)]
    n_min: Option<u64>,
    #[arg(long)]
    n_max: Option<u64>,
    #[arg(long, default_value = "fits.json")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    fits: PathBuf,
    #[arg(long, default_value = "report")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CapMethod {
    Exact,
    MonteCarlo,
    Lower,
    Upper,
}

#[derive(Args)]
struct CapArgs {
    #[arg(long)]
    points: PathBuf,
    #[arg(long, default_value = "lazy-srw:0.5")]
    eta: String,
    #[arg(long, value_enum, default_value = "exact")]
    method: CapMethod,
    #[arg(long, default_value_t = 64)]
    walkers: usize,
    #[arg(long, default_value_t = 4.0)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(a) => run(a),
        Command::Fit(a) => fit(a),
        Command::Report(a) => report(a),
        Command::Selftest => Ok(selftest()),
        Command::Cap(a) => cap(a),
    }
}

fn run(a: RunArgs) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &a.config {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_file(&text)?;
    }
    let flags = [
        ("mode", &a.mode),
        ("dim", &a.dim),
        ("mu", &a.mu),
        ("theta", &a.theta),
        ("eta", &a.eta),
        ("n-min", &a.n_min),
        ("n-max", &a.n_max),
        ("ratio", &a.ratio),
        ("trials", &a.trials),
        ("seed", &a.seed),
        ("threads", &a.threads),
        ("out", &a.out),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    for kv in &a.extra {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("`{kv}` is not KEY=VALUE"))?;
        cfg.set(k, v)?;
    }
    if a.no_capacity {
        cfg.capacity = false;
    }
    let records = run_experiment(&cfg)?;
    let failed = records.iter().filter(|r| !r.ok()).count();
    println!(
        "config {}: {} records ({} tagged) appended to {}",
        cfg.hash(),
        records.len(),
        failed,
        cfg.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn fit(a: FitArgs) -> Result<ExitCode> {
    let records =
        read_records(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let stats: Vec<Statistic> = if a.stat == "all" {
        Statistic::ALL.to_vec()
    } else {
        vec![Statistic::parse(&a.stat)?]
    };
    let mut fits: Vec<ExponentFit> = Vec::new();
    for st in stats {
        match fit_exponent(&records, st, a.n_min, a.n_max) {
            Ok(f) => fits.push(f),
            Err(FitError::Insufficient(k)) if a.stat == "all" => {
                eprintln!("{}: skipped, {k} grid points with data", st.name());
            }
            Err(e) => return Err(e.into()),
        }
    }
    for f in &fits {
        println!(
            "{:<13} slope {:.4} ± {:.4}  target {:<12} {}",
            f.statistic.name(),
            f.slope,
            f.slope_stderr,
            f.target.map(|t| t.describe()).unwrap_or_else(|| "-".into()),
            f.verdict.as_str()
        );
    }
    std::fs::write(&a.out, serde_json::to_string_pretty(&fits)?)?;
    Ok(ExitCode::SUCCESS)
}

fn report(a: ReportArgs) -> Result<ExitCode> {
    let records =
        read_records(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let fits: Vec<ExponentFit> = serde_json::from_reader(BufReader::new(
        File::open(&a.fits).with_context(|| format!("opening {}", a.fits.display()))?,
    ))?;
    for p in write_report(&records, &fits, &a.out_dir)? {
        println!("{}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn selftest() -> ExitCode {
    let checks = run_selftest();
    for c in &checks {
        println!(
            "{} {:<18} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn cap(a: CapArgs) -> Result<ExitCode> {
    let points = read_points_csv(
        File::open(&a.points).with_context(|| format!("opening {}", a.points.display()))?,
    )?;
    if points.is_empty() {
        bail!("{} holds no points", a.points.display());
    }
    let eta = LatticeStepDistribution::parse(&a.eta, points.dim())?;
    let ev = GreenEvaluator::new(eta.clone())?;
    let res: CapacityResult = match a.method {
        CapMethod::Exact => cap_exact(&points, &ev)?,
        CapMethod::MonteCarlo => {
            let opts = MonteCarloOptions {
                walkers: a.walkers,
                rho: a.rho,
                seed: a.seed,
                ..Default::default()
            };
            cap_monte_carlo(&points, &eta, &ev, opts)?
        }
        CapMethod::Lower => cap_lower_bound(&points, &ev, None)?,
        CapMethod::Upper => cap_upper_bound(&points, &ev)?,
    };
    println!("{}", res.to_json());
    Ok(ExitCode::SUCCESS)
}
