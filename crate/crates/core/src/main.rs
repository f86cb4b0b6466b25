use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use rbmh::experiment::{self, ExperimentConfig, ModelName};
use rbmh::selftest::run_selftest;
use rbmh::weights::{DrawMode, WeightOrder};

const OUT_DIR_ENV: &str = "RBMH_OUT_DIR";

#[derive(Parser)]
#[command(name = "rbmh", version, about = "Rao-Blackwellised Metropolis-Hastings benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write report.json, tables and envelope files.
    Run(Box<RunArgs>),
    /// Render the variance-ratio table of a report as text and CSV.
    Tables(RenderArgs),
    /// Write per-iteration envelope files from a report.
    Figures(RenderArgs),
    /// Run the built-in oracle checks.
    Selftest {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with flat experiment keys; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; replication r uses seed + r.
    #[arg(long)]
    seed: u64,
    /// Output directory [default: config out_dir, then $RBMH_OUT_DIR, then ./rbmh-out].
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    /// Weight orders, e.g. 0,3,inf.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<String>>,
    /// Test functions, e.g. x,x^2,x>0,p.
    #[arg(long, value_delimiter = ',')]
    h: Option<Vec<String>>,
    #[arg(long)]
    oracle: Option<bool>,
    #[arg(long)]
    control_variate: Option<bool>,
    #[arg(long)]
    threads: Option<usize>,
    /// reuse or fresh.
    #[arg(long)]
    weight_draws: Option<String>,
    #[arg(long)]
    max_proposals: Option<u64>,
    #[arg(long)]
    product_floor: Option<f64>,
    #[arg(long)]
    envelopes: Option<bool>,
    #[arg(long)]
    probit_data: Option<String>,
    #[arg(long)]
    probit_synthetic_n: Option<usize>,
    #[arg(long)]
    bmi_column: Option<String>,
    #[arg(long)]
    outcome_column: Option<String>,
    #[arg(long, value_delimiter = ',')]
    x0: Option<Vec<f64>>,
}

#[derive(Args)]
struct RenderArgs {
    /// Path to a report.json written by `run`.
    #[arg(long)]
    report: PathBuf,
    /// Where to write files [default: the report's directory].
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn build_config(args: RunArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &args.config {
        Some(path) => {
            if !path.exists() {
                anyhow::bail!("config file not found: {}", path.display());
            }
            ExperimentConfig::load(path)?
        }
        None => {
            let model: ModelName = args
                .model
                .as_deref()
                .context("either --config or --model is required")?
                .parse()?;
            ExperimentConfig::new(model, Vec::new())
        }
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field { cfg.$field = v; }
        )*};
    }
    set!(name, scales, lambda, iterations, replications, h, max_proposals, product_floor, envelopes, probit_data, probit_synthetic_n, bmi_column, outcome_column, oracle, control_variate);
    if let Some(m) = &args.model {
        cfg.model = m.parse()?;
    }
    if let Some(k) = &args.k {
        cfg.k = k.iter().map(|s| s.parse::<WeightOrder>()).collect::<rbmh::Result<_>>()?;
    }
    if let Some(w) = &args.weight_draws {
        cfg.weight_draws = w.parse::<DrawMode>()?;
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    if args.x0.is_some() {
        cfg.x0 = args.x0;
    }
    cfg.seed = Some(args.seed);
    let out = args
        .out_dir
        .or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("rbmh-out"));
    cfg.validate()?;
    Ok((cfg, out))
}

fn render_dir(args: &RenderArgs) -> PathBuf {
    args.out_dir.clone().unwrap_or_else(|| {
        args.report
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf()
    })
}

fn run(cli: Cli) -> Result<bool> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Run(args) => {
            let (cfg, out) = build_config(*args)?;
            let (report, timing) = experiment::run_experiment(&cfg)?;
            let files = experiment::write_outputs(&report, Some(&timing), &out)?;
            write!(stdout, "{}", experiment::table_text(&report))?;
            for f in files {
                writeln!(stdout, "wrote {}", f.display())?;
            }
            Ok(true)
        }
        Command::Tables(args) => {
            let report = experiment::read_report(&args.report)
                .with_context(|| format!("cannot read report {}", args.report.display()))?;
            write!(stdout, "{}", experiment::table_text(&report))?;
            let path = experiment::write_tables(&report, &render_dir(&args))?;
            writeln!(stdout, "wrote {}", path.display())?;
            Ok(true)
        }
        Command::Figures(args) => {
            let report = experiment::read_report(&args.report)
                .with_context(|| format!("cannot read report {}", args.report.display()))?;
            for f in experiment::write_figures(&report, &render_dir(&args))? {
                writeln!(stdout, "wrote {}", f.display())?;
            }
            Ok(true)
        }
        Command::Selftest { seed } => {
            let checks = run_selftest(seed);
            for c in &checks {
                writeln!(stdout, "{c}")?;
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
