use anyhow::{bail, Context, Result};
use cfsim_harness::config::{ExperimentConfig, VerifyConfig};
use cfsim_harness::plot::{plot_file, PlotOptions};
use cfsim_harness::runner::{run, write_outputs, OutputFormat};
use cfsim_harness::verify::verify;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};

/// Environment variable overriding the output directory (weaker than the
/// --out-dir flag, stronger than the config file).
const OUT_DIR_ENV: &str = "CFSIM_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "cfsim",
    about = "Counterfactual-fairness simulation harness: seeded sweeps, theory checks, plots"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset from a preset or inline model and emit CSV.
    Simulate(SimulateArgs),
    /// Run a configured experiment sweep and write results/summary CSV.
    Run(RunArgs),
    /// Run the theory-verification suites; exits nonzero on any failure.
    Verify(VerifyArgs),
    /// Render an SVG scatter (error vs total effect) from a results CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Preset name: linear_reg, cubic_reg, linear_cls, cubic_cls.
    #[arg(long, conflicts_with = "spec_json")]
    preset: Option<String>,
    /// Path to a JSON file holding a full model specification.
    #[arg(long)]
    spec_json: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Added to every seed in the config.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Args)]
struct VerifyArgs {
    /// Optional verification config; defaults run every suite.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Input results CSV.
    #[arg(long)]
    input: PathBuf,
    /// Output SVG path.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "te")]
    x: String,
    #[arg(long, default_value = "error")]
    y: String,
    #[arg(long, default_value = "method")]
    group_by: String,
    #[arg(long, default_value = "")]
    title: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

fn resolve_out_dir(flag: Option<PathBuf>, config_dir: Option<&str>, default: &str) -> PathBuf {
    if let Some(d) = flag {
        return d;
    }
    if let Ok(d) = std::env::var(OUT_DIR_ENV) {
        if !d.is_empty() {
            return PathBuf::from(d);
        }
    }
    config_dir.map_or_else(|| PathBuf::from(default), PathBuf::from)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(args) => simulate(args),
        Command::Run(args) => run_cmd(args),
        Command::Verify(args) => verify_cmd(args),
        Command::Plot(args) => plot_cmd(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let spec = match (&args.preset, &args.spec_json) {
        (Some(name), None) => cfsim_core::scm::ScmSpec::preset(name)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let spec: cfsim_core::scm::ScmSpec = serde_json::from_str(&text)?;
            spec.validate()?;
            spec
        }
        _ => bail!("pass exactly one of --preset or --spec-json"),
    };
    let data = spec.sample(args.n, args.seed)?;
    let out_dir = resolve_out_dir(args.out_dir, None, "results");
    std::fs::create_dir_all(&out_dir)?;
    let path = out_dir.join("dataset.csv");
    std::fs::write(&path, data.to_csv())?;
    println!("wrote {} records to {}", data.len(), path.display());
    Ok(())
}

fn run_cmd(args: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if args.seed_offset != 0 {
        for s in &mut cfg.seeds {
            *s += args.seed_offset;
        }
    }
    let out_dir = resolve_out_dir(args.out_dir, cfg.out_dir.as_deref(), "results");
    let table = run(&cfg, args.jobs)?;
    let format = match args.format {
        FormatArg::Csv => OutputFormat::Csv,
        FormatArg::Json => OutputFormat::Json,
    };
    write_outputs(&table, &out_dir, format)?;
    println!(
        "wrote {} rows ({} failed cells) to {}",
        table.rows.len(),
        table.errors.len(),
        out_dir.display()
    );
    if !table.errors.is_empty() {
        eprintln!("see {}", out_dir.join("errors.log").display());
    }
    Ok(())
}

fn verify_cmd(args: VerifyArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(path) => VerifyConfig::from_path(path)?,
        None => VerifyConfig::default(),
    };
    let out_dir = resolve_out_dir(args.out_dir, cfg.out_dir.as_deref(), "verify_out");
    let outcome = verify(&cfg, &out_dir)?;
    if outcome.passed {
        println!("all checks passed");
        Ok(())
    } else {
        eprintln!("failed checks: {:?}", outcome.failed_checks);
        std::process::exit(1);
    }
}

fn plot_cmd(args: PlotArgs) -> Result<()> {
    let opts = PlotOptions {
        x_col: args.x,
        y_col: args.y,
        group_by: args.group_by,
        title: args.title,
        ..PlotOptions::default()
    };
    plot_file(Path::new(&args.input), Path::new(&args.output), &opts)?;
    println!("wrote {}", args.output.display());
    Ok(())
}
