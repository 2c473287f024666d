//! Command-line front end for the subsidy microsimulation pipeline.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use ptcsim_core::scenario::{self, OutputFormat, ScenarioConfig};
use ptcsim_core::Error;

#[derive(Parser)]
#[command(
    name = "ptcsim",
    version,
    about = "Marketplace premium subsidy microsimulation",
    long_about = "Quotes premium subsidies under configurable regimes, fits premium \
                  sensitivity of coverage by instrumented least squares, projects \
                  enrollment losses from a regime change, and allocates a state \
                  budget to buy coverage back."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the population and plan menu, writing persons.csv and plans.csv
    Generate(CommonArgs),
    /// Quote every person under both regimes
    Quote(CommonArgs),
    /// Fit the coverage model by OLS and instrumented least squares
    Fit(CommonArgs),
    /// Tabulate marginal effects and elasticities by income band
    Effects(CommonArgs),
    /// Project enrollment losses from switching to the counterfactual regime
    Project(CommonArgs),
    /// Allocate the first configured budget across enrollees
    Allocate(CommonArgs),
    /// Re-run the allocation over the whole budget list
    Sweep(CommonArgs),
    /// Run every stage in order
    All(CommonArgs),
}

impl Command {
    fn split(&self) -> (scenario::Subcommand, &CommonArgs) {
        match self {
            Command::Generate(a) => (scenario::Subcommand::Generate, a),
            Command::Quote(a) => (scenario::Subcommand::Quote, a),
            Command::Fit(a) => (scenario::Subcommand::Fit, a),
            Command::Effects(a) => (scenario::Subcommand::Effects, a),
            Command::Project(a) => (scenario::Subcommand::Project, a),
            Command::Allocate(a) => (scenario::Subcommand::Allocate, a),
            Command::Sweep(a) => (scenario::Subcommand::Sweep, a),
            Command::All(a) => (scenario::Subcommand::All, a),
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario config file (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's root seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the annual budget list, comma separated dollars
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<f64>>,
    /// Report format: csv or json
    #[arg(long)]
    format: Option<String>,
}

fn effective_config(args: &CommonArgs) -> Result<ScenarioConfig, Error> {
    let mut cfg = ScenarioConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.display().to_string();
    }
    if let Some(budgets) = &args.budgets {
        cfg.budgets_annual = budgets.clone();
    }
    if let Some(format) = &args.format {
        cfg.format = OutputFormat::parse(format)
            .ok_or_else(|| Error::Config(format!("unknown format {format:?} (csv or json)")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let (sub, args) = cli.command.split();
    let cfg = effective_config(args)?;
    let report = scenario::run(&cfg, sub)?;
    for note in &report.notes {
        println!("note: {note}");
    }
    for path in &report.artifacts {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let payload = serde_json::json!({
                "error": { "kind": err.kind(), "message": err.to_string() }
            });
            eprintln!("{payload}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
