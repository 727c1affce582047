use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use coopalloc::ScenarioKind;
use coopalloc_cli::experiment::{build_network, load_topology, write_setup};
use coopalloc_cli::{run_experiment, run_solve, validate_mm1, ExperimentConfig};

#[derive(Parser)]
#[command(name = "coopalloc", version, about = "Downlink allocation with AP cooperation: solver and experiment harness")]
struct Cli {
    /// TOML experiment configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `scenarios` (comma-separated).
    #[arg(long, global = true, value_delimiter = ',')]
    scenario: Vec<ScenarioKind>,
    /// Overrides `sweep.grid` (comma-separated packets/s).
    #[arg(long, global = true, value_delimiter = ',')]
    lambda_grid: Vec<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the topology and resolved configuration.
    Generate,
    /// Solve one scenario at one traffic level.
    Solve {
        /// Mean arrival rate per UE, packets/s. Defaults to the first grid point.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Cutoff sweep over every configured scenario.
    Sweep,
    /// Compare a simulated M/M/1 queue with the analytic sojourn time.
    ValidateMm1 {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long, default_value_t = 1_000_000)]
        packets: usize,
    },
}

fn resolve(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if !cli.scenario.is_empty() {
        config.scenarios = cli.scenario.clone();
    }
    if !cli.lambda_grid.is_empty() {
        config.sweep.grid = cli.lambda_grid.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::ValidateMm1 { lambda, mu, packets } => {
            let report = validate_mm1(lambda, mu, packets, cli.seed.unwrap_or(1))?;
            println!(
                "lambda {} mu {} packets {}: simulated {:.6} s, analytic {:.6} s, relative error {:.4}%",
                report.lambda,
                report.mu,
                report.packets,
                report.simulated,
                report.analytic,
                100.0 * report.relative_error()
            );
        }
        Command::Generate => {
            let config = resolve(&cli)?;
            let topology = load_topology(&config)?;
            let net = build_network(&config, &topology)?;
            write_setup(&config, &topology)?;
            let unservable = net.servable().iter().filter(|s| !**s).count();
            println!(
                "{} APs, {} UEs, {} virtual APs, {unservable} UEs out of range; wrote {}",
                net.n_aps(),
                net.n_ues(),
                net.ext.len() - net.n_aps(),
                config.out_dir.join("topology.json").display()
            );
        }
        Command::Solve { lambda } => {
            let config = resolve(&cli)?;
            let kind = match config.scenarios[..] {
                [kind] if !cli.scenario.is_empty() => kind,
                _ => bail!("solve needs exactly one --scenario"),
            };
            let lambda = lambda.unwrap_or(config.sweep.grid[0]);
            let record = run_solve(&config, kind, lambda).context("solve failed")?;
            println!(
                "{kind} at {lambda} packets/s: utility {}, {} patterns, stable {}",
                record.utility.map_or("-inf".to_string(), |u| u.to_string()),
                record.patterns,
                record.stable
            );
        }
        Command::Sweep => {
            let config = resolve(&cli)?;
            let summary = run_experiment(&config, |sweep| {
                eprintln!("{:>16}: cutoff {} packets/s", sweep.kind.name(), sweep.cutoff);
            })
            .context("sweep failed")?;
            println!("wrote {}", summary.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
