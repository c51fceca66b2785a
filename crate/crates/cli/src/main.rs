use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lrei_cli::commands;
use lrei_cli::config::ExperimentConfig;
use lrei_cli::CliError;

#[derive(Parser)]
#[command(
    name = "lrei",
    version,
    about = "Low-rank spin density-matrix dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one initial state and write its observables.
    Run(Common),
    /// Fit convergence orders against a reference solution.
    Converge(Common),
    /// Time steps over a grid of sizes, ranks and schemes.
    Bench(Common),
    /// Check a configuration and estimate its cost.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    config: PathBuf,
    /// Override a config key, e.g. `--set params.kappa=0.1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// `lrei` or `dense`.
    #[arg(long)]
    engine: Option<String>,
    /// Output CSV; the manifest is written beside it.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut overrides = self.overrides.clone();
        let quote = |s: &str| toml::Value::String(s.to_string()).to_string();
        if let Some(e) = &self.engine {
            overrides.push(format!("engine={}", quote(e)));
        }
        if let Some(o) = &self.output {
            overrides.push(format!("output={}", quote(&o.to_string_lossy())));
        }
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        ExperimentConfig::load(&self.config, &overrides)
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(c) => {
            let exp = c.load()?.validate()?;
            let m = commands::run(&exp)?;
            eprintln!(
                "wrote {} rows to {} (mean step {:.3e} s)",
                m.rows,
                m.csv.display(),
                m.mean_step_seconds.unwrap_or(0.0)
            );
        }
        Command::Converge(c) => {
            let exp = c.load()?.validate()?;
            let (rows, metric) = commands::converge(&exp)?;
            eprintln!("{metric}");
            let mut seen = Vec::new();
            for r in &rows {
                if !seen.contains(&r.scheme) {
                    seen.push(r.scheme);
                    eprintln!("{}: fitted order {:.3}", r.scheme, r.fitted_order);
                }
            }
        }
        Command::Bench(c) => {
            let exp = c.load()?.validate()?;
            let cells = commands::bench(&exp)?;
            let failed = cells.iter().filter(|c| c.error.is_some()).count();
            eprintln!("{} cells, {failed} skipped", cells.len());
        }
        Command::Validate(c) => {
            let exp = c.load()?.validate()?;
            let rep = commands::validate(&exp)?;
            println!(
                "ok: {} sites (N = {}), {} edges, {} {}, {} steps, rank {}, about {:.3} GiB",
                rep.n_sites,
                rep.dimension,
                rep.edges,
                rep.model,
                rep.scheme,
                rep.steps,
                rep.rank,
                rep.estimated_bytes as f64 / (1u64 << 30) as f64
            );
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
