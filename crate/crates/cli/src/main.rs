//! `lorenz-abc`: simulate grouped income data, fit generalized-beta models to
//! it, and run the simulation studies. Every subcommand reads one TOML run
//! configuration; see the README for the keys.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lorenz_abc::experiments::{self, ExperimentError, LoadedConfig};

#[derive(Parser)]
#[command(name = "lorenz-abc", version, about = "Bayesian Lorenz-curve fitting from grouped income data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sample and write its grouped shares (data.csv, truth.toml).
    Simulate(Common),
    /// Fit the configured model by ABC or an MCMC baseline.
    Fit(Common),
    /// Rank models by rejection-ABC evidence.
    Evidence(Common),
    /// Gini bounds from the grouped data alone.
    Bounds(Common),
    /// Run a replicated simulation study.
    Replicate(Common),
    /// Print a saved report.toml or study.toml.
    Report {
        /// Report file; overrides `[report] input`.
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// List the built-in presets.
    Presets,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Presets merged under the configuration, comma separated.
    #[arg(long, value_delimiter = ',')]
    preset: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<LoadedConfig, ExperimentError> {
        let loaded = LoadedConfig::from_path(self.config.as_deref(), &self.preset)?
            .with_overrides(self.seed, self.out.as_deref())?;
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        Ok(loaded)
    }
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Simulate(c) => {
            let path = experiments::cmd_simulate(&c.load()?)?;
            println!("{}", path.display());
        }
        Command::Fit(c) => print!("{}", experiments::render_fit(&experiments::cmd_fit(&c.load()?)?)),
        Command::Evidence(c) => {
            let table = experiments::cmd_evidence(&c.load()?)?;
            println!("rank  model  log evidence  accepted/trials  (eps {})", table.eps);
            for r in &table.rows {
                println!("{:>4}  {:<5}  {:>12.4}  {}/{}", r.rank, r.model, r.log_evidence, r.acceptances, r.trials);
            }
        }
        Command::Bounds(c) => {
            let b = experiments::cmd_bounds(&c.load()?)?;
            match b.upper {
                Some(u) => println!("Gini in [{:.4}, {:.4}]", b.lower, u),
                None => println!("Gini >= {:.4} (no class boundaries, upper bound unavailable)", b.lower),
            }
            if let Some(p) = b.prob_inside {
                println!("posterior mass inside: {p:.3}");
            }
        }
        Command::Replicate(c) => {
            let study = experiments::cmd_replicate(&c.load()?)?;
            print!("{}", experiments::render_study(&study));
            study.check_complete()?;
        }
        Command::Report { input, common } => {
            let mut loaded = common.load()?;
            if let Some(p) = input {
                loaded.config.report = Some(experiments::ReportConfig { input: p });
            }
            print!("{}", experiments::cmd_report(&loaded)?);
        }
        Command::Presets => {
            for name in experiments::preset_names() {
                println!("{name}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
