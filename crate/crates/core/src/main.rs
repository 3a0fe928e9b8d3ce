use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cloud_ksvd::runner::{self, ConfigError, RawConfig, RunnerError};

#[derive(Parser)]
#[command(
    name = "cloud-ksvd",
    version,
    about = "Distributed K-SVD dictionary learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment.
    Run(Common),
    /// Run the cartesian product of every `sweep.<key>` list.
    Grid(Common),
    /// Synthetic consensus study over power and consensus round counts.
    ConsensusDemo(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value` (or `sweep.key=v1,v2`), applied after the config file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn raw(&self) -> Result<RawConfig, ConfigError> {
        let mut raw = match &self.config {
            Some(path) => RawConfig::from_file(path)?,
            None => RawConfig::default(),
        };
        for o in &self.overrides {
            raw.apply_override(o)?;
        }
        if let Some(seed) = self.seed {
            raw.set("seed", &seed.to_string())?;
        }
        if let Some(out) = &self.out {
            raw.set("out", &out.display().to_string())?;
        }
        Ok(raw)
    }
}

fn out_dir(raw: &RawConfig) -> PathBuf {
    PathBuf::from(raw.get("out").unwrap_or("out"))
}

fn execute(command: Command) -> Result<(), RunnerError> {
    match command {
        Command::Run(common) => {
            let raw = common.raw()?;
            if !raw.sweeps().is_empty() {
                return Err(ConfigError::Inconsistent(
                    "sweep keys are only valid with the grid subcommand".into(),
                )
                .into());
            }
            let cfg = raw.resolve()?;
            let manifest = runner::run_and_emit(&cfg)?;
            let last = manifest.records.last().expect("baseline row");
            println!(
                "iteration {}: mse {} psnr {} ssim {} dict_divergence {}",
                last.iteration,
                runner::format_float(last.mse),
                runner::format_float(last.psnr),
                runner::format_float(last.ssim),
                runner::format_float(last.dict_divergence)
            );
            println!(
                "wrote {} files to {}",
                manifest.outputs.len(),
                cfg.out.display()
            );
        }
        Command::Grid(common) => {
            let raw = common.raw()?;
            let out = out_dir(&raw);
            let cells = runner::run_grid(&raw, &out)?;
            println!("{} cells written under {}", cells.len(), out.display());
        }
        Command::ConsensusDemo(common) => {
            let raw = runner::consensus_demo_config(common.raw()?)?;
            let out = out_dir(&raw);
            let cells = runner::run_grid(&raw, &out)?;
            for cell in &cells {
                let last = cell.manifest.records.last().expect("baseline row");
                println!(
                    "{}: final dict_divergence {}",
                    cell.label,
                    runner::format_float(last.dict_divergence)
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
