use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use shuttle_experiment::config::{validate_config, ExperimentKind};
use shuttle_experiment::feasibility;
use shuttle_experiment::run::run_experiment;

#[derive(Parser)]
#[command(name = "shuttle", version, about = "Single-electron shuttle simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory (default: the config's out_dir, else runs/<kind>-<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        kind: Option<ExperimentKind>,
    },
    /// Check a config file and report every problem found.
    Validate { config: PathBuf },
    /// Electrons a pillar can shuttle under a bias.
    Feasibility {
        /// [nm]
        #[arg(long, default_value_t = 5.0)]
        diameter: f64,
        /// [V]
        #[arg(long, default_value_t = 25.0)]
        voltage: f64,
    },
}

fn read(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            seed,
            workers,
            kind,
        } => {
            let mut cfg = validate_config(&read(&config)?)?;
            if let Some(s) = seed {
                cfg.params.master_seed = s;
                cfg.given.insert("seed".into(), s.to_string());
            }
            if let Some(w) = workers {
                cfg.ensemble.workers = Some(w);
                cfg.given.insert("workers".into(), w.to_string());
            }
            if let Some(k) = kind {
                cfg.kind = k;
                cfg.given.insert("kind".into(), k.to_string());
            }
            let out = out
                .or_else(|| cfg.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from(format!("runs/{}-{}", cfg.kind, cfg.params.master_seed)));
            let summary = run_experiment(&cfg, &out)?;
            println!("wrote {} files to {}", summary.files.len(), summary.out_dir.display());
            for (k, v) in &summary.diagnostics {
                println!("  {k} = {v}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => match validate_config(&read(&config)?) {
            Ok(cfg) => {
                println!("{}: ok ({})", config.display(), cfg.kind);
                Ok(ExitCode::SUCCESS)
            }
            Err(e) => {
                eprintln!("{}: {e}", config.display());
                Ok(ExitCode::FAILURE)
            }
        },
        Command::Feasibility { diameter, voltage } => {
            let f = feasibility::feasibility(diameter, voltage);
            println!("diameter = {diameter} nm, voltage = {voltage} V");
            println!("capacitance = {:e} F", f.capacitance);
            println!("electrons = {:.3} (rounds to {})", f.electrons, f.electrons_rounded);
            println!(
                "single-electron diameter = {:.3} pm",
                feasibility::diameter_for(1.0, voltage) * 1e3
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
