use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use whisker_core::experiment::{self, ExperimentConfig};
use whisker_core::{Error, ErrorKind};

/// Spring whisker terrain classification experiments.
#[derive(Debug, Parser)]
#[command(name = "whisker", version)]
struct Cli {
    /// JSON config file; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Modal response sweep over excitation frequency and amplitude.
    Sweep,
    /// Synthesize per-terrain feature datasets.
    Synth,
    /// Train and evaluate the classifier over seeded repetitions.
    TrainEval {
        /// Dataset directory written by `synth`; synthesized in memory if absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Repeat synth and train-eval at several robot speeds.
    SpeedSweep,
    /// Finite-difference check of the backpropagated gradients.
    GradCheck,
}

fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Physics => 3,
        ErrorKind::Divergence => 4,
        ErrorKind::Data => 5,
        ErrorKind::Io => 1,
    }
}

fn resolve(cli: &Cli) -> whisker_core::Result<ExperimentConfig> {
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
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> whisker_core::Result<()> {
    let config = resolve(cli)?;
    let out = config.out_dir.display();
    match &cli.command {
        Command::Sweep => {
            let s = experiment::run_sweep(&config)?;
            println!(
                "{}/{} cells peak within one bin of f_b; {}/{} columns amplitude-invariant",
                s.cells_within_one_bin, s.cells, s.amplitude_invariant_columns, s.columns
            );
            println!("wrote {out}/{}", experiment::SWEEP_CSV);
        }
        Command::Synth => {
            let m = experiment::run_synth(&config)?;
            for f in &m.files {
                println!(
                    "{:<11} {:>5} vectors  {}",
                    f.terrain.name(),
                    f.vectors,
                    f.file
                );
            }
            println!(
                "dropped {} of {} windows; wrote {}",
                m.dropped_windows,
                m.total_windows,
                experiment::dataset_dir(&config).display()
            );
        }
        Command::TrainEval { data } => {
            let dataset = match data {
                Some(dir) => experiment::load_dataset(dir)?,
                None => {
                    let table = config.profile_table()?;
                    let parts = experiment::synthesize_terrains(
                        &config,
                        &table,
                        config.speed_mps,
                        Default::default(),
                    )?;
                    whisker_core::signal::Dataset::concat(
                        parts.into_iter().map(|p| p.build.dataset),
                    )?
                }
            };
            let report = experiment::run_train_eval(&config, &dataset)?;
            print!("{}", report.to_text());
        }
        Command::SpeedSweep => {
            let report = experiment::run_speed_sweep(&config)?;
            print!("{}", report.to_text());
        }
        Command::GradCheck => {
            let r = experiment::run_grad_check(&config)?;
            for l in &r.report.layers {
                println!(
                    "layer {}: {} checked, {} skipped at kinks, {} unresolved, max rel err {:.3e}",
                    l.layer, l.checked, l.skipped_kinks, l.skipped_unresolved, l.max_relative_error
                );
            }
            println!("max relative error {:.3e}", r.report.max_relative_error);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
