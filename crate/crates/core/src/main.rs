use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cam_core::class_stats::{build_class_table, reference_table, write_class_table_csv, write_reference_csv, NoisyPowerRatio};
use cam_core::harness::{classify_capture, export_captures, sweep, write_sweep_csv, ExperimentConfig, ModulationPlan};
use cam_core::{Error, Result};
use clap::{Parser, Subcommand};

/// Blind channel-access-method classification: analytic tables, Monte Carlo
/// sweeps and single-capture classification.
#[derive(Debug, Parser)]
#[command(name = "camc", version)]
struct Cli {
    /// Experiment JSON (scenario, optional grid, trials, seed).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials per grid cell; overrides the config file.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output file (table, sweep) or directory (export); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analytic C42 and J*var per constellation, or the per-class table.
    Table {
        /// Emit the fifteen-class table at the scenario's SNR and J instead.
        #[arg(long)]
        classes: bool,
    },
    /// Run the configured grid and write one CSV row per cell.
    Sweep,
    /// Classify one exported capture and print the result as JSON.
    Classify {
        /// Path to the `.iq` file; its `.json` sidecar must sit next to it.
        capture: PathBuf,
        /// Noise power to assume instead of the sidecar's value.
        #[arg(long)]
        noise_variance: Option<f64>,
    },
    /// Write synthesized captures of the configured scenario.
    Export {
        /// Number of captures.
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Export the configured modulation only instead of cycling the
        /// method's classes.
        #[arg(long)]
        fixed: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("camc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::Argument("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let mut exp = match &cli.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => serde_json::from_str("{}")?,
    };
    if let Some(s) = cli.seed {
        exp.seed = s;
    }
    if let Some(t) = cli.trials {
        exp.trials = t;
    }

    match cli.command {
        Command::Table { classes: false } => write_reference_csv(output(cli.out.as_deref())?, &reference_table()),
        Command::Table { classes: true } => {
            let sc = &exp.scenario;
            sc.validate()?;
            let table = build_class_table(sc.cdma_users, NoisyPowerRatio::from_snr_db(sc.snr_db)?, sc.j)?;
            write_class_table_csv(output(cli.out.as_deref())?, &table)
        }
        Command::Sweep => {
            let grid = exp
                .grid
                .as_ref()
                .ok_or_else(|| Error::Config("sweep needs a `grid` section in --config".into()))?;
            let rows = sweep(&exp.scenario, grid, exp.trials, exp.seed)?;
            write_sweep_csv(output(cli.out.as_deref())?, &rows)
        }
        Command::Classify { capture, noise_variance } => {
            let res = classify_capture(&capture, noise_variance)?;
            let mut out = output(cli.out.as_deref())?;
            serde_json::to_writer_pretty(&mut out, &res)?;
            writeln!(out)?;
            Ok(())
        }
        Command::Export { count, fixed } => {
            let dir = cli.out.ok_or_else(|| Error::Argument("export needs --out <directory>".into()))?;
            let plan = if fixed { ModulationPlan::Fixed } else { ModulationPlan::ClassAverage };
            let paths = export_captures(&exp.scenario, plan, count, exp.seed, &dir)?;
            for p in paths {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}
