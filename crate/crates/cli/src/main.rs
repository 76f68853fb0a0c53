use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scbeam_cli::{
    cmd_evolve, cmd_pattern, cmd_simulate, cmd_sweep_snr, default_config_toml, load_config,
    parse_precoder, ArraySelector, Overrides, ScSelection,
};
use scbeam_core::error::{Category, Error};

/// Link-level simulator for multiuser beamforming over spatially
/// consistent millimeter-wave channels.
#[derive(Parser)]
#[command(name = "scbeam", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario configuration file (TOML); the built-in default scenario
    /// when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Operating SNR grid override, dB.
    #[arg(long = "snr-db", value_delimiter = ',', num_args = 1..)]
    snr_db: Option<Vec<f64>>,
    /// Precoder subset override (zf, bd, slnr).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    precoders: Option<Vec<String>>,
    /// Spatial consistency selection: sc1, none or both.
    #[arg(long, default_value = "both")]
    sc: String,
    /// Ensemble size override.
    #[arg(long)]
    ensemble: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Composite array pattern as CSV plus a peak/HPBW summary.
    Pattern {
        /// Which panel: bs or ue.
        #[arg(long)]
        array: String,
        /// Scan grid resolution in degrees.
        #[arg(long = "resolution-deg", default_value_t = 1.0)]
        resolution_deg: f64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Per-step cluster parameter traces with and without spatial
    /// consistency, sharing common random numbers.
    Evolve {
        #[command(flatten)]
        run: RunArgs,
        /// Ensemble member to trace.
        #[arg(long, default_value_t = 0)]
        member: usize,
        /// UE to trace (1-based).
        #[arg(long, default_value_t = 1)]
        ue: usize,
    },
    /// Full pipeline: per-step records and SINR CDFs per precoder/mode.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// SNR point the CDF files are evaluated at, dB.
        #[arg(long = "cdf-snr-db", default_value_t = 5.0)]
        cdf_snr_db: f64,
        /// Also dump every channel matrix as framed binary records.
        #[arg(long = "dump-channels", default_value_t = false)]
        dump_channels: bool,
    },
    /// Ergodic sum spectral efficiency over the SNR grid.
    SweepSnr {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print the built-in default scenario as TOML.
    DefaultConfig {
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn overrides_of(run: &RunArgs) -> Result<Overrides, Error> {
    let precoders = match &run.precoders {
        None => None,
        Some(names) => Some(
            names
                .iter()
                .map(|n| parse_precoder(n))
                .collect::<Result<Vec<_>, _>>()?,
        ),
    };
    Ok(Overrides {
        seed: run.seed,
        ensemble: run.ensemble,
        snr_db: run.snr_db.clone(),
        precoders,
    })
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Pattern {
            array,
            resolution_deg,
            config,
            seed,
            out,
        } => {
            let overrides = Overrides {
                seed,
                ..Overrides::default()
            };
            let cfg = load_config(config.as_deref(), &overrides)?;
            let summary = cmd_pattern(&cfg, ArraySelector::parse(&array)?, resolution_deg, &out)?;
            println!(
                "{} pattern: peak {:.2} dBi, HPBW azimuth {:.2} deg, elevation {:.2} deg",
                summary.array, summary.peak_dbi, summary.hpbw_azimuth_deg, summary.hpbw_elevation_deg
            );
            Ok(())
        }
        Command::Evolve { run, member, ue } => {
            let cfg = load_config(run.config.as_deref(), &overrides_of(&run)?)?;
            let path = cmd_evolve(&cfg, member, ue, &run.out)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Simulate {
            run,
            cdf_snr_db,
            dump_channels,
        } => {
            let cfg = load_config(run.config.as_deref(), &overrides_of(&run)?)?;
            let selection = ScSelection::parse(&run.sc)?;
            cmd_simulate(&cfg, selection, cdf_snr_db, dump_channels, &run.out)?;
            println!("wrote simulation outputs to {}", run.out.display());
            Ok(())
        }
        Command::SweepSnr { run } => {
            let cfg = load_config(run.config.as_deref(), &overrides_of(&run)?)?;
            let selection = ScSelection::parse(&run.sc)?;
            cmd_sweep_snr(&cfg, selection, &run.out)?;
            println!("wrote sweep outputs to {}", run.out.display());
            Ok(())
        }
        Command::DefaultConfig { out } => {
            let text = default_config_toml()?;
            match out {
                Some(path) => std::fs::write(&path, text).map_err(|source| Error::Io {
                    path: path.display().to_string(),
                    source,
                })?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}

fn exit_code(category: Category) -> u8 {
    match category {
        Category::Config => 2,
        Category::Io => 3,
        Category::Numerical => 4,
        Category::Unsupported => 5,
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("SCBEAM_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = serde_json::json!({
                "category": e.category().as_str(),
                "message": e.to_string(),
            });
            eprintln!("error: {payload}");
            ExitCode::from(exit_code(e.category()))
        }
    }
}
