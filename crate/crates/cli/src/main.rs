use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Map-match fleet GPS tracks to a road inventory and verify or create
/// winter maintenance work orders.
#[derive(Parser, Debug)]
#[command(name = "plowtrack", version)]
struct Cli {
    #[command(flatten)]
    settings: Settings,

    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the config file.
#[derive(Args, Debug, Default)]
pub struct Settings {
    /// TOML file with run settings
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// IANA timezone for local days and zone-less timestamps
    #[arg(long, global = true)]
    pub tz: Option<String>,
    /// geohash precision of the road index
    #[arg(long, global = true)]
    pub precision: Option<usize>,
    /// longest gap credited between two samples, in seconds
    #[arg(long, global = true)]
    pub cap_seconds: Option<f64>,
    /// absolute match tolerance in hours
    #[arg(long, global = true)]
    pub abs_tol: Option<f64>,
    /// relative match tolerance
    #[arg(long, global = true)]
    pub rel_tol: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the tiled road index from inventory and mile marker tables
    BuildIndex {
        #[arg(long)]
        inventory: PathBuf,
        #[arg(long)]
        markers: PathBuf,
        /// output directory for the tile store
        #[arg(long)]
        out: PathBuf,
    },
    /// Map-match a GPS file against an index
    Match {
        #[arg(long)]
        gps: PathBuf,
        #[arg(long)]
        index: PathBuf,
        /// output directory for matched tracks and rejects.csv
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify reported work-order hours against matched tracks
    Verify {
        #[arg(long)]
        work_orders: PathBuf,
        #[arg(long)]
        matched: PathBuf,
        #[arg(long)]
        index: PathBuf,
        /// report path; a JSON copy is written next to it
        #[arg(long)]
        out: PathBuf,
    },
    /// Create work orders with computed hours for vehicle activities
    Create {
        #[arg(long)]
        activities: PathBuf,
        #[arg(long)]
        matched: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sampling interval statistics of a GPS file
    Stats {
        #[arg(long)]
        gps: PathBuf,
        /// optional JSON output
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = commands::resolve_config(&cli.settings).and_then(|cfg| match cli.command {
        Command::BuildIndex { inventory, markers, out } => commands::build_index(&cfg, &inventory, &markers, &out),
        Command::Match { gps, index, out } => commands::match_gps(&cfg, &gps, &index, &out),
        Command::Verify { work_orders, matched, index, out } => {
            commands::verify(&cfg, &work_orders, &matched, &index, &out)
        }
        Command::Create { activities, matched, index, out } => {
            commands::create(&cfg, &activities, &matched, &index, &out)
        }
        Command::Stats { gps, out } => commands::stats(&cfg, &gps, out.as_deref()),
    });
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
