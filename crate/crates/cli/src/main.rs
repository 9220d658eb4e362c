//! `proxnet` command-line tool.

mod commands;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

/// Proximity-network reconstruction from Bluetooth discovery-scan logs.
///
/// Exit status is 0 on success, 1 when a pipeline stage fails and 2 for
/// usage or configuration errors (bad flags, unreadable or invalid config,
/// scenario or input files).
#[derive(Debug, Parser)]
#[command(name = "proxnet", version)]
struct Cli {
    /// More log output on stderr (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

/// Study configuration file plus flag overrides, which take precedence.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Study configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Backbone significance threshold.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Salt for MAC pseudonyms.
    #[arg(long)]
    pub salt: Option<String>,
    #[arg(long)]
    pub scan_interval_secs: Option<u64>,
    /// Top-level seed for every random choice (layout).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ScanInputs {
    /// Scan log in JSON lines.
    #[arg(long)]
    pub scans: PathBuf,
    /// Roster CSV: participant_id,mac_pseudonym,os.
    #[arg(long)]
    pub roster: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Rule {
    Or,
    And,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Semantics {
    MeanInterval,
    MaxGap,
}

#[derive(Debug, Clone, Args)]
pub struct LayoutArgs {
    #[arg(long, default_value_t = 500)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1000.0)]
    pub width: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub height: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort: scans.jsonl, roster.csv, study.toml and
    /// ground_truth.json.
    Simulate {
        /// Scenario file (TOML, or JSON with a .json extension).
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse, deduplicate and roster-filter a scan log.
    Ingest {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        inputs: ScanInputs,
        /// Output directory for events.jsonl and ingest.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the weighted proximity network.
    Weights {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        inputs: ScanInputs,
        /// Network JSON output.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        graphml: Option<PathBuf>,
    },
    /// Extract the disparity-filter backbone from a weighted network.
    Backbone {
        /// Weighted network JSON written by `weights`.
        #[arg(long)]
        weights: PathBuf,
        /// Significance threshold; defaults to the config value or 0.05.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum)]
        rule: Option<Rule>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        graphml: Option<PathBuf>,
    },
    /// Device scan rates and edge coverage.
    Coverage {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        inputs: ScanInputs,
        #[arg(long, value_enum)]
        semantics: Option<Semantics>,
        /// Comma-separated thresholds in minutes.
        #[arg(long, value_delimiter = ',')]
        thresholds_min: Option<Vec<u64>>,
        /// JSON output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-edge combined scans and mean inter-scan interval.
        #[arg(long)]
        edges_csv: Option<PathBuf>,
    },
    /// Score questionnaires and count severity bands.
    Survey {
        /// Survey CSV: participant_id,instrument,completed_at,i1..iN.
        #[arg(long)]
        surveys: PathBuf,
        /// Study configuration supplying band tables.
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for plot-ready band and score CSVs.
        #[arg(long)]
        csv_dir: Option<PathBuf>,
    },
    /// Force-directed layout of a backbone.
    Layout {
        /// Backbone JSON written by `backbone`.
        #[arg(long)]
        backbone: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        layout: LayoutArgs,
        /// Surveys whose PHQ-9 bands label the nodes.
        #[arg(long)]
        surveys: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for layout.json, layout_nodes.csv, layout_edges.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage and write only the report JSON.
    Report {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        inputs: ScanInputs,
        #[arg(long)]
        surveys: Option<PathBuf>,
        #[command(flatten)]
        layout: LayoutArgs,
        /// Report output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage and write the report with all artifacts.
    Pipeline {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        inputs: ScanInputs,
        #[arg(long)]
        surveys: Option<PathBuf>,
        #[command(flatten)]
        layout: LayoutArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a weighted network or backbone as GraphML.
    #[command(group(clap::ArgGroup::new("graph").required(true).args(["weights", "backbone"])))]
    ExportGraphml {
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        backbone: Option<PathBuf>,
        /// Surveys whose PHQ-9 bands become node attributes.
        #[arg(long)]
        surveys: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<proxnet::Error>() {
        Some(e) if e.is_config_error() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let result = match cli.command {
        Command::Simulate { scenario, out } => commands::simulate(&scenario, &out),
        Command::Ingest { config, inputs, out } => commands::ingest(&config, &inputs, &out),
        Command::Weights {
            config,
            inputs,
            out,
            graphml,
        } => commands::weights(&config, &inputs, &out, graphml.as_deref()),
        Command::Backbone {
            weights,
            alpha,
            rule,
            config,
            out,
            graphml,
        } => commands::backbone(&weights, alpha, rule, config.as_deref(), &out, graphml.as_deref()),
        Command::Coverage {
            config,
            inputs,
            semantics,
            thresholds_min,
            out,
            edges_csv,
        } => commands::coverage(
            &config,
            &inputs,
            semantics,
            thresholds_min,
            out.as_deref(),
            edges_csv.as_deref(),
        ),
        Command::Survey {
            surveys,
            config,
            out,
            csv_dir,
        } => commands::survey(&surveys, config.as_deref(), out.as_deref(), csv_dir.as_deref()),
        Command::Layout {
            backbone,
            seed,
            layout,
            surveys,
            config,
            out,
        } => commands::layout(&backbone, seed, &layout, surveys.as_deref(), config.as_deref(), &out),
        Command::Report {
            config,
            inputs,
            surveys,
            layout,
            out,
        } => commands::report(&config, &inputs, surveys, &layout, out.as_deref()),
        Command::Pipeline {
            config,
            inputs,
            surveys,
            layout,
            out,
        } => commands::pipeline(&config, &inputs, surveys, &layout, &out),
        Command::ExportGraphml {
            weights,
            backbone,
            surveys,
            config,
            out,
        } => commands::export_graphml(
            weights.as_deref(),
            backbone.as_deref(),
            surveys.as_deref(),
            config.as_deref(),
            &out,
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
