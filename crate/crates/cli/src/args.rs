//! Command-line surface. Run flags are turned into `key = value` overrides
//! so the config file and the flags share one parser.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "aftershock",
    version,
    about = "Aftershock statistics after a price crash"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a minute-bar file, remove no-trading gaps, write series.csv.
    Ingest(IngestArgs),
    /// Full analysis of a minute-bar file.
    Analyze(AnalyzeArgs),
    /// Full analysis of a generated Omori-Utsu catalog.
    Simulate(SimulateArgs),
    /// Event-event correlation, aging and collapse for an event CSV.
    Collapse(CollapseArgs),
    /// Re-render charts and a text summary from a finished run.
    Report(ReportArgs),
}

#[derive(Debug, Args, Default)]
pub struct ColumnArgs {
    #[arg(long, value_name = "NAME")]
    pub date_column: Option<String>,
    #[arg(long, value_name = "NAME")]
    pub time_column: Option<String>,
    #[arg(long, value_name = "NAME")]
    pub price_column: Option<String>,
    /// Field separator: one character or `tab`.
    #[arg(long)]
    pub delimiter: Option<String>,
    #[arg(long, value_name = "FMT")]
    pub date_format: Option<String>,
    #[arg(long, value_name = "FMT")]
    pub time_format: Option<String>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub columns: ColumnArgs,
    /// Re-base the minute axis on this instant (YYYY-MM-DD HH:MM).
    #[arg(long)]
    pub crash: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Settings shared by `analyze` and `simulate`.
#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// `key = value` file; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Omori grid step in minutes.
    #[arg(long)]
    pub grid_step: Option<f64>,
    /// Omori fit horizon in minutes.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Search over c (otherwise c = 0).
    #[arg(long)]
    pub c_search: Option<bool>,
    /// Waiting-time histogram bin size in minutes.
    #[arg(long)]
    pub bin_size: Option<f64>,
    #[arg(long)]
    pub tau_min: Option<f64>,
    #[arg(long)]
    pub tau_max: Option<f64>,
    /// Waiting event times for the aging curves.
    #[arg(long, value_delimiter = ',')]
    pub n_w: Option<Vec<usize>>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub bootstrap_seed: Option<u64>,
    /// Bootstrap resamples (0 skips the bootstrap and the Markov check).
    #[arg(long)]
    pub resamples: Option<usize>,
    /// Defaults to $AFTERSHOCK_OUT_DIR, then ./aftershock-out.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write SVG charts.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub columns: ColumnArgs,
    /// Crash instant, YYYY-MM-DD HH:MM.
    #[arg(long)]
    pub crash: Option<String>,
    /// Post-crash window in exchange days.
    #[arg(long)]
    pub window_days: Option<usize>,
    /// Threshold multiples of sigma.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sim_p: Option<f64>,
    #[arg(long)]
    pub sim_a: Option<f64>,
    #[arg(long)]
    pub sim_c: Option<f64>,
    #[arg(long)]
    pub sim_horizon: Option<f64>,
    /// Floor event times to whole minutes.
    #[arg(long)]
    pub sim_round: Option<bool>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct CollapseArgs {
    /// CSV with a `t` column, as written by `analyze`.
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,10,20,30,40,50")]
    pub n_w: Vec<usize>,
    #[arg(long, default_value_t = 60)]
    pub n_max: usize,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding report.json.
    #[arg(long)]
    pub from: PathBuf,
    /// Where charts and summary.txt go; defaults to <from>/rendered.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

type Overrides = Vec<(&'static str, String)>;

fn push<T: ToString>(out: &mut Overrides, key: &'static str, v: &Option<T>) {
    if let Some(v) = v {
        out.push((key, v.to_string()));
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ColumnArgs {
    pub fn overrides(&self, out: &mut Overrides) {
        push(out, "date_column", &self.date_column);
        push(out, "time_column", &self.time_column);
        push(out, "price_column", &self.price_column);
        push(out, "delimiter", &self.delimiter);
        push(out, "date_format", &self.date_format);
        push(out, "time_format", &self.time_format);
    }
}

impl RunArgs {
    pub fn overrides(&self, out: &mut Overrides) {
        push(out, "grid_step", &self.grid_step);
        push(out, "horizon", &self.horizon);
        push(out, "c_search", &self.c_search);
        push(out, "bin_size", &self.bin_size);
        push(out, "tau_min", &self.tau_min);
        push(out, "tau_max", &self.tau_max);
        if let Some(n) = &self.n_w {
            out.push(("n_w", join(n)));
        }
        push(out, "n_max", &self.n_max);
        push(out, "bootstrap_seed", &self.bootstrap_seed);
        push(out, "resamples", &self.resamples);
        push(out, "out_dir", &self.out_dir.as_ref().map(|p| p.display()));
        if self.svg {
            out.push(("svg", "true".into()));
        }
    }
}

impl AnalyzeArgs {
    pub fn overrides(&self) -> Overrides {
        let mut out = Vec::new();
        push(&mut out, "input", &self.input.as_ref().map(|p| p.display()));
        self.columns.overrides(&mut out);
        push(&mut out, "crash", &self.crash);
        push(&mut out, "window_days", &self.window_days);
        if let Some(t) = &self.thresholds {
            out.push(("thresholds", join(t)));
        }
        self.run.overrides(&mut out);
        out
    }
}

impl SimulateArgs {
    pub fn overrides(&self) -> Overrides {
        let mut out = Vec::new();
        push(&mut out, "seed", &self.seed);
        push(&mut out, "sim_p", &self.sim_p);
        push(&mut out, "sim_a", &self.sim_a);
        push(&mut out, "sim_c", &self.sim_c);
        push(&mut out, "sim_horizon", &self.sim_horizon);
        push(&mut out, "sim_round", &self.sim_round);
        self.run.overrides(&mut out);
        out
    }
}
