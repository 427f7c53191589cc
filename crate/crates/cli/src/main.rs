use std::path::PathBuf;
use std::process::ExitCode;

use aftershock_cli::args::{Cli, Command};
use aftershock_cli::config::{parse_instant, OUT_DIR_ENV};
use aftershock_cli::pipeline::{rerender, run_collapse, run_ingest, summary};
use aftershock_cli::{run_pipeline, CliError, RunConfig};
use clap::error::ErrorKind;
use clap::Parser;

fn default_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(aftershock_cli::config::DEFAULT_OUT_DIR))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let env_dir = std::env::var(OUT_DIR_ENV).ok();
    match cli.command {
        Command::Ingest(a) => {
            let mut overrides = Vec::new();
            a.columns.overrides(&mut overrides);
            let cfg = RunConfig::load(None, None, &overrides)?;
            let crash = a
                .crash
                .as_deref()
                .map(|s| {
                    parse_instant(s)
                        .ok_or_else(|| CliError::Usage(format!("--crash: cannot parse `{s}`")))
                })
                .transpose()?;
            let out = default_out_dir(a.out_dir);
            let series = run_ingest(&a.input, &cfg.columns, crash, &out)?;
            println!(
                "{} minutes, {} no-trading gaps removed; wrote {}",
                series.len(),
                series.gap_count(),
                out.join("series.csv").display()
            );
        }
        Command::Analyze(a) => {
            let cfg = RunConfig::load(a.run.config.as_deref(), env_dir.as_deref(), &a.overrides())?;
            if cfg.input.is_none() {
                return Err(CliError::Usage(
                    "analyze needs --input (or `input` in the config file)".into(),
                ));
            }
            let report = run_pipeline(&cfg)?;
            print!("{}", summary(&report));
        }
        Command::Simulate(a) => {
            let mut cfg =
                RunConfig::load(a.run.config.as_deref(), env_dir.as_deref(), &a.overrides())?;
            if cfg.input.take().is_some() {
                log::warn!("simulate ignores `input`");
            }
            let report = run_pipeline(&cfg)?;
            print!("{}", summary(&report));
        }
        Command::Collapse(a) => {
            let out = default_out_dir(a.out_dir);
            let res = run_collapse(&a.events, &a.n_w, a.n_max, &out, a.svg)?;
            for sf in &res.scale_factors {
                println!("n_w = {}: f = {:.4}", sf.n_w, sf.f);
            }
            if let (Some(a), Some(g)) = (res.a, res.gamma) {
                println!("f(n_w) = {a:.5} n_w^{g:.4} + 1");
            }
        }
        Command::Report(a) => {
            let out = a.out_dir.unwrap_or_else(|| a.from.join("rendered"));
            let report = rerender(&a.from, &out)?;
            print!("{}", summary(&report));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
