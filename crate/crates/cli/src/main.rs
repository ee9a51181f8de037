use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use iff_cli::{run, Settings};

/// Monte Carlo experiments for integer forcing-and-forward relaying.
#[derive(Debug, Parser)]
#[command(name = "iff", version)]
struct Args {
    /// Flat `key = value` scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario, applied before the config file.
    #[arg(long, value_parser = ["fig2", "fig3", "fig6", "fig7"])]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory for CSVs and the manifest.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// SNR grid in dB, `start:step:stop` or a comma list.
    #[arg(long)]
    snr: Option<String>,
}

fn settings(args: &Args) -> anyhow::Result<Settings> {
    let mut s = match &args.preset {
        Some(p) => Settings::preset(p)?,
        None => Settings::new(),
    };
    if let Some(path) = &args.config {
        s = s.overlay(&Settings::load(path)?);
    }
    if let Some(seed) = args.seed {
        s.set("seed", seed.to_string())?;
    }
    if let Some(t) = args.trials {
        s.set("trials", t.to_string())?;
    }
    if let Some(snr) = &args.snr {
        s.set("snr", snr.clone())?;
    }
    Ok(s)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = settings(&args).and_then(|s| Ok(s.resolve()?)).and_then(|sc| Ok(run(&sc, &args.out)?));
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
