//! Scenario runner: resolves settings, sweeps every scheme over the SNR grid
//! and writes one CSV per scheme plus a manifest.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use iff::{monte_carlo, McPoint, Scheme};
use rayon::prelude::*;

pub use config::{parse_scheme, parse_snr, scheme_token, ConfigError, Scenario, Settings};

pub const CSV_HEADER: &str = "snr_db,avg_sum_rate,outage_prob,single_eq_fraction,avg_iters_ma,avg_iters_bc,infeasible_draws";
pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scheme {scheme}: {source}")]
    Sweep { scheme: String, source: iff::IffError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// CSV body for one scheme.
pub fn csv(points: &[McPoint], equation_mse: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push_str(",nonconverged");
    let l = points.first().map_or(0, |p| p.mean_equation_mse.len());
    if equation_mse {
        for i in 1..=l {
            write!(out, ",mse_eq{i}").unwrap();
        }
    }
    out.push('\n');
    for p in points {
        write!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.snr_db, p.avg_sum_rate, p.outage_prob, p.single_eq_fraction, p.avg_iters_ma, p.avg_iters_bc, p.infeasible_draws, p.nonconverged
        )
        .unwrap();
        if equation_mse {
            for e in &p.mean_equation_mse {
                write!(out, ",{e}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

pub fn csv_path(out_dir: &Path, scenario: &Scenario, scheme: &Scheme) -> PathBuf {
    out_dir.join(format!("{}_{}.csv", scenario.name, scheme.label))
}

/// Runs every scheme and writes the CSVs and the manifest into `out_dir`.
/// Returns the CSV paths in scheme order.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| RunError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let sweeps: Vec<Result<Vec<McPoint>, RunError>> = scenario
        .schemes
        .par_iter()
        .map(|s| {
            monte_carlo(&scenario.cfg, s, &scenario.snr, scenario.trials).map_err(|source| RunError::Sweep { scheme: scheme_token(s), source })
        })
        .collect();
    let mut paths = Vec::with_capacity(sweeps.len());
    for (scheme, sweep) in scenario.schemes.iter().zip(sweeps) {
        let points = sweep?;
        let path = csv_path(out_dir, scenario, scheme);
        std::fs::write(&path, csv(&points, scenario.equation_mse)).map_err(io(&path))?;
        let nonconv = points.iter().map(|p| p.nonconverged).fold(0.0, f64::max);
        eprintln!("{}: {} points x {} trials -> {} (max nonconverged fraction {nonconv})", scheme_token(scheme), points.len(), scenario.trials, path.display());
        paths.push(path);
    }
    let manifest = out_dir.join(MANIFEST);
    std::fs::write(&manifest, scenario.manifest()).map_err(io(&manifest))?;
    Ok(paths)
}
