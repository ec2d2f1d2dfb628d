//! `rdm`: runs scenario files, parameter sweeps, curve comparisons and fit
//! reports.
//!
//! Exit codes: 0 success, 1 solver failure or failed comparison, 2 input error.
//! `RDM_THREADS` sets the worker thread count.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use relaxed_damage::harness::{
    compare_curves, fit_report, max_pairwise_deviation, output_dir, run_scenario, Curve, RunResult, Window,
};
use relaxed_damage::scenario::Scenario;
use relaxed_damage::Error;

#[derive(Parser)]
#[command(name = "rdm", version, about = "Relaxed damage benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its CSV outputs.
    Run {
        scenario: PathBuf,
        /// Output directory (default: the scenario's `output` or out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario once per parameter value and compare the curves.
    Sweep {
        scenario: PathBuf,
        /// Dotted key path and comma-separated values, e.g. mesh.kappa=0.4,0.6
        #[arg(long)]
        param: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare candidate curves against a reference curve.
    Compare {
        reference: PathBuf,
        #[arg(required = true)]
        candidates: Vec<PathBuf>,
        #[arg(long)]
        tol: f64,
        /// Only compare beyond the reference peak.
        #[arg(long)]
        after_peak: bool,
    },
    /// Residuals of a scenario's material against a (strain, stress) CSV.
    Fit {
        experiment: PathBuf,
        scenario: PathBuf,
        /// Also write the pointwise residuals to this CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    /// Solver failure or failed comparison.
    Run(String),
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Solver { .. } | Error::Numerical(_) | Error::Material { .. } => Failure::Run(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let outcome = match cli.command {
        Command::Run { scenario, out } => run(&scenario, out.as_deref()),
        Command::Sweep { scenario, param, out } => sweep(&scenario, &param, out.as_deref()),
        Command::Compare { reference, candidates, tol, after_peak } => {
            compare(&reference, &candidates, tol, if after_peak { Window::AfterPeak } else { Window::All })
        }
        Command::Fit { experiment, scenario, out } => fit(&experiment, &scenario, out.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("RDM_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("RDM_THREADS must be a positive integer, got {v:?}"))?;
    if n == 0 {
        return Err("RDM_THREADS must be a positive integer, got 0".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn summarize(result: &RunResult, dir: &Path) -> Result<(), Failure> {
    let curve = result.curve();
    if let Some((x, y)) = curve.peak() {
        println!("{}: {} steps, peak {y:.6e} at {x:.6e}", dir.display(), curve.x.len());
    }
    match result.failure() {
        Some(msg) => Err(Failure::Run(msg.to_string())),
        None => Ok(()),
    }
}

fn run(path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let scenario = Scenario::load(path)?;
    let dir = output_dir(&scenario, out);
    let result = run_scenario(&scenario, &dir)?;
    summarize(&result, &dir)
}

fn sweep(path: &Path, param: &str, out: Option<&Path>) -> Result<(), Failure> {
    let (key, values) =
        param.split_once('=').ok_or_else(|| Failure::Input(format!("--param must be <path>=<v1,v2,...>, got {param:?}")))?;
    let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Failure::Input(format!("no values given for {key}")));
    }
    let base = Scenario::load(path)?;
    let root = output_dir(&base, out);
    let members: Vec<(String, Scenario)> = values
        .iter()
        .map(|v| Ok((v.to_string(), base.with_param(key, v)?)))
        .collect::<Result<_, Error>>()?;
    let results: Vec<(String, PathBuf, Result<RunResult, Error>)> = members
        .par_iter()
        .map(|(v, s)| {
            let dir = root.join(format!("{key}={v}"));
            let r = run_scenario(s, &dir);
            (v.clone(), dir, r)
        })
        .collect();
    let mut curves = Vec::new();
    let mut failure = None;
    for (v, dir, r) in results {
        let r = r?;
        if let Err(e) = summarize(&r, &dir) {
            eprintln!("{key}={v}: {}", match &e {
                Failure::Run(m) | Failure::Input(m) => m,
            });
            failure.get_or_insert(e);
        }
        curves.push(r.curve());
    }
    if curves.len() >= 2 {
        let all = max_pairwise_deviation(&curves, Window::All)?;
        let after = max_pairwise_deviation(&curves, Window::AfterPeak)?;
        println!("max pairwise deviation: {all:.6e} (after peak {after:.6e})");
    }
    failure.map_or(Ok(()), Err)
}

fn compare(reference: &Path, candidates: &[PathBuf], tol: f64, window: Window) -> Result<(), Failure> {
    if !(tol >= 0.0) {
        return Err(Failure::Input(format!("--tol must be non-negative, got {tol}")));
    }
    let reference_curve = Curve::from_result_csv(reference)?;
    let curves = candidates.iter().map(|c| Curve::from_result_csv(c)).collect::<Result<Vec<_>, _>>()?;
    let cmp = compare_curves(&reference_curve, &curves, tol, window)?;
    println!("candidate,deviation,pass");
    for (path, dev) in candidates.iter().zip(&cmp.deviations) {
        println!("{},{dev:.6e},{}", path.display(), *dev <= tol);
    }
    if cmp.pass {
        Ok(())
    } else {
        Err(Failure::Run(format!("deviation exceeds tolerance {tol}")))
    }
}

fn fit(experiment: &Path, scenario: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let data = Curve::from_csv(experiment, "strain", "stress")?;
    let scenario = Scenario::load(scenario)?;
    let report = fit_report(&data, &scenario)?;
    println!("points {}, rms {:.6e}, max {:.6e}", report.strain.len(), report.rms, report.max_abs);
    if let Some(path) = out {
        fs::write(path, report.to_csv())?;
    }
    Ok(())
}
