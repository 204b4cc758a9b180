//! `dyncs`: runs the experiment harnesses and writes CSV, SVG and JSON results.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dyncs_core::experiments::{
    run_dynamic_experiment, run_mri_experiment, run_phase_transition, run_tune, run_weak_threshold_sweep, write_output,
    DynamicReport, ExperimentConfig, ExperimentKind,
};
use dyncs_core::Error;

#[derive(Parser, Debug)]
#[command(name = "dyncs", version, about = "Recursive dynamic compressed sensing experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo exact-recovery probability against the number of measurements.
    Phase(Common),
    /// Recursive recovery of a simulated sparse sequence.
    Dynamic(Common),
    /// Recursive recovery of a phantom image sequence from Fourier samples.
    Mri(Common),
    /// Tune every algorithm's parameters on one calibration trial.
    Tune(Common),
    /// Weak threshold of weighted-l1 over a grid of weights.
    WeakThreshold(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated algorithm names.
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<String>>,
    /// Worker threads (default: all logical cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Write a JSON-lines per-frame trace of the first trial.
    #[arg(long)]
    trace: bool,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::Parse(_) | Error::Dimension(_) | Error::Io(_) => 2,
            _ => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

fn load_config(kind: ExperimentKind, c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure { code: 2, message: format!("reading {}: {e}", path.display()) })?;
            let cfg: ExperimentConfig = toml::from_str(&text)
                .map_err(|e| Failure { code: 2, message: format!("parsing {}: {e}", path.display()) })?;
            cfg
        }
        None => ExperimentConfig::new(kind),
    };
    cfg.kind = kind;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.trials {
        cfg.trials = t;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(a) = &c.algos {
        cfg.algos = a.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    if c.jobs.is_some() {
        cfg.jobs = c.jobs;
    }
    cfg.trace |= c.trace;
    cfg.validate()?;
    Ok(cfg)
}

fn written(path: PathBuf) {
    println!("wrote {}", path.display());
}

fn write_sequence_report(out: &Path, prefix: &str, title: &str, rep: &DynamicReport) -> Result<(), Failure> {
    written(write_output(out, &format!("{prefix}_nrmse.csv"), &rep.nrmse_csv())?);
    written(write_output(out, &format!("{prefix}_timing.csv"), &rep.timing_csv())?);
    written(write_output(out, &format!("{prefix}_nrmse.svg"), &rep.plot_svg(title))?);
    if let Some(tr) = &rep.trace {
        written(write_output(out, &format!("{prefix}_trace.jsonl"), tr)?);
    }
    if rep.fallbacks > 0 {
        eprintln!("warning: parameter tuning fell back to the BPDN weight in {} of {} trials", rep.fallbacks, rep.trials);
    }
    for (algo, series) in rep.algos.iter().zip(&rep.nrmse) {
        let mean = series.iter().sum::<f64>() / series.len().max(1) as f64;
        let max = series.iter().copied().fold(0.0, f64::max);
        println!("{:<20} mean nrmse {mean:.4}  max {max:.4}", algo.name());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Command::Phase(c) => {
            let cfg = load_config(ExperimentKind::Phase, &c)?;
            let rep = run_phase_transition(&cfg)?;
            written(write_output(&cfg.out, "phase.csv", &rep.to_csv())?);
            written(write_output(&cfg.out, "phase.svg", &rep.plot_svg())?);
        }
        Command::Dynamic(c) => {
            let cfg = load_config(ExperimentKind::Dynamic, &c)?;
            let rep = run_dynamic_experiment(&cfg)?;
            write_sequence_report(&cfg.out, "dynamic", "Simulated sequence", &rep)?;
        }
        Command::Mri(c) => {
            let cfg = load_config(ExperimentKind::Mri, &c)?;
            let rep = run_mri_experiment(&cfg)?;
            write_sequence_report(&cfg.out, "mri", "Phantom sequence", &rep)?;
        }
        Command::Tune(c) => {
            let cfg = load_config(ExperimentKind::Tune, &c)?;
            let rep = run_tune(&cfg)?;
            written(write_output(&cfg.out, "tune.json", &rep.to_json()?)?);
        }
        Command::WeakThreshold(c) => {
            let cfg = load_config(ExperimentKind::WeakThreshold, &c)?;
            let rep = run_weak_threshold_sweep(&cfg)?;
            written(write_output(&cfg.out, "weak_threshold.csv", &rep.to_csv())?);
            written(write_output(&cfg.out, "weak_threshold.svg", &rep.plot_svg())?);
            if let Some(t) = rep.best_tau() {
                println!("smallest threshold at tau = {t}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_split_config_from_numerical_errors() {
        assert_eq!(Failure::from(Error::InvalidParameter("x".into())).code, 2);
        assert_eq!(Failure::from(Error::Parse("x".into())).code, 2);
        assert_eq!(Failure::from(Error::Numerical("x".into())).code, 3);
        assert_eq!(Failure::from(Error::RankDeficient { sigma_min: 0.0, sigma_max: 1.0 }).code, 3);
    }

    #[test]
    fn flags_override_the_config() {
        let c = Common { seed: Some(5), trials: Some(3), algos: Some(vec![" bp".into(), "".into()]), ..Default::default() };
        let cfg = load_config(ExperimentKind::Phase, &c).ok().unwrap();
        assert_eq!((cfg.seed, cfg.trials), (5, 3));
        assert_eq!(cfg.algos, vec!["bp".to_string()]);
    }
}
