//! `vhsc`: simulations, ladder comparisons and verification suites.
//!
//! Exit status is 0 when every assertion passed, 1 on a violation or an
//! aborted run, and 2 on usage or configuration errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vhsc::entropy::EntropyModel;
use vhsc::error::Error;
use vhsc::experiment::{
    emit_plots, resume_simulation, run_compare, run_simulation, run_suite, run_transport_diag, ExperimentConfig, Side, DEFAULT_LADDER,
    SUITES, TAIL_FILE,
};

#[derive(Parser)]
#[command(name = "vhsc", version, about = "Positive-density Hartree and Vlasov experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for ladder members.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Artifact directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Hartree evolution at the first ladder value.
    SimulateHartree {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint frame.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Vlasov evolution on the classical grid.
    SimulateVlasov {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Hartree ladder against the Vlasov solution.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Randomized and ladder inequality suites.
    CheckInequalities {
        #[command(flatten)]
        common: Common,
        /// Suite to run; repeatable. Defaults to the configured toggles, or all.
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
        suite: Vec<String>,
        #[arg(long)]
        trials: Option<usize>,
        /// Model name (boltzmann, fermi, bose) or a JSON model object.
        #[arg(long)]
        model: Option<String>,
    },
    /// Twin-run uniqueness diagnostics and transport checks.
    TransportDiag {
        #[command(flatten)]
        common: Common,
        /// Relative perturbation of the interaction amplitude.
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        /// Number of random transport instances.
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
    /// Plot-ready tables from an artifact directory.
    EmitPlots {
        #[command(flatten)]
        common: Common,
        /// Artifact directory; defaults to --out.
        dir: Option<PathBuf>,
    },
}

enum Failure {
    Violation(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Violation(_) | Error::Instability(_) | Error::Spectrum(_) => Failure::Violation(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn load_config(common: &Common) -> std::result::Result<ExperimentConfig, Failure> {
    let path = common.config.as_ref().ok_or_else(|| Failure::Usage("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: Option<&ExperimentConfig>, fallback: &str) -> PathBuf {
    common.out.clone().or_else(|| cfg.and_then(|c| c.out.clone())).unwrap_or_else(|| PathBuf::from("runs").join(fallback))
}

fn parse_model(text: &str) -> std::result::Result<EntropyModel, Failure> {
    let json = match text {
        "boltzmann" | "fermi" => format!("{{\"kind\": \"{text}\"}}"),
        "bose" => "{\"kind\": \"bose\", \"mu\": -1.0}".to_string(),
        other => other.to_string(),
    };
    serde_json::from_str(&json).map_err(|e| Failure::Usage(format!("invalid model {text:?}: {e}")))
}

fn simulate(common: &Common, resume: Option<&Path>, side: Side, name: &str) -> Outcome {
    let cfg = load_config(common)?;
    let dir = out_dir(common, Some(&cfg), name);
    let s = match resume {
        Some(frame) => resume_simulation(&cfg, side, frame, &dir)?,
        None => run_simulation(&cfg, side, &dir)?,
    };
    let last = s.records.last().expect("at least one record");
    println!("{} frames in {}; final entropy {:e}, free energy {:e}", s.frames.len(), s.dir.display(), last.entropy, last.free_energy);
    Ok(())
}

fn compare(common: &Common) -> Outcome {
    let cfg = load_config(common)?;
    let dir = out_dir(common, Some(&cfg), "compare");
    let rep = run_compare(&cfg, common.jobs, Some(&dir))?;
    println!("{:>10} {:>8} {:>14} {:>14}", "hbar", "N", "err_wigner", "err_density");
    for r in &rep.rows {
        println!("{:>10} {:>8} {:>14.6e} {:>14.6e}", r.hbar, r.n_quantum, r.err_wigner, r.err_density);
    }
    println!("fitted order {:.3}", rep.order_fit);
    println!(
        "initial entropy: classical {:.6e}, ladder extrapolation {:.6e} (relative error {:.3e})",
        rep.initial_entropy_classical, rep.initial_entropy_extrapolated, rep.initial_entropy_rel_error
    );
    let held = rep.entropy_bound.iter().all(|p| p.holds);
    println!("entropy bound against the ladder minimum (liminf surrogate): {}", if held { "holds" } else { "fails" });
    if !held {
        return Err(Failure::Violation("entropy bound fails at a checkpoint".into()));
    }
    Ok(())
}

fn check_inequalities(common: &Common, suites: &[String], trials: Option<usize>, model: Option<&str>) -> Outcome {
    let cfg = match &common.config {
        Some(_) => Some(load_config(common)?),
        None => None,
    };
    let model = match (model, &cfg) {
        (Some(m), _) => parse_model(m)?,
        (None, Some(c)) => c.model,
        (None, None) => EntropyModel::boltzmann(),
    };
    let trials = trials.or(cfg.as_ref().map(|c| c.trials)).unwrap_or(1000);
    let seed = common.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let ladder: Vec<f64> = cfg.as_ref().map(|c| c.hbar.clone()).unwrap_or_else(|| DEFAULT_LADDER.to_vec());
    let names: Vec<String> = if !suites.is_empty() {
        suites.to_vec()
    } else {
        match cfg.as_ref().map(|c| c.suites.enabled()) {
            Some(v) if !v.is_empty() => v.iter().map(|s| s.to_string()).collect(),
            _ => SUITES.iter().map(|s| s.to_string()).collect(),
        }
    };
    let dir = out_dir(common, cfg.as_ref(), "inequalities");
    fs::create_dir_all(&dir)?;
    let mut lines = fs::File::create(dir.join("verdicts.jsonl"))?;
    let mut failed = Vec::new();
    println!("{:<12} {:<6} summary", "suite", "pass");
    for name in &names {
        let v = run_suite(name, &model, trials, seed, &ladder, common.jobs)?;
        writeln!(lines, "{}", serde_json::to_string(&v)?)?;
        if v.suite == "highv" {
            fs::write(dir.join(TAIL_FILE), serde_json::to_string_pretty(&v.detail)?)?;
        }
        println!("{:<12} {:<6} {}", v.suite, if v.passed { "yes" } else { "NO" }, v.summary);
        if !v.passed {
            failed.push(v.suite);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Violation(format!("failed suites: {}", failed.join(", "))))
    }
}

fn transport(common: &Common, eps: f64, instances: usize) -> Outcome {
    let cfg = load_config(common)?;
    let dir = out_dir(common, Some(&cfg), "transport");
    let rep = run_transport_diag(&cfg, eps, instances, cfg.seed)?;
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("transport.json"), serde_json::to_string_pretty(&rep)?)?;
    let ot_gap = rep.ot.iter().map(|o| (o.monotone - o.lp).abs()).fold(0.0, f64::max);
    let convex = rep.ot.iter().all(|o| o.convex_quadratic && o.convex_power);
    println!("refinement gap ratio {:.3}", rep.refinement_ratio());
    println!("Newton gap: worst ratio {:.6} over {} seeds", rep.newton_worst, rep.seeds);
    println!("chain constants: link 1 {:.3e}, link 2 {:.3e}; dt-halving spread {:.3}", rep.chain.link1_max, rep.chain.link2_max, rep.chain_stability());
    println!("transport: worst LP gap {ot_gap:.3e}; convexity {}", if convex { "holds" } else { "fails" });
    if rep.chain.link1_max > 1.0 + 1e-6 || rep.chain_stability() > 2.0 || ot_gap > 1e-6 || !convex {
        return Err(Failure::Violation("transport diagnostics failed".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SimulateHartree { common, resume } => simulate(common, resume.as_deref(), Side::Quantum, "hartree"),
        Command::SimulateVlasov { common, resume } => simulate(common, resume.as_deref(), Side::Classical, "vlasov"),
        Command::Compare { common } => compare(common),
        Command::CheckInequalities { common, suite, trials, model } => check_inequalities(common, suite, *trials, model.as_deref()),
        Command::TransportDiag { common, eps, instances } => transport(common, *eps, *instances),
        Command::EmitPlots { common, dir } => {
            let d = dir.clone().or_else(|| common.out.clone()).unwrap_or_else(|| PathBuf::from("."));
            emit_plots(&d).map(|files| files.iter().for_each(|f| println!("{}", f.display()))).map_err(Failure::from)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation(m)) => {
            eprintln!("violation: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
