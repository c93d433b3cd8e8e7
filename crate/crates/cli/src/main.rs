// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kfspec_cli::config::{self, parse_scalar};
use kfspec_cli::error::exit;
use kfspec_cli::report::{Relation, Verdict};
use kfspec_cli::{execute, prepare, writers, CliError, Command, Overrides, Report};

#[derive(Parser)]
#[command(name = "kfspec", version, about = "Spectral dimensions of Kreĭn–Feller operators for Gibbs measures")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Experiment config (TOML, or JSON with a .json extension).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Output directory; defaults to the config's output.dir, then ./kfspec-out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Top level for the moment sums and the pressure.
    #[arg(long, global = true)]
    level: Option<usize>,

    /// Atlas resolution, e.g. 1e-5 or 3^-10.
    #[arg(long, global = true, value_parser = parse_resolution)]
    resolution: Option<f64>,

    /// Work budget for exhaustive loops.
    #[arg(long, global = true)]
    budget: Option<u64>,

    /// Recorded in the report; no computation is randomized.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Moment sums, beta curves and the q_rho estimate.
    Lq,
    /// tau(q) of a self-similar measure and the overlap formula.
    Tau,
    /// Pressure bounds and the bracket of their zeros.
    Pressure,
    /// All spectral-dimension predictions.
    Sdim,
    /// Smallest eigenvalues of the discretized string.
    Eigen,
    /// Eigenvalue counting function and its log-log slope.
    Count,
    /// Every applicable analysis with cross-checks.
    Verify,
    /// The analyses listed in the config.
    Run,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Lq => Command::Lq,
            Cmd::Tau => Command::Tau,
            Cmd::Pressure => Command::Pressure,
            Cmd::Sdim => Command::Sdim,
            Cmd::Eigen => Command::Eigen,
            Cmd::Count => Command::Count,
            Cmd::Verify => Command::Verify,
            Cmd::Run => Command::Run,
        }
    }
}

fn parse_resolution(s: &str) -> Result<f64, String> {
    parse_scalar(s)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("KFSPEC_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("KFSPEC_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("KFSPEC_THREADS: {e}")))
}

fn summarize(r: &Report) {
    let show = |label: &str, e: &kfspec_cli::report::Estimate| match e.uncertainty {
        Some(u) => println!("{label:<24} {:.7} ± {u:.1e}", e.value),
        None => println!("{label:<24} {:.7} (exact)", e.value),
    };
    if let Some(l) = &r.lq {
        show("q_rho", &l.q_rho);
        show("minkowski dimension", &l.minkowski);
    }
    if let Some(t) = &r.tau {
        show("tau(0)", &t.tau_at_zero);
        show("similarity root", &t.similarity_root);
        if let Some(o) = &t.overlap {
            show("zeta", &o.zeta);
            show("q_tilde", &o.q_tilde);
            show("s_rho (overlap)", &o.s_rho);
        }
    }
    if let Some(p) = &r.pressure {
        show("pressure zero", &p.zero);
    }
    if let Some(p) = &r.pencil {
        println!("{:<24} {} ({})", "atoms", p.atoms, p.source);
        for (i, v) in p.eigenvalues.iter().take(5).enumerate() {
            println!("{:<24} {v:.8e}", format!("lambda_{}", i + 1));
        }
    }
    if let Some(c) = &r.counting {
        show("counting slope", &c.slope);
    }
    if let Some(s) = &r.singularity {
        println!("{:<24} {}", "singularity", serde_json::to_string(s).unwrap().trim_matches('"'));
    }
    for c in &r.cross_checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        match c.relation {
            Relation::Within => println!(
                "{status} {:<34} |{:.6} - {:.6}| = {:.2e} (tol {:.1e})",
                c.name, c.lhs, c.rhs, c.difference, c.tolerance
            ),
            Relation::AtMost => println!("{status} {:<34} {:.3e} <= {:.3e}", c.name, c.lhs, c.rhs),
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    configure_threads()?;
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let cfg = config::load(&path)?;
    let command: Command = cli.command.into();
    let overrides = Overrides {
        level: cli.level,
        resolution: cli.resolution,
        budget: cli.budget,
        seed: cli.seed,
    };
    let out_dir = cli
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("kfspec-out"));
    let cfg = prepare(cfg, command, &overrides)?;
    let out = execute(&cfg, overrides.seed)?;
    summarize(&out.report);
    for p in writers::write_all(&out_dir, &out.report, &out.curves)? {
        println!("wrote {}", p.display());
    }
    Ok(match out.report.verdict {
        Verdict::Fail => exit::CHECK_FAILED,
        Verdict::Pass | Verdict::NoChecks => exit::PASS,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
