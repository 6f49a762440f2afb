use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gaussian_polymer_harness::config::{ExperimentConfig, Format};
use gaussian_polymer_harness::manifest::{render, run_experiment};
use gaussian_polymer_harness::HarnessError;

#[derive(Parser, Debug)]
#[command(name = "gpolymer", version, about = "Exact and Monte Carlo experiments for 2D Gaussian directed polymers")]
struct Cli {
    /// Master seed; required by the stochastic experiments.
    #[arg(long, global = true, env = "GPOLY_SEED")]
    seed: Option<u64>,
    /// Worker threads (0 lets rayon decide).
    #[arg(long, global = true, env = "GPOLY_THREADS")]
    threads: Option<usize>,
    /// Output directory for the data file and its manifest.
    #[arg(long, global = true, env = "GPOLY_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, env = "GPOLY_FORMAT")]
    format: Option<Format>,
    /// TOML config, or a JSON manifest to re-run.
    #[arg(long, global = true, env = "GPOLY_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Default)]
struct P {
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    t: Option<u64>,
    #[arg(long)]
    beta_hat: Option<f64>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    m: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    max_time: Option<u64>,
    #[arg(long)]
    ab_horizon: Option<u64>,
    #[arg(long)]
    kappa_sq: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    check: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rows (n, p_n*, p_2n(0), R_n).
    KernelTable(P),
    /// Check p_n* <= 2/(πn) and the monotone sequences a_n, b_n.
    CheckPnstar(P),
    /// Renewal table (n, w(n), U_N(n), partial sum, ρ(n)).
    Un(P),
    /// Exact E[W_n²] against 1/(1 - σ² R_n).
    SecondMoment(P),
    /// Monte Carlo E[W_N^q] from independent walks.
    MomentMc(P),
    /// Exact moment, Ψ and no-triple moment by transfer.
    MomentExact(P),
    /// Normalized collision count of two walks.
    ErdosTaylor(P),
    /// Per-environment (W_N, log W_N).
    GaussianLimit(P),
    /// Chaos series against the transfer and the run decomposition.
    ChaosOracle(P),
    /// Diagram checks: lemmas, counts, coeffs, fibo, induction.
    Diagrams(P),
    /// Khas'minskii bounds: mod, thm, cor or suite.
    Khas(P),
    /// Chebyshev threshold triple for (gamma, beta_hat).
    MaxBound(P),
    /// The acceptance battery; --check takes a comma-separated list of criteria.
    Suite(P),
}

impl Command {
    fn split(self) -> (&'static str, P) {
        match self {
            Command::KernelTable(p) => ("kernel-table", p),
            Command::CheckPnstar(p) => ("check-pnstar", p),
            Command::Un(p) => ("un", p),
            Command::SecondMoment(p) => ("second-moment", p),
            Command::MomentMc(p) => ("moment-mc", p),
            Command::MomentExact(p) => ("moment-exact", p),
            Command::ErdosTaylor(p) => ("erdos-taylor", p),
            Command::GaussianLimit(p) => ("gaussian-limit", p),
            Command::ChaosOracle(p) => ("chaos-oracle", p),
            Command::Diagrams(p) => ("diagrams", p),
            Command::Khas(p) => ("khas", p),
            Command::MaxBound(p) => ("max-bound", p),
            Command::Suite(p) => ("suite", p),
        }
    }
}

fn overlay<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn build_config(cli: Cli) -> Result<ExperimentConfig, HarnessError> {
    let base = match &cli.config {
        Some(path) => Some(ExperimentConfig::load(path)?),
        None => None,
    };
    let mut cfg = match (base, cli.command) {
        (Some(mut cfg), Some(cmd)) => {
            let (name, p) = cmd.split();
            if cfg.experiment != name {
                return Err(HarnessError::Config(format!(
                    "config is for '{}' but the command is '{name}'",
                    cfg.experiment
                )));
            }
            apply(&mut cfg, p);
            cfg
        }
        (Some(cfg), None) => cfg,
        (None, Some(cmd)) => {
            let (name, p) = cmd.split();
            let mut cfg = ExperimentConfig::new(name);
            apply(&mut cfg, p);
            cfg
        }
        (None, None) => return Err(HarnessError::Config("give a subcommand or --config".into())),
    };
    overlay(&mut cfg.seed, cli.seed);
    overlay(&mut cfg.out, cli.out);
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(f) = cli.format {
        cfg.format = f;
    }
    Ok(cfg)
}

fn apply(cfg: &mut ExperimentConfig, p: P) {
    let c = &mut cfg.params;
    overlay(&mut c.n, p.n);
    overlay(&mut c.q, p.q);
    overlay(&mut c.t, p.t);
    overlay(&mut c.beta_hat, p.beta_hat);
    overlay(&mut c.l, p.l);
    overlay(&mut c.m, p.m);
    overlay(&mut c.k, p.k);
    overlay(&mut c.samples, p.samples);
    overlay(&mut c.max_time, p.max_time);
    overlay(&mut c.ab_horizon, p.ab_horizon);
    overlay(&mut c.kappa_sq, p.kappa_sq);
    overlay(&mut c.gamma, p.gamma);
    overlay(&mut c.mode, p.mode);
    overlay(&mut c.check, p.check);
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build_config(cli).and_then(|cfg| run_experiment(&cfg).map(|r| (cfg, r)));
    match result {
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Ok((cfg, (manifest, outcome))) => {
            if cfg.out.is_none() {
                print!("{}", render(&cfg, &outcome));
            }
            for c in &manifest.checks {
                let status = if c.pass { "PASS" } else { "FAIL" };
                if c.detail.is_empty() {
                    eprintln!("[{status}] {}", c.name);
                } else {
                    eprintln!("[{status}] {}: {}", c.name, c.detail);
                }
            }
            if manifest.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
