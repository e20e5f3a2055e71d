//! Thin command-line front end over the library: `solve`, `verify`,
//! `compare` and `list-problems`. The environment variable `DYNGAME_THREADS`
//! caps the internal derivative-evaluation parallelism.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dyngame::cli::{cmd_compare, cmd_solve, cmd_verify, render_catalog, RunConfig};
use dyngame::solver::Termination;

#[derive(Parser)]
#[command(
    name = "dyngame",
    about = "Open-loop Nash equilibrium solver for nonlinear dynamic games",
    after_help = "Environment: DYNGAME_THREADS caps derivative-evaluation parallelism."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a catalog problem and write trajectory/iteration/summary files.
    Solve(RunArgs),
    /// Run the oracle verification suite on small instances.
    Verify(RunArgs),
    /// Run both methods from the same start and emit convergence series.
    Compare(RunArgs),
    /// List the problem catalog with defaults and overridable parameters.
    ListProblems,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    /// newton | ddp | both
    #[arg(long)]
    method: Option<String>,
    /// Eigenvalue-shift regularization magnitude (default: catalog value).
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    residual_tol: Option<f64>,
    #[arg(long)]
    step_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: ./dyngame-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Problem parameter override, repeatable: --set key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// compare: log per-iteration update differences from a common nominal.
    #[arg(long)]
    lockstep: bool,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path).map_err(|e| e.to_string())?,
            None => {
                let problem = self
                    .problem
                    .clone()
                    .ok_or_else(|| "--problem (or --config) is required".to_string())?;
                RunConfig::new(problem)
            }
        };
        if let Some(p) = self.problem {
            cfg.problem = p;
        }
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(l) = self.lambda {
            cfg.lambda = Some(l);
        }
        if let Some(i) = self.max_iters {
            cfg.max_iters = i;
        }
        if let Some(t) = self.residual_tol {
            cfg.residual_tol = t;
        }
        if let Some(t) = self.step_tol {
            cfg.step_tol = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = self.out {
            cfg.out = Some(o);
        }
        if self.lockstep {
            cfg.lockstep = true;
        }
        let mut overrides = BTreeMap::new();
        for kv in &self.set {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| format!("--set expects key=value, got {kv:?}"))?;
            let value: f64 = value
                .parse()
                .map_err(|_| format!("--set {key}: {value:?} is not a number"))?;
            overrides.insert(key.to_string(), value);
        }
        cfg.overrides.extend(overrides);
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve(args) => {
            let cfg = match args.into_config() {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            match cmd_solve(&cfg) {
                Ok(outcomes) => {
                    let mut converged = true;
                    for o in &outcomes {
                        println!(
                            "{}: {} after {} iterations, final residual {:.3e} -> {}",
                            o.method.name(),
                            o.termination.name(),
                            o.iterations,
                            o.final_residual,
                            o.summary_path.display()
                        );
                        converged &= o.termination == Termination::ResidualTol;
                    }
                    if converged {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("solve: not all runs reached the residual tolerance");
                        ExitCode::from(2)
                    }
                }
                Err(e) => fail(&e.to_string()),
            }
        }
        Command::Verify(mut args) => {
            // The suite runs on its own small instances; a problem name is
            // not required.
            args.problem.get_or_insert_with(|| "random-lq".into());
            let cfg = match args.into_config() {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            match cmd_verify(&cfg) {
                Ok(report) => {
                    println!("{report}");
                    if report.all_passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(2)
                    }
                }
                Err(e) => fail(&e.to_string()),
            }
        }
        Command::Compare(args) => {
            let cfg = match args.into_config() {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            match cmd_compare(&cfg) {
                Ok(outcome) => {
                    for p in &outcome.distance_paths {
                        println!("wrote {}", p.display());
                    }
                    if let Some(p) = &outcome.closeness_path {
                        println!("wrote {}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e.to_string()),
            }
        }
        Command::ListProblems => {
            print!("{}", render_catalog());
            ExitCode::SUCCESS
        }
    }
}

fn fail(message: &str) -> ExitCode {
    eprintln!("dyngame: {message}");
    ExitCode::from(1)
}
