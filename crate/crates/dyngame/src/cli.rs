//! Run configuration, file emission and the command implementations behind
//! the `dyngame` binary.
//!
//! Outputs are plain CSV and JSON-lines with a fixed 17-significant-digit
//! float format so identical runs produce identical files (the summary's
//! wall-time field is the one nondeterministic value).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use serde::Deserialize;

use crate::backward::{ddp_backward_with, newton_backward_with, BackwardOptions};
use crate::derivatives::differentiate_trajectory;
use crate::error::{Error, Result};
use crate::game::{rollout, GameProblem, Trajectory};
use crate::oracle::{best_response_probe, dense_jacobian, dense_newton_step, ORACLE_DIM_GUARD};
use crate::problems::{build_problem, catalog, ProblemSpec};
use crate::solver::{
    ddp_forward, newton_forward, solve, stationarity_residual, Method, SolveOptions, SolveReport,
    Termination,
};

/// A run request: problem name, method selection, loop controls, seed and
/// parameter overrides. Deserializes from a flat JSON document; unknown
/// keys are rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    #[serde(default = "default_method")]
    pub method: String,
    /// Regularization magnitude; defaults to the catalog value.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
    #[serde(default = "default_step_tol")]
    pub step_tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// `compare` only: advance a common nominal and log the per-iteration
    /// difference between the two methods' updates.
    #[serde(default)]
    pub lockstep: bool,
}

fn default_method() -> String {
    "newton".into()
}
fn default_max_iters() -> usize {
    100
}
fn default_residual_tol() -> f64 {
    1e-9
}
fn default_step_tol() -> f64 {
    1e-12
}

impl RunConfig {
    pub fn new(problem: impl Into<String>) -> Self {
        RunConfig {
            problem: problem.into(),
            method: default_method(),
            lambda: None,
            max_iters: default_max_iters(),
            residual_tol: default_residual_tol(),
            step_tol: default_step_tol(),
            seed: 0,
            overrides: BTreeMap::new(),
            out: None,
            lockstep: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        match self.method.as_str() {
            "newton" => Ok(vec![Method::Newton]),
            "ddp" => Ok(vec![Method::Ddp]),
            "both" => Ok(vec![Method::Newton, Method::Ddp]),
            other => Err(Error::InvalidOptions(format!(
                "unknown method {other:?} (expected newton|ddp|both)"
            ))),
        }
    }

    fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("dyngame-out"))
    }

    fn solve_options(&self, method: Method, lambda: f64, capture: bool) -> SolveOptions {
        SolveOptions {
            method,
            lambda,
            max_iters: self.max_iters,
            residual_tol: self.residual_tol,
            step_tol: self.step_tol,
            capture_iterates: capture,
        }
    }
}

/// Fixed 17-significant-digit float rendering used in every output file.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn json_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Trajectory CSV: `k, x_0.., u_0..` with the control fields blank on the
/// terminal row.
fn trajectory_csv(problem: &GameProblem, traj: &Trajectory) -> String {
    let n_x = problem.state_dim();
    let n_u = problem.input_dim();
    let mut out = String::from("k");
    for i in 0..n_x {
        let _ = write!(out, ",x_{i}");
    }
    for i in 0..n_u {
        let _ = write!(out, ",u_{i}");
    }
    out.push('\n');
    for (k, x) in traj.states.iter().enumerate() {
        let _ = write!(out, "{k}");
        for v in x.iter() {
            let _ = write!(out, ",{}", fmt_float(*v));
        }
        if k < traj.controls.len() {
            for v in traj.controls[k].iter() {
                let _ = write!(out, ",{}", fmt_float(*v));
            }
        } else {
            for _ in 0..n_u {
                out.push(',');
            }
        }
        out.push('\n');
    }
    out
}

/// One JSON object per iteration record.
fn iteration_jsonl(report: &SolveReport) -> String {
    let mut out = String::new();
    for r in &report.records {
        let costs = r
            .costs
            .iter()
            .map(|c| fmt_float(*c))
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(
            out,
            "{{\"iter\":{},\"residual_inf\":{},\"step_inf\":{},\"costs\":[{}],\"reg_events\":{}}}",
            r.iteration,
            fmt_float(r.residual_inf),
            fmt_float(r.step_inf),
            costs,
            r.reg_events
        );
    }
    out
}

fn summary_json(
    cfg: &RunConfig,
    method: Method,
    lambda: f64,
    report: &SolveReport,
    wall_time_s: f64,
) -> String {
    let costs = report
        .final_costs
        .iter()
        .map(|c| fmt_float(*c))
        .collect::<Vec<_>>()
        .join(",");
    format!(
        "{{\n  \"problem\": \"{}\",\n  \"method\": \"{}\",\n  \"lambda\": {},\n  \"seed\": {},\n  \"termination\": \"{}\",\n  \"iterations\": {},\n  \"final_residual\": {},\n  \"final_costs\": [{}],\n  \"wall_time_s\": {}\n}}\n",
        json_escape(&cfg.problem),
        method.name(),
        fmt_float(lambda),
        cfg.seed,
        report.termination.name(),
        report.iterations(),
        fmt_float(report.final_residual),
        costs,
        fmt_float(wall_time_s)
    )
}

/// Result of one `solve` run (one method).
#[derive(Debug)]
pub struct RunOutcome {
    pub method: Method,
    pub termination: Termination,
    pub final_residual: f64,
    pub iterations: usize,
    pub summary_path: PathBuf,
}

/// Runs the configured problem with each selected method and writes the
/// trajectory CSV, the iteration JSONL and the summary JSON per method.
/// The process exit should be zero only when every run terminated on the
/// residual tolerance.
pub fn cmd_solve(cfg: &RunConfig) -> Result<Vec<RunOutcome>> {
    let built = build_problem(&cfg.problem, cfg.seed, &cfg.overrides)?;
    let lambda = cfg.lambda.unwrap_or(built.lambda);
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;

    let mut outcomes = Vec::new();
    for method in cfg.methods()? {
        let opts = cfg.solve_options(method, lambda, false);
        let start = Instant::now();
        let report = solve(&built.problem, &built.x0, &built.initial_controls, &opts)?;
        let wall = start.elapsed().as_secs_f64();

        let prefix = method.name();
        write_file(
            &dir.join(format!("{prefix}_trajectory.csv")),
            &trajectory_csv(&built.problem, &report.trajectory),
        )?;
        write_file(
            &dir.join(format!("{prefix}_iterations.jsonl")),
            &iteration_jsonl(&report),
        )?;
        let summary_path = dir.join(format!("{prefix}_summary.json"));
        write_file(
            &summary_path,
            &summary_json(cfg, method, lambda, &report, wall),
        )?;

        outcomes.push(RunOutcome {
            method,
            termination: report.termination,
            final_residual: report.final_residual,
            iterations: report.iterations(),
            summary_path,
        });
    }
    Ok(outcomes)
}

/// Catalog listing for `list-problems`.
pub fn list_problems() -> Vec<ProblemSpec> {
    catalog()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone)]
pub struct CheckRow {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

/// Verification suite outcome; skipped entries do not count as failures.
#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.status != CheckStatus::Fail)
    }

    fn push(&mut self, name: &'static str, ok: bool, detail: String) {
        self.rows.push(CheckRow {
            name,
            status: if ok {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            detail,
        });
    }
}

impl std::fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for row in &self.rows {
            let status = match row.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Skip => "SKIP",
            };
            writeln!(f, "{status:<5} {:<26} {}", row.name, row.detail)?;
        }
        let summary = if self.all_passed() {
            "all passed"
        } else {
            "FAILURES"
        };
        write!(f, "verify: {summary}")
    }
}

/// Fault injection for exercising the verification suite itself.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VerifyFault {
    #[default]
    None,
    /// Flip the sign of the DDP curvature weighting term.
    FlipDdpSecondOrder,
}

/// Runs the oracle-backed verification suite on small instances: dense
/// Newton equivalence, adjoint-vs-finite-difference gradients, the
/// Newton/DDP update-closeness slope and best-response probes at a
/// converged equilibrium. Entries above the oracle dimension guard are
/// reported as skipped.
pub fn cmd_verify(cfg: &RunConfig) -> Result<VerifyReport> {
    cmd_verify_with(cfg, VerifyFault::None)
}

#[doc(hidden)]
pub fn cmd_verify_with(cfg: &RunConfig, fault: VerifyFault) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    let seed = cfg.seed;

    let lq = crate::problems::random_lq_game(seed, 2, 3, &[1, 2], 8)?;
    let lq_x0 = crate::problems::random_lq_initial_state(seed, 3);
    let od = crate::problems::owner_dog_with_horizon(6)?;
    let od_x0 = crate::problems::owner_dog_x0();

    // 1. Stagewise Newton step vs dense Newton step.
    {
        let mut worst = 0.0_f64;
        for (problem, x0, t) in [(&lq, &lq_x0, 8usize), (&od, &od_x0, 6usize)] {
            let controls = vec![DVector::zeros(problem.input_dim()); t];
            let traj = rollout(problem, x0, &controls)?;
            let (stages, term) = differentiate_trajectory(problem, &traj)?;
            let (policy, _, _) = newton_backward_with(
                &stages,
                &term,
                problem.input_dims(),
                &BackwardOptions::default(),
            )?;
            let fast = newton_forward(&traj, &policy, &stages);
            let ds = dense_jacobian(problem, x0, &controls, 1e-6)?;
            let dense = dense_newton_step(&ds)?;
            let scale = dense
                .iter()
                .map(|d| d.amax())
                .fold(0.0_f64, f64::max)
                .max(1e-9);
            for k in 0..t {
                let du = &fast[k] - &controls[k];
                worst = worst.max((du - &dense[k]).amax() / scale);
            }
        }
        report.push(
            "dense-newton-equivalence",
            worst < 1e-6,
            format!("max relative step deviation {worst:.3e}"),
        );
    }

    // 2. Adjoint residual vs finite-difference control gradients.
    {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let mut worst = 0.0_f64;
        for (problem, x0, t) in [(&lq, &lq_x0, 8usize), (&od, &od_x0, 6usize)] {
            for _ in 0..3 {
                let controls: Vec<DVector<f64>> = (0..t)
                    .map(|_| {
                        DVector::from_fn(problem.input_dim(), |_, _| rng.random_range(-0.3..0.3))
                    })
                    .collect();
                let traj = rollout(problem, x0, &controls)?;
                let residual = stationarity_residual(problem, &traj)?;
                for n in 0..problem.num_players() {
                    let fd = crate::oracle::fd_control_gradient(problem, x0, &controls, n, 1e-6)?;
                    for k in 0..t {
                        for c in 0..problem.input_dims()[n] {
                            let a = residual.per_player[n][k][c];
                            let b = fd[k][c];
                            let tol = 1e-5_f64.max(1e-3 * b.abs());
                            worst = worst.max((a - b).abs() / tol);
                        }
                    }
                }
            }
        }
        report.push(
            "gradient-identity",
            worst < 1.0,
            format!("worst error/tolerance ratio {worst:.3e}"),
        );
    }

    // 3. Newton/DDP update closeness slope near an equilibrium.
    {
        let t = 6usize;
        let u0 = vec![DVector::zeros(2); t];
        let mut warm = cfg.solve_options(Method::Newton, 30.0, false);
        warm.max_iters = 300;
        warm.residual_tol = 1e-12;
        warm.step_tol = 1e-15;
        let wr = solve(&od, &od_x0, &u0, &warm)?;
        let mut polish = cfg.solve_options(Method::Newton, 0.0, false);
        polish.max_iters = 50;
        polish.residual_tol = 1e-12;
        polish.step_tol = 1e-15;
        let star = solve(&od, &od_x0, &wr.trajectory.controls, &polish)?;
        let u_star: Vec<DVector<f64>> = star.trajectory.controls.clone();

        let opts_ddp = BackwardOptions {
            flip_ddp_second_order_sign: fault == VerifyFault::FlipDdpSecondOrder,
            ..Default::default()
        };
        let mut diffs = Vec::new();
        let mut degenerate = None;
        for eps in [1e-1_f64, 1e-2, 1e-3] {
            let perturbed: Vec<DVector<f64>> = u_star
                .iter()
                .enumerate()
                .map(|(k, u)| u + DVector::from_fn(2, |i, _| eps * (0.3 + 0.1 * (k + i) as f64)))
                .collect();
            let traj = rollout(&od, &od_x0, &perturbed)?;
            let (stages, term) = differentiate_trajectory(&od, &traj)?;
            let (pn, _, _) =
                newton_backward_with(&stages, &term, od.input_dims(), &BackwardOptions::default())?;
            let pd = match ddp_backward_with(&stages, &term, od.input_dims(), &opts_ddp) {
                Ok((pd, _, _)) => pd,
                Err(Error::StageSingular { stage, .. }) => {
                    degenerate = Some(stage);
                    break;
                }
                Err(e) => return Err(e),
            };
            let un = newton_forward(&traj, &pn, &stages);
            let ud = ddp_forward(&od, &traj, &pd)?.controls;
            let diff: f64 = un
                .iter()
                .zip(ud.iter())
                .map(|(a, b)| (a - b).norm_squared())
                .sum::<f64>()
                .sqrt();
            diffs.push((eps, diff.max(1e-300)));
        }
        if let Some(stage) = degenerate {
            report.push(
                "closeness-slope",
                false,
                format!("stage game singular at k={stage} while probing"),
            );
        } else {
            let slope = (diffs[0].1.ln() - diffs[2].1.ln()) / (diffs[0].0.ln() - diffs[2].0.ln());
            report.push(
                "closeness-slope",
                slope >= 1.8,
                format!("log-log slope {slope:.2} over eps 1e-1..1e-3"),
            );
        }
    }

    // 4. Best-response probes at a converged LQ equilibrium.
    {
        let controls = vec![DVector::zeros(lq.input_dim()); 8];
        let mut opts = cfg.solve_options(Method::Newton, 0.0, false);
        opts.max_iters = 5;
        opts.residual_tol = 1e-10;
        let sol = solve(&lq, &lq_x0, &controls, &opts)?;
        let mut worst = f64::INFINITY;
        for n in 0..lq.num_players() {
            worst = worst.min(best_response_probe(
                &lq,
                &sol.trajectory,
                n,
                200,
                1e-2,
                seed.wrapping_add(7),
            )?);
        }
        report.push(
            "best-response",
            worst >= -1e-9,
            format!("worst unilateral cost change {worst:.3e}"),
        );
    }

    // 5. Dimension guard: oversized oracle requests are skipped, not run.
    {
        let big = crate::problems::random_lq_game(seed, 2, 2, &[1, 1], 201)?;
        let big_x0 = crate::problems::random_lq_initial_state(seed, 2);
        let controls = vec![DVector::zeros(2); 201];
        match dense_jacobian(&big, &big_x0, &controls, 1e-6) {
            Err(Error::OracleDimensionGuard { dim, guard }) => report.rows.push(CheckRow {
                name: "dense-oracle-guard",
                status: CheckStatus::Skip,
                detail: format!("dimension {dim} above guard {guard}, skipped"),
            }),
            Ok(_) => report.push(
                "dense-oracle-guard",
                false,
                format!("oracle accepted dimension above {ORACLE_DIM_GUARD}"),
            ),
            Err(e) => return Err(e),
        }
    }

    Ok(report)
}

/// Outcome of `cmd_compare`.
#[derive(Debug)]
pub struct CompareOutcome {
    pub distance_paths: Vec<PathBuf>,
    pub closeness_path: Option<PathBuf>,
}

fn stack_controls(controls: &[DVector<f64>]) -> DVector<f64> {
    let total: usize = controls.iter().map(|u| u.len()).sum();
    let mut out = DVector::zeros(total);
    let mut at = 0;
    for u in controls {
        out.rows_mut(at, u.len()).copy_from(u);
        at += u.len();
    }
    out
}

/// Runs both methods from the identical initialization and emits the
/// per-iteration distance of each method's control iterates to its own
/// final iterate. In lockstep mode it also advances one common nominal by
/// Newton steps and logs the per-iteration norm of the difference between
/// the two methods' updates from that shared nominal.
pub fn cmd_compare(cfg: &RunConfig) -> Result<CompareOutcome> {
    let built = build_problem(&cfg.problem, cfg.seed, &cfg.overrides)?;
    let lambda = cfg.lambda.unwrap_or(built.lambda);
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;

    let mut distance_paths = Vec::new();
    for method in [Method::Newton, Method::Ddp] {
        let opts = cfg.solve_options(method, lambda, true);
        let report = solve(&built.problem, &built.x0, &built.initial_controls, &opts)?;
        let iterates = report.iterates.as_ref().expect("capture_iterates set");
        let last = stack_controls(iterates.last().unwrap());
        let mut csv = String::from("iter,distance\n");
        for (i, u) in iterates.iter().enumerate() {
            let _ = writeln!(csv, "{i},{}", fmt_float((stack_controls(u) - &last).norm()));
        }
        let path = dir.join(format!("distance_{}.csv", method.name()));
        write_file(&path, &csv)?;
        distance_paths.push(path);
    }

    let closeness_path = if cfg.lockstep {
        let problem = &built.problem;
        let mut traj = rollout(problem, &built.x0, &built.initial_controls)?;
        let mut csv = String::from("iter,update_diff\n");
        for i in 0..cfg.max_iters {
            let (stages, term) = differentiate_trajectory(problem, &traj)?;
            let opts = BackwardOptions::with_lambda(lambda);
            let (pn, _, _) = newton_backward_with(&stages, &term, problem.input_dims(), &opts)?;
            let (pd, _, _) = ddp_backward_with(&stages, &term, problem.input_dims(), &opts)?;
            let un = newton_forward(&traj, &pn, &stages);
            let ud = ddp_forward(problem, &traj, &pd)?.controls;
            let diff: f64 = un
                .iter()
                .zip(ud.iter())
                .map(|(a, b)| (a - b).norm_squared())
                .sum::<f64>()
                .sqrt();
            let _ = writeln!(csv, "{i},{}", fmt_float(diff));
            // advance the common nominal with the Newton update
            traj = rollout(problem, &built.x0, &un)?;
        }
        let path = dir.join("lockstep_closeness.csv");
        write_file(&path, &csv)?;
        Some(path)
    } else {
        None
    };

    Ok(CompareOutcome {
        distance_paths,
        closeness_path,
    })
}

/// One-line-per-problem catalog rendering for `list-problems`.
pub fn render_catalog() -> String {
    let mut out = String::new();
    for spec in catalog() {
        let params = spec
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(", ");
        let x0 = if spec.x0.is_empty() {
            "seed-dependent".to_string()
        } else {
            format!("{:?}", spec.x0)
        };
        let _ = writeln!(
            out,
            "{:<14} horizon={:<4} lambda={:<5} x0={x0} params: {params}",
            spec.name, spec.horizon, spec.lambda
        );
    }
    out
}
