//! The iteration loop: backward pass, forward pass, convergence checks,
//! and the stationarity residual that defines convergence.
//!
//! The residual stacks, player by player, each player's gradient of its own
//! total cost with respect to its own controls. It is assembled from one
//! backward costate sweep: the gradient with respect to the full stacked
//! input at stage `k` is `c_u + B_k' ω_{k+1}`, restricted to the player's
//! rows.

use nalgebra::{DMatrix, DVector};

use crate::backward::{ddp_backward, newton_backward, AffinePolicy};
use crate::derivatives::{differentiate_trajectory, StageDerivatives, TerminalDerivatives};
use crate::error::{Error, Result};
use crate::game::{rollout, total_cost, GameProblem, Trajectory};

/// Which backward/forward pair the solver runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Newton,
    Ddp,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Newton => "newton",
            Method::Ddp => "ddp",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "newton" => Ok(Method::Newton),
            "ddp" => Ok(Method::Ddp),
            other => Err(Error::InvalidOptions(format!(
                "unknown method {other:?} (expected newton|ddp)"
            ))),
        }
    }
}

/// Loop controls for [`solve`].
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub method: Method,
    /// Eigenvalue-shift floor; 0 disables regularization.
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop when the residual infinity norm falls below this.
    pub residual_tol: f64,
    /// Stop when the control step infinity norm falls below this.
    pub step_tol: f64,
    /// Keep every control iterate in the report.
    pub capture_iterates: bool,
}

impl SolveOptions {
    pub fn new(method: Method) -> Self {
        SolveOptions {
            method,
            lambda: 0.0,
            max_iters: 100,
            residual_tol: 1e-9,
            step_tol: 1e-12,
            capture_iterates: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::InvalidOptions("max_iters must be >= 1".into()));
        }
        if !(self.residual_tol > 0.0) {
            return Err(Error::InvalidOptions("residual_tol must be > 0".into()));
        }
        if !(self.step_tol > 0.0) {
            return Err(Error::InvalidOptions("step_tol must be > 0".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidOptions("lambda must be >= 0".into()));
        }
        Ok(())
    }
}

/// Stacked first-order stationarity vector: player 1's gradient over its
/// own inputs at stages `0..T-1`, then player 2's, and so on.
#[derive(Debug, Clone)]
pub struct Residual {
    pub stacked: DVector<f64>,
    /// `per_player[n][k]`: gradient of `J_n` with respect to `u_{n,k}`.
    pub per_player: Vec<Vec<DVector<f64>>>,
}

impl Residual {
    pub fn inf_norm(&self) -> f64 {
        self.stacked.amax()
    }
}

/// Why [`solve`] stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ResidualTol,
    StepTol,
    MaxIters,
    StageSingular { stage: usize },
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::ResidualTol => "residual_tol",
            Termination::StepTol => "step_tol",
            Termination::MaxIters => "max_iters",
            Termination::StageSingular { .. } => "stage_singular",
        }
    }
}

/// Post-step measurements of one solver iteration.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Residual infinity norm of the trajectory produced by this iteration.
    pub residual_inf: f64,
    /// Largest control change applied in this iteration.
    pub step_inf: f64,
    /// Per-player total costs of the produced trajectory.
    pub costs: Vec<f64>,
    /// Number of eigenvalue shifts applied in the backward pass.
    pub reg_events: usize,
}

/// Outcome of [`solve`].
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub trajectory: Trajectory,
    /// Affine policy recomputed at the final trajectory (falls back to the
    /// last in-loop policy if that backward pass is singular).
    pub policy: AffinePolicy,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    /// Residual infinity norm of the final trajectory.
    pub final_residual: f64,
    pub final_costs: Vec<f64>,
    /// Control iterates `u_0, u_1, ...` (including the initial sequence),
    /// captured when requested.
    pub iterates: Option<Vec<Vec<DVector<f64>>>>,
}

impl SolveReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}

/// Assembles the stationarity residual from precomputed stage bundles via
/// one costate sweep.
pub fn residual_from_bundles(
    problem: &GameProblem,
    stages: &[StageDerivatives],
    terminal: &TerminalDerivatives,
) -> Residual {
    let t = stages.len();
    let n_x = problem.state_dim();
    let num_players = problem.num_players();
    let mut per_player: Vec<Vec<DVector<f64>>> = (0..num_players)
        .map(|n| vec![DVector::zeros(problem.input_dims()[n]); t])
        .collect();

    for n in 0..num_players {
        let mut omega = terminal.m[n].column(0).rows(1, n_x).into_owned();
        for k in (0..t).rev() {
            let sd = &stages[k];
            let n_u = sd.b.ncols();
            let cu = sd.m[n].column(0).rows(1 + n_x, n_u).into_owned();
            let grad_full = cu + sd.b.transpose() * &omega;
            per_player[n][k] = grad_full
                .rows(problem.input_offset(n), problem.input_dims()[n])
                .into_owned();
            let cx = sd.m[n].column(0).rows(1, n_x).into_owned();
            omega = cx + sd.a.transpose() * omega;
        }
    }

    let total: usize = problem.input_dims().iter().map(|d| d * t).sum();
    let mut stacked = DVector::zeros(total);
    let mut at = 0;
    for rows in &per_player {
        for g in rows {
            stacked.rows_mut(at, g.len()).copy_from(g);
            at += g.len();
        }
    }
    Residual {
        stacked,
        per_player,
    }
}

/// Gradient of each player's cost with respect to its own controls along
/// `traj`, computed by the adjoint sweep.
pub fn stationarity_residual(problem: &GameProblem, traj: &Trajectory) -> Result<Residual> {
    let (stages, terminal) = differentiate_trajectory(problem, traj)?;
    Ok(residual_from_bundles(problem, &stages, &terminal))
}

/// Newton forward pass: rolls the **linearized** dynamics
/// `δx_{k+1} = A_k δx_k + B_k δu_k` under the affine policy and returns
/// `ū + δu`. This reproduces the exact Newton step of the stacked
/// root-finding problem.
pub fn newton_forward(
    nominal: &Trajectory,
    policy: &AffinePolicy,
    stage_derivs: &[StageDerivatives],
) -> Vec<DVector<f64>> {
    let t = nominal.horizon();
    let n_x = nominal.states[0].len();
    let mut dx = DVector::zeros(n_x);
    let mut controls = Vec::with_capacity(t);
    for k in 0..t {
        let du = policy.delta(k, &dx);
        controls.push(&nominal.controls[k] + &du);
        dx = &stage_derivs[k].a * dx + &stage_derivs[k].b * du;
    }
    controls
}

/// DDP forward pass: rolls the **true** dynamics with
/// `u_k = ū_k + K_k (x_k - x̄_k) + s_k`.
pub fn ddp_forward(
    problem: &GameProblem,
    nominal: &Trajectory,
    policy: &AffinePolicy,
) -> Result<Trajectory> {
    let t = nominal.horizon();
    let mut states = Vec::with_capacity(t + 1);
    let mut controls = Vec::with_capacity(t);
    states.push(nominal.states[0].clone());
    for k in 0..t {
        let dx = &states[k] - &nominal.states[k];
        let u = &nominal.controls[k] + policy.delta(k, &dx);
        let next = problem.dynamics(k).value(&states[k], &u);
        if next.len() != problem.state_dim() {
            return Err(Error::dimension(
                format!("f_{k} output"),
                problem.state_dim(),
                next.len(),
            ));
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { stage: k });
        }
        controls.push(u);
        states.push(next);
    }
    Ok(Trajectory { states, controls })
}

fn step_inf_norm(old: &[DVector<f64>], new: &[DVector<f64>]) -> f64 {
    old.iter()
        .zip(new.iter())
        .map(|(a, b)| (b - a).amax())
        .fold(0.0, f64::max)
}

/// Runs the solver loop from the initial control sequence `u0`.
///
/// Each iteration differentiates the nominal, runs the selected backward
/// pass, applies the matching forward pass, and records the post-step
/// residual, step size, costs and regularization count. Stops on the
/// residual tolerance, the step tolerance, the iteration cap, or a singular
/// stage game (a termination reason, not an error).
pub fn solve(
    problem: &GameProblem,
    x0: &DVector<f64>,
    u0: &[DVector<f64>],
    opts: &SolveOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    let mut traj = rollout(problem, x0, u0)?;
    let (mut stages, mut terminal) = differentiate_trajectory(problem, &traj)?;
    let mut final_residual = residual_from_bundles(problem, &stages, &terminal).inf_norm();

    let mut iterates = opts.capture_iterates.then(|| vec![traj.controls.clone()]);
    let mut records = Vec::new();
    let mut termination = Termination::MaxIters;
    let mut last_policy: Option<AffinePolicy> = None;

    for iteration in 1..=opts.max_iters {
        let back = match opts.method {
            Method::Newton => {
                newton_backward(&stages, &terminal, problem.input_dims(), opts.lambda)
            }
            Method::Ddp => ddp_backward(&stages, &terminal, problem.input_dims(), opts.lambda),
        };
        let (policy, _, reg) = match back {
            Ok(v) => v,
            Err(Error::StageSingular { stage, .. }) => {
                termination = Termination::StageSingular { stage };
                break;
            }
            Err(e) => return Err(e),
        };

        let new_traj = match opts.method {
            Method::Newton => {
                let controls = newton_forward(&traj, &policy, &stages);
                rollout(problem, x0, &controls)?
            }
            Method::Ddp => ddp_forward(problem, &traj, &policy)?,
        };
        let step_inf = step_inf_norm(&traj.controls, &new_traj.controls);

        let (new_stages, new_terminal) = differentiate_trajectory(problem, &new_traj)?;
        let residual_inf = residual_from_bundles(problem, &new_stages, &new_terminal).inf_norm();
        let costs = total_cost(problem, &new_traj)?.totals;

        records.push(IterationRecord {
            iteration,
            residual_inf,
            step_inf,
            costs,
            reg_events: reg.len(),
        });

        traj = new_traj;
        stages = new_stages;
        terminal = new_terminal;
        final_residual = residual_inf;
        last_policy = Some(policy);
        if let Some(it) = iterates.as_mut() {
            it.push(traj.controls.clone());
        }

        if residual_inf < opts.residual_tol {
            termination = Termination::ResidualTol;
            break;
        }
        if step_inf < opts.step_tol {
            termination = Termination::StepTol;
            break;
        }
    }

    // The in-loop policy belongs to the penultimate nominal; recompute it at
    // the final trajectory so the reported feedback law matches the reported
    // trajectory.
    let final_policy = {
        let back = match opts.method {
            Method::Newton => {
                newton_backward(&stages, &terminal, problem.input_dims(), opts.lambda)
            }
            Method::Ddp => ddp_backward(&stages, &terminal, problem.input_dims(), opts.lambda),
        };
        match back {
            Ok((policy, _, _)) => policy,
            Err(Error::StageSingular { .. }) => last_policy.unwrap_or_else(|| AffinePolicy {
                gains: vec![
                    DMatrix::zeros(problem.input_dim(), problem.state_dim());
                    problem.horizon()
                ],
                offsets: vec![DVector::zeros(problem.input_dim()); problem.horizon()],
            }),
            Err(e) => return Err(e),
        }
    };

    let final_costs = total_cost(problem, &traj)?.totals;
    Ok(SolveReport {
        trajectory: traj,
        policy: final_policy,
        records,
        termination,
        final_residual,
        final_costs,
        iterates,
    })
}
