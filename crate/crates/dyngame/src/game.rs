//! Problem definition for N-player finite-horizon dynamic games, plus
//! trajectory containers, rollouts and cost evaluation.
//!
//! A game has `T` controlled stages `k = 0..T-1`. At each stage every player
//! `n` applies an input `u_{n,k}`; the stacked input `u_k` concatenates the
//! players' inputs in ascending player order. Stage costs are charged at
//! `k = 0..T-1` and a state-only terminal cost is charged at `x_T`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Discrete-time dynamics `x_{k+1} = f(x_k, u_k)` with analytic derivatives.
///
/// `hessians` returns one `(n_x + n_u)^2` matrix per state component: the
/// second derivative of that component with respect to the stacked `(x, u)`.
pub trait Dynamics: Send + Sync {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// `(A, B)` = (∂f/∂x, ∂f/∂u) evaluated at `(x, u)`.
    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>);

    fn hessians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Vec<DMatrix<f64>>;
}

/// Hessian blocks of a scalar stage cost over `(x, u)`.
#[derive(Debug, Clone)]
pub struct CostHessian {
    pub xx: DMatrix<f64>,
    pub xu: DMatrix<f64>,
    pub uu: DMatrix<f64>,
}

/// Scalar stage cost `c(x, u)` with analytic derivatives.
pub trait StageCost: Send + Sync {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64;

    /// `(c_x, c_u)` gradients at `(x, u)`.
    fn gradient(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>);

    fn hessian(&self, x: &DVector<f64>, u: &DVector<f64>) -> CostHessian;
}

/// Scalar terminal cost `c_T(x)` with analytic derivatives.
pub trait TerminalCost: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// Closure-backed [`Dynamics`], convenient for tests and ad-hoc problems.
pub struct ClosureDynamics<F, J, H> {
    pub value: F,
    pub jacobians: J,
    pub hessians: H,
}

impl<F, J, H> Dynamics for ClosureDynamics<F, J, H>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync,
    J: Fn(&DVector<f64>, &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync,
    H: Fn(&DVector<f64>, &DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync,
{
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.value)(x, u)
    }
    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.jacobians)(x, u)
    }
    fn hessians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Vec<DMatrix<f64>> {
        (self.hessians)(x, u)
    }
}

/// Closure-backed [`StageCost`].
pub struct ClosureStageCost<F, G, H> {
    pub value: F,
    pub gradient: G,
    pub hessian: H,
}

impl<F, G, H> StageCost for ClosureStageCost<F, G, H>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync,
    G: Fn(&DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>) + Send + Sync,
    H: Fn(&DVector<f64>, &DVector<f64>) -> CostHessian + Send + Sync,
{
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (self.value)(x, u)
    }
    fn gradient(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (self.gradient)(x, u)
    }
    fn hessian(&self, x: &DVector<f64>, u: &DVector<f64>) -> CostHessian {
        (self.hessian)(x, u)
    }
}

/// Closure-backed [`TerminalCost`].
pub struct ClosureTerminalCost<F, G, H> {
    pub value: F,
    pub gradient: G,
    pub hessian: H,
}

impl<F, G, H> TerminalCost for ClosureTerminalCost<F, G, H>
where
    F: Fn(&DVector<f64>) -> f64 + Send + Sync,
    G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
    H: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync,
{
    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(x)
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.hessian)(x)
    }
}

/// An N-player dynamic game over a fixed horizon.
///
/// Immutable after construction; evaluation methods are pure, so a problem
/// can be shared read-only across threads.
pub struct GameProblem {
    num_players: usize,
    horizon: usize,
    state_dim: usize,
    input_dims: Vec<usize>,
    input_offsets: Vec<usize>,
    dynamics: Vec<Arc<dyn Dynamics>>,
    stage_costs: Vec<Vec<Arc<dyn StageCost>>>,
    terminal_costs: Vec<Arc<dyn TerminalCost>>,
}

impl GameProblem {
    pub fn builder() -> GameProblemBuilder {
        GameProblemBuilder::default()
    }

    pub fn num_players(&self) -> usize {
        self.num_players
    }

    /// Number of controlled stages `T`; states run `0..=T`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    /// Total stacked input dimension `n_u = Σ_n n_{u_n}`.
    pub fn input_dim(&self) -> usize {
        self.input_offsets[self.num_players]
    }

    /// Start of player `n`'s block inside a stacked input vector.
    pub fn input_offset(&self, player: usize) -> usize {
        self.input_offsets[player]
    }

    pub fn dynamics(&self, stage: usize) -> &dyn Dynamics {
        self.dynamics[stage].as_ref()
    }

    pub fn stage_cost(&self, player: usize, stage: usize) -> &dyn StageCost {
        self.stage_costs[player][stage].as_ref()
    }

    pub fn terminal_cost(&self, player: usize) -> &dyn TerminalCost {
        self.terminal_costs[player].as_ref()
    }

    /// Shared handle to the stage dynamics, for building derived problems.
    pub fn dynamics_handle(&self, stage: usize) -> Arc<dyn Dynamics> {
        self.dynamics[stage].clone()
    }

    pub fn stage_cost_handle(&self, player: usize, stage: usize) -> Arc<dyn StageCost> {
        self.stage_costs[player][stage].clone()
    }

    pub fn terminal_cost_handle(&self, player: usize) -> Arc<dyn TerminalCost> {
        self.terminal_costs[player].clone()
    }

    /// Player `n`'s rows of a stacked input vector.
    pub fn player_block(&self, u: &DVector<f64>, player: usize) -> DVector<f64> {
        u.rows(self.input_offsets[player], self.input_dims[player])
            .into_owned()
    }
}

/// Builder for [`GameProblem`]; dynamics and costs given once are shared
/// across stages.
#[derive(Default)]
pub struct GameProblemBuilder {
    num_players: usize,
    horizon: usize,
    state_dim: usize,
    input_dims: Vec<usize>,
    dynamics: Option<Vec<Arc<dyn Dynamics>>>,
    stage_costs: Vec<Option<Vec<Arc<dyn StageCost>>>>,
    terminal_costs: Vec<Option<Arc<dyn TerminalCost>>>,
}

impl GameProblemBuilder {
    pub fn num_players(mut self, n: usize) -> Self {
        self.num_players = n;
        self.stage_costs.resize_with(n, || None);
        self.terminal_costs.resize_with(n, || None);
        self
    }

    pub fn horizon(mut self, t: usize) -> Self {
        self.horizon = t;
        self
    }

    pub fn state_dim(mut self, n: usize) -> Self {
        self.state_dim = n;
        self
    }

    pub fn input_dims(mut self, dims: impl Into<Vec<usize>>) -> Self {
        self.input_dims = dims.into();
        self
    }

    /// One dynamics map shared by every stage.
    pub fn dynamics(mut self, d: Arc<dyn Dynamics>) -> Self {
        self.dynamics = Some(vec![d]);
        self
    }

    /// Stage-varying dynamics; must have length `horizon`.
    pub fn dynamics_per_stage(mut self, d: Vec<Arc<dyn Dynamics>>) -> Self {
        self.dynamics = Some(d);
        self
    }

    /// One stage cost for player `n`, shared by every stage.
    pub fn stage_cost(mut self, player: usize, c: Arc<dyn StageCost>) -> Self {
        self.stage_costs[player] = Some(vec![c]);
        self
    }

    pub fn stage_costs_per_stage(mut self, player: usize, c: Vec<Arc<dyn StageCost>>) -> Self {
        self.stage_costs[player] = Some(c);
        self
    }

    pub fn terminal_cost(mut self, player: usize, c: Arc<dyn TerminalCost>) -> Self {
        self.terminal_costs[player] = Some(c);
        self
    }

    pub fn build(self) -> Result<GameProblem> {
        let n = self.num_players;
        if n == 0 {
            return Err(Error::InvalidOptions("num_players must be >= 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidOptions("horizon must be >= 1".into()));
        }
        if self.state_dim == 0 {
            return Err(Error::InvalidOptions("state_dim must be >= 1".into()));
        }
        if self.input_dims.len() != n {
            return Err(Error::dimension("input_dims", n, self.input_dims.len()));
        }
        if self.input_dims.contains(&0) {
            return Err(Error::InvalidOptions("input dims must be >= 1".into()));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0usize);
        for d in &self.input_dims {
            offsets.push(offsets.last().unwrap() + d);
        }

        let expand = |v: Vec<Arc<dyn Dynamics>>| -> Result<Vec<Arc<dyn Dynamics>>> {
            if v.len() == 1 {
                Ok(vec![v[0].clone(); self.horizon])
            } else if v.len() == self.horizon {
                Ok(v)
            } else {
                Err(Error::dimension(
                    "per-stage dynamics",
                    self.horizon,
                    v.len(),
                ))
            }
        };
        let dynamics = expand(
            self.dynamics
                .ok_or_else(|| Error::InvalidOptions("dynamics not set".into()))?,
        )?;

        let mut stage_costs = Vec::with_capacity(n);
        for (player, c) in self.stage_costs.into_iter().enumerate() {
            let c = c.ok_or_else(|| {
                Error::InvalidOptions(format!("stage cost for player {player} not set"))
            })?;
            let c = if c.len() == 1 {
                vec![c[0].clone(); self.horizon]
            } else if c.len() == self.horizon {
                c
            } else {
                return Err(Error::dimension(
                    format!("per-stage costs for player {player}"),
                    self.horizon,
                    c.len(),
                ));
            };
            stage_costs.push(c);
        }

        let terminal_costs = self
            .terminal_costs
            .into_iter()
            .enumerate()
            .map(|(player, c)| {
                c.ok_or_else(|| {
                    Error::InvalidOptions(format!("terminal cost for player {player} not set"))
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(GameProblem {
            num_players: n,
            horizon: self.horizon,
            state_dim: self.state_dim,
            input_dims: self.input_dims,
            input_offsets: offsets,
            dynamics,
            stage_costs,
            terminal_costs,
        })
    }
}

/// A state/control pair produced by [`rollout`]: `T + 1` states and `T`
/// stacked controls, dynamically consistent by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn initial_state(&self) -> &DVector<f64> {
        &self.states[0]
    }

    pub fn terminal_state(&self) -> &DVector<f64> {
        &self.states[self.states.len() - 1]
    }
}

/// Per-player cost totals along a trajectory, with the stage breakdown
/// (`per_stage[n]` holds stages `0..T-1` followed by the terminal cost).
#[derive(Debug, Clone)]
pub struct PlayerCosts {
    pub totals: Vec<f64>,
    pub per_stage: Vec<Vec<f64>>,
}

/// Rolls the dynamics forward from `x0` under the given control sequence.
///
/// Fails on dimension mismatches and on the first stage that produces a
/// non-finite state.
pub fn rollout(
    problem: &GameProblem,
    x0: &DVector<f64>,
    controls: &[DVector<f64>],
) -> Result<Trajectory> {
    if x0.len() != problem.state_dim() {
        return Err(Error::dimension("x0", problem.state_dim(), x0.len()));
    }
    if controls.len() != problem.horizon() {
        return Err(Error::dimension(
            "control sequence length",
            problem.horizon(),
            controls.len(),
        ));
    }
    let mut states = Vec::with_capacity(problem.horizon() + 1);
    states.push(x0.clone());
    for (k, u) in controls.iter().enumerate() {
        if u.len() != problem.input_dim() {
            return Err(Error::dimension(
                format!("control at stage {k}"),
                problem.input_dim(),
                u.len(),
            ));
        }
        let next = problem.dynamics(k).value(&states[k], u);
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
        states.push(next);
    }
    Ok(Trajectory {
        states,
        controls: controls.to_vec(),
    })
}

/// Per-player totals of stage costs `k = 0..T-1` plus the terminal cost.
pub fn total_cost(problem: &GameProblem, traj: &Trajectory) -> Result<PlayerCosts> {
    check_trajectory_dims(problem, traj)?;
    let t = problem.horizon();
    let mut totals = vec![0.0; problem.num_players()];
    let mut per_stage = vec![Vec::with_capacity(t + 1); problem.num_players()];
    for n in 0..problem.num_players() {
        for k in 0..t {
            let c = problem
                .stage_cost(n, k)
                .value(&traj.states[k], &traj.controls[k]);
            per_stage[n].push(c);
            totals[n] += c;
        }
        let ct = problem.terminal_cost(n).value(&traj.states[t]);
        per_stage[n].push(ct);
        totals[n] += ct;
    }
    Ok(PlayerCosts { totals, per_stage })
}

/// Per-player cost-to-go from stage `from`: `Σ_{k=from}^{T-1} c_{n,k} + c_{n,T}`.
pub fn cost_to_go(problem: &GameProblem, traj: &Trajectory, from: usize) -> Result<Vec<f64>> {
    check_trajectory_dims(problem, traj)?;
    let t = problem.horizon();
    let mut out = vec![0.0; problem.num_players()];
    for n in 0..problem.num_players() {
        for k in from..t {
            out[n] += problem
                .stage_cost(n, k)
                .value(&traj.states[k], &traj.controls[k]);
        }
        out[n] += problem.terminal_cost(n).value(&traj.states[t]);
    }
    Ok(out)
}

fn check_trajectory_dims(problem: &GameProblem, traj: &Trajectory) -> Result<()> {
    if traj.controls.len() != problem.horizon() {
        return Err(Error::dimension(
            "trajectory controls",
            problem.horizon(),
            traj.controls.len(),
        ));
    }
    if traj.states.len() != problem.horizon() + 1 {
        return Err(Error::dimension(
            "trajectory states",
            problem.horizon() + 1,
            traj.states.len(),
        ));
    }
    for (k, x) in traj.states.iter().enumerate() {
        if x.len() != problem.state_dim() {
            return Err(Error::dimension(
                format!("state at stage {k}"),
                problem.state_dim(),
                x.len(),
            ));
        }
    }
    for (k, u) in traj.controls.iter().enumerate() {
        if u.len() != problem.input_dim() {
            return Err(Error::dimension(
                format!("control at stage {k}"),
                problem.input_dim(),
                u.len(),
            ));
        }
    }
    Ok(())
}

/// One finding from [`validate`].
#[derive(Debug, Clone)]
pub enum Diagnostic {
    Dimension {
        what: String,
        expected: usize,
        actual: usize,
    },
    /// An analytic derivative block disagrees with central differences;
    /// `rel_error` is measured against the finite-difference reference.
    DerivativeMismatch {
        stage: Option<usize>,
        player: Option<usize>,
        block: String,
        rel_error: f64,
    },
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Diagnostic::Dimension {
                what,
                expected,
                actual,
            } => write!(f, "dimension: {what} expected {expected}, got {actual}"),
            Diagnostic::DerivativeMismatch {
                stage,
                player,
                block,
                rel_error,
            } => {
                write!(f, "derivative mismatch in {block}")?;
                if let Some(k) = stage {
                    write!(f, " at stage {k}")?;
                }
                if let Some(n) = player {
                    write!(f, " (player {n})")?;
                }
                write!(f, ": relative error {rel_error:.3e}")
            }
        }
    }
}

/// Diagnostics collected by [`validate`]; empty means the problem checks out.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

/// Checks a problem for dimension inconsistencies and for analytic
/// derivatives that disagree with central differences at a few seeded
/// probe points. Collects findings instead of failing.
pub fn validate(problem: &GameProblem) -> ValidationReport {
    validate_with(problem, &ValidateOptions::default())
}

/// Knobs for [`validate`].
pub struct ValidateOptions {
    /// Probe points per checked stage (0 disables derivative checks).
    pub probe_points: usize,
    /// Central-difference step for the derivative comparison.
    pub fd_step: f64,
    /// Relative tolerance against the finite-difference reference.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            probe_points: 3,
            fd_step: 1e-5,
            rel_tol: 1e-2,
            seed: 0x5eed,
        }
    }
}

pub fn validate_with(problem: &GameProblem, opts: &ValidateOptions) -> ValidationReport {
    use rand::Rng;
    use rand::SeedableRng;

    let mut report = ValidationReport::default();
    let n_x = problem.state_dim();
    let n_u = problem.input_dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);

    // Check first, middle and last stage; most problems share suppliers
    // across stages anyway.
    let t = problem.horizon();
    let mut stages = vec![0];
    if t > 2 {
        stages.push(t / 2);
    }
    if t > 1 {
        stages.push(t - 1);
    }

    for &k in &stages {
        for probe in 0..opts.probe_points.max(1) {
            let (x, u) = if probe == 0 {
                (DVector::zeros(n_x), DVector::zeros(n_u))
            } else {
                (
                    DVector::from_fn(n_x, |_, _| rng.random_range(-0.5..0.5)),
                    DVector::from_fn(n_u, |_, _| rng.random_range(-0.5..0.5)),
                )
            };

            let fx = problem.dynamics(k).value(&x, &u);
            if fx.len() != n_x {
                report.diagnostics.push(Diagnostic::Dimension {
                    what: format!("f_{k} output"),
                    expected: n_x,
                    actual: fx.len(),
                });
                continue; // derivative shapes would be garbage too
            }

            if opts.probe_points == 0 {
                continue;
            }
            let analytic = match crate::derivatives::differentiate_stage(problem, k, &x, &u) {
                Ok(sd) => sd,
                Err(e) => {
                    report.diagnostics.push(Diagnostic::DerivativeMismatch {
                        stage: Some(k),
                        player: None,
                        block: format!("supplier failure: {e}"),
                        rel_error: f64::INFINITY,
                    });
                    continue;
                }
            };
            let fd = crate::derivatives::fd_stage_oracle(problem, k, &x, &u, opts.fd_step);
            compare_block(&mut report, k, None, "A", &analytic.a, &fd.a, opts.rel_tol);
            compare_block(&mut report, k, None, "B", &analytic.b, &fd.b, opts.rel_tol);
            for (l, (ga, gf)) in analytic.g.iter().zip(fd.g.iter()).enumerate() {
                compare_block(
                    &mut report,
                    k,
                    None,
                    &format!("G^{l}"),
                    ga,
                    gf,
                    opts.rel_tol,
                );
            }
            for (n, (ma, mf)) in analytic.m.iter().zip(fd.m.iter()).enumerate() {
                compare_block(&mut report, k, Some(n), "M", ma, mf, opts.rel_tol);
            }
        }
    }

    // Terminal costs.
    if opts.probe_points > 0 {
        let x = DVector::from_fn(n_x, |_, _| rng.random_range(-0.5..0.5));
        if let Ok(term) = crate::derivatives::differentiate_terminal(problem, &x) {
            let fd = crate::derivatives::fd_terminal_oracle(problem, &x, opts.fd_step);
            for (n, (ma, mf)) in term.m.iter().zip(fd.m.iter()).enumerate() {
                compare_block(&mut report, t, Some(n), "terminal", ma, mf, opts.rel_tol);
            }
        }
    }

    report
}

fn compare_block(
    report: &mut ValidationReport,
    stage: usize,
    player: Option<usize>,
    block: &str,
    analytic: &DMatrix<f64>,
    fd: &DMatrix<f64>,
    rel_tol: f64,
) {
    if analytic.shape() != fd.shape() {
        report.diagnostics.push(Diagnostic::Dimension {
            what: format!("{block} at stage {stage}"),
            expected: fd.nrows() * fd.ncols(),
            actual: analytic.nrows() * analytic.ncols(),
        });
        return;
    }
    // Relative to the FD reference, floored so FD noise on tiny entries
    // does not trip the check.
    let floor = 1e-3_f64.max(1e-2 * fd.amax());
    let mut worst = 0.0_f64;
    for (a, b) in analytic.iter().zip(fd.iter()) {
        let rel = (a - b).abs() / b.abs().max(floor);
        worst = worst.max(rel);
    }
    if worst > rel_tol {
        report.diagnostics.push(Diagnostic::DerivativeMismatch {
            stage: Some(stage),
            player,
            block: block.to_string(),
            rel_error: worst,
        });
    }
}
