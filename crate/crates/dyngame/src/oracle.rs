//! Brute-force verification oracles.
//!
//! Everything here is deliberately slow and structure-blind: dense
//! finite-difference Jacobians of the stationarity residual, the dense
//! Newton step solved as one linear system, finite-difference cost
//! gradients, and random best-response probes. These are the references the
//! fast stagewise passes are tested against, guarded so they are never
//! mistaken for the production path.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::sync::Arc;

use crate::backward::AffinePolicy;
use crate::error::{Error, Result};
use crate::game::{rollout, total_cost, CostHessian, Dynamics, GameProblem, StageCost, Trajectory};
use crate::solver::stationarity_residual;

/// Hard cap on the stacked control dimension the dense oracles accept.
pub const ORACLE_DIM_GUARD: usize = 400;

/// Maps (player, stage, component) to coordinates of the player-major
/// stacked control vector used by the residual and the dense Jacobian.
#[derive(Debug, Clone)]
pub struct ControlIndexMap {
    pub horizon: usize,
    pub input_dims: Vec<usize>,
    player_starts: Vec<usize>,
}

impl ControlIndexMap {
    pub fn new(problem: &GameProblem) -> Self {
        let horizon = problem.horizon();
        let input_dims = problem.input_dims().to_vec();
        let mut player_starts = Vec::with_capacity(input_dims.len() + 1);
        player_starts.push(0);
        for d in &input_dims {
            player_starts.push(player_starts.last().unwrap() + d * horizon);
        }
        ControlIndexMap {
            horizon,
            input_dims,
            player_starts,
        }
    }

    pub fn total_dim(&self) -> usize {
        *self.player_starts.last().unwrap()
    }

    pub fn flat_index(&self, player: usize, stage: usize, component: usize) -> usize {
        self.player_starts[player] + stage * self.input_dims[player] + component
    }

    /// Stage-major control sequence -> player-major flat vector.
    pub fn flatten(&self, controls: &[DVector<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.total_dim());
        let mut offset = 0;
        for (player, &d) in self.input_dims.iter().enumerate() {
            for (k, u) in controls.iter().enumerate() {
                for c in 0..d {
                    out[self.flat_index(player, k, c)] = u[offset + c];
                }
            }
            offset += d;
        }
        out
    }

    /// Player-major flat vector -> stage-major stacked control sequence.
    pub fn unflatten(&self, v: &DVector<f64>) -> Vec<DVector<f64>> {
        let n_u: usize = self.input_dims.iter().sum();
        let mut out = vec![DVector::zeros(n_u); self.horizon];
        let mut offset = 0;
        for (player, &d) in self.input_dims.iter().enumerate() {
            for (k, u) in out.iter_mut().enumerate() {
                for c in 0..d {
                    u[offset + c] = v[self.flat_index(player, k, c)];
                }
            }
            offset += d;
        }
        out
    }
}

/// The stacked residual and its dense finite-difference Jacobian.
#[derive(Debug, Clone)]
pub struct DenseSystem {
    pub residual: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub index_map: ControlIndexMap,
}

fn fd_step(h: f64, v: f64) -> f64 {
    h * v.abs().max(1.0)
}

/// Central-difference Jacobian of the stationarity residual with respect to
/// every control coordinate. `O(T²)` work by construction; refuses stacked
/// dimensions above [`ORACLE_DIM_GUARD`].
pub fn dense_jacobian(
    problem: &GameProblem,
    x0: &DVector<f64>,
    controls: &[DVector<f64>],
    h: f64,
) -> Result<DenseSystem> {
    let index_map = ControlIndexMap::new(problem);
    let dim = index_map.total_dim();
    if dim > ORACLE_DIM_GUARD {
        return Err(Error::OracleDimensionGuard {
            dim,
            guard: ORACLE_DIM_GUARD,
        });
    }

    let residual_at = |flat: &DVector<f64>| -> Result<DVector<f64>> {
        let controls = index_map.unflatten(flat);
        let traj = rollout(problem, x0, &controls)?;
        Ok(stationarity_residual(problem, &traj)?.stacked)
    };

    let flat0 = index_map.flatten(controls);
    let residual = residual_at(&flat0)?;
    let mut jacobian = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let hj = fd_step(h, flat0[j]);
        let mut plus = flat0.clone();
        plus[j] += hj;
        let mut minus = flat0.clone();
        minus[j] -= hj;
        let col = (residual_at(&plus)? - residual_at(&minus)?) / (2.0 * hj);
        jacobian.set_column(j, &col);
    }

    Ok(DenseSystem {
        residual,
        jacobian,
        index_map,
    })
}

/// Solves the dense Newton system `J δu = -residual` and reshapes the
/// solution into per-stage stacked control deltas.
pub fn dense_newton_step(ds: &DenseSystem) -> Result<Vec<DVector<f64>>> {
    let sv = ds.jacobian.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
    if !rcond.is_finite() || rcond < 1e-12 {
        return Err(Error::SingularJacobian { rcond });
    }
    let delta = ds
        .jacobian
        .clone()
        .lu()
        .solve(&(-&ds.residual))
        .ok_or(Error::SingularJacobian { rcond })?;
    Ok(ds.index_map.unflatten(&delta))
}

/// Samples unilateral perturbations of one player's controls on the sphere
/// of the given radius and returns the worst signed change of that player's
/// total cost (`perturbed - nominal`). A negative return means the player
/// found an improving deviation, violating the equilibrium condition by
/// that amount.
pub fn best_response_probe(
    problem: &GameProblem,
    traj: &Trajectory,
    player: usize,
    num_samples: usize,
    radius: f64,
    seed: u64,
) -> Result<f64> {
    let t = problem.horizon();
    let d = problem.input_dims()[player];
    let offset = problem.input_offset(player);
    let nominal = total_cost(problem, traj)?.totals[player];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if num_samples == 0 {
        return Ok(0.0);
    }
    let mut worst = f64::INFINITY;

    for _ in 0..num_samples {
        let mut direction = DVector::from_fn(t * d, |_, _| {
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let norm = direction.norm();
        if norm > 0.0 && radius > 0.0 {
            direction *= radius / norm;
        } else {
            direction.fill(0.0);
        }

        let mut controls = traj.controls.clone();
        for (k, u) in controls.iter_mut().enumerate() {
            for c in 0..d {
                u[offset + c] += direction[k * d + c];
            }
        }
        let perturbed_traj = rollout(problem, traj.initial_state(), &controls)?;
        let perturbed = total_cost(problem, &perturbed_traj)?.totals[player];
        worst = worst.min(perturbed - nominal);
    }
    Ok(worst)
}

/// Central-difference gradient of player `n`'s total cost with respect to
/// each of its own per-stage inputs; the independent reference for the
/// adjoint-based stationarity residual.
pub fn fd_control_gradient(
    problem: &GameProblem,
    x0: &DVector<f64>,
    controls: &[DVector<f64>],
    player: usize,
    h: f64,
) -> Result<Vec<DVector<f64>>> {
    let t = problem.horizon();
    let d = problem.input_dims()[player];
    let offset = problem.input_offset(player);
    let eval = |controls: &[DVector<f64>]| -> Result<f64> {
        let traj = rollout(problem, x0, controls)?;
        Ok(total_cost(problem, &traj)?.totals[player])
    };
    let mut out = Vec::with_capacity(t);
    for k in 0..t {
        let mut grad = DVector::zeros(d);
        for c in 0..d {
            let hj = fd_step(h, controls[k][offset + c]);
            let mut plus = controls.to_vec();
            plus[k][offset + c] += hj;
            let mut minus = controls.to_vec();
            minus[k][offset + c] -= hj;
            grad[c] = (eval(&plus)? - eval(&minus)?) / (2.0 * hj);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Central-difference gradient of player `n`'s cost-to-go from stage `k`
/// with respect to the stage-`k` state, re-rolling the tail of the
/// trajectory with unchanged controls.
pub fn fd_cost_to_go_gradient(
    problem: &GameProblem,
    traj: &Trajectory,
    player: usize,
    k: usize,
    h: f64,
) -> Result<DVector<f64>> {
    let t = problem.horizon();
    let n_x = problem.state_dim();
    let tail = |xk: &DVector<f64>| -> Result<f64> {
        let mut x = xk.clone();
        let mut total = 0.0;
        for j in k..t {
            total += problem.stage_cost(player, j).value(&x, &traj.controls[j]);
            x = problem.dynamics(j).value(&x, &traj.controls[j]);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { stage: j });
            }
        }
        Ok(total + problem.terminal_cost(player).value(&x))
    };
    let mut grad = DVector::zeros(n_x);
    for i in 0..n_x {
        let hi = fd_step(h, traj.states[k][i]);
        let mut plus = traj.states[k].clone();
        plus[i] += hi;
        let mut minus = traj.states[k].clone();
        minus[i] -= hi;
        grad[i] = (tail(&plus)? - tail(&minus)?) / (2.0 * hi);
    }
    Ok(grad)
}

/// Affine embedding of one player's input into the full stacked input at
/// one stage, with every other player following an affine state-feedback
/// policy around the nominal.
struct StageEmbed {
    player_offset: usize,
    player_dim: usize,
    /// Feedback rows for the other players; zero rows for the solving
    /// player. `n_u × n_x`.
    ku: DMatrix<f64>,
    /// `ū_k + s_k - K_k x̄_k` with the solving player's rows zeroed.
    base: DVector<f64>,
}

impl StageEmbed {
    fn full_input(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut u = &self.base + &self.ku * x;
        u.rows_mut(self.player_offset, self.player_dim).copy_from(v);
        u
    }

    /// `∂u/∂(x, v)` as the pair (`∂u/∂x`, selection `∂u/∂v`).
    fn selection(&self) -> DMatrix<f64> {
        let n_u = self.ku.nrows();
        let mut e = DMatrix::zeros(n_u, self.player_dim);
        for c in 0..self.player_dim {
            e[(self.player_offset + c, c)] = 1.0;
        }
        e
    }
}

struct RestrictedDynamics {
    inner: Arc<dyn Dynamics>,
    embed: StageEmbed,
}

impl Dynamics for RestrictedDynamics {
    fn value(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.inner.value(x, &self.embed.full_input(x, v))
    }

    fn jacobians(&self, x: &DVector<f64>, v: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let u = self.embed.full_input(x, v);
        let (a, b) = self.inner.jacobians(x, &u);
        let a_eff = &a + &b * &self.embed.ku;
        let b_eff = &b * self.embed.selection();
        (a_eff, b_eff)
    }

    fn hessians(&self, x: &DVector<f64>, v: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let u = self.embed.full_input(x, v);
        let j = self.substitution_jacobian(x);
        self.inner
            .hessians(x, &u)
            .iter()
            .map(|g| j.transpose() * g * &j)
            .collect()
    }
}

impl RestrictedDynamics {
    /// `∂(x, u)/∂(x, v)`: constant because the substituted policies are
    /// affine in the state.
    fn substitution_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n_x = x.len();
        let n_u = self.embed.ku.nrows();
        let d = self.embed.player_dim;
        let mut j = DMatrix::zeros(n_x + n_u, n_x + d);
        j.view_mut((0, 0), (n_x, n_x))
            .copy_from(&DMatrix::identity(n_x, n_x));
        j.view_mut((n_x, 0), (n_u, n_x)).copy_from(&self.embed.ku);
        j.view_mut((n_x, n_x), (n_u, d))
            .copy_from(&self.embed.selection());
        j
    }
}

struct RestrictedStageCost {
    inner: Arc<dyn StageCost>,
    embed: StageEmbed,
}

impl StageCost for RestrictedStageCost {
    fn value(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.inner.value(x, &self.embed.full_input(x, v))
    }

    fn gradient(&self, x: &DVector<f64>, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let u = self.embed.full_input(x, v);
        let (cx, cu) = self.inner.gradient(x, &u);
        let gx = cx + self.embed.ku.transpose() * &cu;
        let gv = cu
            .rows(self.embed.player_offset, self.embed.player_dim)
            .into_owned();
        (gx, gv)
    }

    fn hessian(&self, x: &DVector<f64>, v: &DVector<f64>) -> CostHessian {
        let u = self.embed.full_input(x, v);
        let h = self.inner.hessian(x, &u);
        let ku = &self.embed.ku;
        let e = self.embed.selection();
        let xx =
            &h.xx + &h.xu * ku + ku.transpose() * h.xu.transpose() + ku.transpose() * &h.uu * ku;
        let xv = &h.xu * &e + ku.transpose() * &h.uu * &e;
        let vv = e.transpose() * &h.uu * &e;
        CostHessian { xx, xu: xv, uu: vv }
    }
}

/// Builds the single-agent optimal control problem faced by `player` when
/// every other player is frozen to the affine policy around `nominal`.
/// The returned problem has one player whose input is `player`'s block.
pub fn single_player_restriction(
    problem: &GameProblem,
    nominal: &Trajectory,
    policy: &AffinePolicy,
    player: usize,
) -> Result<GameProblem> {
    let t = problem.horizon();
    if policy.horizon() != t || nominal.horizon() != t {
        return Err(Error::dimension("policy horizon", t, policy.horizon()));
    }
    let n_u = problem.input_dim();
    let offset = problem.input_offset(player);
    let d = problem.input_dims()[player];

    let mut dynamics: Vec<Arc<dyn Dynamics>> = Vec::with_capacity(t);
    let mut costs: Vec<Arc<dyn StageCost>> = Vec::with_capacity(t);
    for k in 0..t {
        let mut ku = policy.gains[k].clone();
        let mut base =
            &nominal.controls[k] + &policy.offsets[k] - &policy.gains[k] * &nominal.states[k];
        for r in 0..d {
            for c in 0..ku.ncols() {
                ku[(offset + r, c)] = 0.0;
            }
            base[offset + r] = 0.0;
        }
        let embed = StageEmbed {
            player_offset: offset,
            player_dim: d,
            ku: ku.clone(),
            base: base.clone(),
        };
        dynamics.push(Arc::new(RestrictedDynamics {
            inner: problem.dynamics_handle(k),
            embed,
        }));
        let embed = StageEmbed {
            player_offset: offset,
            player_dim: d,
            ku,
            base,
        };
        costs.push(Arc::new(RestrictedStageCost {
            inner: problem.stage_cost_handle(player, k),
            embed,
        }));
    }
    let _ = n_u;

    GameProblem::builder()
        .num_players(1)
        .horizon(t)
        .state_dim(problem.state_dim())
        .input_dims(vec![d])
        .dynamics_per_stage(dynamics)
        .stage_costs_per_stage(0, costs)
        .terminal_cost(0, problem.terminal_cost_handle(player))
        .build()
}
