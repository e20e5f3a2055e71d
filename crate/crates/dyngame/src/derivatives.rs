//! Per-stage derivative bundles along a nominal trajectory.
//!
//! Both solver backends consume the same bundle: the dynamics Jacobians
//! `(A, B)`, the per-component dynamics Hessians `G^l` over the stacked
//! `(x, u)`, and one symmetric cost matrix per player
//!
//! ```text
//!         [ 2c   c_x   c_u  ]
//! M   =   [ c_x' c_xx  c_xu ]
//!         [ c_u' c_ux  c_uu ]
//! ```
//!
//! A value-only central-difference oracle ([`fd_stage_oracle`]) provides an
//! independent reference for every analytic block.

use nalgebra::{DMatrix, DVector};
use once_cell::sync::Lazy;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::{GameProblem, Trajectory};

/// Derivative bundle of one controlled stage.
#[derive(Debug, Clone)]
pub struct StageDerivatives {
    /// ∂f/∂x, `n_x × n_x`.
    pub a: DMatrix<f64>,
    /// ∂f/∂u, `n_x × n_u`.
    pub b: DMatrix<f64>,
    /// Second derivative of each dynamics component over `(x, u)`;
    /// `n_x` symmetric matrices of size `(n_x + n_u)^2`.
    pub g: Vec<DMatrix<f64>>,
    /// Per-player cost matrices, symmetric, `(1 + n_x + n_u)^2`.
    pub m: Vec<DMatrix<f64>>,
}

/// Terminal-cost quadraticization per player: symmetric `(1 + n_x)^2`
/// matrices `[[2c, c_x], [c_x', c_xx]]`.
#[derive(Debug, Clone)]
pub struct TerminalDerivatives {
    pub m: Vec<DMatrix<f64>>,
}

fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn ensure_finite(m: &DMatrix<f64>, stage: usize, block: &str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteDerivative {
            stage,
            block: block.to_string(),
        });
    }
    Ok(())
}

/// Evaluates the analytic bundle at `(x, u)` for stage `k`. Hessian blocks
/// are symmetrized by averaging with their transpose.
pub fn differentiate_stage(
    problem: &GameProblem,
    k: usize,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<StageDerivatives> {
    let n_x = problem.state_dim();
    let n_u = problem.input_dim();
    let n_z = n_x + n_u;
    if x.len() != n_x {
        return Err(Error::dimension(format!("x at stage {k}"), n_x, x.len()));
    }
    if u.len() != n_u {
        return Err(Error::dimension(format!("u at stage {k}"), n_u, u.len()));
    }

    let dyn_k = problem.dynamics(k);
    let (a, b) = dyn_k.jacobians(x, u);
    if a.shape() != (n_x, n_x) {
        return Err(Error::dimension(
            format!("A at stage {k}"),
            n_x * n_x,
            a.len(),
        ));
    }
    if b.shape() != (n_x, n_u) {
        return Err(Error::dimension(
            format!("B at stage {k}"),
            n_x * n_u,
            b.len(),
        ));
    }
    ensure_finite(&a, k, "A")?;
    ensure_finite(&b, k, "B")?;

    let g_raw = dyn_k.hessians(x, u);
    if g_raw.len() != n_x {
        return Err(Error::dimension(
            format!("G count at stage {k}"),
            n_x,
            g_raw.len(),
        ));
    }
    let mut g = Vec::with_capacity(n_x);
    for (l, gl) in g_raw.iter().enumerate() {
        if gl.shape() != (n_z, n_z) {
            return Err(Error::dimension(
                format!("G^{l} at stage {k}"),
                n_z * n_z,
                gl.len(),
            ));
        }
        let gl = symmetrized(gl);
        ensure_finite(&gl, k, &format!("G^{l}"))?;
        g.push(gl);
    }

    let mut m = Vec::with_capacity(problem.num_players());
    for n in 0..problem.num_players() {
        let cost = problem.stage_cost(n, k);
        let value = cost.value(x, u);
        let (cx, cu) = cost.gradient(x, u);
        if cx.len() != n_x || cu.len() != n_u {
            return Err(Error::dimension(
                format!("cost gradient for player {n} at stage {k}"),
                n_x + n_u,
                cx.len() + cu.len(),
            ));
        }
        let hess = cost.hessian(x, u);
        if hess.xx.shape() != (n_x, n_x)
            || hess.xu.shape() != (n_x, n_u)
            || hess.uu.shape() != (n_u, n_u)
        {
            return Err(Error::dimension(
                format!("cost Hessian for player {n} at stage {k}"),
                n_z * n_z,
                hess.xx.len() + 2 * hess.xu.len() + hess.uu.len(),
            ));
        }
        let mut mk = DMatrix::zeros(1 + n_z, 1 + n_z);
        mk[(0, 0)] = 2.0 * value;
        for i in 0..n_x {
            mk[(0, 1 + i)] = cx[i];
            mk[(1 + i, 0)] = cx[i];
        }
        for i in 0..n_u {
            mk[(0, 1 + n_x + i)] = cu[i];
            mk[(1 + n_x + i, 0)] = cu[i];
        }
        mk.view_mut((1, 1), (n_x, n_x))
            .copy_from(&symmetrized(&hess.xx));
        mk.view_mut((1, 1 + n_x), (n_x, n_u)).copy_from(&hess.xu);
        mk.view_mut((1 + n_x, 1), (n_u, n_x))
            .copy_from(&hess.xu.transpose());
        mk.view_mut((1 + n_x, 1 + n_x), (n_u, n_u))
            .copy_from(&symmetrized(&hess.uu));
        let mk = symmetrized(&mk);
        ensure_finite(&mk, k, &format!("M_{n}"))?;
        m.push(mk);
    }

    Ok(StageDerivatives { a, b, g, m })
}

/// Quadraticizes the terminal costs at `x_T`.
pub fn differentiate_terminal(
    problem: &GameProblem,
    x_t: &DVector<f64>,
) -> Result<TerminalDerivatives> {
    let n_x = problem.state_dim();
    let t = problem.horizon();
    if x_t.len() != n_x {
        return Err(Error::dimension("terminal state", n_x, x_t.len()));
    }
    let mut m = Vec::with_capacity(problem.num_players());
    for n in 0..problem.num_players() {
        let cost = problem.terminal_cost(n);
        let value = cost.value(x_t);
        let grad = cost.gradient(x_t);
        if grad.len() != n_x {
            return Err(Error::dimension(
                format!("terminal gradient for player {n}"),
                n_x,
                grad.len(),
            ));
        }
        let hess = cost.hessian(x_t);
        if hess.shape() != (n_x, n_x) {
            return Err(Error::dimension(
                format!("terminal Hessian for player {n}"),
                n_x * n_x,
                hess.len(),
            ));
        }
        let mut mk = DMatrix::zeros(1 + n_x, 1 + n_x);
        mk[(0, 0)] = 2.0 * value;
        for i in 0..n_x {
            mk[(0, 1 + i)] = grad[i];
            mk[(1 + i, 0)] = grad[i];
        }
        mk.view_mut((1, 1), (n_x, n_x))
            .copy_from(&symmetrized(&hess));
        ensure_finite(&mk, t, &format!("terminal M_{n}"))?;
        m.push(mk);
    }
    Ok(TerminalDerivatives { m })
}

/// Optional cap on derivative-evaluation parallelism via `DYNGAME_THREADS`.
static FD_POOL: Lazy<Option<rayon::ThreadPool>> = Lazy::new(|| {
    let n = std::env::var("DYNGAME_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build()
        .ok()
});

fn with_pool<R: Send>(op: impl FnOnce() -> R + Send) -> R {
    match &*FD_POOL {
        Some(pool) => pool.install(op),
        None => op(),
    }
}

/// Evaluates the analytic bundles for every controlled stage of `traj`
/// plus the terminal quadraticization. Stages are independent and run in
/// parallel (capped by `DYNGAME_THREADS`).
pub fn differentiate_trajectory(
    problem: &GameProblem,
    traj: &Trajectory,
) -> Result<(Vec<StageDerivatives>, TerminalDerivatives)> {
    let t = problem.horizon();
    if traj.horizon() != t {
        return Err(Error::dimension("trajectory horizon", t, traj.horizon()));
    }
    let stages = with_pool(|| {
        (0..t)
            .into_par_iter()
            .map(|k| differentiate_stage(problem, k, &traj.states[k], &traj.controls[k]))
            .collect::<Result<Vec<_>>>()
    })?;
    let terminal = differentiate_terminal(problem, &traj.states[t])?;
    Ok((stages, terminal))
}

/// Central-difference step for coordinate value `v`: `h` scaled by
/// `max(1, |v|)`.
fn step(h: f64, v: f64) -> f64 {
    h * v.abs().max(1.0)
}

/// Central-difference bundle built from the value maps only; the reference
/// used by tests and [`crate::game::validate`]. Truncation error is
/// `O(h^2)` per block.
pub fn fd_stage_oracle(
    problem: &GameProblem,
    k: usize,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
) -> StageDerivatives {
    let n_x = problem.state_dim();
    let n_u = problem.input_dim();
    let n_z = n_x + n_u;
    let dyn_k = problem.dynamics(k);

    let eval = |z: &DVector<f64>| -> DVector<f64> {
        let xs = z.rows(0, n_x).into_owned();
        let us = z.rows(n_x, n_u).into_owned();
        dyn_k.value(&xs, &us)
    };
    let z0 = stack(x, u);

    let mut a = DMatrix::zeros(n_x, n_x);
    let mut b = DMatrix::zeros(n_x, n_u);
    for i in 0..n_z {
        let hi = step(h, z0[i]);
        let mut zp = z0.clone();
        zp[i] += hi;
        let mut zm = z0.clone();
        zm[i] -= hi;
        let col = (eval(&zp) - eval(&zm)) / (2.0 * hi);
        if i < n_x {
            a.set_column(i, &col);
        } else {
            b.set_column(i - n_x, &col);
        }
    }

    let f0 = eval(&z0);
    let mut g = vec![DMatrix::zeros(n_z, n_z); n_x];
    for i in 0..n_z {
        let hi = step(h, z0[i]);
        for j in i..n_z {
            let hj = step(h, z0[j]);
            let second = if i == j {
                let mut zp = z0.clone();
                zp[i] += hi;
                let mut zm = z0.clone();
                zm[i] -= hi;
                (eval(&zp) - 2.0 * &f0 + eval(&zm)) / (hi * hi)
            } else {
                let mut zpp = z0.clone();
                zpp[i] += hi;
                zpp[j] += hj;
                let mut zpm = z0.clone();
                zpm[i] += hi;
                zpm[j] -= hj;
                let mut zmp = z0.clone();
                zmp[i] -= hi;
                zmp[j] += hj;
                let mut zmm = z0.clone();
                zmm[i] -= hi;
                zmm[j] -= hj;
                (eval(&zpp) - eval(&zpm) - eval(&zmp) + eval(&zmm)) / (4.0 * hi * hj)
            };
            for l in 0..n_x {
                g[l][(i, j)] = second[l];
                g[l][(j, i)] = second[l];
            }
        }
    }

    let mut m = Vec::with_capacity(problem.num_players());
    for n in 0..problem.num_players() {
        let cost = problem.stage_cost(n, k);
        let eval_c = |z: &DVector<f64>| -> f64 {
            let xs = z.rows(0, n_x).into_owned();
            let us = z.rows(n_x, n_u).into_owned();
            cost.value(&xs, &us)
        };
        m.push(fd_scalar_quadraticization(&eval_c, &z0, h));
    }

    StageDerivatives { a, b, g, m }
}

/// Central-difference terminal quadraticization from the value map only.
pub fn fd_terminal_oracle(
    problem: &GameProblem,
    x_t: &DVector<f64>,
    h: f64,
) -> TerminalDerivatives {
    let m = (0..problem.num_players())
        .map(|n| {
            let cost = problem.terminal_cost(n);
            let eval_c = |z: &DVector<f64>| cost.value(z);
            fd_scalar_quadraticization(&eval_c, x_t, h)
        })
        .collect();
    TerminalDerivatives { m }
}

/// `[[2c, grad], [grad', hess]]` of a scalar map by central differences.
fn fd_scalar_quadraticization(
    eval: &dyn Fn(&DVector<f64>) -> f64,
    z0: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let n = z0.len();
    let c0 = eval(z0);
    let mut m = DMatrix::zeros(1 + n, 1 + n);
    m[(0, 0)] = 2.0 * c0;
    for i in 0..n {
        let hi = step(h, z0[i]);
        let mut zp = z0.clone();
        zp[i] += hi;
        let mut zm = z0.clone();
        zm[i] -= hi;
        let gi = (eval(&zp) - eval(&zm)) / (2.0 * hi);
        m[(0, 1 + i)] = gi;
        m[(1 + i, 0)] = gi;
    }
    for i in 0..n {
        let hi = step(h, z0[i]);
        for j in i..n {
            let hj = step(h, z0[j]);
            let second = if i == j {
                let mut zp = z0.clone();
                zp[i] += hi;
                let mut zm = z0.clone();
                zm[i] -= hi;
                (eval(&zp) - 2.0 * c0 + eval(&zm)) / (hi * hi)
            } else {
                let mut zpp = z0.clone();
                zpp[i] += hi;
                zpp[j] += hj;
                let mut zpm = z0.clone();
                zpm[i] += hi;
                zpm[j] -= hj;
                let mut zmp = z0.clone();
                zmp[i] -= hi;
                zmp[j] += hj;
                let mut zmm = z0.clone();
                zmm[i] -= hi;
                zmm[j] -= hj;
                (eval(&zpp) - eval(&zpm) - eval(&zmp) + eval(&zmm)) / (4.0 * hi * hj)
            };
            m[(1 + i, 1 + j)] = second;
            m[(1 + j, 1 + i)] = second;
        }
    }
    m
}

fn stack(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let mut z = DVector::zeros(x.len() + u.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), u.len()).copy_from(u);
    z
}

/// Second-order Taylor prediction of the dynamics around the nominal:
/// `f̄ + A δx + B δu + ½ R(δx, δu)` where `R` stacks the quadratic forms
/// of the `G^l` matrices. Exact for dynamics that are quadratic in `(x, u)`.
pub fn eval_quadratic_dynamics(
    sd: &StageDerivatives,
    f_nominal: &DVector<f64>,
    dx: &DVector<f64>,
    du: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n_x = sd.a.nrows();
    let n_u = sd.b.ncols();
    if dx.len() != n_x {
        return Err(Error::dimension("dx", n_x, dx.len()));
    }
    if du.len() != n_u {
        return Err(Error::dimension("du", n_u, du.len()));
    }
    if f_nominal.len() != n_x {
        return Err(Error::dimension("f_nominal", n_x, f_nominal.len()));
    }
    let z = stack(dx, du);
    let mut out = f_nominal + &sd.a * dx + &sd.b * du;
    for (l, gl) in sd.g.iter().enumerate() {
        out[l] += 0.5 * (gl * &z).dot(&z);
    }
    Ok(out)
}
