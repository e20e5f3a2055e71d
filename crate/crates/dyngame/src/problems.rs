//! Problem catalog: the two nonlinear benchmark games plus a seeded
//! linear-quadratic generator used as the exactness backbone in tests.
//!
//! Problems are addressable by name (`owner-dog`, `planar-robots`,
//! `random-lq`) from the CLI; [`build_problem`] applies parameter overrides
//! and returns the catalog defaults (initial state, regularization, initial
//! controls) alongside the constructed game.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::game::{CostHessian, Dynamics, GameProblem, StageCost, TerminalCost};

pub const OWNER_DOG: &str = "owner-dog";
pub const PLANAR_ROBOTS: &str = "planar-robots";
pub const RANDOM_LQ: &str = "random-lq";

/// Catalog record: name plus the defaults a run starts from.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub horizon: usize,
    /// Default initial state; empty when it is seed-dependent.
    pub x0: Vec<f64>,
    /// Default regularization magnitude.
    pub lambda: f64,
    /// Scalar parameters that may be overridden by name.
    pub params: BTreeMap<String, f64>,
}

/// A constructed problem together with its resolved run defaults.
pub struct BuiltProblem {
    pub problem: GameProblem,
    pub spec: ProblemSpec,
    pub x0: DVector<f64>,
    pub lambda: f64,
    pub initial_controls: Vec<DVector<f64>>,
}

fn params(entries: &[(&str, f64)]) -> BTreeMap<String, f64> {
    entries.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// All registered problems with their defaults.
pub fn catalog() -> Vec<ProblemSpec> {
    vec![
        ProblemSpec {
            name: OWNER_DOG.into(),
            horizon: 10,
            x0: vec![-1.0, 2.0],
            lambda: 30.0,
            params: params(&[("horizon", 10.0)]),
        },
        ProblemSpec {
            name: PLANAR_ROBOTS.into(),
            horizon: 119,
            x0: vec![1.96, 0.24, -0.72, 1.39, -0.49, -2.00],
            lambda: 10.0,
            params: params(&[
                ("horizon", 119.0),
                ("dt", 0.04),
                ("alpha", 10.0),
                ("beta", 3.0),
                ("radius", 0.25),
            ]),
        },
        ProblemSpec {
            name: RANDOM_LQ.into(),
            horizon: 20,
            x0: Vec::new(),
            lambda: 0.0,
            params: params(&[
                ("horizon", 20.0),
                ("num_players", 2.0),
                ("state_dim", 4.0),
                ("input_dim", 2.0),
            ]),
        },
    ]
}

pub fn catalog_names() -> Vec<String> {
    catalog().into_iter().map(|s| s.name).collect()
}

fn apply_overrides(spec: &mut ProblemSpec, overrides: &BTreeMap<String, f64>) -> Result<()> {
    for (key, value) in overrides {
        match spec.params.get_mut(key) {
            Some(slot) => *slot = *value,
            None => {
                return Err(Error::UnknownOverride {
                    problem: spec.name.clone(),
                    key: key.clone(),
                    accepted: spec.params.keys().cloned().collect::<Vec<_>>().join(", "),
                })
            }
        }
    }
    spec.horizon = spec
        .params
        .get("horizon")
        .copied()
        .unwrap_or(spec.horizon as f64) as usize;
    Ok(())
}

/// Builds a catalog problem by name with overrides applied. The seed only
/// affects `random-lq`.
pub fn build_problem(
    name: &str,
    seed: u64,
    overrides: &BTreeMap<String, f64>,
) -> Result<BuiltProblem> {
    let mut spec = catalog()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::UnknownProblem {
            name: name.to_string(),
            available: catalog_names().join(", "),
        })?;
    apply_overrides(&mut spec, overrides)?;

    match name {
        OWNER_DOG => {
            let problem = owner_dog_with_horizon(spec.horizon)?;
            let x0 = DVector::from_vec(spec.x0.clone());
            let controls = vec![DVector::zeros(problem.input_dim()); spec.horizon];
            Ok(BuiltProblem {
                x0,
                lambda: spec.lambda,
                initial_controls: controls,
                problem,
                spec,
            })
        }
        PLANAR_ROBOTS => {
            let p = PlanarParams {
                horizon: spec.horizon,
                dt: spec.params["dt"],
                alpha: spec.params["alpha"],
                beta: spec.params["beta"],
                radius: spec.params["radius"],
            };
            let problem = planar_robots_with(&p)?;
            let x0 = DVector::from_vec(spec.x0.clone());
            let controls = planar_push_pull_controls(&p, &x0);
            Ok(BuiltProblem {
                x0,
                lambda: spec.lambda,
                initial_controls: controls,
                problem,
                spec,
            })
        }
        RANDOM_LQ => {
            let n = spec.params["num_players"] as usize;
            let n_x = spec.params["state_dim"] as usize;
            let d = spec.params["input_dim"] as usize;
            let input_dims = vec![d; n];
            let problem = random_lq_game(seed, n, n_x, &input_dims, spec.horizon)?;
            let x0 = random_lq_initial_state(seed, n_x);
            spec.x0 = x0.iter().copied().collect();
            let controls = vec![DVector::zeros(problem.input_dim()); spec.horizon];
            Ok(BuiltProblem {
                x0,
                lambda: spec.lambda,
                initial_controls: controls,
                problem,
                spec,
            })
        }
        _ => unreachable!("catalog names handled above"),
    }
}

// ---------------------------------------------------------------------------
// Owner-dog game
// ---------------------------------------------------------------------------

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct OwnerDogDynamics;

impl Dynamics for OwnerDogDynamics {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[0] + u[0].tanh(), x[1] + u[1].tanh()])
    }

    fn jacobians(&self, _x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (t0, t1) = (u[0].tanh(), u[1].tanh());
        let mut b = DMatrix::zeros(2, 2);
        b[(0, 0)] = 1.0 - t0 * t0;
        b[(1, 1)] = 1.0 - t1 * t1;
        (DMatrix::identity(2, 2), b)
    }

    fn hessians(&self, _x: &DVector<f64>, u: &DVector<f64>) -> Vec<DMatrix<f64>> {
        // z-order: (x0, x1, u0, u1)
        let mut g0 = DMatrix::zeros(4, 4);
        let t0 = u[0].tanh();
        g0[(2, 2)] = -2.0 * t0 * (1.0 - t0 * t0);
        let mut g1 = DMatrix::zeros(4, 4);
        let t1 = u[1].tanh();
        g1[(3, 3)] = -2.0 * t1 * (1.0 - t1 * t1);
        vec![g0, g1]
    }
}

/// Owner stage cost: sigmoid((x0-1)²) + 40(x1-2)² + u0².
struct OwnerStageCost;

fn owner_position_terms(x0: f64, weight: f64) -> (f64, f64, f64) {
    // (value, d/dx0, d²/dx0²) of weight·sigmoid((x0-1)²)
    let w = (x0 - 1.0) * (x0 - 1.0);
    let s = sigmoid(w);
    let s1 = s * (1.0 - s);
    let s2 = s1 * (1.0 - 2.0 * s);
    let dw = 2.0 * (x0 - 1.0);
    (
        weight * s,
        weight * s1 * dw,
        weight * (s2 * dw * dw + 2.0 * s1),
    )
}

impl StageCost for OwnerStageCost {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let (v, _, _) = owner_position_terms(x[0], 1.0);
        v + 40.0 * (x[1] - 2.0) * (x[1] - 2.0) + u[0] * u[0]
    }

    fn gradient(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (_, g0, _) = owner_position_terms(x[0], 1.0);
        (
            DVector::from_vec(vec![g0, 80.0 * (x[1] - 2.0)]),
            DVector::from_vec(vec![2.0 * u[0], 0.0]),
        )
    }

    fn hessian(&self, x: &DVector<f64>, _u: &DVector<f64>) -> CostHessian {
        let (_, _, h0) = owner_position_terms(x[0], 1.0);
        CostHessian {
            xx: DMatrix::from_row_slice(2, 2, &[h0, 0.0, 0.0, 80.0]),
            xu: DMatrix::zeros(2, 2),
            uu: DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]),
        }
    }
}

struct OwnerTerminalCost;

impl TerminalCost for OwnerTerminalCost {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let (v, _, _) = owner_position_terms(x[0], 100.0);
        v + 40.0 * (x[1] - 2.0) * (x[1] - 2.0)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (_, g0, _) = owner_position_terms(x[0], 100.0);
        DVector::from_vec(vec![g0, 80.0 * (x[1] - 2.0)])
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (_, _, h0) = owner_position_terms(x[0], 100.0);
        DMatrix::from_row_slice(2, 2, &[h0, 0.0, 0.0, 80.0])
    }
}

/// Dog stage cost: tanh²(x0 - x1) + u1².
struct DogStageCost;

fn dog_chase_terms(x: &DVector<f64>) -> (f64, f64, f64) {
    // (value, d/dv, d²/dv²) of tanh²(v), v = x0 - x1
    let t = (x[0] - x[1]).tanh();
    let sech2 = 1.0 - t * t;
    (t * t, 2.0 * t * sech2, 2.0 * sech2 * (1.0 - 3.0 * t * t))
}

impl StageCost for DogStageCost {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let (v, _, _) = dog_chase_terms(x);
        v + u[1] * u[1]
    }

    fn gradient(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (_, q, _) = dog_chase_terms(x);
        (
            DVector::from_vec(vec![q, -q]),
            DVector::from_vec(vec![0.0, 2.0 * u[1]]),
        )
    }

    fn hessian(&self, x: &DVector<f64>, _u: &DVector<f64>) -> CostHessian {
        let (_, _, r) = dog_chase_terms(x);
        CostHessian {
            xx: DMatrix::from_row_slice(2, 2, &[r, -r, -r, r]),
            xu: DMatrix::zeros(2, 2),
            uu: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]),
        }
    }
}

struct DogTerminalCost;

impl TerminalCost for DogTerminalCost {
    fn value(&self, x: &DVector<f64>) -> f64 {
        dog_chase_terms(x).0
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (_, q, _) = dog_chase_terms(x);
        DVector::from_vec(vec![q, -q])
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (_, _, r) = dog_chase_terms(x);
        DMatrix::from_row_slice(2, 2, &[r, -r, -r, r])
    }
}

/// The 1-D owner-dog game: the owner walks to 1 while wanting the dog to
/// stay at 2; the dog chases the owner. Both saturate their inputs through
/// `tanh`. Each player drives its own state component.
pub fn owner_dog() -> GameProblem {
    owner_dog_with_horizon(10).expect("default owner-dog problem")
}

pub fn owner_dog_with_horizon(horizon: usize) -> Result<GameProblem> {
    GameProblem::builder()
        .num_players(2)
        .horizon(horizon)
        .state_dim(2)
        .input_dims(vec![1, 1])
        .dynamics(Arc::new(OwnerDogDynamics))
        .stage_cost(0, Arc::new(OwnerStageCost))
        .stage_cost(1, Arc::new(DogStageCost))
        .terminal_cost(0, Arc::new(OwnerTerminalCost))
        .terminal_cost(1, Arc::new(DogTerminalCost))
        .build()
}

/// Default initial state of the owner-dog game.
pub fn owner_dog_x0() -> DVector<f64> {
    DVector::from_vec(vec![-1.0, 2.0])
}

// ---------------------------------------------------------------------------
// Planar robots
// ---------------------------------------------------------------------------

/// Parameters of the three-robot target-reaching game.
#[derive(Debug, Clone)]
pub struct PlanarParams {
    pub horizon: usize,
    pub dt: f64,
    pub alpha: f64,
    pub beta: f64,
    pub radius: f64,
}

impl Default for PlanarParams {
    fn default() -> Self {
        PlanarParams {
            horizon: 119,
            dt: 0.04,
            alpha: 10.0,
            beta: 3.0,
            radius: 0.25,
        }
    }
}

/// Clearance floor of the avoidance barrier.
pub const PLANAR_CLEARANCE_FLOOR: f64 = 0.01;

pub fn planar_targets() -> [Vector2<f64>; 3] {
    [
        Vector2::new(-1.0, 0.0),
        Vector2::new(0.5, -0.866),
        Vector2::new(0.5, 0.866),
    ]
}

pub fn planar_x0() -> DVector<f64> {
    DVector::from_vec(vec![1.96, 0.24, -0.72, 1.39, -0.49, -2.00])
}

struct PlanarDynamics {
    dt: f64,
}

impl Dynamics for PlanarDynamics {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(6, |i, _| x[i] + u[i].tanh() * self.dt)
    }

    fn jacobians(&self, _x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut b = DMatrix::zeros(6, 6);
        for i in 0..6 {
            let t = u[i].tanh();
            b[(i, i)] = (1.0 - t * t) * self.dt;
        }
        (DMatrix::identity(6, 6), b)
    }

    fn hessians(&self, _x: &DVector<f64>, u: &DVector<f64>) -> Vec<DMatrix<f64>> {
        (0..6)
            .map(|l| {
                let mut g = DMatrix::zeros(12, 12);
                let t = u[l].tanh();
                g[(6 + l, 6 + l)] = -2.0 * t * (1.0 - t * t) * self.dt;
                g
            })
            .collect()
    }
}

/// Avoidance barrier φ(m) = -log(1 - e^{-m}) of the pair clearance, with
/// the kink tie broken toward the clamped (constant) branch.
fn barrier(m_raw: f64) -> (f64, f64, f64) {
    if m_raw <= PLANAR_CLEARANCE_FLOOR {
        let em = (-PLANAR_CLEARANCE_FLOOR).exp();
        (-(-em).ln_1p(), 0.0, 0.0)
    } else {
        let em = (-m_raw).exp();
        let denom = 1.0 - em;
        (-denom.ln(), -em / denom, em / (denom * denom))
    }
}

struct PlanarStageCost {
    robot: usize,
    alpha: f64,
    beta: f64,
    radius: f64,
    target: Vector2<f64>,
}

impl PlanarStageCost {
    fn position(x: &DVector<f64>, i: usize) -> Vector2<f64> {
        Vector2::new(x[2 * i], x[2 * i + 1])
    }

    /// Value, 6-dim state gradient and 6x6 state Hessian of the goal and
    /// avoidance terms.
    fn state_terms(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = self.robot;
        let p_n = Self::position(x, n);
        let mut value = 0.0;
        let mut grad = DVector::zeros(6);
        let mut hess = DMatrix::zeros(6, 6);

        // Goal attraction alpha(1 - e^{-||p - g||²}).
        let d = p_n - self.target;
        let e = (-d.norm_squared()).exp();
        value += self.alpha * (1.0 - e);
        let g_goal = 2.0 * self.alpha * e * d;
        let h_goal = 2.0 * self.alpha * e * (DMatrix::identity(2, 2) - 2.0 * d * d.transpose());
        for a in 0..2 {
            grad[2 * n + a] += g_goal[a];
            for b in 0..2 {
                hess[(2 * n + a, 2 * n + b)] += h_goal[(a, b)];
            }
        }

        // Pairwise avoidance barriers.
        for i in 0..3 {
            if i == n {
                continue;
            }
            let p_i = Self::position(x, i);
            let diff = p_n - p_i;
            let dist = diff.norm();
            let m_raw = dist - 2.0 * self.radius;
            let (phi, dphi, ddphi) = barrier(m_raw);
            value += self.beta * phi;
            if dphi == 0.0 && ddphi == 0.0 {
                continue;
            }
            let unit = diff / dist;
            let outer = unit * unit.transpose();
            let proj = (DMatrix::identity(2, 2) - &outer) / dist;
            let g_pair = self.beta * dphi * unit;
            let h_pair = self.beta * (ddphi * &outer + dphi * proj);
            for a in 0..2 {
                grad[2 * n + a] += g_pair[a];
                grad[2 * i + a] -= g_pair[a];
                for b in 0..2 {
                    hess[(2 * n + a, 2 * n + b)] += h_pair[(a, b)];
                    hess[(2 * i + a, 2 * i + b)] += h_pair[(a, b)];
                    hess[(2 * n + a, 2 * i + b)] -= h_pair[(a, b)];
                    hess[(2 * i + a, 2 * n + b)] -= h_pair[(a, b)];
                }
            }
        }
        (value, grad, hess)
    }
}

impl StageCost for PlanarStageCost {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let (v, _, _) = self.state_terms(x);
        let un = Vector2::new(u[2 * self.robot], u[2 * self.robot + 1]);
        v + un.norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (_, gx, _) = self.state_terms(x);
        let mut gu = DVector::zeros(6);
        gu[2 * self.robot] = 2.0 * u[2 * self.robot];
        gu[2 * self.robot + 1] = 2.0 * u[2 * self.robot + 1];
        (gx, gu)
    }

    fn hessian(&self, x: &DVector<f64>, _u: &DVector<f64>) -> CostHessian {
        let (_, _, hxx) = self.state_terms(x);
        let mut huu = DMatrix::zeros(6, 6);
        huu[(2 * self.robot, 2 * self.robot)] = 2.0;
        huu[(2 * self.robot + 1, 2 * self.robot + 1)] = 2.0;
        CostHessian {
            xx: hxx,
            xu: DMatrix::zeros(6, 6),
            uu: huu,
        }
    }
}

/// Terminal cost: the state-dependent terms of the stage cost (goal and
/// avoidance) evaluated at the final state.
struct PlanarTerminalCost {
    inner: PlanarStageCost,
}

impl TerminalCost for PlanarTerminalCost {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.inner.state_terms(x).0
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.state_terms(x).1
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.inner.state_terms(x).2
    }
}

/// Three planar robots reaching targets while paying a log-barrier for
/// mutual proximity; default parameters reproduce the benchmark setup.
pub fn planar_robots() -> GameProblem {
    planar_robots_with(&PlanarParams::default()).expect("default planar-robots problem")
}

pub fn planar_robots_with(p: &PlanarParams) -> Result<GameProblem> {
    let targets = planar_targets();
    let mut builder = GameProblem::builder()
        .num_players(3)
        .horizon(p.horizon)
        .state_dim(6)
        .input_dims(vec![2, 2, 2])
        .dynamics(Arc::new(PlanarDynamics { dt: p.dt }));
    for robot in 0..3 {
        builder = builder
            .stage_cost(
                robot,
                Arc::new(PlanarStageCost {
                    robot,
                    alpha: p.alpha,
                    beta: p.beta,
                    radius: p.radius,
                    target: targets[robot],
                }),
            )
            .terminal_cost(
                robot,
                Arc::new(PlanarTerminalCost {
                    inner: PlanarStageCost {
                        robot,
                        alpha: p.alpha,
                        beta: p.beta,
                        radius: p.radius,
                        target: targets[robot],
                    },
                }),
            );
    }
    builder.build()
}

/// Push-pull warm start: each robot is pulled toward its target
/// proportionally to the distance and pushed away from the others with an
/// inverse-square law. Constants are fixed so the resulting rollout is
/// collision-free.
pub fn planar_push_pull_controls(p: &PlanarParams, x0: &DVector<f64>) -> Vec<DVector<f64>> {
    const PULL: f64 = 4.0;
    const PUSH: f64 = 1.0;
    let targets = planar_targets();
    let mut x = x0.clone();
    let mut controls = Vec::with_capacity(p.horizon);
    for _ in 0..p.horizon {
        let mut u = DVector::zeros(6);
        for n in 0..3 {
            let p_n = Vector2::new(x[2 * n], x[2 * n + 1]);
            let mut un = PULL * (targets[n] - p_n);
            for i in 0..3 {
                if i == n {
                    continue;
                }
                let p_i = Vector2::new(x[2 * i], x[2 * i + 1]);
                let diff = p_n - p_i;
                let dist = diff.norm().max(1e-6);
                un += PUSH * diff / (dist * dist * dist);
            }
            u[2 * n] = un[0];
            u[2 * n + 1] = un[1];
        }
        for i in 0..6 {
            x[i] += u[i].tanh() * p.dt;
        }
        controls.push(u);
    }
    controls
}

/// Smallest pairwise clearance `||p_i - p_j|| - r_i - r_j` over a state.
pub fn planar_min_clearance(x: &DVector<f64>, radius: f64) -> f64 {
    let mut min = f64::INFINITY;
    for i in 0..3 {
        for j in (i + 1)..3 {
            let pi = Vector2::new(x[2 * i], x[2 * i + 1]);
            let pj = Vector2::new(x[2 * j], x[2 * j + 1]);
            min = min.min((pi - pj).norm() - 2.0 * radius);
        }
    }
    min
}

// ---------------------------------------------------------------------------
// Random LQ games
// ---------------------------------------------------------------------------

struct LinearDynamics {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl Dynamics for LinearDynamics {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
    fn jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.a.clone(), self.b.clone())
    }
    fn hessians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let n_z = x.len() + u.len();
        vec![DMatrix::zeros(n_z, n_z); x.len()]
    }
}

struct QuadraticStageCost {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    q_lin: DVector<f64>,
    r_lin: DVector<f64>,
}

impl StageCost for QuadraticStageCost {
    fn value(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        0.5 * (&self.q * x).dot(x)
            + 0.5 * (&self.r * u).dot(u)
            + self.q_lin.dot(x)
            + self.r_lin.dot(u)
    }
    fn gradient(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (&self.q * x + &self.q_lin, &self.r * u + &self.r_lin)
    }
    fn hessian(&self, x: &DVector<f64>, u: &DVector<f64>) -> CostHessian {
        CostHessian {
            xx: self.q.clone(),
            xu: DMatrix::zeros(x.len(), u.len()),
            uu: self.r.clone(),
        }
    }
}

struct QuadraticTerminalCost {
    q: DMatrix<f64>,
    q_lin: DVector<f64>,
}

impl TerminalCost for QuadraticTerminalCost {
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * (&self.q * x).dot(x) + self.q_lin.dot(x)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * x + &self.q_lin
    }
    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.q.clone()
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

fn random_psd(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let w = random_matrix(rng, dim, dim, 1.0);
    w.transpose() * w / dim as f64
}

/// Deterministic random LQ game: stable-ish linear dynamics (spectral
/// radius capped at 1.2) and per-player convex quadratic costs whose
/// own-input blocks have minimum eigenvalue at least 0.1.
pub fn random_lq_game(
    seed: u64,
    num_players: usize,
    state_dim: usize,
    input_dims: &[usize],
    horizon: usize,
) -> Result<GameProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_u: usize = input_dims.iter().sum();

    let mut a = random_matrix(&mut rng, state_dim, state_dim, 1.0);
    let rho = a
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    if rho > 1.2 {
        a *= 1.2 / rho;
    }
    let b = random_matrix(&mut rng, state_dim, n_u, 1.0);

    let mut builder = GameProblem::builder()
        .num_players(num_players)
        .horizon(horizon)
        .state_dim(state_dim)
        .input_dims(input_dims.to_vec())
        .dynamics(Arc::new(LinearDynamics { a, b }));

    let mut offset = 0usize;
    for (n, &d) in input_dims.iter().enumerate() {
        let q = random_psd(&mut rng, state_dim);
        // Symmetric input cost with mild cross-player coupling and a
        // positive-definite own block.
        let coupling = random_matrix(&mut rng, n_u, n_u, 0.3);
        let mut r = (&coupling + coupling.transpose()) * 0.5;
        let own = random_psd(&mut rng, d);
        r.view_mut((offset, offset), (d, d)).copy_from(&own);
        let own_block = r.view((offset, offset), (d, d)).into_owned();
        let min_eig = own_block
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < 0.1 {
            for i in 0..d {
                r[(offset + i, offset + i)] += 0.1 - min_eig;
            }
        }
        let q_lin = DVector::from_fn(state_dim, |_, _| rng.random_range(-1.0..1.0));
        let r_lin = DVector::from_fn(n_u, |_, _| rng.random_range(-0.5..0.5));
        builder = builder.stage_cost(n, Arc::new(QuadraticStageCost { q, r, q_lin, r_lin }));

        let qt = random_psd(&mut rng, state_dim);
        let qt_lin = DVector::from_fn(state_dim, |_, _| rng.random_range(-1.0..1.0));
        builder = builder.terminal_cost(
            n,
            Arc::new(QuadraticTerminalCost {
                q: qt,
                q_lin: qt_lin,
            }),
        );
        offset += d;
    }

    builder.build()
}

/// Seed-matched initial state for [`random_lq_game`].
pub fn random_lq_initial_state(seed: u64, state_dim: usize) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A_0F0F_F0F0);
    DVector::from_fn(state_dim, |_, _| rng.random_range(-1.0..1.0))
}
