//! Small fixed problems shared by the unit tests.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::game::{
    ClosureDynamics, ClosureStageCost, ClosureTerminalCost, CostHessian, Dynamics, GameProblem,
};

fn quadratic_stage_cost() -> Arc<
    ClosureStageCost<
        impl Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync,
        impl Fn(&DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>) + Send + Sync,
        impl Fn(&DVector<f64>, &DVector<f64>) -> CostHessian + Send + Sync,
    >,
> {
    Arc::new(ClosureStageCost {
        value: |x: &DVector<f64>, u: &DVector<f64>| x[0] * x[0] + u[0] * u[0],
        gradient: |x: &DVector<f64>, u: &DVector<f64>| {
            (
                DVector::from_element(1, 2.0 * x[0]),
                DVector::from_element(1, 2.0 * u[0]),
            )
        },
        hessian: |_x: &DVector<f64>, _u: &DVector<f64>| CostHessian {
            xx: DMatrix::from_element(1, 1, 2.0),
            xu: DMatrix::zeros(1, 1),
            uu: DMatrix::from_element(1, 1, 2.0),
        },
    })
}

fn quadratic_terminal() -> Arc<
    ClosureTerminalCost<
        impl Fn(&DVector<f64>) -> f64 + Send + Sync,
        impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
        impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync,
    >,
> {
    Arc::new(ClosureTerminalCost {
        value: |x: &DVector<f64>| x[0] * x[0],
        gradient: |x: &DVector<f64>| DVector::from_element(1, 2.0 * x[0]),
        hessian: |_x: &DVector<f64>| DMatrix::from_element(1, 1, 2.0),
    })
}

fn zero_terminal() -> Arc<
    ClosureTerminalCost<
        impl Fn(&DVector<f64>) -> f64 + Send + Sync,
        impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
        impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync,
    >,
> {
    Arc::new(ClosureTerminalCost {
        value: |_x: &DVector<f64>| 0.0,
        gradient: |x: &DVector<f64>| DVector::zeros(x.len()),
        hessian: |x: &DVector<f64>| DMatrix::zeros(x.len(), x.len()),
    })
}

/// Single player, `f = x + u`, `c = x² + u²`, `c_T = x²`.
pub fn scalar_integrator(horizon: usize) -> GameProblem {
    let dynamics = Arc::new(ClosureDynamics {
        value: |x: &DVector<f64>, u: &DVector<f64>| DVector::from_element(1, x[0] + u[0]),
        jacobians: |_x: &DVector<f64>, _u: &DVector<f64>| {
            (DMatrix::identity(1, 1), DMatrix::identity(1, 1))
        },
        hessians: |_x: &DVector<f64>, _u: &DVector<f64>| vec![DMatrix::zeros(2, 2)],
    });
    GameProblem::builder()
        .num_players(1)
        .horizon(horizon)
        .state_dim(1)
        .input_dims(vec![1])
        .dynamics(dynamics)
        .stage_cost(0, quadratic_stage_cost())
        .terminal_cost(0, quadratic_terminal())
        .build()
        .unwrap()
}

/// As [`scalar_integrator`] but with a zero terminal cost.
pub fn scalar_integrator_zero_terminal(horizon: usize) -> GameProblem {
    let dynamics = Arc::new(ClosureDynamics {
        value: |x: &DVector<f64>, u: &DVector<f64>| DVector::from_element(1, x[0] + u[0]),
        jacobians: |_x: &DVector<f64>, _u: &DVector<f64>| {
            (DMatrix::identity(1, 1), DMatrix::identity(1, 1))
        },
        hessians: |_x: &DVector<f64>, _u: &DVector<f64>| vec![DMatrix::zeros(2, 2)],
    });
    GameProblem::builder()
        .num_players(1)
        .horizon(horizon)
        .state_dim(1)
        .input_dims(vec![1])
        .dynamics(dynamics)
        .stage_cost(0, quadratic_stage_cost())
        .terminal_cost(0, zero_terminal())
        .build()
        .unwrap()
}

/// `f = 2x` (input ignored), quadratic costs.
pub fn scalar_double(horizon: usize) -> GameProblem {
    let dynamics = Arc::new(ClosureDynamics {
        value: |x: &DVector<f64>, _u: &DVector<f64>| DVector::from_element(1, 2.0 * x[0]),
        jacobians: |_x: &DVector<f64>, _u: &DVector<f64>| {
            (DMatrix::from_element(1, 1, 2.0), DMatrix::zeros(1, 1))
        },
        hessians: |_x: &DVector<f64>, _u: &DVector<f64>| vec![DMatrix::zeros(2, 2)],
    });
    with_dynamics(dynamics, horizon)
}

/// `f = x + tanh(u)`, quadratic costs; smooth and genuinely nonlinear.
pub fn scalar_tanh(horizon: usize) -> GameProblem {
    let dynamics = Arc::new(ClosureDynamics {
        value: |x: &DVector<f64>, u: &DVector<f64>| DVector::from_element(1, x[0] + u[0].tanh()),
        jacobians: |_x: &DVector<f64>, u: &DVector<f64>| {
            let t = u[0].tanh();
            (
                DMatrix::identity(1, 1),
                DMatrix::from_element(1, 1, 1.0 - t * t),
            )
        },
        hessians: |_x: &DVector<f64>, u: &DVector<f64>| {
            let t = u[0].tanh();
            let mut g = DMatrix::zeros(2, 2);
            g[(1, 1)] = -2.0 * t * (1.0 - t * t);
            vec![g]
        },
    });
    with_dynamics(dynamics, horizon)
}

/// Pairs arbitrary scalar dynamics with the quadratic costs.
pub fn with_dynamics(dynamics: Arc<dyn Dynamics>, horizon: usize) -> GameProblem {
    GameProblem::builder()
        .num_players(1)
        .horizon(horizon)
        .state_dim(1)
        .input_dims(vec![1])
        .dynamics(dynamics)
        .stage_cost(0, quadratic_stage_cost())
        .terminal_cost(0, quadratic_terminal())
        .build()
        .unwrap()
}

/// Like [`scalar_integrator`] but the stage-cost gradient supplier is off
/// by a factor of two; used to exercise validation.
pub fn scalar_integrator_bad_gradient(horizon: usize) -> GameProblem {
    let dynamics = Arc::new(ClosureDynamics {
        value: |x: &DVector<f64>, u: &DVector<f64>| DVector::from_element(1, x[0] + u[0]),
        jacobians: |_x: &DVector<f64>, _u: &DVector<f64>| {
            (DMatrix::identity(1, 1), DMatrix::identity(1, 1))
        },
        hessians: |_x: &DVector<f64>, _u: &DVector<f64>| vec![DMatrix::zeros(2, 2)],
    });
    let bad_cost = Arc::new(ClosureStageCost {
        value: |x: &DVector<f64>, u: &DVector<f64>| x[0] * x[0] + u[0] * u[0],
        gradient: |x: &DVector<f64>, u: &DVector<f64>| {
            (
                DVector::from_element(1, 4.0 * x[0]), // wrong: 2x doubled
                DVector::from_element(1, 4.0 * u[0]),
            )
        },
        hessian: |_x: &DVector<f64>, _u: &DVector<f64>| CostHessian {
            xx: DMatrix::from_element(1, 1, 2.0),
            xu: DMatrix::zeros(1, 1),
            uu: DMatrix::from_element(1, 1, 2.0),
        },
    });
    GameProblem::builder()
        .num_players(1)
        .horizon(horizon)
        .state_dim(1)
        .input_dims(vec![1])
        .dynamics(dynamics)
        .stage_cost(0, bad_cost)
        .terminal_cost(0, quadratic_terminal())
        .build()
        .unwrap()
}

/// Fixed two-player LQ game: `n_x = 2`, one scalar input per player,
/// coupling through the dynamics.
pub fn two_player_lq(horizon: usize) -> GameProblem {
    let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.8]);
    let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 1.0]);
    let (a_val, b_val) = (a.clone(), b.clone());
    let dynamics = Arc::new(ClosureDynamics {
        value: move |x: &DVector<f64>, u: &DVector<f64>| &a_val * x + &b_val * u,
        jacobians: move |_x: &DVector<f64>, _u: &DVector<f64>| (a.clone(), b.clone()),
        hessians: |_x: &DVector<f64>, _u: &DVector<f64>| vec![DMatrix::zeros(4, 4); 2],
    });

    let cost_1 = Arc::new(ClosureStageCost {
        value: |x: &DVector<f64>, u: &DVector<f64>| {
            (x[0] - 1.0).powi(2) + 0.5 * x[1] * x[1] + u[0] * u[0]
        },
        gradient: |x: &DVector<f64>, u: &DVector<f64>| {
            (
                DVector::from_vec(vec![2.0 * (x[0] - 1.0), x[1]]),
                DVector::from_vec(vec![2.0 * u[0], 0.0]),
            )
        },
        hessian: |_x: &DVector<f64>, _u: &DVector<f64>| CostHessian {
            xx: DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
            xu: DMatrix::zeros(2, 2),
            uu: DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]),
        },
    });
    let cost_2 = Arc::new(ClosureStageCost {
        value: |x: &DVector<f64>, u: &DVector<f64>| {
            (x[1] + 0.5).powi(2) + 0.3 * x[0] * x[0] + u[1] * u[1]
        },
        gradient: |x: &DVector<f64>, u: &DVector<f64>| {
            (
                DVector::from_vec(vec![0.6 * x[0], 2.0 * (x[1] + 0.5)]),
                DVector::from_vec(vec![0.0, 2.0 * u[1]]),
            )
        },
        hessian: |_x: &DVector<f64>, _u: &DVector<f64>| CostHessian {
            xx: DMatrix::from_row_slice(2, 2, &[0.6, 0.0, 0.0, 2.0]),
            xu: DMatrix::zeros(2, 2),
            uu: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]),
        },
    });
    let term_1 = Arc::new(ClosureTerminalCost {
        value: |x: &DVector<f64>| x[0] * x[0],
        gradient: |x: &DVector<f64>| DVector::from_vec(vec![2.0 * x[0], 0.0]),
        hessian: |_x: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]),
    });
    let term_2 = Arc::new(ClosureTerminalCost {
        value: |x: &DVector<f64>| x[1] * x[1],
        gradient: |x: &DVector<f64>| DVector::from_vec(vec![0.0, 2.0 * x[1]]),
        hessian: |_x: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]),
    });

    GameProblem::builder()
        .num_players(2)
        .horizon(horizon)
        .state_dim(2)
        .input_dims(vec![1, 1])
        .dynamics(dynamics)
        .stage_cost(0, cost_1)
        .stage_cost(1, cost_2)
        .terminal_cost(0, term_1)
        .terminal_cost(1, term_2)
        .build()
        .unwrap()
}
