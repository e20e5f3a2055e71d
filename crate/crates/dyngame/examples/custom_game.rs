//! Building a game from closures: two players steer a shared scalar state
//! toward conflicting targets. Shows the builder, validation, and a solve.
//!
//! ```bash
//! cargo run --release --example custom_game
//! ```

use std::sync::Arc;

use dyngame::game::{
    validate, ClosureDynamics, ClosureStageCost, ClosureTerminalCost, CostHessian, GameProblem,
};
use dyngame::solver::{solve, Method, SolveOptions};
use nalgebra::{DMatrix, DVector};

fn main() {
    // x_{k+1} = x + u_1 + u_2: both players push the same state.
    let dynamics = Arc::new(ClosureDynamics {
        value: |x: &DVector<f64>, u: &DVector<f64>| DVector::from_element(1, x[0] + u[0] + u[1]),
        jacobians: |_x: &DVector<f64>, _u: &DVector<f64>| {
            (
                DMatrix::identity(1, 1),
                DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            )
        },
        hessians: |_x: &DVector<f64>, _u: &DVector<f64>| vec![DMatrix::zeros(3, 3)],
    });

    // Player 1 wants x = 1, player 2 wants x = -1, both pay for effort.
    let cost = |target: f64, own: usize| {
        Arc::new(ClosureStageCost {
            value: move |x: &DVector<f64>, u: &DVector<f64>| {
                (x[0] - target).powi(2) + u[own] * u[own]
            },
            gradient: move |x: &DVector<f64>, u: &DVector<f64>| {
                let mut gu = DVector::zeros(2);
                gu[own] = 2.0 * u[own];
                (DVector::from_element(1, 2.0 * (x[0] - target)), gu)
            },
            hessian: move |_x: &DVector<f64>, _u: &DVector<f64>| {
                let mut uu = DMatrix::zeros(2, 2);
                uu[(own, own)] = 2.0;
                CostHessian {
                    xx: DMatrix::from_element(1, 1, 2.0),
                    xu: DMatrix::zeros(1, 2),
                    uu,
                }
            },
        })
    };
    let terminal = |target: f64| {
        Arc::new(ClosureTerminalCost {
            value: move |x: &DVector<f64>| (x[0] - target).powi(2),
            gradient: move |x: &DVector<f64>| DVector::from_element(1, 2.0 * (x[0] - target)),
            hessian: move |_x: &DVector<f64>| DMatrix::from_element(1, 1, 2.0),
        })
    };

    let problem = GameProblem::builder()
        .num_players(2)
        .horizon(8)
        .state_dim(1)
        .input_dims(vec![1, 1])
        .dynamics(dynamics)
        .stage_cost(0, cost(1.0, 0))
        .stage_cost(1, cost(-1.0, 1))
        .terminal_cost(0, terminal(1.0))
        .terminal_cost(1, terminal(-1.0))
        .build()
        .expect("well-formed problem");

    let check = validate(&problem);
    println!("validation diagnostics: {}", check.diagnostics.len());

    let x0 = DVector::from_element(1, 0.3);
    let u0 = vec![DVector::zeros(2); 8];
    let mut opts = SolveOptions::new(Method::Newton);
    opts.max_iters = 20;
    let report = solve(&problem, &x0, &u0, &opts).expect("solve");
    println!(
        "{} after {} iteration(s), residual {:.3e}",
        report.termination.name(),
        report.iterations(),
        report.final_residual
    );
    println!("equilibrium state path (two players pulling in opposite directions):");
    let path: Vec<String> = report
        .trajectory
        .states
        .iter()
        .map(|x| format!("{:.4}", x[0]))
        .collect();
    println!("  {}", path.join(" -> "));
    println!("per-player costs: {:?}", report.final_costs);
}
