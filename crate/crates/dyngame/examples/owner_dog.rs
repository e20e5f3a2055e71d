//! The 1-D owner-dog game: both methods from the zero-input start with the
//! benchmark regularization, followed by an unregularized polish to the
//! equilibrium.
//!
//! ```bash
//! cargo run --release --example owner_dog
//! ```

use dyngame::problems::{owner_dog, owner_dog_x0};
use dyngame::solver::{solve, Method, SolveOptions};
use nalgebra::DVector;

fn main() {
    let problem = owner_dog();
    let x0 = owner_dog_x0();
    let u0 = vec![DVector::zeros(2); problem.horizon()];

    for method in [Method::Newton, Method::Ddp] {
        let mut warm = SolveOptions::new(method);
        warm.lambda = 30.0;
        warm.max_iters = 300;
        warm.residual_tol = 1e-12;
        warm.step_tol = 1e-15;
        let run = solve(&problem, &x0, &u0, &warm).expect("warm-up solve");
        println!(
            "{:>6}: {} after {} iterations, residual {:.3e}, costs [{:.2}, {:.4}]",
            method.name(),
            run.termination.name(),
            run.iterations(),
            run.final_residual,
            run.final_costs[0],
            run.final_costs[1],
        );

        let mut polish = SolveOptions::new(method);
        polish.lambda = 0.0;
        polish.max_iters = 50;
        polish.residual_tol = 1e-12;
        let star = solve(&problem, &x0, &run.trajectory.controls, &polish).expect("polish");
        println!(
            "        polish: {} iterations, residual {:.3e}, costs [{:.4}, {:.4}]",
            star.iterations(),
            star.final_residual,
            star.final_costs[0],
            star.final_costs[1],
        );
        println!("        k   owner    dog      u_owner  u_dog");
        let traj = &star.trajectory;
        for k in 0..=problem.horizon() {
            let (u0s, u1s) = if k < problem.horizon() {
                (
                    format!("{:8.4}", traj.controls[k][0]),
                    format!("{:8.4}", traj.controls[k][1]),
                )
            } else {
                ("       -".into(), "       -".into())
            };
            println!(
                "        {:>2}  {:7.4}  {:7.4}  {u0s} {u1s}",
                k, traj.states[k][0], traj.states[k][1]
            );
        }
    }
}
