//! Is the converged solution really a Nash equilibrium? Random unilateral
//! deviations of each player never lower that player's cost.
//!
//! ```bash
//! cargo run --release --example equilibrium_probe
//! ```

use dyngame::oracle::best_response_probe;
use dyngame::problems::{owner_dog, owner_dog_x0};
use dyngame::solver::{solve, Method, SolveOptions};
use nalgebra::DVector;

fn main() {
    let problem = owner_dog();
    let x0 = owner_dog_x0();
    let u0 = vec![DVector::zeros(2); problem.horizon()];

    let mut warm = SolveOptions::new(Method::Newton);
    warm.lambda = 30.0;
    warm.max_iters = 300;
    warm.residual_tol = 1e-12;
    warm.step_tol = 1e-15;
    let warm_run = solve(&problem, &x0, &u0, &warm).expect("warm-up");
    let mut polish = SolveOptions::new(Method::Newton);
    polish.max_iters = 50;
    polish.residual_tol = 1e-12;
    let star = solve(&problem, &x0, &warm_run.trajectory.controls, &polish).expect("polish");
    println!(
        "converged: residual {:.3e}, costs [{:.4}, {:.4}]",
        star.final_residual, star.final_costs[0], star.final_costs[1]
    );

    // Before convergence the probe finds improving deviations; after, none.
    let rough = solve(&problem, &x0, &u0, &{
        let mut o = SolveOptions::new(Method::Newton);
        o.lambda = 30.0;
        o.max_iters = 3;
        o
    })
    .expect("rough run");
    for (label, traj) in [
        ("3 iterations in", &rough.trajectory),
        ("converged", &star.trajectory),
    ] {
        println!("{label}:");
        for player in 0..problem.num_players() {
            let worst =
                best_response_probe(&problem, traj, player, 200, 1e-2, 1234).expect("probe");
            let verdict = if worst < -1e-8 {
                "improving deviation found"
            } else {
                "no improving deviation"
            };
            println!("  player {player}: worst unilateral change {worst:+.3e} ({verdict})");
        }
    }
}
