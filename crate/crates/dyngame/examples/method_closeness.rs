//! How close are the two methods' updates? Starting from common nominals at
//! shrinking distances from an equilibrium, the update difference shrinks
//! quadratically.
//!
//! ```bash
//! cargo run --release --example method_closeness
//! ```

use dyngame::backward::{ddp_backward, newton_backward};
use dyngame::derivatives::differentiate_trajectory;
use dyngame::game::rollout;
use dyngame::problems::{owner_dog, owner_dog_x0};
use dyngame::solver::{ddp_forward, newton_forward, solve, Method, SolveOptions};
use nalgebra::DVector;

fn main() {
    let problem = owner_dog();
    let x0 = owner_dog_x0();
    let u0 = vec![DVector::zeros(2); problem.horizon()];

    // Converge: regularized warm-up, then unregularized polish.
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
    println!("equilibrium residual {:.3e}", star.final_residual);

    println!("  eps        ||duN - duD||");
    let mut previous: Option<(f64, f64)> = None;
    for eps in [1e-1, 1e-2, 1e-3] {
        let perturbed: Vec<DVector<f64>> = star
            .trajectory
            .controls
            .iter()
            .enumerate()
            .map(|(k, u)| u + DVector::from_fn(2, |i, _| eps * (0.4 + 0.05 * (k + i) as f64)))
            .collect();
        let traj = rollout(&problem, &x0, &perturbed).unwrap();
        let (stages, term) = differentiate_trajectory(&problem, &traj).unwrap();
        let (pn, _, _) = newton_backward(&stages, &term, problem.input_dims(), 0.0).unwrap();
        let (pd, _, _) = ddp_backward(&stages, &term, problem.input_dims(), 0.0).unwrap();
        let un = newton_forward(&traj, &pn, &stages);
        let ud = ddp_forward(&problem, &traj, &pd).unwrap().controls;
        let diff: f64 = un
            .iter()
            .zip(ud.iter())
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt();
        if let Some((e_prev, d_prev)) = previous {
            let slope = (d_prev.ln() - diff.ln()) / (e_prev.ln() - eps.ln());
            println!("  {eps:.0e}     {diff:.6e}   (local slope {slope:.2})");
        } else {
            println!("  {eps:.0e}     {diff:.6e}");
        }
        previous = Some((eps, diff));
    }
}
