//! Linear-quadratic games are solved in a single iteration, and the
//! stagewise step equals the dense Newton step computed by the oracle.
//!
//! ```bash
//! cargo run --release --example lq_one_step
//! ```

use dyngame::backward::newton_backward;
use dyngame::derivatives::differentiate_trajectory;
use dyngame::game::rollout;
use dyngame::oracle::{dense_jacobian, dense_newton_step};
use dyngame::problems::{random_lq_game, random_lq_initial_state};
use dyngame::solver::{newton_forward, solve, Method, SolveOptions};
use nalgebra::DVector;

fn main() {
    let seed = 7;
    let problem = random_lq_game(seed, 2, 4, &[2, 2], 12).expect("problem");
    let x0 = random_lq_initial_state(seed, 4);
    let u0 = vec![DVector::zeros(4); 12];

    for method in [Method::Newton, Method::Ddp] {
        let mut opts = SolveOptions::new(method);
        opts.max_iters = 10;
        let report = solve(&problem, &x0, &u0, &opts).expect("solve");
        println!(
            "{:>6}: {} iteration(s), final residual {:.3e}",
            method.name(),
            report.iterations(),
            report.final_residual
        );
    }

    // Cross-check the first stagewise Newton step against the dense oracle.
    let traj = rollout(&problem, &x0, &u0).unwrap();
    let (stages, term) = differentiate_trajectory(&problem, &traj).unwrap();
    let (policy, _, _) = newton_backward(&stages, &term, problem.input_dims(), 0.0).unwrap();
    let fast = newton_forward(&traj, &policy, &stages);

    let ds = dense_jacobian(&problem, &x0, &u0, 1e-6).unwrap();
    let dense = dense_newton_step(&ds).unwrap();
    let mut worst = 0.0_f64;
    let mut scale = 0.0_f64;
    for k in 0..12 {
        let du = &fast[k] - &u0[k];
        worst = worst.max((&du - &dense[k]).amax());
        scale = scale.max(du.amax());
    }
    println!("stagewise vs dense Newton step: max deviation {worst:.3e} (step scale {scale:.3e})");
}
