//! Three planar robots reaching targets under a mutual-avoidance barrier:
//! a few DDP iterations from the push-pull warm start.
//!
//! ```bash
//! cargo run --release --example planar_robots
//! ```

use dyngame::game::{rollout, total_cost};
use dyngame::problems::{
    planar_min_clearance, planar_push_pull_controls, planar_robots, planar_x0, PlanarParams,
};
use dyngame::solver::{solve, Method, SolveOptions};

fn main() {
    let params = PlanarParams::default();
    let problem = planar_robots();
    let x0 = planar_x0();
    let u0 = planar_push_pull_controls(&params, &x0);

    let mut opts = SolveOptions::new(Method::Ddp);
    opts.lambda = 10.0;
    opts.max_iters = 7;
    opts.residual_tol = 1e-12;
    opts.step_tol = 1e-15;
    opts.capture_iterates = true;

    let report = solve(&problem, &x0, &u0, &opts).expect("solve");
    println!("iter  min-clearance  J_1        J_2        J_3");
    for (i, controls) in report.iterates.as_ref().unwrap().iter().enumerate() {
        let traj = rollout(&problem, &x0, controls).unwrap();
        let clearance = traj
            .states
            .iter()
            .map(|x| planar_min_clearance(x, params.radius))
            .fold(f64::INFINITY, f64::min);
        let costs = total_cost(&problem, &traj).unwrap().totals;
        println!(
            "{i:>4}  {clearance:>13.4}  {:<9.2}  {:<9.2}  {:<9.2}",
            costs[0], costs[1], costs[2]
        );
    }

    let terminal = report.trajectory.terminal_state();
    println!("final positions:");
    for n in 0..3 {
        println!(
            "  robot {}: ({:.3}, {:.3})",
            n + 1,
            terminal[2 * n],
            terminal[2 * n + 1]
        );
    }
}
