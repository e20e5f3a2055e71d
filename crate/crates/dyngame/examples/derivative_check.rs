//! Analytic derivative suppliers vs the value-only central-difference
//! oracle, across the problem catalog.
//!
//! ```bash
//! cargo run --release --example derivative_check
//! ```

use dyngame::derivatives::{differentiate_stage, fd_stage_oracle};
use dyngame::game::{validate, GameProblem};
use dyngame::problems::{owner_dog, planar_robots, random_lq_game};
use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;

fn worst_deviation(problem: &GameProblem, probes: usize, seed: u64) -> f64 {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..probes {
        let k = rng.random_range(0..problem.horizon());
        let x = DVector::from_fn(problem.state_dim(), |_, _| rng.random_range(-0.8..0.8));
        let u = DVector::from_fn(problem.input_dim(), |_, _| rng.random_range(-0.8..0.8));
        let analytic = differentiate_stage(problem, k, &x, &u).unwrap();
        let fd = fd_stage_oracle(problem, k, &x, &u, 1e-5);
        let mut dev = (analytic.a - fd.a).amax().max((analytic.b - fd.b).amax());
        for (ga, gf) in analytic.g.iter().zip(fd.g.iter()) {
            dev = dev.max((ga - gf).amax());
        }
        for (ma, mf) in analytic.m.iter().zip(fd.m.iter()) {
            dev = dev.max((ma - mf).amax());
        }
        worst = worst.max(dev);
    }
    worst
}

fn main() {
    let lq = random_lq_game(3, 2, 4, &[2, 2], 10).unwrap();
    let cases: Vec<(&str, GameProblem)> = vec![
        ("owner-dog", owner_dog()),
        ("planar-robots", planar_robots()),
        ("random-lq", lq),
    ];
    for (name, problem) in &cases {
        let report = validate(problem);
        let dev = worst_deviation(problem, 20, 0xD1CE);
        println!(
            "{name:>14}: validate diagnostics {}, worst analytic-vs-fd deviation {dev:.3e}",
            report.diagnostics.len()
        );
    }
}
