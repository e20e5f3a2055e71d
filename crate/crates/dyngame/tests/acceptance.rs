//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line with the measured quantities. Run with
//!
//! ```bash
//! cargo test --test acceptance -- --nocapture
//! ```
//!
//! Criterion 5 encodes the benchmark owner-dog run exactly as stated; two
//! of its sub-checks are currently expected to fail (see the assertion
//! messages for the measured evidence): under the fixed eigenvalue-shift
//! regularization the 300th iterate's residual is still O(1), and the exact
//! open-loop equilibrium owner path approaches its target monotonically, so
//! it never exceeds it.

use std::time::Instant;

use dyngame::backward::newton_backward;
use dyngame::derivatives::differentiate_trajectory;
use dyngame::game::{rollout, total_cost, GameProblem, Trajectory};
use dyngame::oracle::{
    best_response_probe, dense_jacobian, dense_newton_step, fd_control_gradient,
};
use dyngame::problems::{
    owner_dog, owner_dog_x0, planar_min_clearance, planar_push_pull_controls, planar_robots,
    planar_x0, random_lq_game, random_lq_initial_state, PlanarParams,
};
use dyngame::solver::{
    newton_forward, solve, stationarity_residual, Method, SolveOptions, SolveReport, Termination,
};
use nalgebra::DVector;
use once_cell::sync::Lazy;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn zeros(t: usize, n_u: usize) -> Vec<DVector<f64>> {
    vec![DVector::zeros(n_u); t]
}

fn stack(controls: &[DVector<f64>]) -> DVector<f64> {
    let total: usize = controls.iter().map(|u| u.len()).sum();
    let mut out = DVector::zeros(total);
    let mut at = 0;
    for u in controls {
        out.rows_mut(at, u.len()).copy_from(u);
        at += u.len();
    }
    out
}

fn report_line(criterion: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {status}: {criterion} — {detail}");
}

/// Seeded LQ instance dims for criterion 1: N = 2, n_x <= 4, total input
/// dim <= 4, T <= 20.
fn lq_case(seed: u64) -> (GameProblem, DVector<f64>, usize) {
    let n_x = 2 + (seed % 3) as usize;
    let d1 = 1 + (seed % 2) as usize;
    let d2 = 1 + ((seed / 2) % 2) as usize;
    let t = 5 + (seed % 16) as usize;
    let p = random_lq_game(seed, 2, n_x, &[d1, d2], t).unwrap();
    let x0 = random_lq_initial_state(seed, n_x);
    (p, x0, t)
}

struct OwnerDogRuns {
    warm: Vec<(Method, SolveReport)>,
    /// Polished equilibrium (from the Newton warm run).
    star: Trajectory,
    star_residual: f64,
}

static OWNER_DOG_RUNS: Lazy<OwnerDogRuns> = Lazy::new(|| {
    let p = owner_dog();
    let x0 = owner_dog_x0();
    let u0 = zeros(10, 2);
    let mut warm = Vec::new();
    for method in [Method::Newton, Method::Ddp] {
        let mut opts = SolveOptions::new(method);
        opts.lambda = 30.0;
        opts.max_iters = 300;
        opts.residual_tol = 1e-12;
        opts.step_tol = 1e-15;
        opts.capture_iterates = true;
        warm.push((method, solve(&p, &x0, &u0, &opts).unwrap()));
    }
    let mut polish = SolveOptions::new(Method::Newton);
    polish.max_iters = 50;
    polish.residual_tol = 1e-13;
    polish.step_tol = 1e-16;
    let star = solve(&p, &x0, &warm[0].1.trajectory.controls, &polish).unwrap();
    OwnerDogRuns {
        warm,
        star_residual: star.final_residual,
        star: star.trajectory,
    }
});

/// Criterion 1: LQ one-step exactness for both methods on 20 seeded games,
/// with the stagewise Newton step matching the dense oracle.
#[test]
fn criterion_1_lq_one_step_exactness() {
    let start = Instant::now();
    let mut worst_residual = 0.0_f64;
    let mut worst_iters = 0usize;
    let mut worst_step_dev = 0.0_f64;
    for seed in 0..20u64 {
        let (p, x0, t) = lq_case(seed);
        let u0 = zeros(t, p.input_dim());
        for method in [Method::Newton, Method::Ddp] {
            let mut opts = SolveOptions::new(method);
            opts.max_iters = 5;
            opts.residual_tol = 1e-9;
            let report = solve(&p, &x0, &u0, &opts).unwrap();
            worst_iters = worst_iters.max(report.iterations());
            worst_residual = worst_residual.max(report.final_residual);
            assert_eq!(
                report.termination,
                Termination::ResidualTol,
                "seed {seed} {method:?}"
            );
        }

        // Stagewise Newton step vs the dense oracle step.
        let traj = rollout(&p, &x0, &u0).unwrap();
        let (stages, term) = differentiate_trajectory(&p, &traj).unwrap();
        let (policy, _, _) = newton_backward(&stages, &term, p.input_dims(), 0.0).unwrap();
        let fast = newton_forward(&traj, &policy, &stages);
        let ds = dense_jacobian(&p, &x0, &u0, 1e-6).unwrap();
        let dense = dense_newton_step(&ds).unwrap();
        let scale = dense
            .iter()
            .map(|d| d.amax())
            .fold(0.0_f64, f64::max)
            .max(1e-12);
        for k in 0..t {
            let du = &fast[k] - &u0[k];
            worst_step_dev = worst_step_dev.max((du - &dense[k]).amax() / scale);
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_iters == 1
        && worst_residual <= 1e-9
        && worst_step_dev <= 1e-6
        && elapsed.as_secs_f64() < 10.0;
    report_line(
        "criterion 1 (LQ one-step exactness)",
        pass,
        &format!(
            "max iterations {worst_iters}, max residual {worst_residual:.2e}, \
             max relative step deviation {worst_step_dev:.2e}, elapsed {elapsed:.2?}"
        ),
    );
    assert!(pass);
}

/// Criterion 2: the adjoint-assembled residual matches central-difference
/// gradients on owner-dog and a random smooth game, 10 random points each.
#[test]
fn criterion_2_gradient_identity() {
    let od = owner_dog();
    let od_x0 = owner_dog_x0();
    let lq = random_lq_game(33, 2, 4, &[2, 2], 12).unwrap();
    let lq_x0 = random_lq_initial_state(33, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
    let mut worst_ratio = 0.0_f64;
    for (p, x0, t) in [(&od, &od_x0, 10usize), (&lq, &lq_x0, 12usize)] {
        for _ in 0..10 {
            let controls: Vec<DVector<f64>> = (0..t)
                .map(|_| DVector::from_fn(p.input_dim(), |_, _| rng.random_range(-0.5..0.5)))
                .collect();
            let traj = rollout(p, x0, &controls).unwrap();
            let residual = stationarity_residual(p, &traj).unwrap();
            for n in 0..p.num_players() {
                let fd = fd_control_gradient(p, x0, &controls, n, 1e-6).unwrap();
                for k in 0..t {
                    for c in 0..p.input_dims()[n] {
                        let a = residual.per_player[n][k][c];
                        let b = fd[k][c];
                        let tol = 1e-5_f64.max(1e-3 * b.abs());
                        worst_ratio = worst_ratio.max((a - b).abs() / tol);
                    }
                }
            }
        }
    }
    let pass = worst_ratio <= 1.0;
    report_line(
        "criterion 2 (gradient identity)",
        pass,
        &format!("worst |adjoint - fd| / tolerance = {worst_ratio:.3e}"),
    );
    assert!(pass);
}

/// Criterion 3: quadratic convergence tail from a polished equilibrium,
/// both methods, fitted constant at most 100.
#[test]
fn criterion_3_quadratic_convergence_tail() {
    let runs = &*OWNER_DOG_RUNS;
    let p = owner_dog();
    let x0 = owner_dog_x0();
    let u_star = stack(&runs.star.controls);
    assert!(runs.star_residual < 1e-11, "equilibrium polish failed");

    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
    let mut direction = DVector::from_fn(u_star.len(), |_, _| rng.random_range(-1.0..1.0));
    direction /= direction.norm();

    let mut fitted_c = 0.0_f64;
    let mut detail = String::new();
    for method in [Method::Newton, Method::Ddp] {
        for eps in [1e-2_f64, 1e-3] {
            let init = &u_star + eps * &direction;
            let controls: Vec<DVector<f64>> =
                (0..10).map(|k| init.rows(2 * k, 2).into_owned()).collect();
            let mut opts = SolveOptions::new(method);
            opts.max_iters = 1;
            opts.residual_tol = 1e-300;
            opts.step_tol = 1e-300;
            let report = solve(&p, &x0, &controls, &opts).unwrap();
            let e_plus = (stack(&report.trajectory.controls) - &u_star).norm();
            let c = e_plus / (eps * eps);
            fitted_c = fitted_c.max(c);
            detail.push_str(&format!("{} eps={eps:.0e}: C={c:.2}; ", method.name()));
        }
    }
    let pass = fitted_c <= 100.0;
    report_line(
        "criterion 3 (quadratic convergence tail)",
        pass,
        &format!("{detail}fitted C = {fitted_c:.2} (limit 100)"),
    );
    assert!(pass);
}

/// Criterion 4: the two methods' updates from common nominals differ at
/// second order: log-log slope of the difference vs distance is >= 1.8.
#[test]
fn criterion_4_update_closeness_slope() {
    use dyngame::backward::ddp_backward;
    use dyngame::solver::ddp_forward;
    let runs = &*OWNER_DOG_RUNS;
    let p = owner_dog();
    let x0 = owner_dog_x0();
    let u_star = stack(&runs.star.controls);

    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);
    let mut direction = DVector::from_fn(u_star.len(), |_, _| rng.random_range(-1.0..1.0));
    direction /= direction.norm();

    let scales = [1e-1_f64, 1e-2, 1e-3];
    let mut diffs = Vec::new();
    for &eps in &scales {
        let init = &u_star + eps * &direction;
        let controls: Vec<DVector<f64>> =
            (0..10).map(|k| init.rows(2 * k, 2).into_owned()).collect();
        let traj = rollout(&p, &x0, &controls).unwrap();
        let (stages, term) = differentiate_trajectory(&p, &traj).unwrap();
        let (pn, _, _) = newton_backward(&stages, &term, p.input_dims(), 0.0).unwrap();
        let (pd, _, _) = ddp_backward(&stages, &term, p.input_dims(), 0.0).unwrap();
        let un = stack(&newton_forward(&traj, &pn, &stages));
        let ud = stack(&ddp_forward(&p, &traj, &pd).unwrap().controls);
        diffs.push(((un - ud).norm()).max(1e-300));
    }
    let slope = (diffs[0].ln() - diffs[2].ln()) / (scales[0].ln() - scales[2].ln());
    let pass = slope >= 1.8;
    report_line(
        "criterion 4 (Newton-DDP update closeness)",
        pass,
        &format!(
            "||duN - duD|| = [{:.2e}, {:.2e}, {:.2e}] over eps [1e-1, 1e-2, 1e-3], slope {slope:.2}",
            diffs[0], diffs[1], diffs[2]
        ),
    );
    assert!(pass);
}

/// Criterion 5: the benchmark owner-dog run as stated: lambda = 30, 300
/// iterations, zero start, both methods. Asserted literally; see the module
/// docs for the two sub-checks that fail and why.
#[test]
fn criterion_5_owner_dog_run_reproduction() {
    let start = Instant::now();
    let runs = &*OWNER_DOG_RUNS;
    let mut all_pass = true;
    let mut details = Vec::new();
    for (method, report) in &runs.warm {
        let no_singular = !matches!(report.termination, Termination::StageSingular { .. });
        let residual_ok = report.final_residual <= 1e-4;

        let iterates = report.iterates.as_ref().unwrap();
        let last = stack(iterates.last().unwrap());
        let dist: Vec<f64> = iterates.iter().map(|u| (stack(u) - &last).norm()).collect();
        // Eventually monotone: non-increasing over the final 100 recorded
        // distances (excluding the trivial final zero).
        let m = dist.len();
        let tail = &dist[m.saturating_sub(101)..m - 1];
        let monotone = tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));

        let overshoot = report
            .trajectory
            .states
            .iter()
            .map(|x| x[0])
            .fold(f64::NEG_INFINITY, f64::max);
        let overshoot_ok = overshoot > 1.0;

        all_pass &= no_singular && residual_ok && monotone && overshoot_ok;
        details.push(format!(
            "{}: singular-free {no_singular}, residual {:.2e} (<=1e-4: {residual_ok}), \
             monotone tail {monotone}, max owner position {overshoot:.4} (>1: {overshoot_ok})",
            method.name(),
            report.final_residual
        ));
    }
    let elapsed = start.elapsed();
    let runtime_ok = elapsed.as_secs_f64() < 60.0;
    all_pass &= runtime_ok;
    report_line(
        "criterion 5 (owner-dog run reproduction)",
        all_pass,
        &format!("{}; elapsed {elapsed:.2?}", details.join(" | ")),
    );
    assert!(
        all_pass,
        "literal sub-checks failed: {} — the damped fixed-shift iteration \
         contracts at ~0.997/iteration so the 300th iterate's residual is still O(1), and the \
         exact open-loop equilibrium owner path is monotone toward 1 (no unilateral incentive \
         to overshoot, since the owner's inputs cannot influence the dog's frozen open-loop \
         controls); the polished equilibrium residual is {:.2e}",
        details.join(" | "),
        OWNER_DOG_RUNS.star_residual
    );
}

/// Criterion 6: planar robots, 7 DDP iterations at lambda = 10 from the
/// push-pull warm start: collision-free at every iterate and per-player
/// cost reduction at iteration 7.
#[test]
fn criterion_6_planar_robots_run() {
    let start = Instant::now();
    let params = PlanarParams::default();
    let p = planar_robots();
    let x0 = planar_x0();
    let u0 = planar_push_pull_controls(&params, &x0);

    let mut opts = SolveOptions::new(Method::Ddp);
    opts.lambda = 10.0;
    opts.max_iters = 7;
    opts.residual_tol = 1e-300;
    opts.step_tol = 1e-300;
    opts.capture_iterates = true;
    let report = solve(&p, &x0, &u0, &opts).unwrap();

    let iterates = report.iterates.as_ref().unwrap();
    assert_eq!(iterates.len(), 8); // initial + 7
    let mut min_clearance = f64::INFINITY;
    let mut costs = Vec::new();
    for controls in iterates {
        let traj = rollout(&p, &x0, controls).unwrap();
        for x in &traj.states {
            min_clearance = min_clearance.min(planar_min_clearance(x, params.radius));
        }
        costs.push(total_cost(&p, &traj).unwrap().totals);
    }
    let initial = &costs[0];
    let last = &costs[7];
    let all_cheaper = (0..3).all(|n| last[n] < initial[n]);
    let elapsed = start.elapsed();
    let pass = min_clearance > 0.0 && all_cheaper && elapsed.as_secs_f64() < 600.0;
    report_line(
        "criterion 6 (planar robots run)",
        pass,
        &format!(
            "min clearance over all iterates {min_clearance:.4}, costs {:?} -> {:?}, elapsed {elapsed:.2?}",
            initial.iter().map(|c| c.round()).collect::<Vec<_>>(),
            last.iter().map(|c| c.round()).collect::<Vec<_>>()
        ),
    );
    assert!(pass);
}

/// Criterion 7: best-response probes accept every converged solution from
/// criteria 1 and 5 (the owner-dog equilibrium is the polished one that the
/// quadratic-tail criterion also starts from).
#[test]
fn criterion_7_equilibrium_probes() {
    let mut worst = f64::INFINITY;

    for seed in 0..20u64 {
        let (p, x0, t) = lq_case(seed);
        let mut opts = SolveOptions::new(Method::Newton);
        opts.max_iters = 5;
        let report = solve(&p, &x0, &zeros(t, p.input_dim()), &opts).unwrap();
        assert_eq!(report.termination, Termination::ResidualTol);
        for n in 0..2 {
            worst =
                worst.min(best_response_probe(&p, &report.trajectory, n, 200, 1e-2, seed).unwrap());
        }
    }

    let runs = &*OWNER_DOG_RUNS;
    let p = owner_dog();
    for n in 0..2 {
        worst = worst.min(best_response_probe(&p, &runs.star, n, 200, 1e-2, 0x07).unwrap());
    }

    let pass = worst >= -1e-8;
    report_line(
        "criterion 7 (equilibrium probes)",
        pass,
        &format!("worst unilateral cost change over all solutions and players: {worst:.3e}"),
    );
    assert!(pass);
}

/// Criterion 8: re-solving from a converged equilibrium with lambda = 0
/// takes no step (first-iteration step norm at most 1e-10), both methods.
#[test]
fn criterion_8_fixed_point_invariant() {
    let runs = &*OWNER_DOG_RUNS;
    let od = owner_dog();
    let od_x0 = owner_dog_x0();
    let (lq, lq_x0, t) = lq_case(3);
    let mut lq_opts = SolveOptions::new(Method::Newton);
    lq_opts.max_iters = 5;
    let lq_star = solve(&lq, &lq_x0, &zeros(t, lq.input_dim()), &lq_opts).unwrap();

    let mut worst_step = 0.0_f64;
    for method in [Method::Newton, Method::Ddp] {
        for (p, x0, controls) in [
            (&od, &od_x0, &runs.star.controls),
            (&lq, &lq_x0, &lq_star.trajectory.controls),
        ] {
            let mut opts = SolveOptions::new(method);
            opts.max_iters = 1;
            opts.residual_tol = 1e-300;
            opts.step_tol = 1e-300;
            let report = solve(p, x0, controls, &opts).unwrap();
            worst_step = worst_step.max(report.records[0].step_inf);
        }
    }
    let pass = worst_step <= 1e-10;
    report_line(
        "criterion 8 (fixed-point invariant)",
        pass,
        &format!("worst first-iteration step infinity norm {worst_step:.3e}"),
    );
    assert!(pass);
}

/// Criterion 9: per-iteration cost is linear in the horizon: wall time at
/// T = 200 is at most 2.5x the time at T = 100 (median of 5).
#[test]
fn criterion_9_linear_horizon_scaling() {
    let median_iter_time = |t: usize| -> f64 {
        let p = random_lq_game(42, 2, 6, &[2, 2], t).unwrap();
        let x0 = random_lq_initial_state(42, 6);
        let u0 = zeros(t, 4);
        let mut opts = SolveOptions::new(Method::Newton);
        opts.max_iters = 1;
        opts.residual_tol = 1e-300;
        opts.step_tol = 1e-300;
        // warm-up to populate caches
        let _ = solve(&p, &x0, &u0, &opts).unwrap();
        let mut times: Vec<f64> = (0..5)
            .map(|_| {
                let start = Instant::now();
                let _ = solve(&p, &x0, &u0, &opts).unwrap();
                start.elapsed().as_secs_f64()
            })
            .collect();
        times.sort_by(f64::total_cmp);
        times[2]
    };
    let t100 = median_iter_time(100);
    let t200 = median_iter_time(200);
    let ratio = t200 / t100;
    let pass = ratio <= 2.5;
    report_line(
        "criterion 9 (linear horizon scaling)",
        pass,
        &format!(
            "median single-iteration time: T=100 {t100:.4}s, T=200 {t200:.4}s, ratio {ratio:.2}"
        ),
    );
    assert!(pass);
}
