//! File-format, exit-code and determinism tests for the command layer and
//! the binary.

use std::path::Path;
use std::process::Command;

use dyngame::cli::{
    cmd_compare, cmd_solve, cmd_verify, cmd_verify_with, CheckStatus, RunConfig, VerifyFault,
};
use dyngame::solver::Termination;
use dyngame::Error;

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

/// Summary contents with the wall-time line removed; everything else must
/// be byte-identical across reruns.
fn summary_without_wall_time(path: &Path) -> String {
    read(path)
        .lines()
        .filter(|l| !l.contains("wall_time_s"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn solve_lq_single_iteration_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new("random-lq");
    cfg.method = "newton".into();
    cfg.lambda = Some(0.0);
    cfg.out = Some(dir.path().to_path_buf());
    let outcomes = cmd_solve(&cfg).unwrap();
    assert_eq!(outcomes.len(), 1);
    assert_eq!(outcomes[0].iterations, 1);
    assert_eq!(outcomes[0].termination, Termination::ResidualTol);

    let summary = read(&dir.path().join("newton_summary.json"));
    assert!(summary.contains("\"iterations\": 1"));
    assert!(summary.contains("\"termination\": \"residual_tol\""));

    // Trajectory CSV: header plus T+1 rows, controls blank on the last row.
    let csv = read(&dir.path().join("newton_trajectory.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k,x_0,x_1,x_2,x_3,u_0,u_1,u_2,u_3");
    assert_eq!(lines.len(), 1 + 21);
    assert!(lines[21].ends_with(",,,,"));

    // One JSONL record per iteration.
    let log = read(&dir.path().join("newton_iterations.jsonl"));
    assert_eq!(log.lines().count(), 1);
    assert!(log.starts_with("{\"iter\":1,"));
}

#[test]
fn solve_owner_dog_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new("owner-dog");
    cfg.method = "both".into();
    cfg.lambda = Some(30.0);
    cfg.max_iters = 300;
    cfg.out = Some(dir.path().to_path_buf());
    let outcomes = cmd_solve(&cfg).unwrap();
    assert_eq!(outcomes.len(), 2);
    for o in &outcomes {
        assert!(!matches!(o.termination, Termination::StageSingular { .. }));
    }
    assert!(dir.path().join("newton_summary.json").exists());
    assert!(dir.path().join("ddp_summary.json").exists());
}

#[test]
fn solve_unknown_problem_lists_catalog() {
    let err = cmd_solve(&RunConfig::new("foo")).unwrap_err();
    match err {
        Error::UnknownProblem { available, .. } => {
            assert!(available.contains("owner-dog"));
            assert!(available.contains("planar-robots"));
            assert!(available.contains("random-lq"));
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn outputs_are_deterministic_for_fixed_config_and_seed() {
    let run = |dir: &Path| {
        let mut cfg = RunConfig::new("random-lq");
        cfg.method = "both".into();
        cfg.lambda = Some(0.5);
        cfg.max_iters = 20;
        cfg.seed = 1234;
        cfg.out = Some(dir.to_path_buf());
        cmd_solve(&cfg).unwrap();
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    run(d1.path());
    run(d2.path());
    for name in [
        "newton_trajectory.csv",
        "ddp_trajectory.csv",
        "newton_iterations.jsonl",
        "ddp_iterations.jsonl",
    ] {
        assert_eq!(
            read(&d1.path().join(name)),
            read(&d2.path().join(name)),
            "{name} differs between identical runs"
        );
    }
    for name in ["newton_summary.json", "ddp_summary.json"] {
        assert_eq!(
            summary_without_wall_time(&d1.path().join(name)),
            summary_without_wall_time(&d2.path().join(name)),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn verify_suite_passes_and_marks_guard_skips() {
    let cfg = RunConfig::new("random-lq");
    let report = cmd_verify(&cfg).unwrap();
    assert!(report.all_passed(), "{report}");
    assert!(report
        .rows
        .iter()
        .any(|r| r.status == CheckStatus::Skip && r.name == "dense-oracle-guard"));
    // pass/fail table renders one line per row
    let rendered = report.to_string();
    assert_eq!(rendered.lines().count(), report.rows.len() + 1);
}

#[test]
fn verify_detects_injected_curvature_fault() {
    let cfg = RunConfig::new("random-lq");
    let report = cmd_verify_with(&cfg, VerifyFault::FlipDdpSecondOrder).unwrap();
    assert!(!report.all_passed());
    let row = report
        .rows
        .iter()
        .find(|r| r.name == "closeness-slope")
        .unwrap();
    assert_eq!(row.status, CheckStatus::Fail, "{}", row.detail);
}

#[test]
fn compare_emits_identical_series_on_lq() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new("random-lq");
    cfg.lambda = Some(0.0);
    cfg.max_iters = 5;
    cfg.seed = 5;
    cfg.out = Some(dir.path().to_path_buf());
    cfg.lockstep = true;
    let outcome = cmd_compare(&cfg).unwrap();
    assert_eq!(outcome.distance_paths.len(), 2);
    // The methods coincide on LQ problems, so the distance series match.
    assert_eq!(
        read(&outcome.distance_paths[0]),
        read(&outcome.distance_paths[1])
    );
    // Lockstep closeness: header plus max_iters rows of ~zero differences.
    let closeness = read(outcome.closeness_path.as_ref().unwrap());
    let lines: Vec<&str> = closeness.lines().collect();
    assert_eq!(lines[0], "iter,update_diff");
    assert_eq!(lines.len(), 1 + 5);
    for line in &lines[1..] {
        let value: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(value < 1e-9, "LQ lockstep difference {value}");
    }
}

#[test]
fn compare_lockstep_series_shrinks_near_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new("owner-dog");
    cfg.lambda = Some(30.0);
    cfg.max_iters = 60;
    cfg.out = Some(dir.path().to_path_buf());
    cfg.lockstep = true;
    let outcome = cmd_compare(&cfg).unwrap();
    let closeness = read(outcome.closeness_path.as_ref().unwrap());
    let values: Vec<f64> = closeness
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 60);
    assert!(values.iter().all(|v| v.is_finite()));
    // The update gap shrinks as the damped common nominal crawls toward
    // the equilibrium (the sharp quadratic collapse is exercised by the
    // acceptance closeness criterion, which starts near the equilibrium).
    assert!(
        values[59] < values[0] * 0.75,
        "{} -> {}",
        values[0],
        values[59]
    );
}

// --- binary-level checks -------------------------------------------------

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dyngame"))
}

#[test]
fn binary_list_problems() {
    let out = bin().arg("list-problems").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["owner-dog", "planar-robots", "random-lq"] {
        assert!(text.contains(name), "missing {name} in:\n{text}");
    }
}

#[test]
fn binary_solve_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // Converging run exits 0.
    let out = bin()
        .args(["solve", "--problem", "random-lq", "--lambda", "0", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // Unknown problem: nonzero exit, catalog in the message.
    let out = bin().args(["solve", "--problem", "foo"]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("owner-dog") && err.contains("random-lq"),
        "{err}"
    );

    // A run that stops on the iteration cap exits nonzero.
    let out = bin()
        .args([
            "solve",
            "--problem",
            "owner-dog",
            "--max-iters",
            "3",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn binary_config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.json");
    std::fs::write(
        &config_path,
        r#"{"problem":"random-lq","method":"newton","lambda":0.0,"max_iters":4,"seed":9}"#,
    )
    .unwrap();
    let out = bin()
        .args(["solve", "--config"])
        .arg(&config_path)
        .args(["--set", "horizon=6", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(&dir.path().join("newton_trajectory.csv"));
    // horizon=6 -> header + 7 state rows
    assert_eq!(csv.lines().count(), 8);
}

#[test]
fn binary_verify_runs_suite() {
    let out = bin().args(["verify", "--seed", "1"]).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "stdout:\n{text}");
    assert!(text.contains("dense-newton-equivalence"));
    assert!(text.contains("SKIP"));
    assert!(text.contains("all passed"));
}

#[test]
fn solve_rejects_unwritable_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let mut cfg = RunConfig::new("random-lq");
    cfg.out = Some(blocker.join("nested")); // parent is a file
    assert!(matches!(cmd_solve(&cfg), Err(Error::Config(_))));
}

#[test]
fn binary_honors_thread_cap_env() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("DYNGAME_THREADS", "1")
        .args(["solve", "--problem", "random-lq", "--lambda", "0", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("newton_summary.json").exists());
}
