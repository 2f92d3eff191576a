use std::path::Path;
use std::process::{Command, Output};

use mfgkit::solvers::{Algorithm, SolveSettings};
use mfgkit::tuner::TuneReport;
use mfgkit::zoo;
use mfgkit_cli::{load_tabular_env, main_with_args, read_run_record, TabularEnvFile, EXIT_DATA, EXIT_USAGE};
use serde_json::Value;

fn mfgkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfgkit")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Runs in-process, returning (exit code, stdout, stderr).
fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = main_with_args(std::iter::once("mfgkit").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn list_envs() {
    let o = mfgkit(&["list-envs"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for name in zoo::names() {
        assert!(text.contains(&name));
    }
    assert!(text.contains("n=10"));
    assert!(!text.contains("mfomo"));
    let (code, text, _) = run(&["list-envs", "--algs"]);
    assert_eq!(code, 0);
    assert!(text.contains("mfomo(lr=0.1"));
    assert!(text.contains("failure_rate"));
}

#[test]
fn help_states_the_file_restriction() {
    for args in [&["--help"][..], &["solve", "--help"][..]] {
        let o = mfgkit(args);
        assert_eq!(o.status.code(), Some(0));
        assert!(stdout(&o).contains("population-independent"));
    }
}

#[test]
fn table_log_has_one_row_per_recorded_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    let path_s = path.to_str().unwrap();
    let o = mfgkit(&[
        "solve", "--env", "beach_bar", "--env-arg", "n=5", "--env-arg", "bar=2", "--env-arg", "T=3",
        "--alg", "online_mirror_descent", "--max-iter", "25", "--record-every", "4", "--output", path_s,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert!(lines[0].contains("iter") && lines[0].contains("best_expl") && lines[0].contains("elapsed_s"));
    let record = read_run_record(&path).unwrap();
    let rows = &lines[1..lines.len() - 1];
    assert_eq!(rows.len(), record.series.len());
    let iters: Vec<usize> = rows.iter().map(|r| r.split_whitespace().next().unwrap().parse().unwrap()).collect();
    assert_eq!(iters, record.series.iter().map(|p| p.iteration).collect::<Vec<_>>());
    assert!(lines.last().unwrap().starts_with("online_mirror_descent:"));
    assert_eq!(record.environment.name, "beach_bar");
    assert_eq!(record.environment.kwargs["bar"], "2");
    assert_eq!(record.algorithm.params["alpha"], mfgkit::ParamValue::Float(1.0));
}

#[test]
fn jsonl_log_matches_record() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    let (code, out, _) = run(&[
        "solve", "--env", "random_linear", "--seed", "9", "--alg", "mfomo", "--max-iter", "12",
        "--log", "jsonl", "--output", path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let objects: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let record = read_run_record(&path).unwrap();
    assert_eq!(record.environment.kwargs["seed"], "9");
    let (rows, summary) = objects.split_at(objects.len() - 1);
    assert_eq!(rows.len(), record.series.len());
    for (row, point) in rows.iter().zip(&record.series) {
        assert_eq!(row["iter"].as_u64().unwrap() as usize, point.iteration);
        assert_eq!(row["expl"].as_f64().unwrap().to_bits(), point.exploitability.to_bits());
    }
    assert_eq!(summary[0]["summary"]["iterations"].as_u64().unwrap() as usize, record.iterations_run);
}

#[test]
fn log_none_keeps_the_summary() {
    let (code, out, _) = run(&["solve", "--env", "left_right", "--alg", "mfomo", "--max-iter", "5", "--log", "none"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 1);
    assert!(out.starts_with("mfomo:"));
}

#[test]
fn rps_starts_at_zero() {
    let (code, out, _) = run(&[
        "solve", "--env", "rock_paper_scissors", "--alg", "online_mirror_descent", "--max-iter", "1", "--log", "jsonl",
    ]);
    assert_eq!(code, 0);
    let first: Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(first["iter"], 0);
    assert_eq!(first["expl"].as_f64().unwrap(), 0.0);
}

#[test]
fn record_matches_library_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    let (code, _, _) = run(&[
        "solve", "--env", "random_linear", "--env-arg", "n_states=4", "--alg", "prior_descent",
        "--param", "eta=0.5", "--param", "n_inner=3", "--max-iter", "20", "--atol", "0", "--rtol", "0",
        "--output", path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let record = read_run_record(&path).unwrap();
    let env = zoo::random_linear(0, 2, 4, 2, 0.5).unwrap();
    let alg = Algorithm::from_params("prior_descent", &record.algorithm.params).unwrap();
    let res = alg.solve(&env, &record.settings).unwrap();
    assert_eq!(record.exploitabilities(), res.exploitabilities);
    let nd = res.final_policy().to_nd(&env).unwrap();
    assert_eq!(record.final_policy, mfgkit_cli::tabular::to_nested(nd.view()));
    assert_eq!(record.settings, SolveSettings { max_iter: 20, atol: 0.0, rtol: 0.0, record_every: 1 });
}

#[test]
fn usage_errors_exit_2() {
    let cases: &[&[&str]] = &[
        &["solve", "--env", "nope", "--alg", "mfomo"],
        &["solve", "--env", "left_right", "--alg", "nope"],
        &["solve", "--env", "left_right", "--alg", "mfomo", "--param", "lr"],
        &["solve", "--env", "left_right", "--alg", "mfomo", "--param", "lr=fast"],
        &["solve", "--env", "left_right", "--alg", "mfomo", "--param", "beta=1"],
        &["solve", "--env", "left_right", "--alg", "mfomo", "--param", "lr=-1"],
        &["solve", "--env", "beach_bar", "--env-arg", "width=3", "--alg", "mfomo"],
        &["solve", "--env", "random_linear", "--env-arg", "seed=1", "--seed", "2", "--alg", "mfomo"],
        &["solve", "--env", "left_right", "--alg", "mfomo", "--record-every", "0"],
        &["solve", "--alg", "mfomo"],
        &["solve", "--env", "left_right", "--alg", "mfomo", "--log", "xml"],
        &["tune", "--alg", "mfomo"],
        &["tune", "--env", "left_right", "--alg", "mfomo", "--metric", "geo"],
        &["tune", "--env", "left_right:bad", "--alg", "mfomo"],
        &["frobnicate"],
    ];
    for args in cases {
        let (code, _, err) = run(args);
        assert_eq!(code, EXIT_USAGE, "{args:?}: {err}");
        assert!(!err.is_empty());
    }
    let (_, _, err) = run(&["solve", "--env", "left_right", "--alg", "nope"]);
    assert!(err.contains("fictitious_play") && err.contains("mfomo"));
}

#[test]
fn tune_is_reproducible_and_reports_its_best() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        vec![
            "tune".to_string(), "--env".into(), "left_right".into(), "--env".into(), "rock_paper_scissors".into(),
            "--alg".into(), "online_mirror_descent".into(), "--n-trials".into(), "20".into(), "--seed".into(),
            "7".into(), "--output".into(), out.to_str().unwrap().into(),
        ]
    };
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let oa = Command::new(env!("CARGO_BIN_EXE_mfgkit")).args(args(&a)).output().unwrap();
    let ob = Command::new(env!("CARGO_BIN_EXE_mfgkit")).args(args(&b)).output().unwrap();
    assert_eq!(oa.status.code(), Some(0));
    assert_eq!(ob.status.code(), Some(0));
    let ra: TuneReport = serde_json::from_str(&std::fs::read_to_string(&a).unwrap()).unwrap();
    let rb: TuneReport = serde_json::from_str(&std::fs::read_to_string(&b).unwrap()).unwrap();
    assert_eq!(ra.best_config, rb.best_config);
    assert_eq!(ra.history.len(), 20);
    let printed: Vec<f64> = stdout(&oa)
        .lines()
        .filter(|l| l.starts_with("trial"))
        .map(|l| l.split_whitespace().nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(printed.len(), 20);
    assert!(ra.best_score.value <= printed.iter().cloned().fold(f64::INFINITY, f64::min));
}

#[test]
fn tune_accepts_failure_rate_and_suite_kwargs() {
    let (code, out, err) = run(&[
        "tune", "--env", "beach_bar:n=4,bar=1,T=2", "--env", "random_linear:seed=3", "--alg", "fictitious_play",
        "--metric", "failure_rate", "--n-trials", "3", "--max-iter", "30",
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().filter(|l| l.starts_with("trial")).count(), 3);
    assert!(out.lines().last().unwrap().starts_with("best trial"));
}

fn write(path: &Path, file: &TabularEnvFile) {
    std::fs::write(path, serde_json::to_string(file).unwrap()).unwrap();
}

#[test]
fn frozen_left_right_table_loads_and_solves() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lr.json");
    let file = TabularEnvFile::snapshot_uniform(&zoo::left_right()).unwrap();
    // stage 1 rewards are the uniform-split crowd penalties
    assert_eq!(file.rewards[1][1], serde_json::json!([-0.5, -0.5]));
    write(&path, &file);
    let env = load_tabular_env(&path).unwrap();
    assert_eq!(env.horizon(), 1);
    let (code, out, _) = run(&["solve", "--env-file", path.to_str().unwrap(), "--alg", "fictitious_play", "--log", "none"]);
    assert_eq!(code, 0);
    assert!(out.contains("converged"));
}

#[test]
fn dumped_population_free_env_reproduces_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("env.json");
    let (code, _, _) = run(&[
        "dump-env", "--env", "random_linear", "--env-arg", "coupling=0", "--env-arg", "n_states=4",
        "--env-arg", "n_actions=3", "--seed", "12", "--output", path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let original = zoo::random_linear(12, 2, 4, 3, 0.0).unwrap();
    let loaded = load_tabular_env(&path).unwrap();
    let settings = SolveSettings::default().with_max_iter(40).with_tolerances(0.0, 0.0);
    for name in Algorithm::NAMES {
        let alg = Algorithm::default_for(name).unwrap();
        let a = alg.solve(&original, &settings).unwrap();
        let b = alg.solve(&loaded, &settings).unwrap();
        assert_eq!(a.exploitabilities, b.exploitabilities, "{name}");
        assert_eq!(a.policies, b.policies, "{name}");
    }
}

#[test]
fn multidimensional_tables_round_trip() {
    use mfgkit::{Environment, Shape};
    use ndarray::{ArrayD, IxDyn};
    // 2x2 grid; action 0 stays, action 1 jumps to the mirrored cell
    let env = Environment::new(
        1,
        Shape::new(vec![2, 2]).unwrap(),
        Shape::new(vec![2]).unwrap(),
        ArrayD::from_shape_vec(IxDyn(&[2, 2]), vec![0.5, 0.5, 0.0, 0.0]).unwrap(),
        1.0,
        |t, l| l.mapv(|_| t as f64 * 0.5),
        |_, _| {
            let mut p = ArrayD::zeros(IxDyn(&[2, 2, 2, 2, 2]));
            for i in 0..2 {
                for j in 0..2 {
                    p[[i, j, i, j, 0]] = 1.0;
                    p[[1 - i, 1 - j, i, j, 1]] = 1.0;
                }
            }
            p
        },
    )
    .unwrap();
    let file = TabularEnvFile::snapshot_uniform(&env).unwrap();
    assert_eq!(file.transitions[0][1][1][0][0][1], 1.0);
    assert_eq!(file.transitions[0][0][0][0][0][1], 0.0);
    assert_eq!(file.mu0, serde_json::json!([[0.5, 0.5], [0.0, 0.0]]));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.json");
    write(&path, &file);
    let loaded = load_tabular_env(&path).unwrap();
    assert_eq!(loaded.state_shape().dims(), &[2, 2]);
    assert_eq!(TabularEnvFile::snapshot_uniform(&loaded).unwrap(), file);
}

fn corrupt_case(edit: impl FnOnce(&mut TabularEnvFile)) -> String {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut file = TabularEnvFile::snapshot_uniform(&zoo::random_linear(1, 2, 3, 2, 0.0).unwrap()).unwrap();
    edit(&mut file);
    write(&path, &file);
    let (code, _, err) = run(&["solve", "--env-file", path.to_str().unwrap(), "--alg", "mfomo"]);
    assert_eq!(code, EXIT_DATA, "{err}");
    err
}

#[test]
fn corrupt_tables_exit_3_naming_the_index() {
    let err = corrupt_case(|f| {
        let p = f.transitions[0][1][0][1].as_f64().unwrap();
        f.transitions[0][1][0][1] = serde_json::json!(p - 0.1);
    });
    assert!(err.contains("t=0") && err.contains("state [0]") && err.contains("action [1]"), "{err}");

    let err = corrupt_case(|f| f.rewards[2][1][0] = serde_json::json!(50.0));
    assert!(err.contains("t=2") && err.contains("state [1]") && err.contains("action [0]"), "{err}");

    let err = corrupt_case(|f| {
        f.rewards[1].as_array_mut().unwrap().pop();
    });
    assert!(err.contains("rewards[1]") && err.contains("expected 3 entries"), "{err}");

    let err = corrupt_case(|f| f.transitions[1][2][1][0] = serde_json::json!("x"));
    assert!(err.contains("transitions[1][2][1][0]"), "{err}");

    let err = corrupt_case(|f| f.mu0 = serde_json::json!([0.5, 0.5, 0.5]));
    assert!(err.contains("initial distribution"), "{err}");

    let err = corrupt_case(|f| f.horizon = 3);
    assert!(err.contains("rewards") && err.contains("expected 4 entries"), "{err}");
}

#[test]
fn unreadable_env_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{ not json").unwrap();
    let (code, _, err) = run(&["solve", "--env-file", path.to_str().unwrap(), "--alg", "mfomo"]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("malformed"));
    let (code, _, _) = run(&["solve", "--env-file", "/nonexistent/env.json", "--alg", "mfomo"]);
    assert_eq!(code, EXIT_DATA);
}

#[test]
fn overflow_exits_4() {
    let (code, _, err) = run(&[
        "solve", "--env", "beach_bar", "--env-arg", "n=4", "--env-arg", "bar=1", "--alg", "online_mirror_descent",
        "--param", "alpha=1e308", "--max-iter", "10", "--log", "none",
    ]);
    assert_eq!(code, mfgkit_cli::EXIT_NUMERICAL, "{err}");
    assert!(err.contains("non-finite"), "{err}");
}
