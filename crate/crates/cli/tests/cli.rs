use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mixem(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixem"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn sample_two(dir: &Path, out: &str) {
    let o = mixem(
        &[
            "sample", "--family", "gaussian", "--k", "2", "--d", "1", "--means", "-1;1", "--n",
            "100", "--seed", "7", "--out", out,
        ],
        dir,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sample_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    sample_two(dir.path(), "a");
    sample_two(dir.path(), "b");
    let a = fs::read_to_string(dir.path().join("a/samples.csv")).unwrap();
    let b = fs::read_to_string(dir.path().join("b/samples.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 101);
    assert_eq!(a.lines().next(), Some("x1"));
    assert!(!a.contains('\r'));
    let model = read_json(&dir.path().join("a/model.json"));
    assert_eq!(model["family"], "gaussian");
    let run = read_json(&dir.path().join("a/run.json"));
    assert_eq!(run["digest"].as_str().unwrap().len(), 64);
}

#[test]
fn missing_sample_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = mixem(&["sample", "--k", "2", "--d", "1"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--n"));
    let o = mixem(&["sample", "--bogus"], dir.path());
    assert_eq!(code(&o), 1);
    let o = mixem(
        &[
            "sample", "--n", "5", "--k", "1", "--d", "1", "--set", "nope=1",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn multivariate_laplacian_warns() {
    let dir = tempfile::tempdir().unwrap();
    let o = mixem(
        &[
            "sample",
            "--family",
            "laplacian",
            "--k",
            "2",
            "--d",
            "2",
            "--n",
            "10",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn bad_model_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = mixem(
        &["sample", "--means", "0;1", "--k", "3", "--n", "10"],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    let o = mixem(
        &["sample", "--means", "0;1", "--scale", "-1", "--n", "10"],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn population_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let o = mixem(
        &["population-k2", "--mu-star", "1.5", "--lambda0", "0.2"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let summary = read_json(&dir.path().join("trajectory.json"));
    assert_eq!(summary["converged"], true);
    let kappa = summary["kappa"].as_f64().unwrap();
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,lambda,abs_err,ratio"));
    for line in lines {
        let ratio = line.split(',').nth(3).unwrap();
        if !ratio.is_empty() {
            assert!(ratio.parse::<f64>().unwrap() <= kappa);
        }
    }
}

#[test]
fn population_at_fixed_point_is_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = mixem(
        &["population-k2", "--mu-star", "1", "--lambda0", "1"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn population_saddle_needs_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let o = mixem(
        &["population-k2", "--mu-star", "1", "--lambda0", "0"],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("fixed point"));
    let o = mixem(
        &[
            "population-k2",
            "--mu-star",
            "1",
            "--lambda0",
            "0",
            "--allow-saddle",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
}

#[test]
fn zero_penalty_fit_matches_naive() {
    let dir = tempfile::tempdir().unwrap();
    sample_two(dir.path(), ".");
    let base = ["fit", "--samples", "samples.csv", "--init", "-0.5;0.5"];
    let a = mixem(
        &[&base[..], &["--algorithm", "naive", "--out", "n"]].concat(),
        dir.path(),
    );
    let b = mixem(
        &[
            &base[..],
            &["--algorithm", "regularized", "--M", "0", "--out", "r"],
        ]
        .concat(),
        dir.path(),
    );
    assert_eq!(code(&a), 0);
    assert_eq!(code(&b), 0);
    assert_eq!(
        fs::read(dir.path().join("n/means.json")).unwrap(),
        fs::read(dir.path().join("r/means.json")).unwrap()
    );
}

#[test]
fn stochastic_fit_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    sample_two(dir.path(), ".");
    let args = |out: &'static str| {
        vec![
            "fit",
            "--samples",
            "samples.csv",
            "--k",
            "2",
            "--algorithm",
            "stochastic",
            "--lambda-dist",
            "loguniform:0.01,1",
            "--seed",
            "5",
            "--max-iters",
            "80",
            "--out",
            out,
        ]
    };
    assert_eq!(code(&mixem(&args("a"), dir.path())), 0);
    assert_eq!(code(&mixem(&args("b"), dir.path())), 0);
    for f in ["trace.csv", "means.json", "run.json", "config.json"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    // The recorded settings reproduce the run.
    let o = mixem(
        &["fit", "--config", "a/config.json", "--out", "c"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read(dir.path().join("a/trace.csv")).unwrap(),
        fs::read(dir.path().join("c/trace.csv")).unwrap()
    );
}

#[test]
fn regularized_trace_objective_is_nondecreasing() {
    let dir = tempfile::tempdir().unwrap();
    sample_two(dir.path(), ".");
    let o = mixem(
        &[
            "fit",
            "--samples",
            "samples.csv",
            "--k",
            "2",
            "--algorithm",
            "regularized",
            "--M",
            "0.1",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("iter,loglik,objective,moment_residual,max_step,lambda")
    );
    let objective: Vec<f64> = lines
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(!objective.is_empty());
    for w in objective.windows(2) {
        assert!(w[1] >= w[0] - 1e-12);
    }
}

#[test]
fn fit_flag_misuse() {
    let dir = tempfile::tempdir().unwrap();
    sample_two(dir.path(), ".");
    let o = mixem(
        &["fit", "--samples", "samples.csv", "--k", "2", "--M", "1"],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
    let o = mixem(&["fit", "--samples", "missing.csv", "--k", "2"], dir.path());
    assert_eq!(code(&o), 2);
}

fn write_spec(dir: &Path, extra: &str) -> String {
    let spec = format!(
        r#"{{"K_values":[2,3],"d_values":[1,2],"n_samples":500,"n_inits":4,"max_iters":40,
        "master_seed":11,"algorithms":[{{"kind":"naive"}},
        {{"kind":"stochastic","schedule":{{"kind":"loguniform","lo":0.01,"hi":1.0}}}}]{extra}}}"#
    );
    let path = dir.join("spec.json");
    fs::write(&path, spec).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn experiment_output_ignores_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "");
    for (threads, out) in [("1", "one"), ("8", "eight")] {
        let o = mixem(
            &[
                "experiment",
                "--config",
                &spec,
                "--threads",
                threads,
                "--trials",
                "--out",
                out,
            ],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let one = fs::read_to_string(dir.path().join("one/success_table.csv")).unwrap();
    let eight = fs::read_to_string(dir.path().join("eight/success_table.csv")).unwrap();
    assert_eq!(one, eight);
    assert!(one.starts_with("K,d,algorithm,n_instances,n_inits,n_trials,n_success,success_rate\n"));
    assert_eq!(one.lines().count(), 1 + 8);
    assert!(dir.path().join("one/trials.csv").exists());
    let run = read_json(&dir.path().join("one/run.json"));
    assert_eq!(run["truncated"], false);
}

#[test]
fn ground_truth_start_recovers_everything() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), r#","init_strategy":"ground_truth""#);
    let o = mixem(
        &[
            "experiment",
            "--config",
            &spec,
            "--set",
            "n_inits=1",
            "--set",
            "n_samples=5000",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("success_table.csv")).unwrap();
    for line in csv.lines().skip(1) {
        assert!(line.ends_with(",1.0000000000000000e0"), "{line}");
    }
}

#[test]
fn experiment_rejects_bad_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), r#","bogus":1"#);
    let o = mixem(&["experiment", "--config", &spec], dir.path());
    assert_eq!(code(&o), 2);
    let spec = write_spec(dir.path(), "");
    let o = mixem(
        &["experiment", "--config", &spec, "--set", "n_inits=0"],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_fast_passes_and_detects_faults() {
    let dir = tempfile::tempdir().unwrap();
    let o = mixem(&["verify", "--level", "fast"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(!String::from_utf8_lossy(&o.stdout).contains("[FAIL]"));
    let o = mixem(&["verify", "--inject-fault"], dir.path());
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("[FAIL]"));
}
