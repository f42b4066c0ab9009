mod common;

use std::fs;
use std::process::Command;

use nalgebra::DVector;
use sgdinfer::harness::output::{read_summary, RUNS_HEADER};
use sgdinfer::harness::{
    emit_outputs, fit_log_slope, read_matrix, run_experiment, EstimatorKind, ExperimentConfig,
    ExperimentResult,
};
use sgdinfer::models::ground_truth_sigma;
use sgdinfer::{ModelKind, ModelSpec, PluginAccumulator, SgdState, StepSchedule};

use common::*;

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(ModelKind::Linear, 3, 4000);
    cfg.reps = 6;
    cfg.checkpoints = vec![1000, 4000];
    cfg.estimators = vec![
        EstimatorKind::Debias,
        EstimatorKind::Bm,
        EstimatorKind::Plugin,
    ];
    cfg.record_timing = false;
    cfg.seed = 7;
    cfg
}

#[test]
fn running_average_matches_direct_mean() {
    let model = ModelSpec::linear(3).unwrap();
    let schedule = StepSchedule::new(0.5, 0.505).unwrap();
    let mut r = rng(1);
    let mut state = SgdState::zeros(3);
    let mut sum = DVector::zeros(3);
    let n = 100_000;
    for _ in 0..n {
        let obs = model.sample(&mut r);
        let g = model.gradient(state.x(), &obs);
        state.step(&schedule, &g).unwrap();
        sum += state.x();
    }
    let direct = sum / n as f64;
    assert!(
        (state.x_bar() - &direct).norm() <= 1e-12 * direct.norm(),
        "{} vs {direct}",
        state.x_bar()
    );
    assert_eq!(state.iteration(), n);
}

#[test]
fn plugin_hessian_average_tends_to_identity() {
    let model = ModelSpec::linear(4).unwrap();
    let mut acc = PluginAccumulator::new(4);
    let mut r = rng(2);
    for _ in 0..100_000 {
        let obs = model.sample(&mut r);
        let x = model.x_star();
        acc.accumulate(&model.gradient(x, &obs), &model.hessian(x, &obs))
            .unwrap();
    }
    let dev = (acc.a_hat() - nalgebra::DMatrix::identity(4, 4)).norm();
    assert!(dev < 0.03, "{dev}");
}

#[test]
fn plugin_error_decays_at_least_at_half_alpha_rate() {
    let mut cfg = ExperimentConfig::new(ModelKind::Linear, 5, 40_000);
    cfg.reps = 30;
    cfg.checkpoints = vec![2500, 5000, 10_000, 20_000, 40_000];
    cfg.estimators = vec![EstimatorKind::Plugin];
    cfg.record_timing = false;
    let result = run_experiment(&cfg, None).unwrap();
    let summary = sgdinfer::harness::Summary::from_result(&result);
    let slope = summary
        .estimator(EstimatorKind::Plugin)
        .unwrap()
        .error_slope
        .unwrap();
    assert!(slope <= -cfg.alpha / 2.0 + 0.1, "{slope}");
}

#[test]
fn output_files_follow_schema() {
    let cfg = small_config();
    let result = run_experiment(&cfg, Some(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = emit_outputs(&result, dir.path()).unwrap();

    let mut rdr = csv::Reader::from_path(dir.path().join("runs.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, RUNS_HEADER);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(
        rows.len(),
        cfg.reps * cfg.checkpoints.len() * cfg.estimators.len()
    );
    for row in &rows {
        let err: f64 = row[3].parse().unwrap();
        assert!(err.is_finite() && err >= 0.0);
        let hits: usize = row[4].parse().unwrap();
        assert!(hits <= 3);
        assert_eq!(&row[5], "0");
    }

    let back = read_summary(&dir.path().join("summary.json")).unwrap();
    assert_eq!(back, summary);
    assert_eq!(back.reps, cfg.reps);
    assert_eq!(back.estimators.len(), 3);
    let debias = back.estimator(EstimatorKind::Debias).unwrap();
    assert_eq!(debias.checkpoints.len(), 2);
    assert_eq!(debias.checkpoints[1].coverage.unwrap().trials, cfg.reps * 3);
    assert!(summary.render_table().contains("debias"));

    let truth = read_matrix(&dir.path().join("sigma_truth.txt")).unwrap();
    assert_eq!(truth, result.truth.sigma);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert!(json["rng"]["normal_sampler"]
        .as_str()
        .unwrap()
        .contains("ziggurat"));
    assert_eq!(json["truth_provenance"], "analytic");
}

#[test]
fn saved_sigma_matrices_round_trip() {
    let mut cfg = small_config();
    cfg.reps = 1;
    cfg.save_sigma = true;
    let result = run_experiment(&cfg, Some(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&result, dir.path()).unwrap();
    let cp = &result.records[0].checkpoints[1];
    let est = cp.estimate(EstimatorKind::Debias).unwrap();
    let m = read_matrix(&dir.path().join("sigma").join("run0_debias_n4000.txt")).unwrap();
    assert_eq!(&m, est.sigma_hat.as_ref().unwrap());
}

#[test]
fn empty_records_give_header_only_csv() {
    let cfg = small_config();
    let model = cfg.model_spec().unwrap();
    let truth = ground_truth_sigma(&model).unwrap();
    let result = ExperimentResult {
        config: cfg,
        model,
        truth,
        records: Vec::new(),
    };
    let dir = tempfile::tempdir().unwrap();
    let summary = emit_outputs(&result, dir.path()).unwrap();
    assert_eq!(summary.reps, 0);
    assert!(summary.estimators.iter().all(|e| e.checkpoints.is_empty()));
    let text = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(text, format!("{}\n", RUNS_HEADER.join(",")));
    assert_eq!(
        read_summary(&dir.path().join("summary.json")).unwrap(),
        summary
    );
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfg = small_config();
    let one = run_experiment(&cfg, Some(1)).unwrap();
    let four = run_experiment(&cfg, Some(4)).unwrap();
    assert_eq!(one.records, four.records);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_outputs(&one, a.path()).unwrap();
    emit_outputs(&four, b.path()).unwrap();
    for f in ["runs.csv", "summary.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn config_toml_round_trip_and_validation() {
    let mut cfg = small_config();
    cfg.burn_in = 100;
    let text = cfg.to_toml();
    assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);

    let minimal = ExperimentConfig::from_toml("model = \"expectile\"\nn = 500\n").unwrap();
    assert_eq!(minimal.checkpoints, vec![500]);
    assert_eq!(minimal.d, 5);
    assert_eq!(minimal.tau, 0.25);
    assert_eq!(minimal.model_spec().unwrap().dim(), 6);

    assert!(ExperimentConfig::from_toml("model = \"linear\"\nn = 10\nbogus = 1\n").is_err());
    assert!(
        ExperimentConfig::from_toml("model = \"linear\"\nn = 10\ncheckpoints = [5, 3]\n").is_err()
    );
    assert!(ExperimentConfig::from_toml("model = \"linear\"\nn = 10\nalpha = 0.4\n").is_err());
    assert!(ExperimentConfig::from_toml("model = \"mean\"\nn = 10\nx0 = [1.0, 2.0]\n").is_err());
}

#[test]
fn burn_in_shifts_the_schedule() {
    let mut cfg = small_config();
    cfg.burn_in = 500;
    cfg.reps = 2;
    let with = run_experiment(&cfg, Some(1)).unwrap();
    cfg.burn_in = 0;
    let without = run_experiment(&cfg, Some(1)).unwrap();
    assert_ne!(with.records, without.records);
    assert_eq!(with.records[0].checkpoints[1].n, 4000);
}

#[test]
fn slope_fit_recovers_exact_power_laws() {
    let pts: Vec<(f64, f64)> = [1e3f64, 1e4, 1e5, 1e6]
        .iter()
        .map(|&n| (n, 3.0 * n.powf(-0.5)))
        .collect();
    assert!((fit_log_slope(&pts, false).unwrap() + 0.5).abs() < 1e-10);
    let with_log: Vec<(f64, f64)> = pts.iter().map(|&(n, v)| (n, v * n.ln())).collect();
    assert!((fit_log_slope(&with_log, true).unwrap() + 0.5).abs() < 1e-10);
    let flat: Vec<(f64, f64)> = pts.iter().map(|&(n, _)| (n, 2.0)).collect();
    assert!(fit_log_slope(&flat, false).unwrap().abs() < 1e-12);
}

fn cli() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sgdinfer"));
    c.env_remove("SGDINFER_THREADS");
    c
}

#[test]
fn cli_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli()
        .args([
            "run",
            "--model",
            "linear",
            "--d",
            "2",
            "--n",
            "3000",
            "--reps",
            "3",
            "--no-timing",
        ])
        .args([
            "--estimators",
            "debias,bm,plugin",
            "--checkpoints",
            "1000,3000",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("plugin"), "{stdout}");
    let summary = read_summary(&dir.path().join("summary.json")).unwrap();
    assert_eq!(summary.config.checkpoints, vec![1000, 3000]);
    assert_eq!(summary.config.d, 2);
}

#[test]
fn cli_run_from_config_file_with_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.toml");
    fs::write(&cfg_path, "model = \"mean\"\nn = 2000\nreps = 2\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = cli()
        .args(["run", "--config"])
        .arg(&cfg_path)
        .args(["--reps", "4", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(read_summary(&out_dir.join("summary.json")).unwrap().reps, 4);
}

#[test]
fn cli_rejects_bad_input() {
    let out = cli().args(["run", "--model", "linear"]).output().unwrap();
    assert!(!out.status.success());
    let out = cli()
        .args(["run", "--model", "nope", "--n", "10"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = cli()
        .env("SGDINFER_THREADS", "many")
        .args(["run", "--model", "linear", "--n", "10"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("SGDINFER_THREADS"));
}

#[test]
fn cli_slope_runs_small_study() {
    let out = cli()
        .args(["slope", "--seeds", "4", "--sizes", "256,512,1024,2048"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("slope"));
}
