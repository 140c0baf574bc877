//! End-to-end tests of loading, report emission and the binary itself.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;

use gtdl::diagnostics::{influence_analysis, FlagRule};
use gtdl::estimate::{fit, FitOptions};
use gtdl::model::{ModelKind, ParamVector};
use gtdl::simulation::{simulate_dataset, CovariateLaw};
use gtdl_cli::config::DataConfig;
use gtdl_cli::curves::{self, CurveKind};
use gtdl_cli::loader::load_csv;
use gtdl_cli::report::{build_fit_report, emit_fit_report, load_fit_report};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Simulated CSV with one continuous covariate, written to `dir/data.csv`.
fn write_simulated_csv(dir: &Path, n: usize, censoring: f64, seed: u64) -> std::path::PathBuf {
    let truth = ParamVector::gtdl(vec![0.5], vec![-1.0, 0.5]);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let sim = simulate_dataset(&truth, &CovariateLaw::default(), n, censoring, &mut rng).unwrap();
    let d = sim.dataset;
    let path = dir.join("data.csv");
    let mut f = fs::File::create(&path).unwrap();
    writeln!(f, "time,status,x").unwrap();
    for i in 0..d.n() {
        writeln!(
            f,
            "{},{},{}",
            d.times()[i],
            u8::from(d.status()[i]),
            d.covariates_beta().row(i)[1]
        )
        .unwrap();
    }
    path
}

fn one_cov_config() -> DataConfig {
    DataConfig {
        beta_covariates: vec!["x".into()],
        ..Default::default()
    }
}

#[test]
fn fit_report_json_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = write_simulated_csv(dir.path(), 200, 0.3, 1);
    let config = one_cov_config();
    let loaded = load_csv(&csv_path, &config).unwrap();
    let result = fit(ModelKind::Gtdl, &loaded.dataset, &FitOptions::default()).unwrap();
    let report = build_fit_report(
        &result,
        &loaded.beta_columns,
        &loaded.alpha_columns,
        &loaded.dropped_rows,
        loaded.dataset.n(),
        loaded.dataset.n_events(),
        &config,
        None,
    );
    emit_fit_report(&report, dir.path()).unwrap();
    let reloaded = load_fit_report(&dir.path().join("fit_report.json")).unwrap();
    assert_eq!(report, reloaded);
    for (a, b) in result
        .params_hat
        .packed()
        .iter()
        .zip(reloaded.params().packed().iter())
    {
        assert_eq!(
            a.to_bits(),
            b.to_bits(),
            "estimates must survive the JSON channel bit-exactly"
        );
    }

    // CSV layout: alpha0, beta0, beta1 rows with 4-decimal cells
    let csv_text = fs::read_to_string(dir.path().join("fit_report.csv")).unwrap();
    let lines: Vec<&str> = csv_text.lines().collect();
    assert_eq!(lines[0], "parameter,mle,se,ci_lower,ci_upper");
    assert!(lines[1].starts_with("alpha0,"));
    assert!(lines[2].starts_with("beta0,"));
    assert!(lines[3].starts_with("beta1 (x),"));
    assert_eq!(lines.len(), 4);
}

#[test]
fn frailty_report_includes_theta_row() {
    let dir = tempfile::tempdir().unwrap();
    let truth = ParamVector::frailty(vec![0.5], vec![-1.0, 0.5], 1.0);
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let sim = simulate_dataset(&truth, &CovariateLaw::default(), 400, 0.2, &mut rng).unwrap();
    let result = fit(ModelKind::GtdlFrailty, &sim.dataset, &FitOptions::default()).unwrap();
    let report = build_fit_report(
        &result,
        &["x".into()],
        &[],
        &[],
        sim.dataset.n(),
        sim.dataset.n_events(),
        &one_cov_config(),
        None,
    );
    emit_fit_report(&report, dir.path()).unwrap();
    let csv_text = fs::read_to_string(dir.path().join("fit_report.csv")).unwrap();
    assert!(csv_text.lines().any(|l| l.starts_with("theta,")));
}

#[test]
fn influence_csv_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = write_simulated_csv(dir.path(), 40, 0.3, 3);
    let config = one_cov_config();
    let loaded = load_csv(&csv_path, &config).unwrap();
    let opts = FitOptions::default();
    let result = fit(ModelKind::Gtdl, &loaded.dataset, &opts).unwrap();
    let influence =
        influence_analysis(&result, &loaded.dataset, &opts, FlagRule::default()).unwrap();
    let names: Vec<String> = result.params_hat.labels();
    gtdl_cli::report::emit_influence_report(&influence, &names, dir.path()).unwrap();

    let gd_ld = fs::read_to_string(dir.path().join("gd_ld.csv")).unwrap();
    // header plus one row per case
    assert_eq!(gd_ld.lines().count(), loaded.dataset.n() + 1);

    let rc = fs::read_to_string(dir.path().join("rc_table.csv")).unwrap();
    let rc_lines: Vec<&str> = rc.lines().collect();
    assert!(rc_lines[0].starts_with("deleted,metric,alpha0,beta0,beta1"));
    // three metric rows per deletion set
    assert_eq!((rc_lines.len() - 1) % 3, 0);
    if !influence.flagged_union.is_empty() {
        assert!(rc.contains("All,rc_estimate"));
        for id in &influence.flagged_union {
            assert!(rc.contains(&format!("{{{id}}},rc_estimate")));
        }
    }
}

#[test]
fn curve_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = write_simulated_csv(dir.path(), 150, 0.3, 4);
    let config = one_cov_config();
    let loaded = load_csv(&csv_path, &config).unwrap();
    let result = fit(ModelKind::Gtdl, &loaded.dataset, &FitOptions::default()).unwrap();
    let report = build_fit_report(
        &result,
        &loaded.beta_columns,
        &loaded.alpha_columns,
        &[],
        loaded.dataset.n(),
        loaded.dataset.n_events(),
        &config,
        None,
    );
    let base = curves::default_profile(&loaded).unwrap();
    let grid = curves::time_grid(10.0, 60);

    // hazard ratio of identical profiles is constant 1
    let series = curves::evaluate(
        CurveKind::HazardRatio,
        &report,
        &loaded,
        &[base.clone(), base.clone()],
        &grid,
    )
    .unwrap();
    assert_eq!(series.len(), 1);
    for (_, v) in &series[0].points {
        assert!((v - 1.0).abs() < 1e-12);
    }

    // reliability starts at 1 and never increases along the grid
    let rel = curves::evaluate(
        CurveKind::Reliability,
        &report,
        &loaded,
        std::slice::from_ref(&base),
        &grid,
    )
    .unwrap();
    let pts = &rel[0].points;
    assert_eq!(pts[0].1, 1.0);
    for w in pts.windows(2) {
        assert!(w[1].1 <= w[0].1 + 1e-15);
    }

    // two quartile profiles differ
    let q1 = curves::with_value(&base, "x", loaded.quantile("x", 0.25).unwrap());
    let q3 = curves::with_value(&base, "x", loaded.quantile("x", 0.75).unwrap());
    let hr = curves::evaluate(CurveKind::HazardRatio, &report, &loaded, &[q1, q3], &grid).unwrap();
    assert!((hr[0].points[0].1 - 1.0).abs() > 1e-6);

    // emission writes the x column plus one column per profile
    let out = curves::emit_curves(CurveKind::Reliability, &rel, dir.path()).unwrap();
    let text = fs::read_to_string(out).unwrap();
    assert!(text.lines().next().unwrap().starts_with("t,"));
    assert_eq!(text.lines().count(), 61);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gtdl"))
}

#[test]
fn binary_fit_and_curves_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = write_simulated_csv(dir.path(), 200, 0.3, 5);
    let out_dir = dir.path().join("out");
    let status = bin()
        .args([
            "fit",
            "--input",
            csv_path.to_str().unwrap(),
            "--output-dir",
            out_dir.to_str().unwrap(),
            "--beta-cov",
            "x",
            "--model",
            "gtdl",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_dir.join("fit_report.json").exists());
    assert!(out_dir.join("fit_report.csv").exists());

    let status = bin()
        .args([
            "curves",
            "--fit-report",
            out_dir.join("fit_report.json").to_str().unwrap(),
            "--input",
            csv_path.to_str().unwrap(),
            "--output-dir",
            out_dir.to_str().unwrap(),
            "--kind",
            "hazard_ratio",
            "--quartiles",
            "x",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_dir.join("curves_hazard_ratio.csv").exists());
}

#[test]
fn binary_simulate_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        let status = bin()
            .args([
                "simulate",
                "--model",
                "gtdl",
                "--sample-sizes",
                "60",
                "--censoring",
                "0.3",
                "--replicates",
                "25",
                "--seed",
                "11",
                "--output-dir",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = fs::read_to_string(out1.join("sim_report.json")).unwrap();
    let b = fs::read_to_string(out2.join("sim_report.json")).unwrap();
    assert_eq!(
        a, b,
        "identical config and seed must give identical reports"
    );
    let csv_text = fs::read_to_string(out1.join("sim_report.csv")).unwrap();
    assert!(csv_text
        .lines()
        .next()
        .unwrap()
        .starts_with("model,n,parameter,truth,bias_30"));
}

#[test]
fn binary_select_runs() {
    let dir = tempfile::tempdir().unwrap();
    // strong signal plus a pure-noise covariate
    let truth = ParamVector::gtdl(vec![0.5], vec![-1.0, 1.2]);
    let mut rng = ChaCha12Rng::seed_from_u64(6);
    let sim = simulate_dataset(&truth, &CovariateLaw::default(), 300, 0.3, &mut rng).unwrap();
    let d = sim.dataset;
    let csv_path = dir.path().join("data.csv");
    let mut f = fs::File::create(&csv_path).unwrap();
    writeln!(f, "time,status,x,junk").unwrap();
    use rand::Rng;
    for i in 0..d.n() {
        writeln!(
            f,
            "{},{},{},{}",
            d.times()[i],
            u8::from(d.status()[i]),
            d.covariates_beta().row(i)[1],
            rng.random::<f64>()
        )
        .unwrap();
    }
    let out_dir = dir.path().join("out");
    let output = bin()
        .args([
            "select",
            "--input",
            csv_path.to_str().unwrap(),
            "--output-dir",
            out_dir.to_str().unwrap(),
            "--beta-cov",
            "x",
            "--beta-cov",
            "junk",
            "--level",
            "0.10",
        ])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let trace = fs::read_to_string(out_dir.join("selection_trace.json")).unwrap();
    assert!(trace.contains("\"x\""));
    assert!(out_dir.join("selection_steps.csv").exists());
    assert!(out_dir.join("fit_report.json").exists());
    // the final report carries the trace
    let report = load_fit_report(&out_dir.join("fit_report.json")).unwrap();
    assert!(report.selection.is_some());
    assert!(report
        .data_config
        .beta_covariates
        .contains(&"x".to_string()));
}

#[test]
fn binary_diagnose_emits_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = write_simulated_csv(dir.path(), 60, 0.3, 7);
    let out_dir = dir.path().join("out");
    let status = bin()
        .args([
            "diagnose",
            "--input",
            csv_path.to_str().unwrap(),
            "--output-dir",
            out_dir.to_str().unwrap(),
            "--beta-cov",
            "x",
            "--cumhaz-group",
            "x",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    for file in [
        "residuals.csv",
        "qq.csv",
        "gd_ld.csv",
        "rc_table.csv",
        "cumhaz.csv",
    ] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
    let cumhaz = fs::read_to_string(out_dir.join("cumhaz.csv")).unwrap();
    assert!(cumhaz.contains("x<=median"));
    assert!(cumhaz.contains("x>median"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = write_simulated_csv(dir.path(), 150, 0.3, 8);
    let cfg_path = dir.path().join("run.toml");
    fs::write(
        &cfg_path,
        "[data]\nbeta_covariates = [\"x\"]\n[model]\nkind = \"gtdl\"\nci_level = 0.95\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let status = bin()
        .args([
            "fit",
            "--input",
            csv_path.to_str().unwrap(),
            "--config",
            cfg_path.to_str().unwrap(),
            "--output-dir",
            out_dir.to_str().unwrap(),
            "--ci-level",
            "0.90",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let report = load_fit_report(&out_dir.join("fit_report.json")).unwrap();
    assert_eq!(report.ci_level, 0.90, "flag must override the config file");
    assert_eq!(report.data_config.beta_covariates, vec!["x"]);
}
