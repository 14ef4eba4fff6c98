use std::fs;
use std::path::Path;

use shuttle_experiment::config::validate_config;
use shuttle_experiment::run::{run_experiment, RunOutcome};

const SMALL: &str = "
kind = figure2
n_traj = 8
output_interval = 0.5 ns
checkpoint_interval = 50 ns
convergence_trajectories = 1
";

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in [1, 3] {
        let cfg = validate_config(&format!("{SMALL}workers = {workers}\n")).unwrap();
        let out = dir.path().join(format!("w{workers}"));
        let summary = run_experiment(&cfg, &out).unwrap();
        assert!(summary.files.contains(&"fig2_parametric.csv".to_string()));
        let csvs: Vec<_> = summary
            .files
            .iter()
            .filter(|f| f.ends_with(".csv"))
            .map(|f| (f.clone(), fs::read(out.join(f)).unwrap()))
            .collect();
        outputs.push(csvs);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn tables_round_trip_and_manifest_lists_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = validate_config(SMALL).unwrap();
    let summary = run_experiment(&cfg, dir.path()).unwrap();
    let RunOutcome::Autonomous(run, conv) = &summary.outcome else {
        panic!("unexpected outcome");
    };
    let (header, rows) = read_csv(&dir.path().join("ensemble_series.csv"));
    assert_eq!(header[0], "t_ns");
    assert_eq!(header[1], "mean_P1_prob");
    assert_eq!(rows.len(), run.series.times.len());
    let p1 = run.series.mean(shuttle_core::ensemble::Observable::Occupation);
    for (row, want) in rows.iter().zip(&p1) {
        assert_eq!(row[1].parse::<f64>().unwrap().to_bits(), want.to_bits());
    }
    let (header, rows) = read_csv(&dir.path().join("fig2_parametric.csv"));
    assert_eq!(header, ["t_ns", "eps_eV", "P1_prob", "source"]);
    assert_eq!(rows.iter().filter(|r| r[3] == "ensemble").count(), run.series.times.len());
    assert_eq!(rows.iter().filter(|r| r[3] == "reduced").count(), run.trace.len());

    let manifest: toml::Table = fs::read_to_string(dir.path().join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(manifest["kind"].as_str(), Some("figure2"));
    assert_eq!(manifest["master_seed"].as_integer(), Some(20_200_715));
    let files: Vec<_> = manifest["files"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for f in ["ensemble_series.csv", "reduced_trace.csv", "thermo_report.csv", "limit_cycle.csv"] {
        assert!(files.contains(&f), "{f} missing from manifest");
    }
    let conv = conv.expect("convergence requested");
    assert!(conv.ratio() > 1.8);
    assert!(manifest["diagnostics"]["first_law_convergence_ratio"].as_float().unwrap() > 1.8);
}

#[test]
fn zero_trajectories_are_rejected_before_running() {
    let err = validate_config("n_traj = 0\n").unwrap_err();
    assert!(err.to_string().contains("n_traj"), "{err}");
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = validate_config(
        "kind = figure3-sweep
n_traj = 4
output_interval = 1 ns
checkpoint_interval = 125 ns
sweep_mass_factors = 1
sweep_gamma_factors = 0.1, 10
",
    )
    .unwrap();
    let summary = run_experiment(&cfg, dir.path()).unwrap();
    let RunOutcome::Sweep(points) = &summary.outcome else {
        panic!("unexpected outcome");
    };
    assert_eq!(points.len(), 2);
    assert_ne!(points[0].params.master_seed, points[1].params.master_seed);
    assert!(points[1].heat_osc.mean.abs() > points[0].heat_osc.mean.abs());
    let (header, rows) = read_csv(&dir.path().join("fig3_sweep.csv"));
    assert_eq!(header[0], "m_kg");
    assert_eq!(rows.len(), 2);
    assert!(dir.path().join("m0_g1/thermo_report.csv").exists());
}

#[test]
fn stroke_audit_and_feasibility_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = validate_config("kind = stroke-audit\n").unwrap();
    run_experiment(&cfg, dir.path()).unwrap();
    let (_, rows) = read_csv(&dir.path().join("schedule.csv"));
    let starts: Vec<_> = rows.iter().map(|r| r[2].as_str()).collect();
    for f in ["5/24", "7/24", "17/24", "19/24"] {
        assert!(starts.contains(&f), "{f} not a stroke boundary: {starts:?}");
    }
    let (_, strokes) = read_csv(&dir.path().join("strokes.csv"));
    assert_eq!(strokes.len(), 4);

    let cfg = validate_config("kind = feasibility\ndiameter = 5 nm\n").unwrap();
    run_experiment(&cfg, dir.path()).unwrap();
    let (_, rows) = read_csv(&dir.path().join("feasibility.csv"));
    assert_eq!(rows[0][4], "13");
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            validate_config(&fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}

#[test]
fn cli_reports_config_problems() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "mass = 0 kg\nomega = 1 furlong\n").unwrap();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_shuttle"))
        .arg("validate")
        .arg(&bad)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("mass"), "{err}");

    let out = std::process::Command::new(env!("CARGO_BIN_EXE_shuttle"))
        .args(["feasibility", "--diameter", "5", "--voltage", "25"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("rounds to 13"));
}
