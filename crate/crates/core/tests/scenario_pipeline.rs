use std::process::Command;

use cnls::scenario::{
    initial_state, run_phase_sweep, run_refinement_study, run_scenario, ScenarioConfig,
    ScenarioError,
};

fn short(name: &str, t_final: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset(name).unwrap();
    cfg.t_final = t_final;
    cfg
}

#[test]
fn zero_solitons_is_rejected() {
    let mut cfg = short("circular_headon", 0.1);
    cfg.solitons.clear();
    let err = run_scenario(&cfg).unwrap_err();
    assert!(matches!(err, ScenarioError::ConfigInvalid { .. }), "{err}");
}

#[test]
fn refinement_needs_single_soliton() {
    let cfg = short("circular_headon", 0.1);
    let err = run_refinement_study(&cfg, 3).unwrap_err();
    assert!(matches!(err, ScenarioError::OracleUnavailable(_)), "{err}");
}

#[test]
fn empty_sweep_is_empty() {
    assert!(run_phase_sweep(&short("circular_headon", 0.1), &[]).is_empty());
}

#[test]
fn sweep_rows_follow_input_order() {
    let cfg = short("elliptic_headon", 0.05);
    let phases = [180.0, 0.0, 90.0];
    let rows = run_phase_sweep(&cfg, &phases);
    let got: Vec<f64> = rows.iter().map(|r| r.phase_difference_deg).collect();
    assert_eq!(got, phases);
    for row in &rows {
        let e = row.outcome.as_ref().unwrap();
        assert!(e.max_drift.mass < 1e-12);
    }
}

#[test]
fn runs_are_bit_identical() {
    let cfg = short("elliptic_headon", 0.2);
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(a.final_state, b.final_state);
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn superposed_mass_is_additive() {
    let cfg = short("circular_headon", 0.1);
    let two = initial_state(&cfg).unwrap();
    let m = |s: &cnls::pde::FieldState| cnls::diagnostics::mass(s, &cfg.model, &cfg.grid);
    let mut single = cfg.clone();
    single.solitons.truncate(1);
    let one = initial_state(&single).unwrap();
    assert!((m(&two).total - 2.0 * m(&one).total).abs() < 1e-9);
}

#[test]
fn output_files_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short("breathing_soliton", 0.5);
    cfg.output.dir = Some(dir.path().to_path_buf());
    cfg.output.snapshot_times = vec![0.0, 0.5];
    run_scenario(&cfg).unwrap();
    for f in ["series.csv", "summary.txt", "manifest.txt"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let snaps = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("snapshot_"))
        .count();
    assert_eq!(snaps, 2);
    let series = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert!(series.starts_with("t,M,"));
}

#[test]
fn cli_runs_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("free.toml");
    std::fs::write(&config, "preset = \"free_soliton\"\nt_final = 0.2\n").unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_cnls"))
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(out.join("manifest.txt").is_file());
}

#[test]
fn cli_reports_unknown_preset() {
    let status = Command::new(env!("CARGO_BIN_EXE_cnls"))
        .args(["run", "--preset", "nope"])
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(String::from_utf8_lossy(&status.stderr).contains("error"));
}
