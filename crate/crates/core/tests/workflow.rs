use std::fs;
use std::path::Path;

use optdesign::generators::grid;
use optdesign::models::JacobianTable;
use optdesign::workflow::{
    load_design, run_multistart_in, run_pipeline_in, verify_design, RunConfig, RunReport,
};
use optdesign::{Design, ModelSpec};

fn config(text: &str) -> RunConfig {
    RunConfig::from_json(text).unwrap()
}

fn read_report(dir: &Path) -> RunReport {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn emitted_designs_reload_and_phase_two_descends() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        r#"{
            "model": {"kind": "chebyshev", "n": 2, "degree": 2},
            "generator": {"kind": "sobol", "count": 30},
            "phase1": {"solver": "wmaxvol", "n_iter": 300, "record_trace": true},
            "verification": {"probe": {"kind": "grid", "counts": [21, 21]}}
        }"#,
    );
    let out = run_pipeline_in(&cfg, Some(dir.path())).unwrap().report;
    for f in ["phase1_design.json", "phase2_design.json"] {
        let d = load_design(&dir.path().join(f)).unwrap();
        assert!(!d.is_empty());
    }
    assert!(out.final_phi <= out.phase1.phi + 1e-9, "{} > {}", out.final_phi, out.phase1.phi);
    assert_eq!(read_report(dir.path()), out);
    let trace = fs::read_to_string(dir.path().join("phase1_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 302);
    let sens = fs::read_to_string(dir.path().join("sensitivity.csv")).unwrap();
    assert!(sens.starts_with("x1,x2,d\n"));
    assert_eq!(sens.lines().count(), 1 + 441);
}

#[test]
fn tabulated_model_runs_from_an_exported_table() {
    let dir = tempfile::tempdir().unwrap();
    let model = ModelSpec::exponential(&[1.0, 3.0]).unwrap();
    let pool = model.attach(grid(model.domain(), &[25]).unwrap()).unwrap();
    let mut feasible = vec![true; 25];
    feasible[24] = false;
    let pool = pool.with_feasibility(feasible).unwrap();
    let table = JacobianTable::from_candidates(&pool, model.parameters()).unwrap();
    fs::write(dir.path().join("table.csv"), table.to_csv()).unwrap();
    let back = JacobianTable::from_csv(&fs::read_to_string(dir.path().join("table.csv")).unwrap()).unwrap();
    assert_eq!(back.blocks(), table.blocks());

    let cfg_path = dir.path().join("run.json");
    fs::write(
        &cfg_path,
        r#"{
            "model": {"kind": "tabulated", "path": "table.csv"},
            "generator": {"kind": "table"},
            "feasibility_filter": true,
            "output_dir": "out"
        }"#,
    )
    .unwrap();
    let cfg = RunConfig::load(&cfg_path).unwrap();
    let report = run_pipeline_in(&cfg, Some(&cfg.output_dir)).unwrap().report;
    assert_eq!(report.pool.size, 24);
    assert!(report.phase2.is_none());
    assert!(report.phase2_skipped.is_some());
    // x = 1 was filtered out, so the design moves to the largest remaining point.
    let xs: Vec<f64> = report.phase1.points.iter().map(|p| p.coords()[0]).collect();
    assert!(xs.iter().all(|x| *x < 1.0));
    assert!(report.phase1_certificate.is_optimal);
    assert!(dir.path().join("out/report.json").exists());
}

#[test]
fn verify_only_writes_the_certificate_without_solving() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        r#"{
            "model": {"kind": "exponential"},
            "generator": {"kind": "grid", "counts": [11]},
            "verification": {"probe": {"kind": "grid", "counts": [301]}, "tol": 1e-6}
        }"#,
    );
    let star = Design::new(vec![(2.0 / 3.0).into(), 1.0.into()], vec![0.5, 0.5]).unwrap();
    let summary = verify_design(&cfg, &star, Some(dir.path())).unwrap();
    assert!(summary.is_optimal);
    assert_eq!(summary.probe_size, 301);
    assert!(dir.path().join("sensitivity.csv").exists());
    assert!(dir.path().join("certificate.json").exists());
    assert!(!dir.path().join("phase1_design.json").exists());

    let poor = Design::new(vec![0.0.into(), 1.0.into()], vec![0.5, 0.5]).unwrap();
    assert!(!verify_design(&cfg, &poor, None).unwrap().is_optimal);
}

#[test]
fn multistart_strategies_are_deterministic_and_pick_the_minimum() {
    let cases = [
        r#"{"model": {"kind": "chebyshev", "n": 2, "degree": 1},
            "generator": {"kind": "factorial", "count": 6},
            "multistart": {"strategy": "factorial", "runs": 4}}"#,
        r#"{"model": {"kind": "chebyshev", "n": 2, "degree": 2},
            "generator": {"kind": "lhs", "count": 30},
            "phase1": {"solver": "wmaxvol", "n_iter": 200},
            "multistart": {"strategy": "seeds", "runs": 4}}"#,
        r#"{"model": {"kind": "exponential"},
            "generator": {"kind": "grid", "counts": [11]},
            "multistart": {"strategy": "pools", "pools": [
                {"generator": {"kind": "grid", "counts": [11]}},
                {"generator": {"kind": "sobol", "count": 16}},
                {"generator": {"kind": "grid", "counts": [11]}, "feasibility_filter": true}
            ]}}"#,
    ];
    for text in cases {
        let cfg = config(text);
        let a_dir = tempfile::tempdir().unwrap();
        let b_dir = tempfile::tempdir().unwrap();
        let a = run_multistart_in(&cfg, Some(a_dir.path())).unwrap();
        let b = run_multistart_in(&cfg, Some(b_dir.path())).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            fs::read(a_dir.path().join("multistart.json")).unwrap(),
            fs::read(b_dir.path().join("multistart.json")).unwrap()
        );
        let min = a.starts.iter().filter_map(|s| s.phi).fold(f64::INFINITY, f64::min);
        assert_eq!(a.best_phi, min);
        assert!(a.starts.iter().all(|s| s.error.is_none()), "{:?}", a.starts);
    }
}
