use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use tempfile::TempDir;
use twophase_core::sim::{generate, DgpName, DgpSpec};
use twophase_core::{ConditionalDensity, DensityModel, EstimateResult, ObservedDataset};

fn twophase(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twophase")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn dataset(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let (data, _) = generate(&DgpSpec::new(DgpName::Dgp1, n, seed)).unwrap();
    let path = dir.join("data.csv");
    data.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn estimate_writes_results_msm_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(tmp.path(), 400, 1);
    let out = tmp.path().join("run");
    let o = twophase(&["estimate", "--data", s(&data), "--delta", "-0.5,0,0.5", "--estimator", "tmle", "--msm", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let results: Vec<EstimateResult> = serde_json::from_str(&std::fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(results.len(), 3);
    assert!(results.iter().all(|r| r.ci_lo <= r.psi && r.psi <= r.ci_hi));
    assert!(results[0].psi > results[2].psi);
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let msm: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("msm.json")).unwrap()).unwrap();
    assert!(msm["beta"][1].as_f64().unwrap() < 0.0);
    assert_eq!(std::fs::read_to_string(out.join("msm_grid.csv")).unwrap().lines().next(), Some("delta,psi,ci_lo,ci_hi"));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "estimate");
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 4);
}

#[test]
fn repeated_estimate_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(tmp.path(), 300, 2);
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = twophase(&[
            "estimate", "--data", s(&data), "--delta", "0.25,0.75", "--estimator", "onestep", "--g-method", "hal",
            "--seed", "9", "--msm", "--out", s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["results.json", "results.csv", "msm.json", "msm_grid.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let digest = |p: &Path| {
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("manifest.json")).unwrap()).unwrap();
        m["config_digest"].clone()
    };
    assert_ne!(digest(&a), serde_json::Value::Null);
    assert_ne!(digest(&a), digest(&b), "output paths differ, so the configs differ");
}

#[test]
fn usage_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(tmp.path(), 100, 3);
    let out = tmp.path().join("o");
    assert_eq!(code(&twophase(&["estimate", "--data", s(&data), "--delta", "", "--out", s(&out)])), 2);
    assert_eq!(code(&twophase(&["estimate", "--data", s(&data), "--out", s(&out)])), 2);
    assert_eq!(code(&twophase(&["estimate", "--data", s(&data), "--delta", "0.5", "--estimator", "bogus", "--out", s(&out)])), 2);
    assert_eq!(code(&twophase(&["estimate", "--data", s(&data), "--delta", "0.5", "--alpha", "1.5", "--out", s(&out)])), 2);
    assert_eq!(code(&twophase(&["estimate", "--data", s(&data), "--delta", "0.5", "--msm", "--out", s(&out)])), 2);
    assert_eq!(code(&twophase(&["frobnicate"])), 2);
}

#[test]
fn data_errors_exit_one_with_row() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.csv");
    std::fs::write(&path, "w1,a,y,c\n0.1,0.5,1,1\n0.2,,0,0\n0.3,0.1,1.7,1\n").unwrap();
    let o = twophase(&["estimate", "--data", s(&path), "--delta", "0.5", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"), "{}", String::from_utf8_lossy(&o.stderr));
    let o = twophase(&["estimate", "--data", s(&tmp.path().join("missing.csv")), "--delta", "0.5", "--out", "x"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn scaled_outcome_is_reported_on_original_scale() {
    let tmp = TempDir::new().unwrap();
    let (data, _) = generate(&DgpSpec::new(DgpName::Dgp1, 300, 4)).unwrap();
    let unit = tmp.path().join("unit.csv");
    data.write_csv(std::fs::File::create(&unit).unwrap()).unwrap();
    // y in {10, 30}: the same data after the map y -> 10 + 20 y.
    let text = std::fs::read_to_string(&unit).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let iy = header.split(',').position(|h| h == "y").unwrap();
    let mut scaled = format!("{header}\n");
    for l in lines {
        let mut f: Vec<String> = l.split(',').map(String::from).collect();
        f[iy] = (10.0 + 20.0 * f[iy].parse::<f64>().unwrap()).to_string();
        scaled += &(f.join(",") + "\n");
    }
    let wide = tmp.path().join("wide.csv");
    std::fs::write(&wide, scaled).unwrap();

    let read = |dir: &Path| -> Vec<EstimateResult> {
        serde_json::from_str(&std::fs::read_to_string(dir.join("results.json")).unwrap()).unwrap()
    };
    let (o1, o2) = (tmp.path().join("o1"), tmp.path().join("o2"));
    assert_eq!(code(&twophase(&["estimate", "--data", s(&unit), "--delta", "0.5", "--out", s(&o1)])), 0);
    assert_eq!(code(&twophase(&["estimate", "--data", s(&wide), "--delta", "0.5", "--out", s(&o2)])), 1);
    let o = twophase(&["estimate", "--data", s(&wide), "--delta", "0.5", "--scale-outcome", "--out", s(&o2)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (a, b) = (read(&o1).remove(0), read(&o2).remove(0));
    assert!((b.psi - (10.0 + 20.0 * a.psi)).abs() < 1e-9);
    assert!((b.se - 20.0 * a.se).abs() < 1e-9);
    assert!((b.ci_lo - (10.0 + 20.0 * a.ci_lo)).abs() < 1e-9);
}

fn study_file(dir: &Path, dgp: &str) -> PathBuf {
    let p = dir.join("study.json");
    std::fs::write(
        &p,
        format!(
            r#"{{"dgp": {{"name": "{dgp}"}}, "sample_sizes": [120], "deltas": [0.0, 0.5], "reps": 5, "seed": 8,
                "variants": ["tmle", "onestep_reweighted"], "truth_draws": 100000}}"#
        ),
    )
    .unwrap();
    p
}

#[test]
fn simulate_is_worker_independent() {
    let tmp = TempDir::new().unwrap();
    let cfg = study_file(tmp.path(), "dgp1");
    let (a, b) = (tmp.path().join("w1"), tmp.path().join("w4"));
    for (dir, w) in [(&a, "1"), (&b, "4")] {
        let o = twophase(&["simulate", "--config", s(&cfg), "--out", s(dir), "--workers", w]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["metrics.csv", "raw.csv", "truths.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let raw = std::fs::read_to_string(a.join("raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 1 + 5 * 2 * 2);
    assert!(raw.starts_with("variant,n,delta,rep,psi_hat,se,ci_lo,ci_hi,truth,covered"));
}

#[test]
fn simulate_rejects_bad_configs() {
    let tmp = TempDir::new().unwrap();
    let cfg = study_file(tmp.path(), "dgp7");
    assert_eq!(code(&twophase(&["simulate", "--config", s(&cfg), "--out", s(&tmp.path().join("x"))])), 2);
    assert_eq!(code(&twophase(&["simulate", "--config", "no_such_config", "--out", "x"])), 2);
}

#[test]
fn bundled_small_study_runs_quickly() {
    let tmp = TempDir::new().unwrap();
    let start = Instant::now();
    let o = twophase(&["simulate", "--config", "sim1_small", "--out", s(tmp.path()), "--workers", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(start.elapsed().as_secs() < 600);
    let metrics = std::fs::read_to_string(tmp.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 3 * 6);
}

#[test]
fn density_fit_predict_round_trip() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(tmp.path(), 300, 5);
    let model_path = tmp.path().join("model.json");
    let o = twophase(&["density", "fit", "--data", s(&data), "--bins", "4,6", "--bin-rule", "equal_range", "--out", s(&model_path)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let probe = tmp.path().join("probe.csv");
    std::fs::write(&probe, "w1,w2,w3,a\n3.0,1,0,2.0\n2.5,0,1,-50\n3.2,1,1,4.1\n3.0,0,0,\n").unwrap();
    let pred = tmp.path().join("pred.csv");
    let o = twophase(&["density", "predict", "--model", s(&model_path), "--data", s(&probe), "--out", s(&pred)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let model: DensityModel = serde_json::from_str(&std::fs::read_to_string(&model_path).unwrap()).unwrap();
    let text = std::fs::read_to_string(&pred).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("a,w1,w2,w3,density"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r[4], model.density(r[0], &r[1..4]));
        assert!(r[4] >= 0.0);
    }
    assert_eq!(rows[1][4], 0.0);
}

#[test]
fn density_predict_needs_model_covariates() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(tmp.path(), 200, 6);
    let model_path = tmp.path().join("m.json");
    assert_eq!(code(&twophase(&["density", "fit", "--data", s(&data), "--method", "gaussian", "--out", s(&model_path)])), 0);
    let probe = tmp.path().join("probe.csv");
    std::fs::write(&probe, "w1,w2,a\n3.0,1,2.0\n").unwrap();
    let o = twophase(&["density", "predict", "--model", s(&model_path), "--data", s(&probe), "--out", s(&tmp.path().join("p.csv"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn phase_two_rows_drive_density_fits() {
    let tmp = TempDir::new().unwrap();
    let data = dataset(tmp.path(), 200, 7);
    let ds = ObservedDataset::read_csv(std::fs::File::open(&data).unwrap(), Default::default()).unwrap();
    let model_path = tmp.path().join("g.json");
    assert_eq!(code(&twophase(&["density", "fit", "--data", s(&data), "--method", "gaussian", "--out", s(&model_path)])), 0);
    let model: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model_path).unwrap()).unwrap();
    assert_eq!(model["kind"], "gaussian");
    assert!(ds.phase_two_count() < ds.n());
}
