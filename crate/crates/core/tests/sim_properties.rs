use twophase_core::sim::{generate, run_study, true_psi, DgpName, DgpSpec, SpreadReading, StudyConfig};

fn small_study() -> StudyConfig {
    StudyConfig::from_json(
        r#"{
            "dgp": {"name": "dgp1"},
            "sample_sizes": [120, 200],
            "deltas": [0.0, 0.5],
            "reps": 6,
            "seed": 314,
            "variants": ["plugin", "onestep", "tmle", "onestep_reweighted", "tmle_naive"],
            "truth_draws": 100000
        }"#,
    )
    .unwrap()
}

#[test]
fn worker_count_does_not_change_output() {
    let cfg = small_study();
    let one = run_study(&cfg, Some(1), None).unwrap();
    let four = run_study(&cfg, Some(4), None).unwrap();
    assert_eq!(one.metrics_csv(), four.metrics_csv());
    assert_eq!(one.raw_csv(), four.raw_csv());
    assert_eq!(one.metrics.len(), 2 * 2 * 5);
    assert!(one.metrics.iter().all(|m| (0.0..=1.0).contains(&m.coverage_95) && m.n_mse >= 0.0));
    assert!(one.raw_csv().starts_with("variant,n,delta,rep,psi_hat,se,ci_lo,ci_hi,truth,covered\n"));
}

#[test]
fn truth_at_zero_shift_is_outcome_prevalence() {
    let n = 1_000_000;
    let (_, full) = generate(&DgpSpec::new(DgpName::Dgp1, n, 77)).unwrap();
    let p = full.y.iter().sum::<f64>() / n as f64;
    let t = true_psi(DgpName::Dgp1, 0.0, n, 78, SpreadReading::StandardDeviation).unwrap();
    let se = (p * (1.0 - p) / n as f64 + t.mc_se * t.mc_se).sqrt();
    assert!((p - t.psi).abs() < 3.0 * se, "{p} vs {} (se {se})", t.psi);
    assert!((p - 0.415).abs() < 0.002, "prevalence {p}");
}

#[test]
fn null_process_prevalence() {
    let n = 1_000_000;
    let (_, full) = generate(&DgpSpec::new(DgpName::Dgp2Null, n, 5)).unwrap();
    let p = full.y.iter().sum::<f64>() / n as f64;
    assert!((p - 0.053).abs() < 0.002, "prevalence {p}");
}

#[test]
fn truths_are_reproducible_from_seed() {
    let a = true_psi(DgpName::Dgp1, 0.5, 200_000, 3, SpreadReading::StandardDeviation).unwrap();
    let b = true_psi(DgpName::Dgp1, 0.5, 200_000, 3, SpreadReading::StandardDeviation).unwrap();
    assert_eq!(a, b);
    assert!(a.mc_se > 0.0 && a.mc_se < 1e-3);
}
