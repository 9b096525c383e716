mod common;

use common::{dgp1, fully_sampled, mean, run, shift};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twophase_core::estimators::{onestep, tilt_outcome, tilt_sampling, tmle, ShiftFit, TiltDiagnostics};
use twophase_core::nuisance::fit_nuisance;
use twophase_core::{EstimationConfig, EstimatorOptions, Variant, Weighting};

#[test]
fn tmle_solves_score_equations_on_random_instances() {
    let cfg = EstimationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..50 {
        let n = rng.random_range(150..400);
        let delta = rng.random_range(-0.6..0.6);
        let (data, _) = dgp1(n, 9000 + k);
        let r = run(&data, delta, &[Variant::Tmle], &cfg).remove(0);
        let tilt = r.diagnostics.tilt.as_ref().unwrap();
        assert!(tilt.score_c < 1e-6 && tilt.score_y < 1e-6, "instance {k}: {tilt:?}");
        assert!(mean(&r.eif_values).abs() < 1e-5, "instance {k}: mean eif {}", mean(&r.eif_values));
        assert!(r.ci_lo <= r.psi && r.psi <= r.ci_hi && r.se >= 0.0);
        assert!((0.0..=1.0).contains(&r.p_value));
    }
}

#[test]
fn full_sampling_collapses_variants() {
    let (_, full) = dgp1(500, 31);
    let data = fully_sampled(&full);
    let res = run(&data, 0.5, &Variant::ALL, &EstimationConfig::default());
    let psi = |v: Variant| res.iter().find(|r| r.variant == v).unwrap().psi;
    for (a, b, c) in [
        (Variant::Onestep, Variant::OnestepReweighted, Variant::OnestepNaive),
        (Variant::Tmle, Variant::TmleReweighted, Variant::TmleNaive),
    ] {
        assert!((psi(a) - psi(b)).abs() < 1e-10, "{a}: {} vs {b}: {}", psi(a), psi(b));
        assert!((psi(a) - psi(c)).abs() < 1e-10, "{a}: {} vs {c}: {}", psi(a), psi(c));
    }
    let plugin = res.iter().find(|r| r.variant == Variant::Plugin).unwrap();
    let os = res.iter().find(|r| r.variant == Variant::Onestep).unwrap();
    assert!((os.psi - plugin.psi - mean(&os.eif_values)).abs() < 1e-12);
}

#[test]
fn onestep_correction_is_mean_influence_value() {
    let (data, _) = dgp1(600, 4);
    let res = run(&data, 0.3, &[Variant::Plugin, Variant::Onestep], &EstimationConfig::default());
    assert!((res[1].psi - res[0].psi - mean(&res[1].eif_values)).abs() < 1e-14);
    assert_eq!(res[1].diagnostics.plugin, res[0].psi);
}

#[test]
fn zero_projection_matches_reweighted() {
    let (data, _) = dgp1(400, 17);
    let cfg = EstimationConfig::default();
    let set = fit_nuisance(&data, &shift(0.5), &cfg.nuisance).unwrap();
    let mut fit = ShiftFit::new(&data, set, &cfg.nuisance, false).unwrap();
    let opts = EstimatorOptions::default();
    let reweighted = onestep(&data, &fit, Weighting::Reweighted, &opts).unwrap();
    fit.projection = Some(vec![0.0; data.n()]);
    let augmented = onestep(&data, &fit, Weighting::Augmented, &opts).unwrap();
    assert!((augmented.psi - reweighted.psi).abs() < 1e-14);
    assert_eq!(augmented.eif_values, reweighted.eif_values);
    let t = tmle(&data, &fit, Weighting::Augmented, cfg.nuisance.zeta, &opts).unwrap();
    let tilt = t.diagnostics.tilt.unwrap();
    assert_eq!((tilt.xi, tilt.sampling_iterations), (0.0, 0));
}

#[test]
fn sampling_tilt_solves_its_score() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 300;
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.95)).collect();
        let sampled: Vec<bool> = g.iter().map(|p| rng.random::<f64>() < (p + 0.05).min(1.0)).collect();
        let proj: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut diag = TiltDiagnostics::default();
        let gs = tilt_sampling(&sampled, &g, &proj, 0.01, &mut diag).unwrap();
        let score: f64 = (0..n).map(|i| proj[i] / gs[i] * (sampled[i] as u8 as f64 - gs[i])).sum::<f64>() / n as f64;
        assert!(score.abs() < 1e-6, "seed {seed}: {score} {diag:?}");
        assert!(gs.iter().all(|p| (0.01..=1.0).contains(p)));
    }
}

#[test]
fn intercept_tilt_calibrates_weighted_outcomes() {
    let (data, _) = dgp1(500, 12);
    let cfg = EstimationConfig::default();
    let mut set = fit_nuisance(&data, &shift(0.5), &cfg.nuisance).unwrap();
    let rows = data.phase_two_indices();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for &i in &rows {
        set.h_obs[i] = 1.0;
        set.h_shift[i] = 1.0;
        set.qbar_obs[i] = rng.random_range(0.05..0.95);
    }
    let mut diag = TiltDiagnostics::default();
    let t = tilt_outcome(&data, &set, &set.g.clone(), &mut diag).unwrap();
    let s: f64 = rows.iter().map(|&i| (data.outcome(i) - t.qbar_obs[i]) / set.g[i]).sum();
    assert!(s.abs() / (data.n() as f64) < 1e-6, "{s}");
    assert!(diag.epsilon != 0.0);
}

#[test]
fn outcome_tilt_is_inert_at_zero_score() {
    let (data, _) = dgp1(300, 8);
    let cfg = EstimationConfig::default();
    let mut set = fit_nuisance(&data, &shift(0.5), &cfg.nuisance).unwrap();
    for i in data.phase_two_indices() {
        set.qbar_obs[i] = data.outcome(i).clamp(1e-6, 1.0 - 1e-6);
    }
    let before = set.qbar_shift.clone();
    let mut diag = TiltDiagnostics::default();
    let g = set.g.clone();
    let t = tilt_outcome(&data, &set, &g, &mut diag).unwrap();
    assert_eq!((diag.epsilon, diag.outcome_iterations), (0.0, 0));
    assert_eq!(t.qbar_shift, before);
}

#[test]
fn onestep_recovers_shift_mean_at_moderate_n() {
    let (data, _) = dgp1(2500, 2500);
    let r = run(&data, 0.5, &[Variant::Onestep], &EstimationConfig::default()).remove(0);
    assert!((r.psi - 0.333).abs() < 0.02, "{}", r.psi);
}

#[test]
fn tmle_recovers_observed_mean_at_moderate_n() {
    let (data, _) = dgp1(2500, 2500);
    let r = run(&data, 0.0, &[Variant::Tmle], &EstimationConfig::default()).remove(0);
    assert!((r.psi - 0.415).abs() < 0.02, "{}", r.psi);
}

#[test]
fn onestep_and_tmle_agree_within_two_se() {
    for seed in 0..5u64 {
        let (data, _) = dgp1(900, 70 + seed);
        let r = run(&data, 0.5, &[Variant::Onestep, Variant::Tmle], &EstimationConfig::default());
        assert!((r[0].psi - r[1].psi).abs() <= 2.0 * r[0].se.max(r[1].se), "seed {seed}: {} vs {}", r[0].psi, r[1].psi);
    }
}
