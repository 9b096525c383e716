mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use twophase_core::msm::{fit_msm, fit_msm_from_results};
use twophase_core::{EstimationConfig, MsmWeights, Variant};

/// Closed-form weighted least squares for a line.
fn wls_line(x: &[f64], y: &[f64], h: &[f64]) -> (f64, f64) {
    let sw: f64 = h.iter().sum();
    let mx = x.iter().zip(h).map(|(a, w)| a * w).sum::<f64>() / sw;
    let my = y.iter().zip(h).map(|(a, w)| a * w).sum::<f64>() / sw;
    let sxy: f64 = (0..x.len()).map(|k| h[k] * (x[k] - mx) * (y[k] - my)).sum();
    let sxx: f64 = (0..x.len()).map(|k| h[k] * (x[k] - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

fn correlated_eif(n: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let common: f64 = StandardNormal.sample(&mut rng);
            (0..k)
                .map(|j| {
                    let own: f64 = StandardNormal.sample(&mut rng);
                    (1.0 + 0.3 * j as f64) * common + 0.5 * own
                })
                .collect()
        })
        .collect()
}

#[test]
fn covariance_matches_bootstrap() {
    let (n, draws) = (1000, 500);
    let deltas = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let h = [1.0, 2.0, 1.0, 0.5, 1.0];
    let eif = correlated_eif(n, deltas.len(), 42);
    let base = [0.5, 0.45, 0.41, 0.36, 0.33];
    let fit = fit_msm(&deltas, &base, &eif, &h, 0.05).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut betas = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut shift = vec![0.0; deltas.len()];
        for _ in 0..n {
            let row = &eif[rng.random_range(0..n)];
            for (s, v) in shift.iter_mut().zip(row) {
                *s += v / n as f64;
            }
        }
        let psi: Vec<f64> = base.iter().zip(&shift).map(|(b, s)| b + s).collect();
        betas.push(wls_line(&deltas, &psi, &h));
    }
    let m0 = betas.iter().map(|b| b.0).sum::<f64>() / draws as f64;
    let m1 = betas.iter().map(|b| b.1).sum::<f64>() / draws as f64;
    let v0 = betas.iter().map(|b| (b.0 - m0).powi(2)).sum::<f64>() / draws as f64;
    let v1 = betas.iter().map(|b| (b.1 - m1).powi(2)).sum::<f64>() / draws as f64;
    let c01 = betas.iter().map(|b| (b.0 - m0) * (b.1 - m1)).sum::<f64>() / draws as f64;
    for (boot, est) in [(v0, fit.covariance[0][0]), (v1, fit.covariance[1][1]), (c01, fit.covariance[0][1])] {
        assert!((boot - est).abs() <= 0.2 * est.abs(), "bootstrap {boot} vs delta method {est}");
    }
}

#[test]
fn covariance_is_symmetric_psd() {
    for seed in 0..10 {
        let fit = fit_msm(&[-1.0, 0.0, 0.7, 2.0], &[0.3, 0.2, 0.25, 0.1], &correlated_eif(50, 4, seed), &[1.0; 4], 0.05).unwrap();
        let c = &fit.covariance;
        assert_eq!(c[0][1], c[1][0]);
        let tr = c[0][0] + c[1][1];
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        let min_eig = 0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt());
        assert!(min_eig >= -1e-10);
    }
}

#[test]
fn grid_of_estimates_feeds_msm() {
    let (data, _) = common::dgp1(600, 77);
    let cfg = EstimationConfig::default();
    let ctx = twophase_core::EstimationContext::new(&data, &cfg, &[Variant::Tmle]).unwrap();
    let results: Vec<_> =
        [-0.5, 0.0, 0.5].iter().map(|&d| ctx.estimate(&common::shift(d), &[Variant::Tmle]).unwrap().remove(0)).collect();
    let fit = fit_msm_from_results(&results, MsmWeights::Uniform, 0.05).unwrap();
    let psis: Vec<f64> = results.iter().map(|r| r.psi).collect();
    let (b0, b1) = wls_line(&[-0.5, 0.0, 0.5], &psis, &[1.0; 3]);
    assert!((fit.beta[0] - b0).abs() < 1e-12 && (fit.beta[1] - b1).abs() < 1e-12);
    assert!(fit.beta[1] < 0.0 && fit.coefficients[1].se > 0.0);
    let mut mixed = results.clone();
    mixed[1].variant = Variant::Onestep;
    assert!(fit_msm_from_results(&mixed, MsmWeights::Uniform, 0.05).is_err());
    assert!(fit_msm_from_results(&results, MsmWeights::InverseVariance, 0.05).is_ok());
}

proptest! {
    #[test]
    fn weight_scaling_is_invariant(
        psis in prop::collection::vec(0.0..1.0f64, 4),
        h in prop::collection::vec(0.1..5.0f64, 4),
        scale in 0.01..100.0f64,
        seed in 0u64..100,
    ) {
        let deltas = [-1.0, -0.3, 0.4, 1.2];
        let eif = correlated_eif(30, 4, seed);
        let a = fit_msm(&deltas, &psis, &eif, &h, 0.05).unwrap();
        let hs: Vec<f64> = h.iter().map(|v| v * scale).collect();
        let b = fit_msm(&deltas, &psis, &eif, &hs, 0.05).unwrap();
        for j in 0..2 {
            prop_assert!((a.beta[j] - b.beta[j]).abs() < 1e-10);
            for k in 0..2 {
                prop_assert!((a.covariance[j][k] - b.covariance[j][k]).abs() <= 1e-10 * a.covariance[j][k].abs().max(1e-12));
            }
        }
        let (b0, b1) = wls_line(&deltas, &psis, &h);
        prop_assert!((a.beta[0] - b0).abs() < 1e-10 && (a.beta[1] - b1).abs() < 1e-10);
    }

    #[test]
    fn two_shifts_are_interpolated(
        d0 in -2.0..0.0f64, gap in 0.05..2.0f64,
        p0 in 0.0..1.0f64, p1 in 0.0..1.0f64,
        h0 in 0.1..3.0f64, h1 in 0.1..3.0f64,
    ) {
        let deltas = [d0, d0 + gap];
        let fit = fit_msm(&deltas, &[p0, p1], &correlated_eif(20, 2, 1), &[h0, h1], 0.05).unwrap();
        for (d, p) in deltas.iter().zip([p0, p1]) {
            prop_assert!((fit.beta[0] + fit.beta[1] * d - p).abs() < 1e-10);
        }
    }
}
