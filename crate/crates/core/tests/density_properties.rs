use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twophase_core::density::{bin_index, fit_gaussian_density, fit_haldensify, normal_pdf, predict_density};
use twophase_core::{BinRule, ConditionalDensity, Design, HalConfig, HaldensifyConfig, MeanBasis};

fn small_config(bins: Vec<usize>, rule: BinRule, lambda: Option<f64>) -> HaldensifyConfig {
    HaldensifyConfig {
        n_bins_grid: bins,
        bin_rule: rule,
        hal: HalConfig {
            max_knots_per_dim: 8,
            n_lambda: 8,
            lambda_grid: lambda.map(|l| vec![l]),
            ..HalConfig::default()
        },
    }
}

fn sample(seed: u64, n: usize) -> (Vec<f64>, Design) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>()]).collect();
    let a = w.iter().map(|r| r[0] + rng.random::<f64>()).collect();
    (a, Design::from_rows(vec!["w".into()], &w).unwrap())
}

#[test]
fn masses_integrate_to_one() {
    let (a, w) = sample(4, 150);
    let m = fit_haldensify(&a, &w, &vec![1.0; 150], &small_config(vec![4, 6], BinRule::EqualMass, None)).unwrap();
    let widths = m.bin_widths();
    for k in 0..25 {
        let wv = [k as f64 / 24.0];
        let total: f64 = (0..m.n_bins_selected)
            .map(|t| predict_density(&m, 0.5 * (m.bin_edges[t] + m.bin_edges[t + 1]), &wv) * widths[t])
            .sum();
        assert!((total - 1.0).abs() < 1e-8, "{total}");
    }
}

#[test]
fn duplicate_and_halve_leaves_fit_unchanged() {
    let (a, w) = sample(8, 60);
    let mut a2 = a.clone();
    let mut rows: Vec<Vec<f64>> = (0..60).map(|i| w.row(i).to_vec()).collect();
    let mut wt = vec![1.0; 60];
    for i in 0..15 {
        a2.push(a[i]);
        rows.push(w.row(i).to_vec());
        wt[i] = 0.5;
    }
    wt.extend(vec![0.5; 15]);
    let w2 = Design::from_rows(vec!["w".into()], &rows).unwrap();
    let mut cfg = small_config(vec![5], BinRule::EqualRange, Some(0.002));
    // Knots at every distinct value, so duplication cannot move them.
    cfg.hal.max_knots_per_dim = 100;
    let m1 = fit_haldensify(&a, &w, &vec![1.0; 60], &cfg).unwrap();
    let m2 = fit_haldensify(&a2, &w2, &wt, &cfg).unwrap();
    assert_eq!(m1.bin_edges, m2.bin_edges);
    for k in 0..10 {
        let wv = [k as f64 / 9.0];
        for (p, q) in m1.bin_masses(&wv).iter().zip(m2.bin_masses(&wv)) {
            assert!((p - q).abs() < 1e-6, "{p} vs {q}");
        }
    }
}

#[test]
fn covariate_free_masses_match_weighted_histogram() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 400;
    let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(2)).collect();
    let wt: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
    let mut cfg = small_config(vec![6], BinRule::EqualRange, Some(1e-9));
    cfg.hal.tol = 1e-14;
    cfg.hal.max_sweeps = 1_000_000;
    let m = fit_haldensify(&a, &Design::empty(n), &wt, &cfg).unwrap();
    let mut hist = vec![0.0; 6];
    for i in 0..n {
        hist[bin_index(a[i], &m.bin_edges).unwrap() - 1] += wt[i];
    }
    let total: f64 = wt.iter().sum();
    for (mass, h) in m.bin_masses(&[]).iter().zip(&hist) {
        assert!((mass - h / total).abs() < 1e-3, "{mass} vs {}", h / total);
    }
}

// Single samples of 2000 regularly hold a bin 2.5 sd off its expected count,
// so the band is checked on the average of four independent fits.
#[test]
fn independent_uniform_exposure_has_flat_density() {
    let n = 2000;
    let cfg = HaldensifyConfig { n_bins_grid: vec![10], bin_rule: BinRule::EqualRange, ..HaldensifyConfig::default() };
    let probes: Vec<f64> = (1..10).map(|k| k as f64 / 10.0 + 0.05).collect();
    let wv = [0.1, 0.5, 0.9];
    let mut avg = vec![vec![0.0; probes.len()]; wv.len()];
    for seed in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>()]).collect();
        let w = Design::from_rows(vec!["w".into()], &rows).unwrap();
        let m = fit_haldensify(&a, &w, &vec![1.0; n], &cfg).unwrap();
        for (i, &x) in wv.iter().enumerate() {
            for (k, &p) in probes.iter().enumerate() {
                avg[i][k] += m.density(p, &[x]) / 4.0;
            }
        }
    }
    for (i, row) in avg.iter().enumerate() {
        for (k, d) in row.iter().enumerate() {
            assert!((d - 1.0).abs() < 0.15, "mean density {d} at a={} w={}", probes[k], wv[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gaussian_density_is_closed_form_normal(
        a in prop::collection::vec(-5.0..5.0f64, 8..30),
        seed in 0u64..1000,
        probe in -6.0..6.0f64,
    ) {
        let n = a.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wt: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let total: f64 = wt.iter().sum();
        let mean = a.iter().zip(&wt).map(|(x, v)| x * v).sum::<f64>() / total;
        let var = a.iter().zip(&wt).map(|(x, v)| v * (x - mean).powi(2)).sum::<f64>() / total;
        prop_assume!(var > 1e-6);
        let m = fit_gaussian_density(&a, &Design::empty(n), &wt, MeanBasis::InterceptOnly).unwrap();
        let z = (probe - mean) / var.sqrt();
        let oracle = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        prop_assert!((m.density(probe, &[]) - oracle).abs() <= 1e-10 * oracle.max(1e-300) + 1e-14);
        prop_assert!((normal_pdf(probe, mean, var) - oracle).abs() <= 1e-12);
    }
}
