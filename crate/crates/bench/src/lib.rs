//! Fixtures shared by the benchmarks in `benches/`.

use twophase_core::sim::{generate, DgpName, DgpSpec};
use twophase_core::{Design, ObservedDataset};

pub fn dgp1(n: usize, seed: u64) -> ObservedDataset {
    generate(&DgpSpec::new(DgpName::Dgp1, n, seed)).expect("valid spec").0
}

/// Covariates `(y, w)` and the sampling indicator, as used by the sampling-mechanism fit.
pub fn sampling_problem(data: &ObservedDataset) -> (Design, Vec<f64>) {
    let mut names = vec!["y".to_string()];
    names.extend(data.covariate_names().iter().cloned());
    let rows: Vec<Vec<f64>> = (0..data.n())
        .map(|i| {
            let mut r = vec![data.outcome(i)];
            r.extend_from_slice(data.covariates(i));
            r
        })
        .collect();
    let c = data.sampling_indicators().iter().map(|&s| s as u8 as f64).collect();
    (Design::from_rows(names, &rows).expect("rectangular rows"), c)
}

/// Exposure and covariates of the second-phase rows.
pub fn exposure_problem(data: &ObservedDataset) -> (Vec<f64>, Design) {
    let idx = data.phase_two_indices();
    let a = idx.iter().map(|&i| data.exposure_opt(i).expect("second phase")).collect();
    let rows: Vec<Vec<f64>> = idx.iter().map(|&i| data.covariates(i).to_vec()).collect();
    (a, Design::from_rows(data.covariate_names().to_vec(), &rows).expect("rectangular rows"))
}
