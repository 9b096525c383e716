#![allow(dead_code)]

use twophase_core::estimators::{EstimationConfig, EstimationContext};
use twophase_core::sim::{generate, DgpName, DgpSpec, FullData};
use twophase_core::{EstimateResult, ObservedDataset, ShiftSpec, SupportMode, Variant};

pub fn dgp1(n: usize, seed: u64) -> (ObservedDataset, FullData) {
    generate(&DgpSpec::new(DgpName::Dgp1, n, seed)).unwrap()
}

/// The same draw with every unit in the second phase.
pub fn fully_sampled(full: &FullData) -> ObservedDataset {
    ObservedDataset::new(
        DgpName::Dgp1.covariate_names(),
        full.w.iter().flatten().copied().collect(),
        full.a.iter().map(|&a| Some(a)).collect(),
        full.y.clone(),
        vec![true; full.y.len()],
    )
    .unwrap()
}

pub fn shift(delta: f64) -> ShiftSpec {
    ShiftSpec::new(delta).with_support(SupportMode::Unbounded)
}

pub fn run(data: &ObservedDataset, delta: f64, variants: &[Variant], config: &EstimationConfig) -> Vec<EstimateResult> {
    EstimationContext::new(data, config, variants).unwrap().estimate(&shift(delta), variants).unwrap()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
