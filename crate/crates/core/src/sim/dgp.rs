//! Data-generating processes for the simulation studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ObservedDataset;
use crate::error::{Error, Result};
use crate::linalg::expit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpName {
    Dgp1,
    Dgp2,
    Dgp2Null,
}

impl DgpName {
    pub fn covariate_names(self) -> Vec<String> {
        let p = match self {
            Self::Dgp1 => 3,
            Self::Dgp2 | Self::Dgp2Null => 4,
        };
        (1..=p).map(|j| format!("w{j}")).collect()
    }
}

/// How the second number in `Normal(26.6, 5.7)` for the first covariate of
/// the second process is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpreadReading {
    #[default]
    StandardDeviation,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub name: DgpName,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub w1_spread: SpreadReading,
}

impl DgpSpec {
    pub fn new(name: DgpName, n: usize, seed: u64) -> Self {
        Self { name, n, seed, w1_spread: SpreadReading::StandardDeviation }
    }
}

/// Complete draw before second-phase masking, for oracle use.
#[derive(Debug, Clone, PartialEq)]
pub struct FullData {
    pub w: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    pub y: Vec<f64>,
    pub c: Vec<bool>,
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("positive standard deviation")
}

fn bern(p: f64) -> Bernoulli {
    Bernoulli::new(p.clamp(0.0, 1.0)).expect("probability in [0,1]")
}

fn draw_w<R: Rng>(name: DgpName, spread: SpreadReading, rng: &mut R) -> Vec<f64> {
    match name {
        DgpName::Dgp1 => vec![
            normal(3.0, 1.0).sample(rng),
            bern(0.6).sample(rng) as u8 as f64,
            bern(0.3).sample(rng) as u8 as f64,
        ],
        DgpName::Dgp2 | DgpName::Dgp2Null => {
            let sd = match spread {
                SpreadReading::StandardDeviation => 5.7,
                SpreadReading::Variance => 5.7f64.sqrt(),
            };
            vec![
                normal(26.6, sd).sample(rng),
                Poisson::new(40.0).expect("positive rate").sample(rng),
                bern(0.4).sample(rng) as u8 as f64,
                bern(0.3).sample(rng) as u8 as f64,
            ]
        }
    }
}

fn draw_a<R: Rng>(name: DgpName, w: &[f64], rng: &mut R) -> f64 {
    match name {
        DgpName::Dgp1 => normal(2.0 * (w[1] + w[2]), 1.0).sample(rng),
        DgpName::Dgp2 | DgpName::Dgp2Null => {
            normal(-1.37 + 0.004 * w[0] + 0.015 * w[1] + 0.05 * w[2] + 0.25 * w[3], 0.2).sample(rng)
        }
    }
}

/// `P(Y = 1 | A = a, W = w)`.
pub fn outcome_mean(name: DgpName, a: f64, w: &[f64]) -> f64 {
    match name {
        DgpName::Dgp1 => expit((w[0] + w[1] + w[2]) / 3.0 - a),
        DgpName::Dgp2 => {
            expit(-2.9 - 0.0013 * w[0] - 0.0016 * w[1] + 0.0678 * w[2] + 0.039 * w[3] - 0.033 * a)
        }
        DgpName::Dgp2Null => expit(-2.8 - 0.0013 * w[0] - 0.0016 * w[1] + 0.0678 * w[2] + 0.039 * w[3]),
    }
}

fn draw_c<R: Rng>(name: DgpName, y: f64, w: &[f64], rng: &mut R) -> bool {
    match name {
        DgpName::Dgp1 => bern(expit((w[0] + w[1] + w[2]) / 3.0 - y)).sample(rng),
        DgpName::Dgp2 | DgpName::Dgp2Null => {
            y == 1.0
                || bern(expit(-2.45 - 0.027 * w[0] + 0.012 * w[1] + 0.39 * w[2] + 0.166 * w[3])).sample(rng)
        }
    }
}

/// Draws `n` units and masks the exposure outside the second phase.
pub fn generate_with<R: Rng>(
    name: DgpName,
    n: usize,
    spread: SpreadReading,
    rng: &mut R,
) -> Result<(ObservedDataset, FullData)> {
    if n < 10 {
        return Err(Error::Config("simulated samples need at least 10 units".into()));
    }
    let mut full = FullData { w: Vec::with_capacity(n), a: Vec::with_capacity(n), y: Vec::new(), c: Vec::new() };
    for _ in 0..n {
        let w = draw_w(name, spread, rng);
        let a = draw_a(name, &w, rng);
        let y = bern(outcome_mean(name, a, &w)).sample(rng) as u8 as f64;
        let c = draw_c(name, y, &w, rng);
        full.w.push(w);
        full.a.push(a);
        full.y.push(y);
        full.c.push(c);
    }
    let ds = ObservedDataset::new(
        name.covariate_names(),
        full.w.iter().flatten().copied().collect(),
        full.a.iter().zip(&full.c).map(|(&a, &c)| c.then_some(a)).collect(),
        full.y.clone(),
        full.c.clone(),
    )?;
    Ok((ds, full))
}

pub fn generate(spec: &DgpSpec) -> Result<(ObservedDataset, FullData)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    generate_with(spec.name, spec.n, spec.w1_spread, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthEstimate {
    pub psi: f64,
    /// Monte Carlo standard error.
    pub mc_se: f64,
    pub draws: usize,
}

const TRUTH_CHUNK: usize = 50_000;

/// Monte Carlo value of `E[P(Y = 1 | A + delta, W)]` under the exposure law,
/// with the shift applied everywhere (the exposure support is unbounded).
pub fn true_psi(name: DgpName, delta: f64, draws: usize, seed: u64, spread: SpreadReading) -> Result<TruthEstimate> {
    if draws < 2 {
        return Err(Error::Config("need at least two Monte Carlo draws".into()));
    }
    let chunks = draws.div_ceil(TRUTH_CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let m = TRUTH_CHUNK.min(draws - k * TRUTH_CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..m {
                let w = draw_w(name, spread, &mut rng);
                let a = draw_a(name, &w, &mut rng);
                let q = outcome_mean(name, a + delta, &w);
                s += q;
                s2 += q * q;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
    let m = draws as f64;
    let psi = s / m;
    let var = (s2 / m - psi * psi).max(0.0) * m / (m - 1.0);
    Ok(TruthEstimate { psi, mc_se: (var / m).sqrt(), draws })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exposure_is_masked_outside_phase_two() {
        let (ds, full) = generate(&DgpSpec::new(DgpName::Dgp1, 200, 3)).unwrap();
        for i in 0..ds.n() {
            assert_eq!(ds.exposure_opt(i), full.c[i].then_some(full.a[i]));
        }
        assert!(ds.phase_two_count() > 0 && ds.phase_two_count() < 200);
    }

    #[test]
    fn second_process_samples_every_case() {
        let (ds, _) = generate(&DgpSpec::new(DgpName::Dgp2, 5000, 11)).unwrap();
        assert!((0..ds.n()).filter(|&i| ds.outcome(i) == 1.0).all(|i| ds.sampled(i)));
    }

    #[test]
    fn same_seed_same_draw() {
        let s = DgpSpec::new(DgpName::Dgp2Null, 50, 9);
        assert_eq!(generate(&s).unwrap().1, generate(&s).unwrap().1);
    }

    #[test]
    fn small_samples_are_rejected() {
        assert!(generate(&DgpSpec::new(DgpName::Dgp1, 5, 1)).is_err());
    }
}
