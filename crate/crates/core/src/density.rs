//! Conditional densities of the exposure given covariates: a homoscedastic
//! Gaussian working model and a pooled-hazard HAL estimator over bins.

use std::f64::consts::PI;
use std::fmt::Debug;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{fit_wls, Family, GlmFit};
use crate::hal::{self, basis::select_knots, solver, BasisMap, BasisMatrix, HalConfig, HalModel};
use crate::linalg::Design;

/// A fitted conditional density `q(a | w)`.
pub trait ConditionalDensity: Send + Sync + Debug {
    fn density(&self, a: f64, w: &[f64]) -> f64;

    /// `sup{a : q(a|w) >= eps}`, or negative infinity when no exposure
    /// reaches the threshold.
    fn upper_support(&self, w: &[f64], eps: f64) -> f64;

    fn covariate_names(&self) -> &[String];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeanBasis {
    /// Intercept plus every covariate that varies in the training data.
    #[default]
    Main,
    InterceptOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDensityModel {
    pub covariate_names: Vec<String>,
    pub basis: MeanBasis,
    /// Covariate indices entering the mean model after the intercept.
    pub mean_columns: Vec<usize>,
    pub mean_fit: GlmFit,
    pub sigma2: f64,
}

fn mean_design(w: &Design, columns: &[usize]) -> Design {
    let n = w.nrows();
    let mut names = vec!["(intercept)".to_string()];
    names.extend(columns.iter().map(|&j| w.names()[j].clone()));
    let mut data = Vec::with_capacity(n * names.len());
    for i in 0..n {
        data.push(1.0);
        data.extend(columns.iter().map(|&j| w.get(i, j)));
    }
    Design::new(n, names, data).expect("consistent buffer")
}

/// Indices of columns that take more than one value on rows with positive weight.
pub(crate) fn varying_columns(w: &Design, weights: &[f64]) -> Vec<usize> {
    (0..w.ncols())
        .filter(|&j| {
            let mut vals = (0..w.nrows()).filter(|&i| weights[i] > 0.0).map(|i| w.get(i, j));
            match vals.next() {
                Some(first) => vals.any(|v| v != first),
                None => false,
            }
        })
        .collect()
}

pub fn fit_gaussian_density(a: &[f64], w: &Design, weights: &[f64], basis: MeanBasis) -> Result<GaussianDensityModel> {
    if a.len() != w.nrows() || weights.len() != w.nrows() {
        return Err(Error::InvalidData("exposure, covariates and weights differ in length".into()));
    }
    let mean_columns = match basis {
        MeanBasis::Main => varying_columns(w, weights),
        MeanBasis::InterceptOnly => Vec::new(),
    };
    let effective = weights.iter().filter(|v| **v > 0.0).count();
    if effective < mean_columns.len() + 3 {
        return Err(Error::InvalidData(format!(
            "Gaussian density needs at least {} observations with positive weight, found {effective}",
            mean_columns.len() + 3
        )));
    }
    let x = mean_design(w, &mean_columns);
    let (mean_fit, sigma2) = fit_wls(&x, a, weights)?;
    if !(sigma2 >= 1e-12) {
        return Err(Error::DegenerateVariance);
    }
    Ok(GaussianDensityModel { covariate_names: w.names().to_vec(), basis, mean_columns, mean_fit, sigma2 })
}

impl GaussianDensityModel {
    pub fn mean(&self, w: &[f64]) -> f64 {
        self.mean_fit.coefficients[0]
            + self.mean_columns.iter().zip(&self.mean_fit.coefficients[1..]).map(|(&j, b)| b * w[j]).sum::<f64>()
    }
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    (-0.5 * z * z / var).exp() / (2.0 * PI * var).sqrt()
}

impl ConditionalDensity for GaussianDensityModel {
    fn density(&self, a: f64, w: &[f64]) -> f64 {
        normal_pdf(a, self.mean(w), self.sigma2)
    }

    fn upper_support(&self, w: &[f64], eps: f64) -> f64 {
        let peak = 1.0 / (2.0 * PI * self.sigma2).sqrt();
        if eps > peak {
            return f64::NEG_INFINITY;
        }
        self.mean(w) + (2.0 * self.sigma2 * (peak / eps).ln()).sqrt()
    }

    fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BinRule {
    EqualRange,
    #[default]
    EqualMass,
}

/// `T + 1` edges covering `[min a, max a]`.
pub fn bin_edges(a: &[f64], n_bins: usize, rule: BinRule) -> Result<Vec<f64>> {
    if n_bins < 2 {
        return Err(Error::Config("at least two bins are needed".into()));
    }
    let mut sorted = a.to_vec();
    sorted.sort_by(|x, y| x.total_cmp(y));
    let (lo, hi) = match (sorted.first(), sorted.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Err(Error::InvalidData("no exposure values".into())),
    };
    let t = n_bins as f64;
    let mut edges: Vec<f64> = match rule {
        BinRule::EqualRange => (0..=n_bins).map(|k| lo + (hi - lo) * k as f64 / t).collect(),
        BinRule::EqualMass => (0..=n_bins)
            .map(|k| {
                let pos = (sorted.len() - 1) as f64 * k as f64 / t;
                let (f, c) = (pos.floor() as usize, pos.ceil() as usize);
                sorted[f] + (sorted[c] - sorted[f]) * (pos - f as f64)
            })
            .collect(),
    };
    edges[0] = lo;
    edges[n_bins] = hi;
    Ok(edges)
}

/// One-based bin of `a`; the last bin is closed on the right.
pub fn bin_index(a: f64, edges: &[f64]) -> Option<usize> {
    let t = edges.len() - 1;
    if !(a >= edges[0] && a <= edges[t]) {
        return None;
    }
    if a == edges[t] {
        return Some(t);
    }
    Some(edges.partition_point(|e| *e <= a).clamp(1, t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazardRow {
    pub source: usize,
    pub bin: usize,
    pub in_bin: bool,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazardLongFormat {
    pub bin_edges: Vec<f64>,
    pub rows: Vec<HazardRow>,
    /// Bin index followed by the source covariates, one row per long row.
    pub covariates: Design,
}

fn hazard_names(w: &Design) -> Vec<String> {
    let mut names = vec!["bin".to_string()];
    names.extend(w.names().iter().cloned());
    names
}

/// Expands each observation in bin `t` into rows for bins `1..=t`.
pub fn pool_hazard_format(a: &[f64], w: &Design, weights: &[f64], bin_edges: &[f64]) -> Result<HazardLongFormat> {
    let mut rows = Vec::new();
    let mut data = Vec::new();
    for (i, &ai) in a.iter().enumerate() {
        let t = bin_index(ai, bin_edges)
            .ok_or_else(|| Error::Row { row: i, message: format!("exposure {ai} lies outside the bin grid") })?;
        for b in 1..=t {
            rows.push(HazardRow { source: i, bin: b, in_bin: b == t, weight: weights[i] });
            data.push(b as f64);
            data.extend_from_slice(w.row(i));
        }
    }
    let covariates = Design::new(rows.len(), hazard_names(w), data)?;
    Ok(HazardLongFormat { bin_edges: bin_edges.to_vec(), rows, covariates })
}

/// Bin masses `h_t * prod_{j<t} (1 - h_j)`, renormalized to sum to one.
pub fn masses_from_hazards(hazards: &[f64]) -> Vec<f64> {
    let mut survive = 1.0;
    let mut masses: Vec<f64> = hazards
        .iter()
        .map(|h| {
            let m = h * survive;
            survive *= 1.0 - h;
            m
        })
        .collect();
    let total: f64 = masses.iter().sum();
    if total > 0.0 {
        masses.iter_mut().for_each(|m| *m /= total);
    }
    masses
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HaldensifyConfig {
    pub n_bins_grid: Vec<usize>,
    pub bin_rule: BinRule,
    pub hal: HalConfig,
}

impl Default for HaldensifyConfig {
    fn default() -> Self {
        Self {
            n_bins_grid: vec![5, 10, 20],
            bin_rule: BinRule::EqualMass,
            hal: HalConfig { max_knots_per_dim: 20, n_lambda: 30, ..HalConfig::default() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinCvRisk {
    pub n_bins: usize,
    pub lambda: f64,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondDensityModel {
    pub covariate_names: Vec<String>,
    pub bin_edges: Vec<f64>,
    pub n_bins_selected: usize,
    pub hazard_model: HalModel,
    /// Best cross-validated risk for each bin count that could be fitted.
    pub cv_risk: Vec<BinCvRisk>,
    pub warnings: Vec<String>,
}

impl CondDensityModel {
    fn hazards(&self, w: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(w.len() + 1);
        x.push(0.0);
        x.extend_from_slice(w);
        (1..=self.n_bins_selected)
            .map(|t| {
                x[0] = t as f64;
                self.hazard_model.predict_row(&x)
            })
            .collect()
    }

    /// Renormalized bin masses at `w`.
    pub fn bin_masses(&self, w: &[f64]) -> Vec<f64> {
        masses_from_hazards(&self.hazards(w))
    }

    pub fn bin_widths(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|e| e[1] - e[0]).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn predict_density(model: &CondDensityModel, a: f64, w: &[f64]) -> f64 {
    match bin_index(a, &model.bin_edges) {
        Some(t) => model.bin_masses(w)[t - 1] / (model.bin_edges[t] - model.bin_edges[t - 1]),
        None => 0.0,
    }
}

impl ConditionalDensity for CondDensityModel {
    fn density(&self, a: f64, w: &[f64]) -> f64 {
        predict_density(self, a, w)
    }

    fn upper_support(&self, w: &[f64], eps: f64) -> f64 {
        let masses = self.bin_masses(w);
        let widths = self.bin_widths();
        (0..masses.len())
            .rev()
            .find(|&k| masses[k] / widths[k] >= eps)
            .map_or(f64::NEG_INFINITY, |k| self.bin_edges[k + 1])
    }

    fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }
}

/// Everything needed to fit and score one bin count.
struct BinCandidate {
    n_bins: usize,
    edges: Vec<f64>,
    basis: BasisMap,
    long: BasisMatrix,
    y: Vec<f64>,
    long_weights: Vec<f64>,
    long_source: Vec<usize>,
    lambdas: Vec<f64>,
}

fn prepare_candidate(
    a: &[f64],
    w: &Design,
    weights: &[f64],
    n_bins: usize,
    config: &HaldensifyConfig,
) -> std::result::Result<BinCandidate, String> {
    let edges = bin_edges(a, n_bins, config.bin_rule).map_err(|e| e.to_string())?;
    if edges.windows(2).any(|e| !(e[1] > e[0])) {
        return Err(format!("{n_bins} bins: zero-width bin"));
    }
    let mut occupied = vec![false; n_bins];
    for (&ai, &wi) in a.iter().zip(weights) {
        if wi > 0.0 {
            occupied[bin_index(ai, &edges).expect("edges cover the sample") - 1] = true;
        }
    }
    if occupied.iter().any(|o| !o) {
        return Err(format!("{n_bins} bins: empty bin"));
    }
    let long = pool_hazard_format(a, w, weights, &edges).map_err(|e| e.to_string())?;
    let mut knots = vec![(1..=n_bins).map(|t| t as f64).collect::<Vec<_>>()];
    for j in 0..w.ncols() {
        let col: Vec<f64> = (0..w.nrows()).filter(|&i| weights[i] > 0.0).map(|i| w.get(i, j)).collect();
        knots.push(select_knots(&col, config.hal.max_knots_per_dim));
    }
    let degree = config.hal.max_degree.clamp(1, w.ncols() + 1);
    let (basis, mat) = BasisMap::build_with_knots(&long.covariates, knots, degree).map_err(|e| e.to_string())?;
    let y: Vec<f64> = long.rows.iter().map(|r| if r.in_bin { 1.0 } else { 0.0 }).collect();
    let long_weights: Vec<f64> = long.rows.iter().map(|r| r.weight).collect();
    let long_source = long.rows.iter().map(|r| r.source).collect();
    let lambdas = config.hal.lambdas(solver::lambda_max(&mat, &y, &long_weights)).map_err(|e| e.to_string())?;
    Ok(BinCandidate { n_bins, edges, basis, long: mat, y, long_weights, long_source, lambdas })
}

/// Cross-validated negative log density for each penalty of one candidate.
fn candidate_risk(
    cand: &BinCandidate,
    a: &[f64],
    w: &Design,
    weights: &[f64],
    folds: &[usize],
    n_folds: usize,
    config: &HaldensifyConfig,
) -> Result<Vec<f64>> {
    let t = cand.n_bins;
    let n = a.len();
    let mut grid_data = Vec::with_capacity(n * t * (w.ncols() + 1));
    for i in 0..n {
        for b in 1..=t {
            grid_data.push(b as f64);
            grid_data.extend_from_slice(w.row(i));
        }
    }
    let grid = cand.basis.evaluate(&Design::new(n * t, hazard_names(w), grid_data)?)?;
    let bins: Vec<usize> = a.iter().map(|&ai| bin_index(ai, &cand.edges).expect("in grid")).collect();
    let widths: Vec<f64> = cand.edges.windows(2).map(|e| e[1] - e[0]).collect();
    let opts = config.hal.solver_options();

    let per_fold: Vec<Vec<f64>> = (0..n_folds)
        .into_par_iter()
        .map(|v| {
            let train: Vec<f64> = cand
                .long_weights
                .iter()
                .zip(&cand.long_source)
                .map(|(wt, &s)| if folds[s] == v { 0.0 } else { *wt })
                .collect();
            if !(train.iter().sum::<f64>() > 0.0) {
                return vec![0.0; cand.lambdas.len()];
            }
            let path = solver::solve_path(&cand.long, &cand.y, &train, Family::Binomial, &cand.lambdas, &opts);
            path.iter()
                .map(|pt| {
                    let eta = pt.linear_predictor(&grid);
                    let mut loss = 0.0;
                    for i in (0..n).filter(|&i| folds[i] == v && weights[i] > 0.0) {
                        let hazards: Vec<f64> = eta[i * t..(i + 1) * t]
                            .iter()
                            .map(|&e| crate::glm::clamp_prob(crate::linalg::expit(e)))
                            .collect();
                        let k = bins[i] - 1;
                        let dens = masses_from_hazards(&hazards)[k] / widths[k];
                        loss -= weights[i] * dens.max(1e-300).ln();
                    }
                    loss
                })
                .collect()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    Ok((0..cand.lambdas.len()).map(|k| per_fold.iter().map(|f| f[k]).sum::<f64>() / total).collect())
}

/// Pooled-hazard density estimator with the bin count and penalty chosen
/// jointly by cross-validated log loss.
pub fn fit_haldensify(a: &[f64], w: &Design, weights: &[f64], config: &HaldensifyConfig) -> Result<CondDensityModel> {
    let n = a.len();
    if w.nrows() != n || weights.len() != n {
        return Err(Error::InvalidData("exposure, covariates and weights differ in length".into()));
    }
    if a.iter().any(|v| !v.is_finite()) || weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidData("exposure and weights must be finite, weights nonnegative".into()));
    }
    let max_bins = config.n_bins_grid.iter().copied().max().ok_or_else(|| Error::Config("empty bin grid".into()))?;
    let count = weights.iter().filter(|v| **v > 0.0).count();
    if count < 2 * max_bins {
        return Err(Error::InvalidData(format!("{count} observations are too few for {max_bins} bins")));
    }
    let n_folds = hal::effective_folds(config.hal.cv_folds, n)?;
    let folds = hal::fold_assignment(n, n_folds, config.hal.seed);

    let mut warnings = Vec::new();
    let mut candidates = Vec::new();
    for &t in &config.n_bins_grid {
        match prepare_candidate(a, w, weights, t, config) {
            Ok(c) => candidates.push(c),
            Err(msg) => warnings.push(format!("skipped {msg}")),
        }
    }
    if candidates.is_empty() {
        return Err(Error::Degenerate("no bin count in the grid could be fitted".into()));
    }
    let risks: Vec<Vec<f64>> = candidates
        .par_iter()
        .map(|c| candidate_risk(c, a, w, weights, &folds, n_folds, config))
        .collect::<Result<_>>()?;

    let mut best = (0, 0);
    let mut cv_risk = Vec::new();
    for (ci, r) in risks.iter().enumerate() {
        let k = hal::argmin(r);
        cv_risk.push(BinCvRisk { n_bins: candidates[ci].n_bins, lambda: candidates[ci].lambdas[k], risk: r[k] });
        if r[k] < risks[best.0][best.1] {
            best = (ci, k);
        }
    }
    let cand = candidates.swap_remove(best.0);
    let path = solver::solve_path(
        &cand.long,
        &cand.y,
        &cand.long_weights,
        Family::Binomial,
        &cand.lambdas[..=best.1],
        &config.hal.solver_options(),
    );
    let point = path.last().expect("nonempty path");
    let mut hazard_model = HalModel::from_point(cand.basis, Family::Binomial, point);
    if !point.converged {
        warnings.push("hazard fit hit its sweep limit".into());
    }
    hazard_model.warnings = warnings.clone();
    Ok(CondDensityModel {
        covariate_names: w.names().to_vec(),
        bin_edges: cand.edges,
        n_bins_selected: cand.n_bins,
        hazard_model,
        cv_risk,
        warnings,
    })
}

/// Either fitted density, for storage and dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityModel {
    Gaussian(GaussianDensityModel),
    Haldensify(CondDensityModel),
}

impl ConditionalDensity for DensityModel {
    fn density(&self, a: f64, w: &[f64]) -> f64 {
        match self {
            Self::Gaussian(m) => m.density(a, w),
            Self::Haldensify(m) => m.density(a, w),
        }
    }

    fn upper_support(&self, w: &[f64], eps: f64) -> f64 {
        match self {
            Self::Gaussian(m) => m.upper_support(w, eps),
            Self::Haldensify(m) => m.upper_support(w, eps),
        }
    }

    fn covariate_names(&self) -> &[String] {
        match self {
            Self::Gaussian(m) => m.covariate_names(),
            Self::Haldensify(m) => m.covariate_names(),
        }
    }
}
