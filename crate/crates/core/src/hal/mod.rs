//! Highly adaptive lasso: lasso regression over a saturated zero-order
//! indicator basis, with the penalty chosen by V-fold cross-validation.

pub mod basis;
pub mod solver;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use basis::{BasisColumn, BasisMap, BasisMatrix};
pub use solver::{PathPoint, SolverOptions};

use crate::error::{Error, Result};
use crate::glm::{clamp_prob, Family};
use crate::linalg::{expit, Design};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HalConfig {
    pub max_degree: usize,
    pub max_knots_per_dim: usize,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    /// Explicit decreasing penalty grid; overrides the automatic one.
    pub lambda_grid: Option<Vec<f64>>,
    pub cv_folds: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for HalConfig {
    fn default() -> Self {
        Self {
            max_degree: 2,
            max_knots_per_dim: 50,
            n_lambda: 50,
            lambda_min_ratio: 1e-4,
            lambda_grid: None,
            cv_folds: 5,
            seed: 1,
            tol: 1e-7,
            max_sweeps: 20_000,
        }
    }
}

impl HalConfig {
    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { tol: self.tol, max_sweeps: self.max_sweeps, ..SolverOptions::default() }
    }

    pub(crate) fn lambdas(&self, lambda_max: f64) -> Result<Vec<f64>> {
        match &self.lambda_grid {
            Some(grid) => {
                if grid.is_empty() {
                    return Err(Error::Config("lambda grid is empty".into()));
                }
                if grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) || grid.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::Config("lambda grid must be finite, nonnegative and decreasing".into()));
                }
                Ok(grid.clone())
            }
            None => {
                if self.n_lambda == 0 {
                    return Err(Error::Config("n_lambda must be positive".into()));
                }
                Ok(solver::log_grid(lambda_max, self.lambda_min_ratio, self.n_lambda))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub lambda: f64,
    pub risk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseCoef {
    pub column: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalModel {
    pub basis: BasisMap,
    pub intercept: f64,
    pub beta: Vec<SparseCoef>,
    pub lambda_selected: f64,
    pub family: Family,
    /// Sum of absolute coefficients, the empirical variation-norm proxy.
    pub l1_norm: f64,
    pub cv_curve: Vec<CvPoint>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl HalModel {
    pub(crate) fn from_point(basis: BasisMap, family: Family, point: &PathPoint) -> Self {
        let beta: Vec<SparseCoef> = point
            .beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(column, &value)| SparseCoef { column, value })
            .collect();
        let l1_norm = beta.iter().map(|c| c.value.abs()).sum();
        Self {
            basis,
            intercept: point.intercept,
            beta,
            lambda_selected: point.lambda,
            family,
            l1_norm,
            cv_curve: Vec::new(),
            converged: point.converged,
            warnings: Vec::new(),
        }
    }

    pub fn n_covariates(&self) -> usize {
        self.basis.n_covariates
    }

    pub fn nonzeros(&self) -> usize {
        self.beta.len()
    }

    pub fn linear_predictor_row(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .beta
                .iter()
                .filter(|c| self.basis.columns[c.column].eval(x))
                .map(|c| c.value)
                .sum::<f64>()
    }

    /// Response-scale prediction for one covariate row.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let eta = self.linear_predictor_row(x);
        match self.family {
            Family::Gaussian => eta,
            Family::Binomial => clamp_prob(expit(eta)),
        }
    }

    pub fn predict(&self, x: &Design) -> Result<Vec<f64>> {
        if x.ncols() != self.n_covariates() {
            return Err(Error::Dimension { expected: self.n_covariates(), got: x.ncols() });
        }
        Ok((0..x.nrows()).map(|i| self.predict_row(x.row(i))).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Seeded fold labels `0..folds` for `n` units, balanced in size.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut label = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        label[i] = k % folds;
    }
    label
}

pub(crate) fn pointwise_loss(family: Family, y: f64, eta: f64) -> f64 {
    match family {
        Family::Gaussian => (y - eta).powi(2),
        Family::Binomial => {
            let p = clamp_prob(expit(eta));
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        }
    }
}

fn check_fit_inputs(x: &Design, y: &[f64], weights: &[f64], family: Family) -> Result<()> {
    let n = x.nrows();
    if y.len() != n || weights.len() != n {
        return Err(Error::InvalidData("covariates, response and weights differ in length".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidData("weights must be finite and nonnegative".into()));
    }
    if !(weights.iter().sum::<f64>() > 0.0) {
        return Err(Error::InvalidData("all weights are zero".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite response".into()));
    }
    if family == Family::Binomial {
        if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidData("binomial response outside [0,1]".into()));
        }
        let first = y.iter().zip(weights).find(|(_, w)| **w > 0.0).map(|(v, _)| *v);
        if !y.iter().zip(weights).any(|(v, w)| *w > 0.0 && Some(*v) != first) {
            return Err(Error::Degenerate("binomial HAL needs at least two distinct outcomes".into()));
        }
    }
    Ok(())
}

/// Cross-validated risk per penalty for a prebuilt basis. Returns one risk
/// per grid value, each the fold-summed weighted loss over the total weight.
pub(crate) fn cv_risk(
    x: &BasisMatrix,
    y: &[f64],
    weights: &[f64],
    family: Family,
    lambdas: &[f64],
    folds: &[usize],
    n_folds: usize,
    opts: &SolverOptions,
) -> Vec<f64> {
    let per_fold: Vec<Vec<f64>> = (0..n_folds)
        .into_par_iter()
        .map(|v| {
            let train: Vec<f64> =
                weights.iter().zip(folds).map(|(w, f)| if *f == v { 0.0 } else { *w }).collect();
            if !(train.iter().sum::<f64>() > 0.0) {
                return vec![0.0; lambdas.len()];
            }
            let path = solver::solve_path(x, y, &train, family, lambdas, opts);
            path.iter()
                .map(|pt| {
                    let eta = pt.linear_predictor(x);
                    (0..y.len())
                        .filter(|&i| folds[i] == v)
                        .map(|i| weights[i] * pointwise_loss(family, y[i], eta[i]))
                        .sum()
                })
                .collect()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    (0..lambdas.len()).map(|k| per_fold.iter().map(|f| f[k]).sum::<f64>() / total).collect()
}

/// Fold count capped at the number of units.
pub(crate) fn effective_folds(requested: usize, n: usize) -> Result<usize> {
    let v = requested.min(n);
    if v < 2 {
        return Err(Error::Config("cross-validation needs at least two folds and two units".into()));
    }
    Ok(v)
}

/// Index of the first minimum.
pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = k;
        }
    }
    best
}

/// Fits HAL with the penalty selected by cross-validation and refits on all
/// rows at the selected penalty.
pub fn fit_hal(x: &Design, y: &[f64], weights: &[f64], family: Family, config: &HalConfig) -> Result<HalModel> {
    check_fit_inputs(x, y, weights, family)?;
    let (basis, mat) = BasisMap::build(x, config.max_degree.min(x.ncols().max(1)), config.max_knots_per_dim)?;
    fit_hal_on_basis(basis, &mat, y, weights, family, config)
}

pub(crate) fn fit_hal_on_basis(
    basis: BasisMap,
    mat: &BasisMatrix,
    y: &[f64],
    weights: &[f64],
    family: Family,
    config: &HalConfig,
) -> Result<HalModel> {
    let opts = config.solver_options();
    let mut warnings = Vec::new();
    if mat.ncols() == 0 {
        warnings.push("empty basis; fitted an intercept-only model".to_string());
    }
    let lambdas = config.lambdas(solver::lambda_max(mat, y, weights))?;
    let n = y.len();

    let (selected, cv_curve) = if lambdas.len() > 1 && mat.ncols() > 0 {
        let folds_n = effective_folds(config.cv_folds, n)?;
        let folds = fold_assignment(n, folds_n, config.seed);
        let risk = cv_risk(mat, y, weights, family, &lambdas, &folds, folds_n, &opts);
        let curve: Vec<CvPoint> = lambdas.iter().zip(&risk).map(|(&lambda, &risk)| CvPoint { lambda, risk }).collect();
        (argmin(&risk), curve)
    } else {
        (lambdas.len() - 1, Vec::new())
    };

    let path = solver::solve_path(mat, y, weights, family, &lambdas[..=selected], &opts);
    let point = path.last().expect("nonempty path");
    let mut model = HalModel::from_point(basis, family, point);
    model.cv_curve = cv_curve;
    if !point.converged {
        warnings.push("coordinate descent hit its sweep limit".into());
    }
    model.warnings = warnings;
    Ok(model)
}
