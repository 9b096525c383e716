//! Nuisance fits for the two-phase shift estimators: sampling mechanism,
//! outcome regression, exposure density, stabilized weights for the joint
//! law of `(A, W)`, auxiliary covariate and the projection of the full-data
//! influence function onto `(Y, W)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{estimate_support_bound, shift, ObservedDataset, ShiftSpec, SupportBound};
use crate::density::{
    fit_gaussian_density, fit_haldensify, varying_columns, ConditionalDensity, DensityModel, HaldensifyConfig,
    MeanBasis,
};
use crate::error::{Error, Result};
use crate::glm::{clamp_prob, fit_logistic, fit_wls, Family, GlmFit};
use crate::hal::{fit_hal, HalConfig, HalModel};
use crate::linalg::Design;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    #[default]
    #[serde(alias = "logistic_glm", alias = "linear_glm")]
    Glm,
    Hal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DensityMethod {
    #[default]
    Gaussian,
    Haldensify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuisanceConfig {
    pub g_method: Learner,
    pub q_method: Learner,
    pub density_method: DensityMethod,
    /// Mean model of the Gaussian exposure density.
    pub density_mean: MeanBasis,
    pub projection_method: Learner,
    /// Lower clamp for estimated sampling probabilities.
    pub zeta: f64,
    /// Guard on the density in the denominator of the auxiliary covariate.
    pub density_floor: f64,
    pub hal: HalConfig,
    pub haldensify: HaldensifyConfig,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            g_method: Learner::Glm,
            q_method: Learner::Glm,
            density_method: DensityMethod::Gaussian,
            density_mean: MeanBasis::Main,
            projection_method: Learner::Glm,
            zeta: 0.01,
            density_floor: 1e-3,
            hal: HalConfig::default(),
            haldensify: HaldensifyConfig::default(),
        }
    }
}

impl NuisanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0 && self.zeta < 0.5) {
            return Err(Error::Config("zeta must lie in (0, 0.5)".into()));
        }
        if !(self.density_floor > 0.0) {
            return Err(Error::Config("density_floor must be positive".into()));
        }
        Ok(())
    }
}

/// A fitted regression evaluated on a raw feature row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regressor {
    Constant { value: f64 },
    /// GLM on an intercept plus the listed feature columns.
    Glm { fit: GlmFit, columns: Vec<usize> },
    Hal { model: HalModel },
}

impl Regressor {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Glm { fit, columns } => {
                let eta = fit.coefficients[0]
                    + columns.iter().zip(&fit.coefficients[1..]).map(|(&j, b)| b * x[j]).sum::<f64>();
                match fit.family {
                    Family::Gaussian => eta,
                    Family::Binomial => clamp_prob(crate::linalg::expit(eta)),
                }
            }
            Self::Hal { model } => model.predict_row(x),
        }
    }

    pub fn warnings(&self) -> &[String] {
        match self {
            Self::Constant { .. } => &[],
            Self::Glm { fit, .. } => &fit.warnings,
            Self::Hal { model } => &model.warnings,
        }
    }
}

fn with_intercept(x: &Design, columns: &[usize]) -> Design {
    let n = x.nrows();
    let mut names = vec!["(intercept)".to_string()];
    names.extend(columns.iter().map(|&j| x.names()[j].clone()));
    let mut data = Vec::with_capacity(n * names.len());
    for i in 0..n {
        data.push(1.0);
        data.extend(columns.iter().map(|&j| x.get(i, j)));
    }
    Design::new(n, names, data).expect("consistent buffer")
}

/// Fits `y` on the raw features `x` with the chosen learner. GLMs use an
/// intercept plus every feature that varies on rows with positive weight.
pub fn fit_regression(
    x: &Design,
    y: &[f64],
    weights: &[f64],
    family: Family,
    learner: Learner,
    hal: &HalConfig,
) -> Result<Regressor> {
    match learner {
        Learner::Glm => {
            let columns = varying_columns(x, weights);
            let design = with_intercept(x, &columns);
            let fit = match family {
                Family::Gaussian => fit_wls(&design, y, weights)?.0,
                Family::Binomial => fit_logistic(&design, y, weights, None)?,
            };
            Ok(Regressor::Glm { fit, columns })
        }
        Learner::Hal => Ok(Regressor::Hal { model: fit_hal(x, y, weights, family, hal)? }),
    }
}

fn prefixed_design(data: &ObservedDataset, rows: &[usize], first: &str, value: impl Fn(usize) -> f64) -> Design {
    let p = data.p();
    let mut names = vec![first.to_string()];
    names.extend(data.covariate_names().iter().cloned());
    let mut buf = Vec::with_capacity(rows.len() * (p + 1));
    for &i in rows {
        buf.push(value(i));
        buf.extend_from_slice(data.covariates(i));
    }
    Design::new(rows.len(), names, buf).expect("consistent buffer")
}

/// `(y, w...)` feature row.
pub fn yw_row(y: f64, w: &[f64]) -> Vec<f64> {
    let mut r = Vec::with_capacity(w.len() + 1);
    r.push(y);
    r.extend_from_slice(w);
    r
}

/// `(a, w...)` feature row.
pub fn aw_row(a: f64, w: &[f64]) -> Vec<f64> {
    yw_row(a, w)
}

/// Classifier of `C` on `(Y, W)` over all rows.
pub fn fit_sampling_mechanism(data: &ObservedDataset, method: Learner, hal: &HalConfig) -> Result<Regressor> {
    let c: Vec<f64> = data.sampling_indicators().iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
    if c.iter().all(|v| *v == 1.0) {
        return Err(Error::Degenerate("sampling indicator has a single class".into()));
    }
    let rows: Vec<usize> = (0..data.n()).collect();
    let x = prefixed_design(data, &rows, "y", |i| data.outcome(i));
    fit_regression(&x, &c, &vec![1.0; data.n()], Family::Binomial, method, hal)
}

/// Sampling probabilities at every row, clamped to `[zeta, 1]`.
pub fn sampling_probabilities(data: &ObservedDataset, fit: &Regressor, zeta: f64) -> Vec<f64> {
    (0..data.n()).map(|i| fit.predict(&yw_row(data.outcome(i), data.covariates(i))).clamp(zeta, 1.0)).collect()
}

/// Stabilized inverse-probability weights `(C/g) / sum (C/g)`.
pub fn joint_distribution_weights(sampled: &[bool], g: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = sampled.iter().zip(g).map(|(&c, &g)| if c { 1.0 / g } else { 0.0 }).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

/// Outcome regression on `(A, W)` over second-phase rows, weighted by `1/g`.
pub fn fit_outcome_regression(data: &ObservedDataset, g: &[f64], method: Learner, hal: &HalConfig) -> Result<Regressor> {
    let rows = data.phase_two_indices();
    let y: Vec<f64> = rows.iter().map(|&i| data.outcome(i)).collect();
    if y.iter().all(|v| *v == y[0]) {
        return Err(Error::Degenerate("outcome is constant among second-phase rows".into()));
    }
    let x = prefixed_design(data, &rows, "a", |i| data.exposure_opt(i).expect("phase-two exposure"));
    let w: Vec<f64> = rows.iter().map(|&i| 1.0 / g[i]).collect();
    fit_regression(&x, &y, &w, Family::Binomial, method, hal)
}

/// Exposure density on second-phase rows, weighted by `1/g`.
pub fn fit_exposure_density(data: &ObservedDataset, g: &[f64], config: &NuisanceConfig) -> Result<DensityModel> {
    let rows = data.phase_two_indices();
    let a: Vec<f64> = rows.iter().map(|&i| data.exposure_opt(i).expect("phase-two exposure")).collect();
    let mut buf = Vec::with_capacity(rows.len() * data.p());
    for &i in &rows {
        buf.extend_from_slice(data.covariates(i));
    }
    let w = Design::new(rows.len(), data.covariate_names().to_vec(), buf)?;
    let weights: Vec<f64> = rows.iter().map(|&i| 1.0 / g[i]).collect();
    Ok(match config.density_method {
        DensityMethod::Gaussian => {
            DensityModel::Gaussian(fit_gaussian_density(&a, &w, &weights, config.density_mean)?)
        }
        DensityMethod::Haldensify => DensityModel::Haldensify(fit_haldensify(&a, &w, &weights, &config.haldensify)?),
    })
}

/// Auxiliary covariate at exposure `a`:
/// `1{a < u} q(a - delta | w) / max(q(a | w), floor) + 1{a + delta >= u}`.
pub fn auxiliary_covariate(
    a: f64,
    w: &[f64],
    density: &dyn ConditionalDensity,
    spec: &ShiftSpec,
    bound: &SupportBound,
    floor: f64,
) -> f64 {
    let u = bound.upper(w);
    let mut h = 0.0;
    if a < u {
        h += density.density(a - spec.delta, w) / density.density(a, w).max(floor);
    }
    if a + spec.delta >= u {
        h += 1.0;
    }
    h
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NuisanceDiagnostics {
    /// Rows whose sampling probability was raised to `zeta`.
    pub g_truncated: usize,
    /// Second-phase rows where the density floor bound the denominator.
    pub density_floor_hits: usize,
    pub warnings: Vec<String>,
}

/// Shift-independent fits, shared across a grid of shifts.
#[derive(Debug, Clone)]
pub struct BaseFits {
    pub g_fit: Regressor,
    pub g: Vec<f64>,
    pub q_fit: Regressor,
    pub density: Arc<DensityModel>,
    pub diagnostics: NuisanceDiagnostics,
}

pub fn fit_base(data: &ObservedDataset, config: &NuisanceConfig) -> Result<BaseFits> {
    config.validate()?;
    if data.weights().is_some_and(|w| w.iter().any(|v| *v != 1.0)) {
        return Err(Error::Config("observation weights other than 1 are not supported by the estimators".into()));
    }
    let mut diagnostics = NuisanceDiagnostics::default();
    let g_fit = if data.all_sampled() {
        Regressor::Constant { value: 1.0 }
    } else {
        fit_sampling_mechanism(data, config.g_method, &config.hal)?
    };
    let g = sampling_probabilities(data, &g_fit, config.zeta);
    diagnostics.g_truncated = (0..data.n())
        .filter(|&i| g_fit.predict(&yw_row(data.outcome(i), data.covariates(i))) < config.zeta)
        .count();
    diagnostics.warnings.extend(g_fit.warnings().iter().map(|w| format!("sampling mechanism: {w}")));
    let q_fit = fit_outcome_regression(data, &g, config.q_method, &config.hal)?;
    diagnostics.warnings.extend(q_fit.warnings().iter().map(|w| format!("outcome regression: {w}")));
    let density = fit_exposure_density(data, &g, config)?;
    if let DensityModel::Haldensify(m) = &density {
        diagnostics.warnings.extend(m.warnings.iter().map(|w| format!("exposure density: {w}")));
    }
    Ok(BaseFits { g_fit, g, q_fit, density: Arc::new(density), diagnostics })
}

/// Per-row nuisance values at one shift. Entries for `C = 0` rows of the
/// exposure-dependent vectors are zero and never used.
#[derive(Debug, Clone)]
pub struct NuisanceSet {
    pub spec: ShiftSpec,
    pub bound: SupportBound,
    pub g: Vec<f64>,
    pub qaw_weights: Vec<f64>,
    pub qbar_obs: Vec<f64>,
    pub qbar_shift: Vec<f64>,
    pub h_obs: Vec<f64>,
    pub h_shift: Vec<f64>,
    pub diagnostics: NuisanceDiagnostics,
}

impl BaseFits {
    pub fn at_shift(&self, data: &ObservedDataset, spec: &ShiftSpec, config: &NuisanceConfig) -> Result<NuisanceSet> {
        let density: Arc<dyn ConditionalDensity> = self.density.clone();
        let bound = estimate_support_bound(data, spec, Some(density))?;
        let n = data.n();
        let mut set = NuisanceSet {
            spec: *spec,
            bound,
            g: self.g.clone(),
            qaw_weights: joint_distribution_weights(data.sampling_indicators(), &self.g),
            qbar_obs: vec![0.0; n],
            qbar_shift: vec![0.0; n],
            h_obs: vec![0.0; n],
            h_shift: vec![0.0; n],
            diagnostics: self.diagnostics.clone(),
        };
        for i in data.phase_two_indices() {
            let a = data.exposure_opt(i).expect("phase-two exposure");
            let w = data.covariates(i);
            let d = shift(a, w, spec, &set.bound);
            set.qbar_obs[i] = self.q_fit.predict(&aw_row(a, w));
            set.qbar_shift[i] = self.q_fit.predict(&aw_row(d, w));
            set.h_obs[i] = auxiliary_covariate(a, w, self.density.as_ref(), spec, &set.bound, config.density_floor);
            set.h_shift[i] = auxiliary_covariate(d, w, self.density.as_ref(), spec, &set.bound, config.density_floor);
            if a < set.bound.upper(w) && self.density.density(a, w) < config.density_floor {
                set.diagnostics.density_floor_hits += 1;
            }
        }
        Ok(set)
    }
}

/// Nuisance values at one shift, fitting everything from scratch.
pub fn fit_nuisance(data: &ObservedDataset, spec: &ShiftSpec, config: &NuisanceConfig) -> Result<NuisanceSet> {
    fit_base(data, config)?.at_shift(data, spec, config)
}

/// Full-data influence values `H (Y - Qbar) + Qbar(shift) - psi` on
/// second-phase rows; zero elsewhere.
pub fn pseudo_outcomes(data: &ObservedDataset, set: &NuisanceSet, psi: f64) -> Vec<f64> {
    (0..data.n())
        .map(|i| {
            if data.sampled(i) {
                set.h_obs[i] * (data.outcome(i) - set.qbar_obs[i]) + set.qbar_shift[i] - psi
            } else {
                0.0
            }
        })
        .collect()
}

/// Unweighted regression of the pseudo-outcomes on `(Y, W)` among
/// second-phase rows.
pub fn fit_eif_projection(
    data: &ObservedDataset,
    pseudo: &[f64],
    method: Learner,
    hal: &HalConfig,
) -> Result<Regressor> {
    let rows = data.phase_two_indices();
    if rows.len() < 2 {
        return Err(Error::Degenerate("projection needs at least two second-phase rows".into()));
    }
    let d: Vec<f64> = rows.iter().map(|&i| pseudo[i]).collect();
    if d.iter().all(|v| *v == d[0]) {
        return Ok(Regressor::Constant { value: d[0] });
    }
    let x = prefixed_design(data, &rows, "y", |i| data.outcome(i));
    fit_regression(&x, &d, &vec![1.0; rows.len()], Family::Gaussian, method, hal)
}

/// Projection values at every row.
pub fn projection_values(data: &ObservedDataset, fit: &Regressor) -> Vec<f64> {
    (0..data.n()).map(|i| fit.predict(&yw_row(data.outcome(i), data.covariates(i)))).collect()
}
