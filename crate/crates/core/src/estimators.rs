//! Plug-in, one-step and targeted estimators of the shifted mean outcome,
//! with Wald inference from the estimated influence function.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{ObservedDataset, OutcomeScale, ShiftSpec};
use crate::error::{Error, Result};
use crate::glm::{clamp_prob, fit_logistic, safe_logit};
use crate::linalg::{expit, Design};
use crate::nuisance::{
    fit_base, fit_eif_projection, joint_distribution_weights, projection_values, pseudo_outcomes, BaseFits,
    NuisanceConfig, NuisanceDiagnostics, NuisanceSet,
};

const TILT_TOL: f64 = 1e-6;
const MAX_TILTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Onestep,
    Tmle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Full efficient influence function, including the projection term.
    Augmented,
    /// Inverse-probability weighting of the full-data influence function only.
    Reweighted,
    /// Second-phase rows treated as a complete sample.
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Plugin,
    Onestep,
    Tmle,
    OnestepReweighted,
    TmleReweighted,
    OnestepNaive,
    TmleNaive,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Plugin,
        Variant::Onestep,
        Variant::Tmle,
        Variant::OnestepReweighted,
        Variant::TmleReweighted,
        Variant::OnestepNaive,
        Variant::TmleNaive,
    ];

    pub fn new(kind: EstimatorKind, weighting: Weighting) -> Self {
        match (kind, weighting) {
            (EstimatorKind::Onestep, Weighting::Augmented) => Self::Onestep,
            (EstimatorKind::Tmle, Weighting::Augmented) => Self::Tmle,
            (EstimatorKind::Onestep, Weighting::Reweighted) => Self::OnestepReweighted,
            (EstimatorKind::Tmle, Weighting::Reweighted) => Self::TmleReweighted,
            (EstimatorKind::Onestep, Weighting::Naive) => Self::OnestepNaive,
            (EstimatorKind::Tmle, Weighting::Naive) => Self::TmleNaive,
        }
    }

    /// Estimator family and weighting; `None` for the plug-in.
    pub fn parts(self) -> Option<(EstimatorKind, Weighting)> {
        match self {
            Self::Plugin => None,
            Self::Onestep => Some((EstimatorKind::Onestep, Weighting::Augmented)),
            Self::Tmle => Some((EstimatorKind::Tmle, Weighting::Augmented)),
            Self::OnestepReweighted => Some((EstimatorKind::Onestep, Weighting::Reweighted)),
            Self::TmleReweighted => Some((EstimatorKind::Tmle, Weighting::Reweighted)),
            Self::OnestepNaive => Some((EstimatorKind::Onestep, Weighting::Naive)),
            Self::TmleNaive => Some((EstimatorKind::Tmle, Weighting::Naive)),
        }
    }

    pub fn is_naive(self) -> bool {
        matches!(self, Self::OnestepNaive | Self::TmleNaive)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Plugin => "plugin",
            Self::Onestep => "onestep",
            Self::Tmle => "tmle",
            Self::OnestepReweighted => "onestep_reweighted",
            Self::TmleReweighted => "tmle_reweighted",
            Self::OnestepNaive => "onestep_naive",
            Self::TmleNaive => "tmle_naive",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator variant `{s}`")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TiltDiagnostics {
    pub xi: f64,
    pub epsilon: f64,
    pub score_c: f64,
    pub score_y: f64,
    pub sampling_iterations: usize,
    pub outcome_iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub plugin: f64,
    pub tilt: Option<TiltDiagnostics>,
    pub g_truncated: usize,
    pub density_floor_hits: usize,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    fn from_nuisance(plugin: f64, nd: &NuisanceDiagnostics) -> Self {
        Self {
            plugin,
            tilt: None,
            g_truncated: nd.g_truncated,
            density_floor_hits: nd.density_floor_hits,
            warnings: nd.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub variant: Variant,
    pub delta: f64,
    pub psi: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub p_value: f64,
    pub n: usize,
    pub diagnostics: Diagnostics,
    /// Per-row influence values behind `se`.
    #[serde(skip)]
    pub eif_values: Vec<f64>,
}

pub const RESULT_CSV_HEADER: &str = "variant,delta,psi,se,ci_lo,ci_hi,p_value,n";

impl EstimateResult {
    /// Maps an estimate on the unit outcome scale back to the original one;
    /// influence values scale by the span and inference is recomputed.
    pub fn to_outcome_scale(&self, scale: OutcomeScale, alpha: f64) -> Result<Self> {
        let eif_values: Vec<f64> = self.eif_values.iter().map(|v| v * scale.span()).collect();
        let psi = scale.from_unit(self.psi);
        let w = wald_inference(psi, &eif_values, alpha)?;
        let mut diagnostics = self.diagnostics.clone();
        diagnostics.plugin = scale.from_unit(diagnostics.plugin);
        Ok(Self { psi, se: w.se, ci_lo: w.ci_lo, ci_hi: w.ci_hi, p_value: w.p_value, diagnostics, eif_values, ..self.clone() })
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.variant, self.delta, self.psi, self.se, self.ci_lo, self.ci_hi, self.p_value, self.n
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldSummary {
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub p_value: f64,
    pub degenerate: bool,
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Wald interval and two-sided p-value for `psi = 0` from influence values.
pub fn wald_inference(psi: f64, eif_values: &[f64], alpha: f64) -> Result<WaldSummary> {
    let n = eif_values.len();
    if n < 2 {
        return Err(Error::InvalidData("inference needs at least two influence values".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config("alpha must lie in (0, 1)".into()));
    }
    let nf = n as f64;
    let mean = eif_values.iter().sum::<f64>() / nf;
    let var = eif_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    let se = (var / nf).sqrt();
    if !(se > 0.0) {
        let p_value = if psi == 0.0 { 1.0 } else { 0.0 };
        return Ok(WaldSummary { se: 0.0, ci_lo: psi, ci_hi: psi, p_value, degenerate: true });
    }
    let z = normal_quantile(1.0 - alpha / 2.0);
    let p_value = (2.0 * Normal::standard().sf(psi.abs() / se)).min(1.0);
    Ok(WaldSummary { se, ci_lo: psi - z * se, ci_hi: psi + z * se, p_value, degenerate: false })
}

/// Substitution estimator `sum_i weight_i Qbar(d(A_i, W_i), W_i)`.
pub fn plugin(set: &NuisanceSet) -> f64 {
    set.qaw_weights.iter().zip(&set.qbar_shift).map(|(w, q)| w * q).sum()
}

/// Observed-data influence value `(c/g) D - (c/g - 1) G`.
pub fn eif_observed(sampled: bool, g: f64, full_data_eif: f64, projection: f64) -> f64 {
    if sampled {
        full_data_eif / g - (1.0 / g - 1.0) * projection
    } else {
        projection
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn influence_values(
    data: &ObservedDataset,
    g: &[f64],
    pseudo: &[f64],
    projection: Option<&[f64]>,
) -> Vec<f64> {
    (0..data.n())
        .map(|i| match projection {
            Some(gp) => eif_observed(data.sampled(i), g[i], pseudo[i], gp[i]),
            None if data.sampled(i) => pseudo[i] / g[i],
            None => 0.0,
        })
        .collect()
}

/// Inputs shared by every estimator at one shift.
#[derive(Debug, Clone)]
pub struct ShiftFit {
    pub set: NuisanceSet,
    pub psi_plugin: f64,
    pub pseudo: Vec<f64>,
    /// Projection values at every row; absent for the reweighted variant.
    pub projection: Option<Vec<f64>>,
}

impl ShiftFit {
    pub fn new(data: &ObservedDataset, set: NuisanceSet, config: &NuisanceConfig, project: bool) -> Result<Self> {
        let psi_plugin = plugin(&set);
        let pseudo = pseudo_outcomes(data, &set, psi_plugin);
        let projection = if project {
            let fit = fit_eif_projection(data, &pseudo, config.projection_method, &config.hal)?;
            Some(projection_values(data, &fit))
        } else {
            None
        };
        Ok(Self { set, psi_plugin, pseudo, projection })
    }

    fn projection_for(&self, weighting: Weighting) -> Result<Option<&[f64]>> {
        match weighting {
            Weighting::Reweighted => Ok(None),
            _ => self
                .projection
                .as_deref()
                .map(Some)
                .ok_or_else(|| Error::Config("augmented estimator needs the projection fit".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorOptions {
    pub alpha: f64,
    /// Build the targeted plug-in from the untilted sampling probabilities.
    pub literal_plugin_weights: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self { alpha: 0.05, literal_plugin_weights: false }
    }
}

fn finish(
    variant: Variant,
    delta: f64,
    psi: f64,
    eif_values: Vec<f64>,
    mut diagnostics: Diagnostics,
    alpha: f64,
) -> Result<EstimateResult> {
    let w = wald_inference(psi, &eif_values, alpha)?;
    if w.degenerate {
        diagnostics.warnings.push("influence values have zero variance; interval is degenerate".into());
    }
    Ok(EstimateResult {
        variant,
        delta,
        psi,
        se: w.se,
        ci_lo: w.ci_lo,
        ci_hi: w.ci_hi,
        p_value: w.p_value,
        n: eif_values.len(),
        diagnostics,
        eif_values,
    })
}

/// Plug-in estimate with the augmented influence values used for its interval.
pub fn plugin_estimate(data: &ObservedDataset, fit: &ShiftFit, opts: &EstimatorOptions) -> Result<EstimateResult> {
    let projection = fit.projection_for(Weighting::Augmented)?;
    let eif = influence_values(data, &fit.set.g, &fit.pseudo, projection);
    let diag = Diagnostics::from_nuisance(fit.psi_plugin, &fit.set.diagnostics);
    finish(Variant::Plugin, fit.set.spec.delta, fit.psi_plugin, eif, diag, opts.alpha)
}

/// Plug-in plus the empirical mean of the estimated influence function.
/// For the naive weighting `data` and `fit` must describe the second-phase
/// subsample, where every sampling probability is one.
pub fn onestep(
    data: &ObservedDataset,
    fit: &ShiftFit,
    weighting: Weighting,
    opts: &EstimatorOptions,
) -> Result<EstimateResult> {
    let projection = fit.projection_for(weighting)?;
    let eif = influence_values(data, &fit.set.g, &fit.pseudo, projection);
    let psi = fit.psi_plugin + mean(&eif);
    let diag = Diagnostics::from_nuisance(fit.psi_plugin, &fit.set.diagnostics);
    finish(Variant::new(EstimatorKind::Onestep, weighting), fit.set.spec.delta, psi, eif, diag, opts.alpha)
}

fn single_covariate(x: &[f64]) -> Design {
    Design::new(x.len(), vec!["tilt".into()], x.to_vec()).expect("consistent buffer")
}

fn tilted_probs(offset: &[f64], x: &[f64], xi: f64, zeta: f64) -> Vec<f64> {
    offset.iter().zip(x).map(|(o, v)| expit(o + xi * v).clamp(zeta, 1.0)).collect()
}

/// Root of the sampling score along `logit g + xi x`. The score
/// `sum G (C/g(xi) - 1)` is nonincreasing in `xi`, so bracketing and
/// bisection always terminate; without a sign change the bracket end with
/// the smaller score is returned.
fn solve_sampling_tilt(offset: &[f64], x: &[f64], c: &[f64], projection: &[f64], zeta: f64) -> f64 {
    let score = |xi: f64| -> f64 {
        let gs = tilted_probs(offset, x, xi, zeta);
        (0..gs.len()).map(|i| projection[i] * (c[i] / gs[i] - 1.0)).sum()
    };
    let s0 = score(0.0);
    if s0 == 0.0 {
        return 0.0;
    }
    let dir = s0.signum();
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut far = 1.0 / scale;
    let mut near = 0.0;
    while score(dir * far) * dir > 0.0 {
        near = far;
        far *= 2.0;
        if far * scale > 1e4 {
            let end = dir * far;
            return if score(end).abs() < s0.abs() { end } else { 0.0 };
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (near + far);
        if mid == near || mid == far {
            break;
        }
        if score(dir * mid) * dir > 0.0 {
            near = mid;
        } else {
            far = mid;
        }
    }
    let (a, b) = (dir * near, dir * far);
    if score(a).abs() <= score(b).abs() { a } else { b }
}

/// Tilts the sampling probabilities along `logit g + xi G/g` until the
/// sampling score `sum (G/g*)(C - g*) / n` vanishes. Returns `g*`.
pub fn tilt_sampling(
    sampled: &[bool],
    g: &[f64],
    projection: &[f64],
    zeta: f64,
    diag: &mut TiltDiagnostics,
) -> Result<Vec<f64>> {
    let n = g.len() as f64;
    let c: Vec<f64> = sampled.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
    let score = |gs: &[f64]| -> f64 {
        (0..gs.len()).map(|i| projection[i] / gs[i] * (c[i] - gs[i])).sum::<f64>().abs() / n
    };
    let mut gs = g.to_vec();
    let mut s = score(&gs);
    let mut iterations = 0;
    while s >= TILT_TOL && iterations < MAX_TILTS {
        let x: Vec<f64> = (0..gs.len()).map(|i| projection[i] / gs[i]).collect();
        if x.iter().all(|v| *v == 0.0) {
            break;
        }
        let offset: Vec<f64> = gs.iter().map(|&p| safe_logit(p)).collect();
        let xi = solve_sampling_tilt(&offset, &x, &c, projection, zeta);
        diag.xi += xi;
        gs = tilted_probs(&offset, &x, xi, zeta);
        iterations += 1;
        s = score(&gs);
    }
    diag.sampling_iterations = iterations;
    diag.score_c = s;
    Ok(gs)
}

/// Tilted outcome regression at the observed and shifted exposures.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedOutcome {
    pub qbar_obs: Vec<f64>,
    pub qbar_shift: Vec<f64>,
}

/// Tilts the outcome regression along `logit Qbar + eps H` with weights
/// `C/g*` until the weighted score `sum (C/g*) H (Y - Qbar*) / n` vanishes.
pub fn tilt_outcome(
    data: &ObservedDataset,
    set: &NuisanceSet,
    g_star: &[f64],
    diag: &mut TiltDiagnostics,
) -> Result<TiltedOutcome> {
    let rows = data.phase_two_indices();
    let n = data.n() as f64;
    let y: Vec<f64> = rows.iter().map(|&i| data.outcome(i)).collect();
    let h: Vec<f64> = rows.iter().map(|&i| set.h_obs[i]).collect();
    let wt: Vec<f64> = rows.iter().map(|&i| 1.0 / g_star[i]).collect();
    let mut q_obs = set.qbar_obs.clone();
    let mut q_shift = set.qbar_shift.clone();
    let score = |q: &[f64]| -> f64 {
        rows.iter().enumerate().map(|(k, &i)| wt[k] * h[k] * (y[k] - q[i])).sum::<f64>().abs() / n
    };
    let mut s = score(&q_obs);
    let mut iterations = 0;
    while s >= TILT_TOL && iterations < MAX_TILTS {
        if h.iter().all(|v| *v == 0.0) {
            break;
        }
        let offset: Vec<f64> = rows.iter().map(|&i| safe_logit(q_obs[i])).collect();
        let fit = fit_logistic(&single_covariate(&h), &y, &wt, Some(&offset))?;
        let eps = fit.coefficients[0];
        diag.epsilon += eps;
        for &i in &rows {
            q_obs[i] = clamp_prob(expit(safe_logit(q_obs[i]) + eps * set.h_obs[i]));
            q_shift[i] = clamp_prob(expit(safe_logit(q_shift[i]) + eps * set.h_shift[i]));
        }
        iterations += 1;
        s = score(&q_obs);
    }
    diag.outcome_iterations = iterations;
    diag.score_y = s;
    Ok(TiltedOutcome { qbar_obs: q_obs, qbar_shift: q_shift })
}

/// Targeted estimator. For the naive weighting `data` and `fit` must
/// describe the second-phase subsample.
pub fn tmle(
    data: &ObservedDataset,
    fit: &ShiftFit,
    weighting: Weighting,
    zeta: f64,
    opts: &EstimatorOptions,
) -> Result<EstimateResult> {
    let set = &fit.set;
    let projection = fit.projection_for(weighting)?;
    let mut tilt = TiltDiagnostics::default();
    let g_star = match projection {
        Some(gp) => tilt_sampling(data.sampling_indicators(), &set.g, gp, zeta, &mut tilt)?,
        None => set.g.clone(),
    };
    let tilted = tilt_outcome(data, set, &g_star, &mut tilt)?;
    let weight_source = if opts.literal_plugin_weights { &set.g } else { &g_star };
    let weights = joint_distribution_weights(data.sampling_indicators(), weight_source);
    let psi: f64 = weights.iter().zip(&tilted.qbar_shift).map(|(w, q)| w * q).sum();

    let pseudo: Vec<f64> = (0..data.n())
        .map(|i| {
            if data.sampled(i) {
                set.h_obs[i] * (data.outcome(i) - tilted.qbar_obs[i]) + tilted.qbar_shift[i] - psi
            } else {
                0.0
            }
        })
        .collect();
    let eif = influence_values(data, &g_star, &pseudo, projection);
    tilt.converged = tilt.score_c < TILT_TOL && tilt.score_y < TILT_TOL;
    let mut diag = Diagnostics::from_nuisance(fit.psi_plugin, &set.diagnostics);
    if !tilt.converged {
        diag.warnings.push("targeting did not solve the score equations to tolerance".into());
    }
    diag.tilt = Some(tilt);
    finish(Variant::new(EstimatorKind::Tmle, weighting), set.spec.delta, psi, eif, diag, opts.alpha)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub nuisance: NuisanceConfig,
    pub options: EstimatorOptions,
}

/// Shift-independent fits for the full sample and, when a naive variant is
/// requested, for the second-phase subsample.
pub struct EstimationContext<'a> {
    data: &'a ObservedDataset,
    config: &'a EstimationConfig,
    full: Option<BaseFits>,
    subset: Option<(ObservedDataset, BaseFits)>,
}

impl<'a> EstimationContext<'a> {
    pub fn new(data: &'a ObservedDataset, config: &'a EstimationConfig, variants: &[Variant]) -> Result<Self> {
        let needs_full = variants.iter().any(|v| !v.is_naive());
        let needs_subset = variants.iter().any(|v| v.is_naive());
        let full = if needs_full { Some(fit_base(data, &config.nuisance)?) } else { None };
        let subset = if needs_subset {
            let sub = data.phase_two_subset()?;
            let fits = fit_base(&sub, &config.nuisance)?;
            Some((sub, fits))
        } else {
            None
        };
        Ok(Self { data, config, full, subset })
    }

    /// Estimates every requested variant at one shift, in the given order.
    pub fn estimate(&self, spec: &ShiftSpec, variants: &[Variant]) -> Result<Vec<EstimateResult>> {
        let cfg = &self.config.nuisance;
        let opts = &self.config.options;
        let full_fit = match &self.full {
            Some(base) if variants.iter().any(|v| !v.is_naive()) => {
                let project = variants
                    .iter()
                    .any(|v| matches!(v, Variant::Plugin | Variant::Onestep | Variant::Tmle));
                Some(ShiftFit::new(self.data, base.at_shift(self.data, spec, cfg)?, cfg, project)?)
            }
            _ => None,
        };
        let sub_fit = match &self.subset {
            Some((sub, base)) if variants.iter().any(|v| v.is_naive()) => {
                Some((sub, ShiftFit::new(sub, base.at_shift(sub, spec, cfg)?, cfg, true)?))
            }
            _ => None,
        };
        variants
            .iter()
            .map(|&v| {
                if v == Variant::Plugin {
                    return plugin_estimate(self.data, full_fit.as_ref().expect("full fit"), opts);
                }
                let (kind, weighting) = v.parts().expect("not the plug-in");
                let (data, fit) = match weighting {
                    Weighting::Naive => {
                        let (sub, fit) = sub_fit.as_ref().expect("subset fit");
                        (*sub, fit)
                    }
                    _ => (self.data, full_fit.as_ref().expect("full fit")),
                };
                match kind {
                    EstimatorKind::Onestep => onestep(data, fit, weighting, opts),
                    EstimatorKind::Tmle => tmle(data, fit, weighting, cfg.zeta, opts),
                }
            })
            .collect()
    }
}

/// One estimate at one shift, fitting every nuisance from scratch.
pub fn estimate(
    data: &ObservedDataset,
    spec: &ShiftSpec,
    variant: Variant,
    config: &EstimationConfig,
) -> Result<EstimateResult> {
    let ctx = EstimationContext::new(data, config, &[variant])?;
    Ok(ctx.estimate(spec, &[variant])?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wald_examples() {
        // Influence values with mean 0 and variance exactly 1.
        let eif: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let w = wald_inference(0.5, &eif, 0.05).unwrap();
        assert!((w.ci_lo - 0.304).abs() < 5e-4 && (w.ci_hi - 0.696).abs() < 5e-4);
        assert!((w.p_value - 5.733e-7).abs() < 1e-9);
        assert_eq!(wald_inference(0.0, &eif, 0.05).unwrap().p_value, 1.0);
    }

    #[test]
    fn zero_variance_is_degenerate() {
        let w = wald_inference(0.3, &[0.0; 10], 0.05).unwrap();
        assert!(w.degenerate);
        assert_eq!((w.se, w.ci_lo, w.ci_hi), (0.0, 0.3, 0.3));
    }

    #[test]
    fn quantile_accuracy() {
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-8);
        assert!((normal_quantile(0.5)).abs() < 1e-12);
    }

    #[test]
    fn eif_observed_cases() {
        assert_eq!(eif_observed(false, 0.4, 9.0, 0.25), 0.25);
        assert_eq!(eif_observed(true, 1.0, 0.2, 0.7), 0.2);
        assert!((eif_observed(true, 0.5, 0.2, 0.1) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{v}\""));
        }
    }

    #[test]
    fn sampling_tilt_is_inert_without_projection() {
        let mut d = TiltDiagnostics::default();
        let g = [0.5, 0.4, 0.9];
        let out = tilt_sampling(&[true, false, true], &g, &[0.0; 3], 0.01, &mut d).unwrap();
        assert_eq!(out, g.to_vec());
        assert_eq!((d.xi, d.sampling_iterations), (0.0, 0));
    }
}
