//! Weighted Gaussian and binomial GLMs with an optional offset.
//!
//! These back the parametric nuisance fits and both logistic tilting steps
//! of the targeted estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, expit, logit, Cholesky, Design};

pub const PROB_FLOOR: f64 = 1e-6;
const SCORE_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
const COEF_BOUND: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Binomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    pub names: Vec<String>,
    pub family: Family,
    pub converged: bool,
    pub iterations: usize,
    pub offset_used: bool,
    pub warnings: Vec<String>,
}

impl GlmFit {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        linalg::dot(&self.coefficients, x)
    }

    /// Response-scale prediction; binomial means are clamped to
    /// `[1e-6, 1 - 1e-6]`.
    pub fn predict(&self, x: &[f64], offset: f64) -> f64 {
        let eta = offset + self.linear_predictor(x);
        match self.family {
            Family::Gaussian => eta,
            Family::Binomial => clamp_prob(expit(eta)),
        }
    }
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

fn check_inputs(x: &Design, y: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    let n = x.nrows();
    if y.len() != n || weights.len() != n {
        return Err(Error::InvalidData(format!(
            "design has {n} rows but y has {} and weights {}",
            y.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidData("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidData("weights sum to zero".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite response".into()));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Weighted least squares. Returns the fit and `sum w r^2 / sum w`.
pub fn fit_wls(x: &Design, y: &[f64], weights: &[f64]) -> Result<(GlmFit, f64)> {
    let w = check_inputs(x, y, weights)?;
    let (xtx, xty) = linalg::weighted_cross_products(x, &w, y);
    let chol = Cholesky::factor(&xtx, x.names())?;
    let beta = chol.solve(&xty);
    let fitted = x.mul_vec(&beta);
    let rss: f64 = (0..y.len()).map(|i| w[i] * (y[i] - fitted[i]).powi(2)).sum();
    Ok((
        GlmFit {
            coefficients: beta,
            names: x.names().to_vec(),
            family: Family::Gaussian,
            converged: true,
            iterations: 1,
            offset_used: false,
            warnings: Vec::new(),
        },
        rss,
    ))
}

fn binomial_deviance(y: &[f64], mu: &[f64], w: &[f64]) -> f64 {
    let mut dev = 0.0;
    for i in 0..y.len() {
        if w[i] == 0.0 {
            continue;
        }
        let m = mu[i].clamp(1e-300, 1.0 - 1e-16);
        if y[i] > 0.0 {
            dev -= w[i] * y[i] * m.ln();
        }
        if y[i] < 1.0 {
            dev -= w[i] * (1.0 - y[i]) * (1.0 - m).ln();
        }
    }
    2.0 * dev
}

/// Weighted logistic regression by IRLS with step halving.
///
/// Responses may be fractional in `[0, 1]`. Iterates until the sup-norm of
/// the (weight-normalized) score is below `1e-8` or 100 iterations. A
/// coefficient whose magnitude exceeds 30 signals separation: it is clamped
/// and the fit is flagged as not converged.
pub fn fit_logistic(x: &Design, y: &[f64], weights: &[f64], offset: Option<&[f64]>) -> Result<GlmFit> {
    let w = check_inputs(x, y, weights)?;
    if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidData("binomial response outside [0,1]".into()));
    }
    let n = x.nrows();
    let p = x.ncols();
    let zero = vec![0.0; n];
    let off = match offset {
        Some(o) if o.len() != n => return Err(Error::InvalidData("offset length mismatch".into())),
        Some(o) => o,
        None => &zero[..],
    };

    let mut beta = vec![0.0; p];
    let mut warnings = Vec::new();
    let mu_of = |beta: &[f64]| -> Vec<f64> {
        (0..n).map(|i| expit(off[i] + linalg::dot(x.row(i), beta))).collect()
    };
    let mut mu = mu_of(&beta);
    let mut dev = binomial_deviance(y, &mu, &w);
    let mut converged = false;
    let mut iterations = 0;
    let mut separated = false;

    while iterations < MAX_ITER {
        let resid: Vec<f64> = (0..n).map(|i| y[i] - mu[i]).collect();
        let mut score = vec![0.0; p];
        for i in 0..n {
            if w[i] == 0.0 {
                continue;
            }
            for (j, s) in score.iter_mut().enumerate() {
                *s += w[i] * resid[i] * x.get(i, j);
            }
        }
        if score.iter().all(|s| s.abs() < SCORE_TOL) {
            converged = true;
            break;
        }
        iterations += 1;
        let vw: Vec<f64> = (0..n).map(|i| w[i] * (mu[i] * (1.0 - mu[i])).max(1e-12)).collect();
        let (info, _) = linalg::weighted_cross_products(x, &vw, &zero);
        let step = Cholesky::factor(&info, x.names())?.solve(&score);

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let cand_mu = mu_of(&cand);
            let cand_dev = binomial_deviance(y, &cand_mu, &w);
            if cand_dev.is_finite() && cand_dev <= dev + 1e-12 * dev.abs().max(1.0) {
                beta = cand;
                mu = cand_mu;
                dev = cand_dev;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            warnings.push("step halving failed to decrease the deviance".into());
            break;
        }
        if beta.iter().any(|b| b.abs() > COEF_BOUND) {
            separated = true;
            break;
        }
    }

    if separated {
        for b in beta.iter_mut() {
            *b = b.clamp(-COEF_BOUND, COEF_BOUND);
        }
        converged = false;
        warnings.push(format!("separation detected; coefficients clamped to +/-{COEF_BOUND}"));
    } else if !converged && warnings.is_empty() {
        warnings.push(format!("IRLS did not converge in {MAX_ITER} iterations"));
    }

    Ok(GlmFit {
        coefficients: beta,
        names: x.names().to_vec(),
        family: Family::Binomial,
        converged,
        iterations,
        offset_used: offset.is_some(),
        warnings,
    })
}

/// Logit of a probability after clamping away from 0 and 1.
pub fn safe_logit(p: f64) -> f64 {
    logit(clamp_prob(p))
}
