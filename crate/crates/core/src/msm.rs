//! Working marginal structural model over a grid of shift estimates.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimators::{normal_quantile, EstimateResult, Variant};
use crate::linalg::{Cholesky, SymMatrix};

/// Basis functions of the shift; `[1, delta]` gives the linear model.
pub type MsmBasis = fn(f64) -> Vec<f64>;

pub fn linear_basis(delta: f64) -> Vec<f64> {
    vec![1.0, delta]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MsmWeights {
    #[default]
    Uniform,
    /// `h_k = 1 / se_k^2`.
    InverseVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsmCoefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsmFit {
    pub model_form: String,
    pub variant: Option<Variant>,
    pub beta: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub coefficients: Vec<MsmCoefficient>,
    pub deltas: Vec<f64>,
    pub psis: Vec<f64>,
    pub h_weights: Vec<f64>,
    pub degenerate: bool,
}

/// Weighted least-squares projection of `psis` on the basis in `deltas`, with
/// delta-method covariance from the per-row influence matrix `eif`
/// (`eif[i][k]` is row `i` at shift `k`).
pub fn fit_msm_with_basis(
    deltas: &[f64],
    psis: &[f64],
    eif: &[Vec<f64>],
    h: &[f64],
    basis: MsmBasis,
    names: &[&str],
    alpha: f64,
) -> Result<MsmFit> {
    let k = deltas.len();
    if psis.len() != k || h.len() != k {
        return Err(Error::InvalidData("deltas, estimates and weights differ in length".into()));
    }
    if eif.iter().any(|row| row.len() != k) {
        return Err(Error::InvalidData("influence matrix columns do not match the shift grid".into()));
    }
    if h.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidData("MSM weights must be finite and nonnegative".into()));
    }
    let m: Vec<Vec<f64>> = deltas.iter().map(|&d| basis(d)).collect();
    let p = names.len();
    if m.iter().any(|r| r.len() != p) {
        return Err(Error::Dimension { expected: p, got: m[0].len() });
    }
    if k < p {
        return Err(Error::InvalidData(format!("{k} shifts cannot identify {p} coefficients")));
    }
    let mut mhm = SymMatrix::zeros(p);
    for a in 0..p {
        for b in 0..=a {
            let v: f64 = (0..k).map(|j| h[j] * m[j][a] * m[j][b]).sum();
            mhm.set(a, b, v);
        }
    }
    let labels: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let chol = Cholesky::factor(&mhm, &labels)
        .map_err(|_| Error::Degenerate("singular MSM normal equations; shifts must differ".into()))?;
    // Row a of the projection matrix (M'HM)^{-1} M'H.
    let proj: Vec<Vec<f64>> = {
        let cols: Vec<Vec<f64>> = (0..k).map(|j| chol.solve(&m[j].iter().map(|v| v * h[j]).collect::<Vec<_>>())).collect();
        (0..p).map(|a| (0..k).map(|j| cols[j][a]).collect()).collect()
    };
    let beta: Vec<f64> = proj.iter().map(|row| row.iter().zip(psis).map(|(a, b)| a * b).sum()).collect();

    let n = eif.len();
    let d_beta: Vec<Vec<f64>> =
        eif.iter().map(|row| proj.iter().map(|pr| pr.iter().zip(row).map(|(a, b)| a * b).sum()).collect()).collect();
    let means: Vec<f64> = (0..p).map(|a| d_beta.iter().map(|r| r[a]).sum::<f64>() / n as f64).collect();
    let mut covariance = vec![vec![0.0; p]; p];
    for a in 0..p {
        for b in 0..p {
            let c: f64 = d_beta.iter().map(|r| (r[a] - means[a]) * (r[b] - means[b])).sum::<f64>() / n as f64;
            covariance[a][b] = c / n as f64;
        }
    }
    let z = normal_quantile(1.0 - alpha / 2.0);
    let mut degenerate = false;
    let coefficients = (0..p)
        .map(|a| {
            let se = covariance[a][a].max(0.0).sqrt();
            let (ci_lo, ci_hi, p_value) = if se > 0.0 {
                (beta[a] - z * se, beta[a] + z * se, (2.0 * Normal::standard().sf(beta[a].abs() / se)).min(1.0))
            } else {
                degenerate = true;
                (beta[a], beta[a], if beta[a] == 0.0 { 1.0 } else { 0.0 })
            };
            MsmCoefficient { name: names[a].to_string(), estimate: beta[a], se, ci_lo, ci_hi, p_value }
        })
        .collect();
    Ok(MsmFit {
        model_form: "linear".into(),
        variant: None,
        beta,
        covariance,
        coefficients,
        deltas: deltas.to_vec(),
        psis: psis.to_vec(),
        h_weights: h.to_vec(),
        degenerate,
    })
}

/// Linear working model `beta_0 + beta_1 delta`.
pub fn fit_msm(deltas: &[f64], psis: &[f64], eif: &[Vec<f64>], h: &[f64], alpha: f64) -> Result<MsmFit> {
    fit_msm_with_basis(deltas, psis, eif, h, linear_basis, &["intercept", "slope"], alpha)
}

/// Linear MSM over estimates of a single variant at distinct shifts.
pub fn fit_msm_from_results(results: &[EstimateResult], weights: MsmWeights, alpha: f64) -> Result<MsmFit> {
    let first = results.first().ok_or_else(|| Error::InvalidData("no estimates for the MSM".into()))?;
    if results.iter().any(|r| r.variant != first.variant) {
        return Err(Error::InvalidData("MSM estimates must come from a single estimator variant".into()));
    }
    let n = first.eif_values.len();
    if results.iter().any(|r| r.eif_values.len() != n) {
        return Err(Error::InvalidData("influence values differ in length across shifts".into()));
    }
    let deltas: Vec<f64> = results.iter().map(|r| r.delta).collect();
    let psis: Vec<f64> = results.iter().map(|r| r.psi).collect();
    let h: Vec<f64> = match weights {
        MsmWeights::Uniform => vec![1.0; results.len()],
        MsmWeights::InverseVariance => {
            if results.iter().any(|r| !(r.se > 0.0)) {
                return Err(Error::Degenerate("inverse-variance weights need positive standard errors".into()));
            }
            results.iter().map(|r| 1.0 / (r.se * r.se)).collect()
        }
    };
    let eif: Vec<Vec<f64>> = (0..n).map(|i| results.iter().map(|r| r.eif_values[i]).collect()).collect();
    let mut fit = fit_msm(&deltas, &psis, &eif, &h, alpha)?;
    fit.variant = Some(first.variant);
    Ok(fit)
}

impl MsmFit {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub const MSM_GRID_HEADER: &str = "delta,psi,ci_lo,ci_hi";

/// Plot-ready rows `delta,psi,ci_lo,ci_hi`.
pub fn msm_grid_rows(results: &[EstimateResult]) -> Vec<String> {
    results.iter().map(|r| format!("{},{},{},{}", r.delta, r.psi, r.ci_lo, r.ci_hi)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeros(n: usize, k: usize) -> Vec<Vec<f64>> {
        vec![vec![0.0; k]; n]
    }

    #[test]
    fn exact_line() {
        let f = fit_msm(&[-1.0, 0.0, 1.0], &[0.1, 0.2, 0.3], &zeros(5, 3), &[1.0; 3], 0.05).unwrap();
        assert!((f.beta[0] - 0.2).abs() < 1e-14 && (f.beta[1] - 0.1).abs() < 1e-14);
        assert!(f.degenerate);
        assert!(f.covariance.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_estimates() {
        let f = fit_msm(&[-1.0, 0.5, 2.0], &[0.4; 3], &zeros(3, 3), &[1.0, 2.0, 3.0], 0.05).unwrap();
        assert!((f.beta[0] - 0.4).abs() < 1e-14 && f.beta[1].abs() < 1e-14);
    }

    #[test]
    fn equal_shifts_are_singular() {
        assert!(fit_msm(&[0.5, 0.5], &[0.1, 0.2], &zeros(2, 2), &[1.0; 2], 0.05).is_err());
    }
}
