//! Weighted lasso by cyclic coordinate descent over a binary basis.
//!
//! The penalized objective is `L(b0, beta) + lambda * |beta|_1`, where `L` is
//! half the weighted squared error (Gaussian) or the weighted negative
//! log-likelihood (binomial), with weights normalized to sum to one. The
//! intercept is unpenalized. Binomial fits use an outer IRLS loop around the
//! Gaussian solver.

use crate::glm::Family;
use crate::hal::basis::BasisMatrix;
use crate::linalg::expit;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once no coordinate update changes the quadratic objective by
    /// more than this (`h_j * delta_j^2`, weights summing to one).
    pub tol: f64,
    pub max_sweeps: usize,
    pub max_outer: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_sweeps: 20_000, max_outer: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub lambda: f64,
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub converged: bool,
}

impl PathPoint {
    pub fn nonzeros(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }

    /// Linear predictor at every row of `x`.
    pub fn linear_predictor(&self, x: &BasisMatrix) -> Vec<f64> {
        let mut eta = vec![self.intercept; x.nrows];
        for (j, &b) in self.beta.iter().enumerate() {
            if b != 0.0 {
                for &i in &x.cols[j] {
                    eta[i as usize] += b;
                }
            }
        }
        eta
    }
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

fn normalized(w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Smallest penalty at which every basis coefficient is zero.
pub fn lambda_max(x: &BasisMatrix, y: &[f64], w: &[f64]) -> f64 {
    let w = normalized(w);
    let mean: f64 = w.iter().zip(y).map(|(a, b)| a * b).sum();
    x.cols
        .iter()
        .map(|rows| rows.iter().map(|&i| w[i as usize] * (y[i as usize] - mean)).sum::<f64>().abs())
        .fold(0.0, f64::max)
}

/// `count` log-spaced values from `max` down to `max * min_ratio`.
pub fn log_grid(max: f64, min_ratio: f64, count: usize) -> Vec<f64> {
    let max = if max > 0.0 { max } else { 1e-10 };
    if count == 1 {
        return vec![max];
    }
    let (hi, lo) = (max.ln(), (max * min_ratio).ln());
    (0..count).map(|k| (hi + (lo - hi) * k as f64 / (count - 1) as f64).exp()).collect()
}

struct CdState<'a> {
    x: &'a BasisMatrix,
    v: Vec<f64>,
    hv: Vec<f64>,
    sv: f64,
    resid: Vec<f64>,
}

impl CdState<'_> {
    fn new<'a>(x: &'a BasisMatrix, v: Vec<f64>, resid: Vec<f64>) -> CdState<'a> {
        let hv = x.cols.iter().map(|rows| rows.iter().map(|&i| v[i as usize]).sum()).collect();
        let sv = v.iter().sum();
        CdState { x, v, hv, sv, resid }
    }

    fn update_intercept(&mut self, b0: &mut f64) -> f64 {
        if self.sv <= 0.0 {
            return 0.0;
        }
        let g: f64 = self.v.iter().zip(&self.resid).map(|(a, b)| a * b).sum();
        let d = g / self.sv;
        if d != 0.0 {
            *b0 += d;
            for r in self.resid.iter_mut() {
                *r -= d;
            }
        }
        self.sv * d * d
    }

    fn update(&mut self, j: usize, beta: &mut [f64], lambda: f64) -> f64 {
        let h = self.hv[j];
        if h <= 0.0 {
            return 0.0;
        }
        let rows = &self.x.cols[j];
        let g: f64 = rows.iter().map(|&i| self.v[i as usize] * self.resid[i as usize]).sum();
        let new = soft_threshold(g + h * beta[j], lambda) / h;
        let d = new - beta[j];
        if d == 0.0 {
            return 0.0;
        }
        for &i in rows {
            self.resid[i as usize] -= d;
        }
        beta[j] = new;
        h * d * d
    }

    /// Cycles until a full sweep moves nothing by more than `tol`.
    fn run(&mut self, b0: &mut f64, beta: &mut [f64], lambda: f64, opts: &SolverOptions) -> bool {
        let p = beta.len();
        let mut sweeps = 0;
        loop {
            let mut chg = self.update_intercept(b0);
            for j in 0..p {
                chg = chg.max(self.update(j, beta, lambda));
            }
            sweeps += 1;
            if chg < opts.tol {
                return true;
            }
            if sweeps >= opts.max_sweeps {
                return false;
            }
            let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
            loop {
                let mut chg = self.update_intercept(b0);
                for &j in &active {
                    chg = chg.max(self.update(j, beta, lambda));
                }
                sweeps += 1;
                if chg < opts.tol {
                    break;
                }
                if sweeps >= opts.max_sweeps {
                    return false;
                }
            }
        }
    }
}

/// Warm-started solutions along a decreasing penalty sequence.
///
/// `w` may contain zeros; those rows do not enter the fit.
pub fn solve_path(
    x: &BasisMatrix,
    y: &[f64],
    w: &[f64],
    family: Family,
    lambdas: &[f64],
    opts: &SolverOptions,
) -> Vec<PathPoint> {
    let w = normalized(w);
    let p = x.ncols();
    let mean: f64 = w.iter().zip(y).map(|(a, b)| a * b).sum();
    let mut beta = vec![0.0; p];
    let mut out = Vec::with_capacity(lambdas.len());
    match family {
        Family::Gaussian => {
            let mut b0 = mean;
            let resid: Vec<f64> = y.iter().map(|v| v - mean).collect();
            let mut state = CdState::new(x, w, resid);
            for &lambda in lambdas {
                let converged = state.run(&mut b0, &mut beta, lambda, opts);
                out.push(PathPoint { lambda, intercept: b0, beta: beta.clone(), converged });
            }
        }
        Family::Binomial => {
            let m = mean.clamp(1e-6, 1.0 - 1e-6);
            let mut b0 = (m / (1.0 - m)).ln();
            for &lambda in lambdas {
                let mut converged = false;
                for _ in 0..opts.max_outer {
                    let point = PathPoint { lambda, intercept: b0, beta: beta.clone(), converged: false };
                    let eta = point.linear_predictor(x);
                    let mut v = Vec::with_capacity(eta.len());
                    let mut resid = Vec::with_capacity(eta.len());
                    for i in 0..eta.len() {
                        let pr = expit(eta[i]).clamp(1e-5, 1.0 - 1e-5);
                        let var = pr * (1.0 - pr);
                        v.push(w[i] * var);
                        resid.push((y[i] - pr) / var);
                    }
                    let mut state = CdState::new(x, v, resid);
                    let (b0_old, beta_old) = (b0, beta.clone());
                    let inner_ok = state.run(&mut b0, &mut beta, lambda, opts);
                    let mut chg = state.sv * (b0 - b0_old).powi(2);
                    for j in 0..p {
                        chg = chg.max(state.hv[j] * (beta[j] - beta_old[j]).powi(2));
                    }
                    if chg < opts.tol && inner_ok {
                        converged = true;
                        break;
                    }
                }
                out.push(PathPoint { lambda, intercept: b0, beta: beta.clone(), converged });
            }
        }
    }
    out
}

/// Weighted loss gradient `sum_i w_i (y_i - mu_i) x_ij` at a path point, with
/// normalized weights. At a lasso solution every entry is bounded by `lambda`.
pub fn loss_gradient(x: &BasisMatrix, y: &[f64], w: &[f64], family: Family, point: &PathPoint) -> Vec<f64> {
    let w = normalized(w);
    let eta = point.linear_predictor(x);
    let resid: Vec<f64> = match family {
        Family::Gaussian => (0..y.len()).map(|i| y[i] - eta[i]).collect(),
        Family::Binomial => (0..y.len()).map(|i| y[i] - expit(eta[i])).collect(),
    };
    x.cols
        .iter()
        .map(|rows| rows.iter().map(|&i| w[i as usize] * resid[i as usize]).sum())
        .collect()
}
