//! Small dense linear algebra for the parametric fits.
//!
//! Designs in this crate have a handful of columns, so a row-major buffer and
//! a Cholesky factorization of the normal equations are all that is needed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense design matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
    names: Vec<String>,
}

impl Design {
    pub fn new(nrows: usize, names: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let ncols = names.len();
        if data.len() != nrows * ncols {
            return Err(Error::InvalidData(format!(
                "design buffer has {} entries, expected {}x{}",
                data.len(),
                nrows,
                ncols
            )));
        }
        Ok(Self { nrows, ncols, data, names })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = names.len();
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(Error::Row {
                    row: i,
                    message: format!("expected {} columns, found {}", ncols, row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), names, data)
    }

    /// Intercept-only design with `n` rows.
    pub fn intercept(n: usize) -> Self {
        Self { nrows: n, ncols: 1, data: vec![1.0; n], names: vec!["(intercept)".into()] }
    }

    /// Design with zero columns; the fit then only involves the offset.
    pub fn empty(n: usize) -> Self {
        Self { nrows: n, ncols: 0, data: Vec::new(), names: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    /// `X b` for a coefficient vector of matching length.
    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        debug_assert_eq!(beta.len(), self.ncols);
        (0..self.nrows).map(|i| dot(self.row(i), beta)).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric matrix stored densely, row-major, used for `X'WX`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }
}

/// `X' diag(w) X` and `X' diag(w) z`.
pub fn weighted_cross_products(x: &Design, w: &[f64], z: &[f64]) -> (SymMatrix, Vec<f64>) {
    let p = x.ncols();
    let mut xtx = SymMatrix::zeros(p);
    let mut xtz = vec![0.0; p];
    for i in 0..x.nrows() {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        let row = x.row(i);
        for a in 0..p {
            let wa = wi * row[a];
            xtz[a] += wa * z[i];
            for b in a..p {
                xtx.data[a * p + b] += wa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx.data[a * p + b] = xtx.data[b * p + a];
        }
    }
    (xtx, xtz)
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factorizes `a`; a pivot that collapses relative to its diagonal marks
    /// that column as a linear combination of the earlier ones. All such
    /// columns are reported through `Error::Collinear`.
    pub fn factor(a: &SymMatrix, names: &[String]) -> Result<Self> {
        let n = a.dim;
        let mut l = vec![0.0; n * n];
        let mut collinear = Vec::new();
        for j in 0..n {
            let diag = a.get(j, j);
            let mut d = diag;
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 1e-10 * diag.abs().max(f64::MIN_POSITIVE)) || diag <= 0.0 {
                collinear.push(names.get(j).cloned().unwrap_or_else(|| format!("x{j}")));
                // Keep factoring so every offending column gets named.
                l[j * n + j] = 1.0;
                continue;
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        if !collinear.is_empty() {
            return Err(Error::Collinear(collinear));
        }
        Ok(Self { dim: n, lower: l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        y
    }

    pub fn inverse(&self) -> SymMatrix {
        let n = self.dim;
        let mut inv = SymMatrix::zeros(n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        inv
    }
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
