//! Zero-order indicator basis: products of `1{x_j >= knot_j}` over covariate
//! subsets of bounded size.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Design;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisColumn {
    pub vars: Vec<usize>,
    pub cutoffs: Vec<f64>,
}

impl BasisColumn {
    pub fn eval(&self, x: &[f64]) -> bool {
        self.vars.iter().zip(&self.cutoffs).all(|(&v, &c)| x[v] >= c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisMap {
    pub n_covariates: usize,
    pub max_degree: usize,
    pub knots: Vec<Vec<f64>>,
    pub subsets: Vec<Vec<usize>>,
    pub columns: Vec<BasisColumn>,
}

/// Binary design stored column-wise as the rows where the indicator is one.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub nrows: usize,
    pub cols: Vec<Vec<u32>>,
}

impl BasisMatrix {
    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    /// Dense 0/1 copy, for tests and small problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols()]; self.nrows];
        for (j, rows) in self.cols.iter().enumerate() {
            for &i in rows {
                out[i as usize][j] = 1.0;
            }
        }
        out
    }
}

/// Knots for one covariate: every distinct value when there are at most
/// `max_knots` of them, otherwise order statistics at equally spaced ranks.
/// A constant covariate gets no knots.
pub fn select_knots(values: &[f64], max_knots: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut unique = sorted.clone();
    unique.dedup();
    if unique.len() <= 1 {
        return Vec::new();
    }
    if unique.len() <= max_knots {
        return unique;
    }
    let n = sorted.len();
    let mut knots: Vec<f64> = (0..max_knots)
        .map(|k| {
            let pos = (k as f64 * (n - 1) as f64 / (max_knots - 1) as f64).round() as usize;
            sorted[pos]
        })
        .collect();
    knots.dedup();
    knots
}

fn combinations(p: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, p: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in start..p {
            cur.push(v);
            rec(v + 1, p, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, p, k, &mut Vec::new(), &mut out);
    out
}

impl BasisMap {
    /// Builds the basis from training covariates with quantile knots.
    pub fn build(x: &Design, max_degree: usize, max_knots_per_dim: usize) -> Result<(Self, BasisMatrix)> {
        if max_knots_per_dim < 2 {
            return Err(Error::Config("max_knots_per_dim must be at least 2".into()));
        }
        let knots = (0..x.ncols())
            .map(|j| {
                let col: Vec<f64> = (0..x.nrows()).map(|i| x.get(i, j)).collect();
                select_knots(&col, max_knots_per_dim)
            })
            .collect();
        Self::build_with_knots(x, knots, max_degree)
    }

    /// Builds the basis for explicitly supplied per-covariate knots.
    ///
    /// Columns that are zero on every training row, or whose training pattern
    /// repeats an earlier column, are dropped.
    pub fn build_with_knots(x: &Design, knots: Vec<Vec<f64>>, max_degree: usize) -> Result<(Self, BasisMatrix)> {
        let p = x.ncols();
        if knots.len() != p {
            return Err(Error::Dimension { expected: p, got: knots.len() });
        }
        if max_degree == 0 || (p > 0 && max_degree > p) {
            return Err(Error::Config(format!("max_degree must lie in [1, {p}]")));
        }
        let n = x.nrows();
        let usable: Vec<usize> = (0..p).filter(|&j| !knots[j].is_empty()).collect();
        let mut subsets = Vec::new();
        for k in 1..=max_degree.min(usable.len()) {
            for combo in combinations(usable.len(), k) {
                subsets.push(combo.iter().map(|&c| usable[c]).collect::<Vec<_>>());
            }
        }

        let mut columns = Vec::new();
        let mut cols = Vec::new();
        let mut seen: HashSet<Vec<u32>> = HashSet::new();
        let all_rows: Vec<u32> = (0..n as u32).collect();
        for subset in &subsets {
            let mut cut = Vec::with_capacity(subset.len());
            expand(x, &knots, subset, 0, &all_rows, &mut cut, &mut |cutoffs, rows| {
                if rows.is_empty() || !seen.insert(rows.to_vec()) {
                    return;
                }
                columns.push(BasisColumn { vars: subset.clone(), cutoffs: cutoffs.to_vec() });
                cols.push(rows.to_vec());
            });
        }
        let map = Self { n_covariates: p, max_degree, knots, subsets, columns };
        Ok((map, BasisMatrix { nrows: n, cols }))
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    /// Column holding the given `(subset, knot tuple)`, if any.
    pub fn column_index(&self, vars: &[usize], cutoffs: &[f64]) -> Option<usize> {
        self.columns.iter().position(|c| c.vars == vars && c.cutoffs == cutoffs)
    }

    /// Evaluates every basis column at new covariate rows.
    pub fn evaluate(&self, x: &Design) -> Result<BasisMatrix> {
        if x.ncols() != self.n_covariates {
            return Err(Error::Dimension { expected: self.n_covariates, got: x.ncols() });
        }
        let cols = self
            .columns
            .iter()
            .map(|c| (0..x.nrows()).filter(|&i| c.eval(x.row(i))).map(|i| i as u32).collect())
            .collect();
        Ok(BasisMatrix { nrows: x.nrows(), cols })
    }
}

fn expand<F: FnMut(&[f64], &[u32])>(
    x: &Design,
    knots: &[Vec<f64>],
    subset: &[usize],
    depth: usize,
    rows: &[u32],
    cutoffs: &mut Vec<f64>,
    emit: &mut F,
) {
    if depth == subset.len() {
        emit(cutoffs, rows);
        return;
    }
    let v = subset[depth];
    for &k in &knots[v] {
        let kept: Vec<u32> = rows.iter().copied().filter(|&i| x.get(i as usize, v) >= k).collect();
        if kept.is_empty() {
            // Knots are sorted, so larger cutoffs are empty as well.
            break;
        }
        cutoffs.push(k);
        expand(x, knots, subset, depth + 1, &kept, cutoffs, emit);
        cutoffs.pop();
    }
}
