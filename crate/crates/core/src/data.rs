//! Observed two-phase data, CSV ingestion and the additive shift intervention.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::density::ConditionalDensity;
use crate::error::{Error, Result};

/// Min-max constants applied to a continuous outcome at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeScale {
    pub min: f64,
    pub max: f64,
}

impl OutcomeScale {
    pub fn to_unit(&self, y: f64) -> f64 {
        (y - self.min) / (self.max - self.min)
    }

    pub fn from_unit(&self, y: f64) -> f64 {
        self.min + (self.max - self.min) * y
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }
}

/// Untyped table as read from disk: a header and string cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ValidateOptions {
    /// Min-max scale `y` onto [0, 1] instead of rejecting values outside it.
    pub scale_outcome: bool,
}

/// Two-phase sample `(W, C, C·A, Y)`.
///
/// The exposure is stored as `None` wherever `C = 0`; it is never read as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedDataset {
    covariate_names: Vec<String>,
    w: Vec<f64>,
    a: Vec<Option<f64>>,
    y: Vec<f64>,
    c: Vec<bool>,
    weights: Option<Vec<f64>>,
    ids: Vec<usize>,
    outcome_scale: Option<OutcomeScale>,
}

impl ObservedDataset {
    /// Builds and validates a dataset. `w` is row-major `n x p`.
    pub fn new(
        covariate_names: Vec<String>,
        w: Vec<f64>,
        a: Vec<Option<f64>>,
        y: Vec<f64>,
        c: Vec<bool>,
    ) -> Result<Self> {
        let n = y.len();
        let ds = Self {
            covariate_names,
            w,
            a,
            y,
            c,
            weights: None,
            ids: (0..n).collect(),
            outcome_scale: None,
        };
        ds.check()?;
        Ok(ds)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.weights = Some(weights);
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<()> {
        let n = self.y.len();
        let p = self.covariate_names.len();
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 rows, found {n}")));
        }
        if self.w.len() != n * p || self.a.len() != n || self.c.len() != n {
            return Err(Error::InvalidData("column lengths disagree".into()));
        }
        for i in 0..n {
            let y = self.y[i];
            if !y.is_finite() || !(0.0..=1.0).contains(&y) {
                return Err(Error::Row { row: i, message: "outcome outside [0,1]".into() });
            }
            if self.w[i * p..(i + 1) * p].iter().any(|v| !v.is_finite()) {
                return Err(Error::Row { row: i, message: "non-finite covariate".into() });
            }
            match (self.c[i], self.a[i]) {
                (true, None) => {
                    return Err(Error::Row { row: i, message: "A missing in second-phase row".into() })
                }
                (true, Some(a)) if !a.is_finite() => {
                    return Err(Error::Row { row: i, message: "non-finite exposure".into() })
                }
                (false, Some(_)) => {
                    return Err(Error::Row { row: i, message: "A recorded outside the second phase".into() })
                }
                _ => {}
            }
        }
        if let Some(wt) = &self.weights {
            if wt.len() != n {
                return Err(Error::InvalidData("weight column length disagrees".into()));
            }
            if let Some(i) = wt.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Row { row: i, message: "weight must be finite and nonnegative".into() });
            }
        }
        if self.phase_two_count() == 0 {
            return Err(Error::InvalidData("no second-phase rows (C=1)".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariates(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.w[i * p..(i + 1) * p]
    }

    /// Exposure of row `i`; an error for first-phase-only rows.
    pub fn exposure(&self, i: usize) -> Result<f64> {
        self.a[i].ok_or(Error::Row { row: i, message: "exposure is undefined where C=0".into() })
    }

    pub fn exposure_opt(&self, i: usize) -> Option<f64> {
        self.a[i]
    }

    pub fn outcome(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.y
    }

    pub fn sampled(&self, i: usize) -> bool {
        self.c[i]
    }

    pub fn sampling_indicators(&self) -> &[bool] {
        &self.c
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn outcome_scale(&self) -> Option<OutcomeScale> {
        self.outcome_scale
    }

    pub fn phase_two_count(&self) -> usize {
        self.c.iter().filter(|&&c| c).count()
    }

    pub fn phase_two_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.c[i]).collect()
    }

    pub fn all_sampled(&self) -> bool {
        self.c.iter().all(|&c| c)
    }

    /// The second-phase rows alone, as a fully observed dataset.
    pub fn phase_two_subset(&self) -> Result<Self> {
        let idx = self.phase_two_indices();
        let p = self.p();
        let mut w = Vec::with_capacity(idx.len() * p);
        for &i in &idx {
            w.extend_from_slice(self.covariates(i));
        }
        let mut sub = Self {
            covariate_names: self.covariate_names.clone(),
            w,
            a: idx.iter().map(|&i| self.a[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            c: vec![true; idx.len()],
            weights: self.weights.as_ref().map(|wt| idx.iter().map(|&i| wt[i]).collect()),
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
            outcome_scale: self.outcome_scale,
        };
        sub.check()?;
        sub.outcome_scale = self.outcome_scale;
        Ok(sub)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self.covariate_names.clone();
        header.extend(["a", "y", "c"].map(String::from));
        if self.weights.is_some() {
            header.push("weight".into());
        }
        wtr.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.covariates(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.a[i].map(|a| a.to_string()).unwrap_or_default());
            let y = match self.outcome_scale {
                Some(s) => s.from_unit(self.y[i]),
                None => self.y[i],
            };
            rec.push(y.to_string());
            rec.push(if self.c[i] { "1".into() } else { "0".into() });
            if let Some(wt) = &self.weights {
                rec.push(wt[i].to_string());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, opts: ValidateOptions) -> Result<Self> {
        validate(&RawTable::from_csv(reader)?, opts)
    }
}

fn parse_cell(row: usize, col: &str, cell: &str) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| Error::Row {
        row,
        message: format!("cannot parse `{cell}` in column `{col}`"),
    })
}

/// Converts a raw table with header `w1,...,wp,a,y,c[,weight]` into a
/// validated dataset. Every column not named `a`, `y`, `c` or `weight` is a
/// covariate, kept in header order.
pub fn validate(raw: &RawTable, opts: ValidateOptions) -> Result<ObservedDataset> {
    let col = |name: &str| raw.column(name).ok_or_else(|| Error::MissingColumn(name.into()));
    let (ia, iy, ic) = (col("a")?, col("y")?, col("c")?);
    let iwt = raw.column("weight");
    let cov_idx: Vec<usize> = (0..raw.header.len())
        .filter(|&j| j != ia && j != iy && j != ic && Some(j) != iwt)
        .collect();
    let names: Vec<String> = cov_idx.iter().map(|&j| raw.header[j].clone()).collect();

    let n = raw.rows.len();
    let mut w = Vec::with_capacity(n * names.len());
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let mut weights = iwt.map(|_| Vec::with_capacity(n));
    for (i, row) in raw.rows.iter().enumerate() {
        if row.len() != raw.header.len() {
            return Err(Error::Row { row: i, message: format!("expected {} fields", raw.header.len()) });
        }
        for &j in &cov_idx {
            w.push(parse_cell(i, &raw.header[j], &row[j])?);
        }
        let ci = match row[ic].as_str() {
            "1" | "1.0" => true,
            "0" | "0.0" => false,
            other => return Err(Error::Row { row: i, message: format!("c must be 0 or 1, found `{other}`") }),
        };
        let cell_a = row[ia].as_str();
        let ai = if ci {
            if cell_a.is_empty() || cell_a.eq_ignore_ascii_case("na") {
                return Err(Error::Row { row: i, message: "A missing in second-phase row".into() });
            }
            Some(parse_cell(i, "a", cell_a)?)
        } else {
            None
        };
        c.push(ci);
        a.push(ai);
        y.push(parse_cell(i, "y", &row[iy])?);
        if let (Some(ws), Some(j)) = (weights.as_mut(), iwt) {
            ws.push(parse_cell(i, "weight", &row[j])?);
        }
    }

    let mut scale = None;
    if opts.scale_outcome {
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Row { row: i, message: "non-finite outcome".into() });
        }
        let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(Error::Degenerate("outcome is constant; cannot scale".into()));
        }
        let s = OutcomeScale { min: lo, max: hi };
        for v in y.iter_mut() {
            *v = s.to_unit(*v);
        }
        scale = Some(s);
    }

    let mut ds = ObservedDataset::new(names, w, a, y, c)?;
    if let Some(ws) = weights {
        ds = ds.with_weights(ws)?;
    }
    ds.outcome_scale = scale;
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportMode {
    /// `u(w)` is the largest exposure seen in the second phase.
    EmpiricalMax,
    /// `u(w) = sup{a : q(a|w) >= density_eps}` from a fitted density.
    DensityThreshold,
    /// `u(w) = +inf`, for exposures whose support is known to be unbounded.
    Unbounded,
}

/// Constant additive shift `d(a, w) = a + delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub delta: f64,
    pub support_mode: SupportMode,
    pub density_eps: f64,
}

impl ShiftSpec {
    pub fn new(delta: f64) -> Self {
        Self { delta, support_mode: SupportMode::EmpiricalMax, density_eps: 1e-3 }
    }

    pub fn with_support(mut self, mode: SupportMode) -> Self {
        self.support_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta.is_finite() {
            return Err(Error::Config("shift must be finite".into()));
        }
        if !(self.density_eps > 0.0 && self.density_eps < 1.0) {
            return Err(Error::Config("density_eps must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Upper bound `u(w)` of the exposure support.
#[derive(Clone)]
pub enum SupportBound {
    Unbounded,
    Constant(f64),
    Threshold { density: Arc<dyn ConditionalDensity>, eps: f64 },
}

impl fmt::Debug for SupportBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Unbounded => write!(f, "Unbounded"),
            Self::Constant(u) => write!(f, "Constant({u})"),
            Self::Threshold { eps, .. } => write!(f, "Threshold {{ eps: {eps} }}"),
        }
    }
}

impl SupportBound {
    pub fn upper(&self, w: &[f64]) -> f64 {
        match self {
            Self::Unbounded => f64::INFINITY,
            Self::Constant(u) => *u,
            Self::Threshold { density, eps } => density.upper_support(w, *eps),
        }
    }
}

/// `d(a, w)`: shifted exposure, or `a` itself when the shift leaves the support.
pub fn shift(a: f64, w: &[f64], spec: &ShiftSpec, bound: &SupportBound) -> f64 {
    let shifted = a + spec.delta;
    if shifted <= bound.upper(w) {
        shifted
    } else {
        a
    }
}

/// Estimates `u(w)`. The density-threshold mode needs a fitted exposure density.
pub fn estimate_support_bound(
    data: &ObservedDataset,
    spec: &ShiftSpec,
    density: Option<Arc<dyn ConditionalDensity>>,
) -> Result<SupportBound> {
    spec.validate()?;
    let max_a = data
        .a
        .iter()
        .flatten()
        .cloned()
        .fold(None, |m: Option<f64>, a| Some(m.map_or(a, |m| m.max(a))))
        .ok_or_else(|| Error::InvalidData("no second-phase rows (C=1)".into()))?;
    match spec.support_mode {
        SupportMode::EmpiricalMax => Ok(SupportBound::Constant(max_a)),
        SupportMode::Unbounded => Ok(SupportBound::Unbounded),
        SupportMode::DensityThreshold => match density {
            Some(d) => Ok(SupportBound::Threshold { density: d, eps: spec.density_eps }),
            None => Err(Error::Config("density_threshold support needs a fitted exposure density".into())),
        },
    }
}
