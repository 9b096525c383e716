//! Replication driver and aggregate metrics.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ShiftSpec, SupportMode};
use crate::error::{Error, Result};
use crate::estimators::{EstimationConfig, EstimationContext, EstimatorOptions, Variant};
use crate::nuisance::NuisanceConfig;
use crate::sim::dgp::{generate_with, true_psi, DgpName, SpreadReading};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpTemplate {
    pub name: DgpName,
    #[serde(default)]
    pub w1_spread: SpreadReading,
}

fn default_truth_draws() -> usize {
    1_000_000
}

fn default_support() -> SupportMode {
    SupportMode::Unbounded
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub dgp: DgpTemplate,
    pub sample_sizes: Vec<usize>,
    pub deltas: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub nuisance: NuisanceConfig,
    #[serde(default)]
    pub options: EstimatorOptions,
    #[serde(default = "default_support")]
    pub support_mode: SupportMode,
    #[serde(default = "default_truth_draws")]
    pub truth_draws: usize,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Default output directory when none is given on the command line.
    #[serde(default)]
    pub output: Option<String>,
}

impl StudyConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.iter().any(|&n| n < 10) {
            return Err(Error::Config("sample sizes must be given and at least 10".into()));
        }
        if self.deltas.is_empty() || self.deltas.iter().any(|d| !d.is_finite()) {
            return Err(Error::Config("deltas must be given and finite".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("no estimator variants selected".into()));
        }
        if self.truth_draws < 100_000 {
            return Err(Error::Config("truth_draws must be at least 100000".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        self.nuisance.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub variant: Variant,
    pub n: usize,
    pub delta: f64,
    pub rep: usize,
    pub psi_hat: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub truth: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: Variant,
    pub n: usize,
    pub delta: f64,
    pub sqrt_n_bias: f64,
    pub n_mse: f64,
    pub coverage_95: f64,
    pub mean_ci_width: f64,
    pub reps_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub n: usize,
    pub rep: usize,
    pub delta: Option<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutput {
    pub raw: Vec<RawRow>,
    pub metrics: Vec<MetricsRow>,
    pub failures: Vec<RepFailure>,
    pub truths: Vec<(f64, f64)>,
}

pub const RAW_HEADER: &str = "variant,n,delta,rep,psi_hat,se,ci_lo,ci_hi,truth,covered";
pub const METRICS_HEADER: &str = "variant,n,delta,sqrt_n_bias,n_mse,coverage_95,mean_ci_width,reps_used";

impl StudyOutput {
    pub fn raw_csv(&self) -> String {
        let mut s = format!("{RAW_HEADER}\n");
        for r in &self.raw {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.variant, r.n, r.delta, r.rep, r.psi_hat, r.se, r.ci_lo, r.ci_hi, r.truth, r.covered as u8
            );
        }
        s
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = format!("{METRICS_HEADER}\n");
        for m in &self.metrics {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                m.variant, m.n, m.delta, m.sqrt_n_bias, m.n_mse, m.coverage_95, m.mean_ci_width, m.reps_used
            );
        }
        s
    }
}

/// Random stream for replication `rep` at sample size `n`.
pub fn rep_rng(master: u64, n: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(rep as u64);
    rng
}

/// Metrics for one cell from its replications.
pub fn aggregate(variant: Variant, n: usize, delta: f64, rows: &[&RawRow]) -> MetricsRow {
    let k = rows.len() as f64;
    let nf = n as f64;
    let (mut bias, mut mse, mut cov, mut width) = (0.0, 0.0, 0.0, 0.0);
    for r in rows {
        let e = r.psi_hat - r.truth;
        bias += e;
        mse += e * e;
        cov += r.covered as u8 as f64;
        width += r.ci_hi - r.ci_lo;
    }
    MetricsRow {
        variant,
        n,
        delta,
        sqrt_n_bias: nf.sqrt() * bias / k,
        n_mse: nf * mse / k,
        coverage_95: cov / k,
        mean_ci_width: width / k,
        reps_used: rows.len(),
    }
}

type RepOutcome = (Vec<RawRow>, Vec<RepFailure>);

fn run_rep(cfg: &StudyConfig, est: &EstimationConfig, truths: &[(f64, f64)], n: usize, rep: usize) -> RepOutcome {
    let mut rng = rep_rng(cfg.seed, n, rep);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let fail = |delta: Option<f64>, e: Error| RepFailure { n, rep, delta, message: e.to_string() };
    let data = match generate_with(cfg.dgp.name, n, cfg.dgp.w1_spread, &mut rng) {
        Ok((d, _)) => d,
        Err(e) => return (rows, vec![fail(None, e)]),
    };
    let ctx = match EstimationContext::new(&data, est, &cfg.variants) {
        Ok(c) => c,
        Err(e) => return (rows, vec![fail(None, e)]),
    };
    for &(delta, truth) in truths {
        let spec = ShiftSpec::new(delta).with_support(cfg.support_mode);
        match ctx.estimate(&spec, &cfg.variants) {
            Ok(results) => rows.extend(results.into_iter().map(|r| RawRow {
                variant: r.variant,
                n,
                delta,
                rep,
                psi_hat: r.psi,
                se: r.se,
                ci_lo: r.ci_lo,
                ci_hi: r.ci_hi,
                truth,
                covered: r.ci_lo <= truth && truth <= r.ci_hi,
            })),
            Err(e) => failures.push(fail(Some(delta), e)),
        }
    }
    (rows, failures)
}

/// Runs every `(n, rep)` replication, estimating all shifts and variants on
/// each simulated sample. Output order does not depend on `workers`.
pub fn run_study(
    cfg: &StudyConfig,
    workers: Option<usize>,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<StudyOutput> {
    cfg.validate()?;
    let workers = workers.or(cfg.workers).unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let est = EstimationConfig { nuisance: cfg.nuisance.clone(), options: cfg.options };

    pool.install(|| {
        let truths: Vec<(f64, f64)> = cfg
            .deltas
            .iter()
            .map(|&d| true_psi(cfg.dgp.name, d, cfg.truth_draws, cfg.seed, cfg.dgp.w1_spread).map(|t| (d, t.psi)))
            .collect::<Result<_>>()?;
        let tasks: Vec<(usize, usize)> =
            cfg.sample_sizes.iter().flat_map(|&n| (0..cfg.reps).map(move |r| (n, r))).collect();
        let done = AtomicUsize::new(0);
        let outcomes: Vec<RepOutcome> = tasks
            .par_iter()
            .map(|&(n, rep)| {
                let out = run_rep(cfg, &est, &truths, n, rep);
                let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                if let Some(f) = progress {
                    f(k, tasks.len());
                }
                out
            })
            .collect();

        let mut raw = Vec::new();
        let mut failures = Vec::new();
        for (r, f) in outcomes {
            raw.extend(r);
            failures.extend(f);
        }
        let attempted = tasks.len() * cfg.deltas.len();
        let failed_units: usize =
            failures.iter().map(|f| if f.delta.is_some() { 1 } else { cfg.deltas.len() }).sum();
        if failed_units as f64 > 0.05 * attempted as f64 {
            return Err(Error::StudyFailed { failed: failed_units, total: attempted });
        }

        let mut metrics = Vec::new();
        for &n in &cfg.sample_sizes {
            for &(delta, _) in &truths {
                for &v in &cfg.variants {
                    let cell: Vec<&RawRow> =
                        raw.iter().filter(|r| r.n == n && r.delta == delta && r.variant == v).collect();
                    if !cell.is_empty() {
                        metrics.push(aggregate(v, n, delta, &cell));
                    }
                }
            }
        }
        raw.sort_by(|a, b| {
            (a.n, cfg.deltas.iter().position(|d| *d == a.delta), a.variant, a.rep).cmp(&(
                b.n,
                cfg.deltas.iter().position(|d| *d == b.delta),
                b.variant,
                b.rep,
            ))
        });
        Ok(StudyOutput { raw, metrics, failures, truths })
    })
}
