use std::fs::File;

use twophase_core::estimators::{EstimationContext, EstimatorKind, RESULT_CSV_HEADER};
use twophase_core::msm::{fit_msm_from_results, msm_grid_rows, MSM_GRID_HEADER};
use twophase_core::{
    EstimateResult, EstimationConfig, EstimatorOptions, NuisanceConfig, ObservedDataset, ShiftSpec, ValidateOptions,
    Variant, Weighting,
};

use crate::manifest::{create_dir, Run};
use crate::{CliError, EstimateArgs, EstimatorArg, WeightingArg};

fn variant(args: &EstimateArgs) -> Variant {
    let weighting = match args.variant {
        WeightingArg::Augmented => Weighting::Augmented,
        WeightingArg::Reweighted => Weighting::Reweighted,
        WeightingArg::Naive => Weighting::Naive,
    };
    match args.estimator {
        EstimatorArg::Plugin => Variant::Plugin,
        EstimatorArg::Onestep => Variant::new(EstimatorKind::Onestep, weighting),
        EstimatorArg::Tmle => Variant::new(EstimatorKind::Tmle, weighting),
    }
}

fn config(args: &EstimateArgs) -> EstimationConfig {
    let mut nuisance = NuisanceConfig {
        g_method: args.g_method.into(),
        q_method: args.q_method.into(),
        density_method: args.density_method.into(),
        projection_method: args.projection_method.into(),
        ..NuisanceConfig::default()
    };
    nuisance.hal.seed = args.seed;
    nuisance.haldensify.hal.seed = args.seed;
    EstimationConfig { nuisance, options: EstimatorOptions { alpha: args.alpha, ..EstimatorOptions::default() } }
}

pub fn run(args: &EstimateArgs) -> Result<(), CliError> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Usage("--alpha must lie in (0, 1)".into()));
    }
    if args.delta.iter().any(|d| !d.is_finite()) {
        return Err(CliError::Usage("--delta values must be finite".into()));
    }
    if args.msm && args.delta.len() < 2 {
        return Err(CliError::Usage("--msm needs at least two --delta values".into()));
    }
    let mut run = Run::start("estimate", serde_json::to_value(args)?, args.seed);
    let file = File::open(&args.data).map_err(|e| CliError::Data(format!("{}: {e}", args.data.display())))?;
    let data = ObservedDataset::read_csv(file, ValidateOptions { scale_outcome: args.scale_outcome })?;
    let cfg = config(args);
    cfg.nuisance.validate()?;
    let v = variant(args);

    let ctx = EstimationContext::new(&data, &cfg, &[v])?;
    let mut results: Vec<EstimateResult> = Vec::with_capacity(args.delta.len());
    for &delta in &args.delta {
        let spec = ShiftSpec::new(delta).with_support(args.support.into());
        let r = ctx.estimate(&spec, &[v])?.remove(0);
        results.push(match data.outcome_scale() {
            Some(scale) => r.to_outcome_scale(scale, args.alpha)?,
            None => r,
        });
    }

    create_dir(&args.out)?;
    run.write(args.out.join("results.json"), &(serde_json::to_string_pretty(&results)? + "\n"))?;
    let mut csv = format!("{RESULT_CSV_HEADER}\n");
    for r in &results {
        csv += &r.csv_row();
        csv.push('\n');
    }
    run.write(args.out.join("results.csv"), &csv)?;
    if args.msm {
        let fit = fit_msm_from_results(&results, args.msm_weights.into(), args.alpha)?;
        run.write(args.out.join("msm.json"), &(fit.to_json()? + "\n"))?;
        let mut grid = format!("{MSM_GRID_HEADER}\n");
        for row in msm_grid_rows(&results) {
            grid += &row;
            grid.push('\n');
        }
        run.write(args.out.join("msm_grid.csv"), &grid)?;
    }
    for r in &results {
        for w in &r.diagnostics.warnings {
            eprintln!("warning (delta={}): {w}", r.delta);
        }
    }
    run.finish(&args.out)
}
