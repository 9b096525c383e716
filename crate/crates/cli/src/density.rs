use std::fs::File;

use twophase_core::data::RawTable;
use twophase_core::density::{fit_gaussian_density, fit_haldensify};
use twophase_core::{BinRule, ConditionalDensity, DensityModel, Design, HaldensifyConfig, MeanBasis};

use crate::manifest::Run;
use crate::{BinRuleArg, CliError, DensityArg, DensityFitArgs, DensityPredictArgs};

const SKIPPED: [&str; 4] = ["a", "y", "c", "weight"];

/// Rows with an exposure value, as `(a, covariates, weight)`.
struct ExposureTable {
    names: Vec<String>,
    a: Vec<f64>,
    w: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

fn parse(row: usize, col: &str, cell: &str) -> Result<f64, CliError> {
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::Data(format!("row {row}: cannot parse `{cell}` in column `{col}`")))
}

fn read_table(path: &std::path::Path, names: Option<&[String]>) -> Result<ExposureTable, CliError> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let raw = RawTable::from_csv(file)?;
    let ia = raw.column("a").ok_or_else(|| CliError::Data("missing column `a`".into()))?;
    let iwt = raw.column("weight");
    let names: Vec<String> = match names {
        Some(n) => n.to_vec(),
        None => raw.header.iter().filter(|h| !SKIPPED.contains(&h.as_str())).cloned().collect(),
    };
    let idx: Vec<usize> = names
        .iter()
        .map(|n| raw.column(n).ok_or_else(|| CliError::Data(format!("covariate `{n}` missing from the data"))))
        .collect::<Result<_, _>>()?;
    let mut t = ExposureTable { names, a: Vec::new(), w: Vec::new(), weights: Vec::new() };
    for (i, row) in raw.rows.iter().enumerate() {
        if row.len() != raw.header.len() {
            return Err(CliError::Data(format!("row {i}: expected {} fields", raw.header.len())));
        }
        if row[ia].is_empty() {
            continue;
        }
        t.a.push(parse(i, "a", &row[ia])?);
        t.w.push(idx.iter().map(|&j| parse(i, &raw.header[j], &row[j])).collect::<Result<_, _>>()?);
        t.weights.push(match iwt {
            Some(j) => parse(i, "weight", &row[j])?,
            None => 1.0,
        });
    }
    if t.a.is_empty() {
        return Err(CliError::Data("no rows with an exposure value".into()));
    }
    Ok(t)
}

pub fn fit(args: &DensityFitArgs) -> Result<(), CliError> {
    if args.bins.iter().any(|&b| b < 2) {
        return Err(CliError::Usage("--bins values must be at least 2".into()));
    }
    let mut run = Run::start("density fit", serde_json::to_value(args)?, args.seed);
    let t = read_table(&args.data, None)?;
    let w = Design::from_rows(t.names.clone(), &t.w)?;
    let model = match args.method {
        DensityArg::Gaussian => DensityModel::Gaussian(fit_gaussian_density(&t.a, &w, &t.weights, MeanBasis::Main)?),
        DensityArg::Haldensify => {
            let mut cfg = HaldensifyConfig {
                n_bins_grid: args.bins.clone(),
                bin_rule: match args.bin_rule {
                    BinRuleArg::EqualRange => BinRule::EqualRange,
                    BinRuleArg::EqualMass => BinRule::EqualMass,
                },
                ..HaldensifyConfig::default()
            };
            cfg.hal.seed = args.seed;
            let m = fit_haldensify(&t.a, &w, &t.weights, &cfg)?;
            for msg in &m.warnings {
                eprintln!("warning: {msg}");
            }
            DensityModel::Haldensify(m)
        }
    };
    run.write(args.out.clone(), &(serde_json::to_string_pretty(&model)? + "\n"))?;
    let dir = args.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(std::path::Path::new("."));
    run.finish(dir)
}

pub fn predict(args: &DensityPredictArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.model).map_err(|e| CliError::Data(format!("{}: {e}", args.model.display())))?;
    let model: DensityModel = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("model: {e}")))?;
    let t = read_table(&args.data, Some(model.covariate_names()))?;
    let mut wtr = csv::Writer::from_path(&args.out).map_err(|e| CliError::Data(e.to_string()))?;
    let mut header = vec!["a".to_string()];
    header.extend(t.names.iter().cloned());
    header.push("density".into());
    wtr.write_record(&header).map_err(|e| CliError::Data(e.to_string()))?;
    for (a, w) in t.a.iter().zip(&t.w) {
        let mut rec = vec![a.to_string()];
        rec.extend(w.iter().map(|v| v.to_string()));
        rec.push(model.density(*a, w).to_string());
        wtr.write_record(&rec).map_err(|e| CliError::Data(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}
