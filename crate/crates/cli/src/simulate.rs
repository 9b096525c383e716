use std::path::PathBuf;

use twophase_core::sim::{run_study, StudyConfig};

use crate::manifest::{create_dir, Run};
use crate::{CliError, SimulateArgs};

pub const BUNDLED: [(&str, &str); 5] = [
    ("sim1_small", include_str!("../configs/sim1_small.json")),
    ("sim1_full", include_str!("../configs/sim1_full.json")),
    ("sim1_hal", include_str!("../configs/sim1_hal.json")),
    ("sim2_full", include_str!("../configs/sim2_full.json")),
    ("sim2_null", include_str!("../configs/sim2_null.json")),
];

fn load(name: &str) -> Result<String, CliError> {
    if let Some((_, text)) = BUNDLED.iter().find(|(n, _)| *n == name) {
        return Ok(text.to_string());
    }
    std::fs::read_to_string(name).map_err(|e| {
        let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
        CliError::Usage(format!("{name}: {e} (bundled configs: {})", names.join(", ")))
    })
}

pub fn run(args: &SimulateArgs) -> Result<(), CliError> {
    let text = load(&args.config)?;
    let cfg = StudyConfig::from_json(&text)?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    let out = match (&args.out, &cfg.output) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => return Err(CliError::Usage("no --out given and the config has no `output`".into())),
    };
    if args.workers == Some(0) {
        return Err(CliError::Usage("--workers must be positive".into()));
    }
    let mut run = Run::start("simulate", raw, cfg.seed);
    let progress = |done: usize, total: usize| {
        if done == total || done % 50 == 0 {
            eprintln!("[{done}/{total}] replications");
        }
    };
    let result = run_study(&cfg, args.workers, Some(&progress))?;

    create_dir(&out)?;
    run.write(out.join("raw.csv"), &result.raw_csv())?;
    run.write(out.join("metrics.csv"), &result.metrics_csv())?;
    let mut truths = String::from("delta,truth\n");
    for (d, t) in &result.truths {
        truths += &format!("{d},{t}\n");
    }
    run.write(out.join("truths.csv"), &truths)?;
    if !result.failures.is_empty() {
        eprintln!("{} replication units failed; see failures.json", result.failures.len());
        run.write(out.join("failures.json"), &(serde_json::to_string_pretty(&result.failures)? + "\n"))?;
    }
    run.finish(&out)
}
