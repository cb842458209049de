//! Result files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::{ExperimentConfig, Format};
use crate::pipeline::{PredictionRecord, SimulationRecord};

pub const MANIFEST_SCHEMA: &str = "clusterlab.manifest/1";

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema: &'a str,
    command: &'a str,
    version: &'a str,
    /// The configuration actually run, defaults filled in.
    config: serde_json::Value,
    /// Keys absent from the config file and filled by defaults.
    defaulted: Vec<String>,
    rows: Vec<ManifestRow>,
}

#[derive(Debug, Serialize)]
struct ManifestRow {
    row: usize,
    files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    insufficient: Option<bool>,
}

/// One long-format CSV row: `quantity, index, value, std_error`.
type Line = (&'static str, usize, f64, Option<f64>);

fn write_csv(path: &Path, lines: &[Line]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["quantity", "index", "value", "std_error"])?;
    for (q, i, v, se) in lines {
        w.write_record([q.to_string(), i.to_string(), format!("{v:e}"), se.map(|s| format!("{s:e}")).unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}

fn prediction_lines(r: &PredictionRecord) -> Vec<Line> {
    let mut out = vec![("extremal_index", 0, r.extremal_index, None)];
    out.extend(r.alpha_hat.iter().enumerate().map(|(i, v)| ("alpha_hat", i + 1, *v, None)));
    out.extend(r.lambda.iter().enumerate().map(|(i, v)| ("lambda", i + 1, *v, None)));
    out.extend(r.counting.probs().iter().enumerate().map(|(k, v)| ("counting", k, *v, None)));
    out
}

fn simulation_lines(r: &SimulationRecord) -> Vec<Line> {
    let c = &r.cluster;
    let mut out = vec![
        ("measure", 0, r.measure.mean, Some(r.measure.std_error)),
        ("extremal_index", 0, c.extremal_index, Some(c.extremal_index_se)),
        ("n_entries", 0, c.n_entries as f64, None),
    ];
    out.extend(c.alpha_hat.iter().zip(&c.alpha_hat_se).enumerate().map(|(i, (v, s))| ("alpha_hat", i + 1, *v, Some(*s))));
    out.extend(c.lambda_hat.iter().zip(&c.lambda_hat_se).enumerate().map(|(i, (v, s))| ("lambda_hat", i + 1, *v, Some(*s))));
    out.extend(r.counting.counts.iter().enumerate().map(|(k, v)| ("counting", k, *v as f64, None)));
    if let Some(e) = &r.entry_ratio {
        out.push(("entry_ratio", e.l as usize, e.ratio, Some(e.std_error)));
    }
    out
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// Writes per-row files and `manifest.json` into `dir`.
pub fn write_run(
    dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    defaulted: Vec<String>,
    predictions: &[PredictionRecord],
    simulations: &[SimulationRecord],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let mut rows = Vec::new();
    let n = predictions.len().max(simulations.len());
    for i in 0..n {
        let stem = format!("{command}_{i:03}");
        let mut files = Vec::new();
        for f in &cfg.outputs.formats {
            let name = match f {
                Format::Json => format!("{stem}.json"),
                Format::Csv => format!("{stem}.csv"),
            };
            let path = dir.join(&name);
            match (f, predictions.get(i), simulations.get(i)) {
                (Format::Json, Some(p), _) => fs::write(&path, json(p)?)?,
                (Format::Json, None, Some(s)) => fs::write(&path, json(s)?)?,
                (Format::Csv, Some(p), _) => write_csv(&path, &prediction_lines(p))?,
                (Format::Csv, None, Some(s)) => write_csv(&path, &simulation_lines(s))?,
                _ => unreachable!(),
            }
            files.push(name);
            written.push(path);
        }
        rows.push(ManifestRow { row: i, files, insufficient: simulations.get(i).map(|s| s.cluster.insufficient) });
    }
    let mut echoed = cfg.clone();
    echoed.workers = None;
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        command,
        version: env!("CARGO_PKG_VERSION"),
        config: serde_json::to_value(&echoed)?,
        defaulted,
        rows,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, json(&manifest)?)?;
    written.push(path);
    Ok(written)
}
