//! Goodness of fit between a prediction (or a simulation) and a simulation.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clusterlab::stats::comparison_table;
use clusterlab::{chi_square_gof, DiscreteDistribution, EmpiricalDistribution, GofReport};
use serde::{Deserialize, Serialize};

use crate::pipeline::{PredictionRecord, SimulationRecord, PREDICTION_SCHEMA, SIMULATION_SCHEMA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub model: String,
    pub sample: String,
    pub threshold: f64,
    pub pass: bool,
    pub gof: GofReport,
}

enum Loaded {
    Prediction(PredictionRecord),
    Simulation(SimulationRecord),
}

fn load(path: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let schema = v.get("schema").and_then(|s| s.as_str()).unwrap_or("");
    Ok(match schema {
        PREDICTION_SCHEMA => Loaded::Prediction(serde_json::from_value(v)?),
        SIMULATION_SCHEMA => Loaded::Simulation(serde_json::from_value(v)?),
        other => bail!("{}: unknown schema {other:?}", path.display()),
    })
}

/// Tests the counting law of `sample` against that of `model`. The model
/// file may be a prediction or a simulation; the sample must be a
/// simulation.
pub fn compare(model: &Path, sample: &Path, threshold: f64) -> Result<(CompareReport, String)> {
    if !(0.0..=1.0).contains(&threshold) {
        bail!("threshold {threshold} outside [0, 1]");
    }
    let law: DiscreteDistribution = match load(model)? {
        Loaded::Prediction(p) => p.counting,
        Loaded::Simulation(s) => s.counting.to_distribution()?,
    };
    let counts: EmpiricalDistribution = match load(sample)? {
        Loaded::Simulation(s) => s.counting,
        Loaded::Prediction(_) => bail!("{}: the sample must be a simulation file", sample.display()),
    };
    let gof = chi_square_gof(&counts, &law)?;
    let table = comparison_table(&counts.to_distribution()?, &law, 12);
    let report = CompareReport {
        model: file_name(model),
        sample: file_name(sample),
        threshold,
        pass: gof.p_value >= threshold,
        gof,
    };
    Ok((report, table))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
