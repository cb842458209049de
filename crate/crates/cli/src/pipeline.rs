//! Predict and simulate, one record per schedule row.

use anyhow::{bail, Context, Result};
use clusterlab::estimators::horizon;
use clusterlab::rng::StreamKey;
use clusterlab::{
    cluster_statistics, cml_prediction, compound_poisson_pmf, counting_distribution, derivative_along,
    entry_time_ratio, lambda_from_alpha_hat, polya_aeppli_pmf, Backend, BlockRule, ClusterSizeDist, ClusterStats,
    CompoundSpec, DiagonalDensity, DiscreteDistribution, EmpiricalDistribution, EntryRatio, IndicatorProcess,
    IntervalMap, MapKind, MeasureEstimate, OrbitProcess, RegenProcess, RegenSpec,
    Truncation,
};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Model, ScheduleRow, TargetConfig};

pub const PREDICTION_SCHEMA: &str = "clusterlab.prediction/1";
pub const SIMULATION_SCHEMA: &str = "clusterlab.simulation/1";

/// Longest period searched for when deciding whether a ball centre is
/// periodic.
const MAX_PERIOD: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub schema: String,
    pub row: usize,
    pub size: f64,
    pub t: f64,
    /// Which closed form or computation produced the numbers.
    pub basis: String,
    /// `α̂_1, α̂_2, …`.
    pub alpha_hat: Vec<f64>,
    /// `λ_1, λ_2, …`.
    pub lambda: Vec<f64>,
    pub extremal_index: f64,
    /// Limiting law of the visit count at time `t`.
    pub counting: DiscreteDistribution,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub schema: String,
    pub row: usize,
    pub size: f64,
    pub k: u64,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<Backend>,
    pub measure: MeasureEstimate,
    pub cluster: ClusterStats,
    pub counting: EmpiricalDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_ratio: Option<EntryRatio>,
}

pub fn predict(cfg: &ExperimentConfig) -> Result<Vec<PredictionRecord>> {
    let model = cfg.model()?;
    cfg.schedule
        .iter()
        .enumerate()
        .map(|(i, row)| predict_row(cfg, &model, row).with_context(|| format!("schedule row {i}")).map(|mut r| {
            r.row = i;
            r
        }))
        .collect()
}

/// Geometric clusters with ratio `q`: `α̂_{k+1} = q^k`.
fn geometric(q: f64, k_max: usize, t: f64, basis: String) -> Result<PredictionRecord> {
    let hat: Vec<f64> = (0..k_max).map(|k| q.powi(k as i32)).collect();
    let seq = lambda_from_alpha_hat(&hat)?;
    let counting = polya_aeppli_pmf(t * seq.extremal_index, q, Truncation::auto())?;
    Ok(PredictionRecord {
        schema: PREDICTION_SCHEMA.into(),
        row: 0,
        size: f64::NAN,
        t,
        basis,
        alpha_hat: hat,
        lambda: seq.lambda,
        extremal_index: seq.extremal_index,
        counting,
        notes: Vec::new(),
    })
}

fn compound(alpha_hat: Vec<f64>, lambda: Vec<f64>, ei: f64, t: f64, basis: String) -> Result<PredictionRecord> {
    let clusters = ClusterSizeDist::from_weights(&lambda)?;
    let counting = compound_poisson_pmf(&CompoundSpec::new(t * ei, clusters)?, Truncation::auto())?;
    Ok(PredictionRecord {
        schema: PREDICTION_SCHEMA.into(),
        row: 0,
        size: f64::NAN,
        t,
        basis,
        alpha_hat,
        lambda,
        extremal_index: ei,
        counting,
        notes: Vec::new(),
    })
}

/// Smallest `p <= MAX_PERIOD` with `T^p(x) = x`, if any.
fn period_of(map: &IntervalMap, x: f64) -> Option<usize> {
    let mut y = x;
    for p in 1..=MAX_PERIOD {
        y = map.eval(y);
        let d = (y - x).abs();
        if d.min(1.0 - d) < 1e-12 {
            return Some(p);
        }
    }
    None
}

fn predict_row(cfg: &ExperimentConfig, model: &Model, row: &ScheduleRow) -> Result<PredictionRecord> {
    let k_max = cfg.prediction.k_max;
    let mut rec = match (model, &cfg.target) {
        (Model::Map(sys), TargetConfig::TorusStrip) => {
            let MapKind::TorusAffine { a } = sys.kind else { bail!("torus strip needs the torus system") };
            geometric(1.0 / a as f64, k_max, row.t, format!("torus a={a}: alpha_hat(k+1) = a^-k"))?
        }
        (Model::Map(sys), TargetConfig::Ball { center, .. }) => {
            let MapKind::Interval(map) = &sys.kind else {
                bail!("unsupported system: ball predictions exist for interval maps only")
            };
            let x = center[0];
            match period_of(map, x) {
                Some(p) => {
                    let d = derivative_along(map, x, p)?;
                    geometric(1.0 / d, k_max, row.t, format!("periodic centre, period {p}, |DT^p| = {d}"))?
                }
                None => {
                    let mut hat = vec![0.0; k_max];
                    hat[0] = 1.0;
                    let seq = lambda_from_alpha_hat(&hat)?;
                    let mut r = compound(hat, seq.lambda, 1.0, row.t, "non-periodic centre: Poisson".into())?;
                    r.notes.push(format!("no period up to {MAX_PERIOD} found"));
                    r
                }
            }
        }
        (Model::Map(sys), TargetConfig::DiagonalStrip) => {
            let MapKind::Cml(spec) = &sys.kind else { bail!("diagonal strip needs a lattice system") };
            if spec.weights.windows(2).any(|w| w[0] != w[1]) {
                bail!("unsupported system: lattice predictions need uniform coupling weights");
            }
            let p = cml_prediction(&spec.base, &DiagonalDensity::Lebesgue, spec.n, spec.gamma, k_max, cfg.prediction.tol)?;
            if p.lambdas.is_empty() {
                bail!("extremal index {} <= 0: no cluster law", p.extremal_index);
            }
            let mut lambda = p.lambdas.clone();
            lambda.push(p.lambda_tail_mass);
            let mut r = compound(
                p.alpha_hat[..k_max].to_vec(),
                lambda,
                p.extremal_index,
                row.t,
                format!("diagonal quadrature, n={}, gamma={}", spec.n, spec.gamma),
            )?;
            r.notes.push(format!("quadrature error bound {:e}", p.quadrature_error));
            r.notes.push(format!("lambda[{}] holds the mass of all sizes >= {}", k_max - 1, k_max));
            // With constant |DT| the density cancels from the ratio.
            let exact = spec.base.integer_slope().is_some() || spec.gamma == 0.0 && spec.base.preserves_lebesgue();
            if !exact {
                r.notes.push("invariant density unknown: Lebesgue surrogate used".into());
            }
            r.notes.extend(p.warnings);
            r
        }
        (Model::Regen(spec), TargetConfig::Exceedance) => predict_regen(spec, k_max, row.t)?,
        _ => bail!("unsupported system/target pair"),
    };
    rec.size = row.size();
    Ok(rec)
}

fn predict_regen(spec: &RegenSpec, k_max: usize, t: f64) -> Result<PredictionRecord> {
    let BlockRule::FixedLengths { lengths } = &spec.rule else {
        bail!("unsupported system: Smith blocks have no limiting cluster law (mass escapes to infinity)")
    };
    let lam = lengths.as_slice();
    let ei = 1.0 / lengths.mean();
    let n = k_max.max(lam.len() + 1);
    // α_k = α₁ Σ_{j>=k} λ_j and α̂_k = Σ_{j>=k} α_j.
    let mut alpha = vec![0.0; n + 1];
    for k in (0..n).rev() {
        alpha[k] = alpha[k + 1] + ei * lam.get(k).copied().unwrap_or(0.0);
    }
    let mut hat = vec![0.0; n + 1];
    for k in (0..n).rev() {
        hat[k] = hat[k + 1] + alpha[k];
    }
    hat.truncate(k_max);
    let mut lambda = lam.to_vec();
    lambda.resize(k_max.max(lam.len()), 0.0);
    compound(hat, lambda, ei, t, "block-length law; extremal index 1/mean".into())
}

/// Stream keys of one row; every estimator draws from its own family.
struct RowKeys {
    measure: StreamKey,
    cluster: StreamKey,
    counting: StreamKey,
    entry: StreamKey,
}

impl RowKeys {
    fn new(seed: u64, row: usize) -> Self {
        let base = StreamKey::new(seed, "simulate").derive(row as u64);
        RowKeys { measure: base.derive(1), cluster: base.derive(2), counting: base.derive(3), entry: base.derive(4) }
    }
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<SimulationRecord>> {
    let model = cfg.model()?;
    cfg.schedule
        .iter()
        .enumerate()
        .map(|(i, row)| simulate_row(cfg, &model, i, row).with_context(|| format!("schedule row {i}")))
        .collect()
}

fn simulate_row(cfg: &ExperimentConfig, model: &Model, i: usize, row: &ScheduleRow) -> Result<SimulationRecord> {
    let keys = RowKeys::new(cfg.seed, i);
    let cluster_cfg = cfg.cluster_config(row.k);
    let (measure, cluster, counting, entry_ratio, backend) = match model {
        Model::Map(sys) => {
            let target = cfg.target(row)?;
            let measure = target.measure(sys, cfg.estimation.measure_samples, &keys.measure)?;
            let (cluster, counting, entry) = estimate(&OrbitProcess::new(sys, &target, measure.mean)?, None::<&RegenProcess>, row, &cluster_cfg, &keys)?;
            (measure, cluster, counting, entry, Some(sys.backend))
        }
        Model::Regen(spec) => {
            let m = row.m.expect("validated");
            let plain = RegenProcess::new(spec, m, None)?;
            let capped = RegenProcess::new(spec, m, Some(2 * row.k + 1))?;
            let (cluster, counting, entry) = estimate(&plain, Some(&capped), row, &cluster_cfg, &keys)?;
            (MeasureEstimate::exact(plain.mu()), cluster, counting, entry, None)
        }
    };
    Ok(SimulationRecord {
        schema: SIMULATION_SCHEMA.into(),
        row: i,
        size: row.size(),
        k: row.k,
        t: row.t,
        backend,
        measure,
        cluster,
        counting,
        entry_ratio,
    })
}

/// Window statistics use `for_windows` when given (a gap-capped stream);
/// horizon-based statistics always use `process`.
fn estimate<P: IndicatorProcess, Q: IndicatorProcess>(
    process: &P,
    for_windows: Option<&Q>,
    row: &ScheduleRow,
    cluster_cfg: &clusterlab::ClusterConfig,
    keys: &RowKeys,
) -> Result<(ClusterStats, EmpiricalDistribution, Option<EntryRatio>)> {
    horizon(row.t, process.mu())?;
    let cluster = match for_windows {
        Some(q) => cluster_statistics(q, cluster_cfg, &keys.cluster)?,
        None => cluster_statistics(process, cluster_cfg, &keys.cluster)?,
    };
    let counting = counting_distribution(process, row.t, row.n_trials, &keys.counting)?;
    let entry = row.l.map(|l| entry_time_ratio(process, l, row.n_trials, &keys.entry)).transpose()?;
    Ok((cluster, counting, entry))
}
