//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clusterlab::regenerative::DEFAULT_K_CAP;
use clusterlab::{
    Backend, ClusterConfig, ClusterSizeDist, CmlSpec, IntervalMap, MapKind, MapSystem, Metric, RegenSpec,
    TargetSet,
};
use serde::{Deserialize, Serialize};

/// Burn-in used for systems whose invariant measure is not Lebesgue.
pub const DEFAULT_BURN_IN: u64 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub seed: u64,
    /// Worker threads; 0 uses every core. Never affects results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub system: SystemConfig,
    pub target: TargetConfig,
    pub schedule: Vec<ScheduleRow>,
    #[serde(default)]
    pub estimation: EstimationConfig,
    #[serde(default)]
    pub prediction: PredictionConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    /// Exact digits where the dynamics allow it, float64 otherwise.
    #[default]
    Auto,
    ExactDigit,
    Float64,
    Float64Dither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Interval {
        map: IntervalMap,
        #[serde(default)]
        backend: BackendChoice,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        burn_in: Option<u64>,
    },
    Torus {
        a: u32,
        #[serde(default)]
        backend: BackendChoice,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        burn_in: Option<u64>,
    },
    Cml {
        base: IntervalMap,
        n: usize,
        gamma: f64,
        /// Coupling weights; uniform when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        #[serde(default)]
        backend: BackendChoice,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        burn_in: Option<u64>,
    },
    Regenerative {
        rule: RuleConfig,
        #[serde(default = "default_k_cap")]
        k_cap: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RuleConfig {
    Smith,
    FixedLengths { lengths: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    /// Sized by `rho`.
    Ball {
        center: Vec<f64>,
        #[serde(default = "default_metric")]
        metric: Metric,
    },
    /// Sized by `rho`.
    TorusStrip,
    /// Sized by `nu`.
    DiagonalStrip,
    /// `U_m = {X_0 > m}` of a regenerative process, sized by `m`.
    Exceedance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u64>,
    /// Window half-length.
    pub k: u64,
    /// Entry-time horizon; no entry-time ratio when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<u64>,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default = "default_trials")]
    pub n_trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub min_entries: u64,
    /// Chosen from the target measure when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orbit_len: Option<u64>,
    pub max_steps: u64,
    pub orbits_per_round: u64,
    /// Monte Carlo draws for the target measure when no closed form exists.
    pub measure_samples: u64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        let c = ClusterConfig::new(1, 10_000);
        EstimationConfig {
            min_entries: c.min_entries,
            orbit_len: None,
            max_steps: c.max_steps,
            orbits_per_round: c.orbits_per_round,
            measure_samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionConfig {
    /// Number of `α̂` and `λ` terms tabulated.
    pub k_max: usize,
    pub tol: f64,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        PredictionConfig { k_max: 12, tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), formats: vec![Format::Json, Format::Csv] }
    }
}

fn default_k_cap() -> usize {
    DEFAULT_K_CAP
}

fn default_metric() -> Metric {
    Metric::Interval
}

fn default_t() -> f64 {
    1.0
}

fn default_trials() -> u64 {
    10_000
}

/// The object a schedule row runs on.
#[derive(Debug, Clone)]
pub enum Model {
    Map(MapSystem),
    Regen(RegenSpec),
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.resolve_defaults();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Fills the burn-in now that the system is known, so the manifest
    /// records the value actually used.
    fn resolve_defaults(&mut self) {
        let preserves = self.model().map(|m| match m {
            Model::Map(s) => s.preserves_lebesgue(),
            Model::Regen(_) => true,
        });
        let fill = if preserves.unwrap_or(true) { 0 } else { DEFAULT_BURN_IN };
        match &mut self.system {
            SystemConfig::Interval { burn_in, .. }
            | SystemConfig::Torus { burn_in, .. }
            | SystemConfig::Cml { burn_in, .. } => {
                burn_in.get_or_insert(fill);
            }
            SystemConfig::Regenerative { .. } => {}
        }
    }

    pub fn model(&self) -> Result<Model> {
        let pick = |choice: BackendChoice, kind: MapKind, burn_in: &Option<u64>| -> Result<MapSystem> {
            let sys = match choice {
                BackendChoice::Auto => MapSystem::new(kind)?,
                BackendChoice::ExactDigit => MapSystem::with_backend(kind, Backend::ExactDigit)?,
                BackendChoice::Float64 => MapSystem::with_backend(kind, Backend::Float64)?,
                BackendChoice::Float64Dither => MapSystem::with_backend(kind, Backend::Float64Dither)?,
            };
            Ok(sys.with_burn_in(burn_in.unwrap_or(0)))
        };
        Ok(match &self.system {
            SystemConfig::Interval { map, backend, burn_in } => {
                Model::Map(pick(*backend, MapKind::Interval(map.clone()), burn_in)?)
            }
            SystemConfig::Torus { a, backend, burn_in } => {
                Model::Map(pick(*backend, MapKind::TorusAffine { a: *a }, burn_in)?)
            }
            SystemConfig::Cml { base, n, gamma, weights, backend, burn_in } => {
                let spec = match weights {
                    Some(w) => CmlSpec::new(base.clone(), *n, *gamma, w.clone())?,
                    None => CmlSpec::uniform(base.clone(), *n, *gamma)?,
                };
                Model::Map(pick(*backend, MapKind::Cml(spec), burn_in)?)
            }
            SystemConfig::Regenerative { rule, k_cap } => Model::Regen(match rule {
                RuleConfig::Smith => RegenSpec::smith(*k_cap)?,
                RuleConfig::FixedLengths { lengths } => {
                    RegenSpec::fixed_lengths(ClusterSizeDist::new(lengths.clone())?, *k_cap)?
                }
            }),
        })
    }

    /// The target of schedule row `i`.
    pub fn target(&self, row: &ScheduleRow) -> Result<TargetSet> {
        Ok(match &self.target {
            TargetConfig::Ball { center, metric } => {
                TargetSet::Ball { center: center.clone(), rho: row.size(), metric: *metric }
            }
            TargetConfig::TorusStrip => TargetSet::TorusStrip { rho: row.size() },
            TargetConfig::DiagonalStrip => TargetSet::DiagonalStrip { nu: row.size() },
            TargetConfig::Exceedance => bail!("exceedance targets belong to regenerative systems"),
        })
    }

    pub fn cluster_config(&self, k: u64) -> ClusterConfig {
        let e = &self.estimation;
        ClusterConfig {
            k,
            min_entries: e.min_entries,
            orbit_len: e.orbit_len,
            max_steps: e.max_steps,
            orbits_per_round: e.orbits_per_round,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.schedule.is_empty(), "schedule must have at least one row");
        ensure!(!self.outputs.formats.is_empty(), "outputs.formats must not be empty");
        let e = &self.estimation;
        ensure!(e.min_entries >= 100, "estimation.min_entries must be >= 100");
        ensure!(e.orbits_per_round >= 2, "estimation.orbits_per_round must be >= 2");
        ensure!(e.measure_samples >= 1, "estimation.measure_samples must be >= 1");
        ensure!(self.prediction.k_max >= 2, "prediction.k_max must be >= 2");
        ensure!(self.prediction.tol > 0.0, "prediction.tol must be > 0");
        let model = self.model()?;
        let regen = matches!(model, Model::Regen(_));
        ensure!(
            regen == matches!(self.target, TargetConfig::Exceedance),
            "regenerative systems take exactly the exceedance target"
        );
        for (i, row) in self.schedule.iter().enumerate() {
            let set = [row.rho.is_some(), row.nu.is_some(), row.m.is_some()];
            let want = match self.target {
                TargetConfig::Ball { .. } | TargetConfig::TorusStrip => [true, false, false],
                TargetConfig::DiagonalStrip => [false, true, false],
                TargetConfig::Exceedance => [false, false, true],
            };
            ensure!(set == want, "schedule row {i}: size must be given as {}", size_key(&self.target));
            ensure!(row.k >= 1, "schedule row {i}: k must be >= 1");
            ensure!(row.t > 0.0 && row.t.is_finite(), "schedule row {i}: t must be > 0");
            ensure!(row.n_trials >= 1, "schedule row {i}: n_trials must be >= 1");
            ensure!(row.l.map_or(true, |l| l >= 1), "schedule row {i}: l must be >= 1");
            match &model {
                Model::Map(sys) => {
                    let r = row.size();
                    ensure!(r > 0.0 && r.is_finite(), "schedule row {i}: radius must be > 0");
                    self.target(row)?.validate_for(sys).with_context(|| format!("schedule row {i}"))?;
                }
                Model::Regen(spec) => {
                    let m = row.m.unwrap_or(0);
                    ensure!(spec.measure_u(m) > 0.0, "schedule row {i}: U_m is empty for m={m}");
                }
            }
        }
        Ok(())
    }
}

fn size_key(t: &TargetConfig) -> &'static str {
    match t {
        TargetConfig::Ball { .. } | TargetConfig::TorusStrip => "rho",
        TargetConfig::DiagonalStrip => "nu",
        TargetConfig::Exceedance => "m",
    }
}

impl ScheduleRow {
    /// `rho`, `nu` or `m`, whichever is set.
    pub fn size(&self) -> f64 {
        self.rho.or(self.nu).or(self.m.map(|m| m as f64)).unwrap_or(f64::NAN)
    }
}

/// Dotted paths present in `resolved` but absent from `raw`.
pub fn defaulted_keys(raw: &toml::Value, resolved: &toml::Value) -> Vec<String> {
    fn walk(raw: Option<&toml::Value>, res: &toml::Value, path: &str, out: &mut Vec<String>) {
        match (raw, res) {
            (Some(toml::Value::Table(r)), toml::Value::Table(v)) => {
                for (k, val) in v {
                    let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                    walk(r.get(k), val, &p, out);
                }
            }
            (Some(toml::Value::Array(r)), toml::Value::Array(v)) => {
                for (i, val) in v.iter().enumerate() {
                    walk(r.get(i), val, &format!("{path}[{i}]"), out);
                }
            }
            (None, _) => out.push(path.to_string()),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(Some(raw), resolved, "", &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TORUS: &str = r#"
seed = 7
[system]
kind = "torus"
a = 2
[target]
kind = "torus_strip"
[[schedule]]
rho = 1e-2
k = 5
"#;

    #[test]
    fn defaults_are_filled_and_listed() {
        let cfg = ExperimentConfig::from_toml(TORUS).unwrap();
        assert_eq!(cfg.schedule[0].n_trials, 10_000);
        assert!(matches!(cfg.system, SystemConfig::Torus { burn_in: Some(0), backend: BackendChoice::Auto, .. }));
        let raw: toml::Value = toml::from_str(TORUS).unwrap();
        let resolved = toml::Value::try_from(&cfg).unwrap();
        let keys = defaulted_keys(&raw, &resolved);
        for k in ["system.backend", "system.burn_in", "schedule[0].t", "schedule[0].n_trials", "estimation", "outputs"] {
            assert!(keys.iter().any(|x| x == k), "{k} missing from {keys:?}");
        }
        assert!(!keys.iter().any(|x| x == "seed"));
    }

    #[test]
    fn burn_in_defaults_only_when_needed() {
        let text = r#"
seed = 1
[system]
kind = "cml"
n = 2
gamma = 0.1
base = { kind = "linear", a = 2 }
[target]
kind = "diagonal_strip"
[[schedule]]
nu = 1e-3
k = 1
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert!(matches!(cfg.system, SystemConfig::Cml { burn_in: Some(DEFAULT_BURN_IN), .. }));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            TORUS.replace("rho = 1e-2", "nu = 1e-2"),
            TORUS.replace("a = 2", "a = 1"),
            TORUS.replace("k = 5", "k = 0"),
            TORUS.replace("torus_strip", "diagonal_strip"),
            TORUS.replace("seed = 7", "seed = 7\nsede = 8"),
            TORUS.replace("[[schedule]]\nrho = 1e-2\nk = 5\n", "schedule = []\n"),
        ];
        for text in bad {
            assert!(ExperimentConfig::from_toml(&text).is_err(), "{text}");
        }
    }
}
