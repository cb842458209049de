//! Cluster statistics for returns of dynamical systems to shrinking targets.

pub mod cml_theory;
pub mod distributions;
pub mod dynamics;
mod error;
pub mod estimators;
pub mod quadrature;
pub mod regenerative;
pub mod rng;
pub mod stats;
pub mod targets;

pub use cml_theory::{alpha_hat_integral, cml_prediction, CmlPrediction, DiagonalDensity};
pub use distributions::{
    compound_binomial_pmf, compound_poisson_pmf, generating_function_eval, polya_aeppli_pmf,
    ClusterSizeDist, CompoundSpec, DiscreteDistribution, EmpiricalDistribution, Truncation,
};
pub use dynamics::{
    derivative_along, orbit_visitor, Backend, CmlSpec, IntervalMap, MapKind, MapSystem, OrbitState,
};
pub use error::{Error, Result};
pub use estimators::{
    cluster_statistics, count_visits, counting_distribution, entry_time_ratio, r2_overlap,
    return_time_records, BernoulliProcess, ClusterConfig, ClusterStats, EntryRatio,
    IndicatorProcess, OrbitProcess, R2Estimate, ReturnTimeRecord,
};
pub use regenerative::{
    generate_stationary, regen_cluster_stats, BlockRule, BlockSampler, RegenProcess, RegenSpec,
    SymbolStream,
};
pub use stats::{
    chi_square_gof, lambda_from_alpha_hat, total_variation, AlphaSequences, GofReport,
};
pub use targets::{MeasureEstimate, Metric, TargetSet};
