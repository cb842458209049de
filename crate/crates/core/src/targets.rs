//! Shrinking target sets and their measures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MapKind, MapSystem, OrbitState};
use crate::error::{Error, Result};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `|x - c|` per coordinate.
    Interval,
    /// Distance on the circle `R/Z` per coordinate.
    Circle,
}

/// Closed neighbourhoods; every membership test uses `<=`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSet {
    /// Sup-metric ball.
    Ball { center: Vec<f64>, rho: f64, metric: Metric },
    /// `{(x, y) : dist_circle(y, 0) <= rho}` on the torus.
    TorusStrip { rho: f64 },
    /// `{x : max_ij |x_i - x_j| <= nu}`.
    DiagonalStrip { nu: f64 },
}

#[inline]
fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().fract();
    d.min(1.0 - d)
}

impl TargetSet {
    pub fn ball(center: f64, rho: f64) -> Self {
        TargetSet::Ball { center: vec![center], rho, metric: Metric::Interval }
    }

    pub fn radius(&self) -> f64 {
        match self {
            TargetSet::Ball { rho, .. } | TargetSet::TorusStrip { rho } => *rho,
            TargetSet::DiagonalStrip { nu } => *nu,
        }
    }

    /// Same kind and centre with a new radius.
    pub fn with_radius(&self, r: f64) -> Self {
        match self {
            TargetSet::Ball { center, metric, .. } => {
                TargetSet::Ball { center: center.clone(), rho: r, metric: *metric }
            }
            TargetSet::TorusStrip { .. } => TargetSet::TorusStrip { rho: r },
            TargetSet::DiagonalStrip { .. } => TargetSet::DiagonalStrip { nu: r },
        }
    }

    /// Checks the radius and that the target lives in `map`'s state space.
    pub fn validate_for(&self, map: &MapSystem) -> Result<()> {
        let r = self.radius();
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidParameter(format!("target radius {r} must be > 0")));
        }
        let dim = map.dimension();
        let ok = match self {
            TargetSet::Ball { center, .. } => {
                center.len() == dim && center.iter().all(|c| (0.0..1.0).contains(c))
            }
            TargetSet::TorusStrip { .. } => matches!(map.kind, MapKind::TorusAffine { .. }),
            TargetSet::DiagonalStrip { .. } => dim >= 2,
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "target {self:?} does not fit a {dim}-dimensional system"
            )));
        }
        Ok(())
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        match self {
            TargetSet::Ball { center, rho, metric } => match metric {
                Metric::Interval => p.iter().zip(center).all(|(x, c)| (x - c).abs() <= *rho),
                Metric::Circle => p.iter().zip(center).all(|(x, c)| circle_dist(*x, *c) <= *rho),
            },
            TargetSet::TorusStrip { rho } => circle_dist(p[1], 0.0) <= *rho,
            TargetSet::DiagonalStrip { nu } => {
                let (lo, hi) = p
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
                hi - lo <= *nu
            }
        }
    }

    #[inline]
    pub fn contains(&self, s: &OrbitState) -> bool {
        match self {
            TargetSet::Ball { center, rho, metric } => match metric {
                Metric::Interval => {
                    center.iter().enumerate().all(|(i, c)| (s.coord(i) - c).abs() <= *rho)
                }
                Metric::Circle => {
                    center.iter().enumerate().all(|(i, c)| circle_dist(s.coord(i), *c) <= *rho)
                }
            },
            TargetSet::TorusStrip { rho } => circle_dist(s.coord(1), 0.0) <= *rho,
            TargetSet::DiagonalStrip { nu } => {
                let mut lo = s.coord(0);
                let mut hi = lo;
                for i in 1..s.dimension() {
                    let x = s.coord(i);
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
                hi - lo <= *nu
            }
        }
    }

    /// Lebesgue measure of the target, when `map` preserves Lebesgue measure.
    pub fn exact_measure(&self, map: &MapSystem) -> Option<f64> {
        if !map.preserves_lebesgue() {
            return None;
        }
        Some(match self {
            TargetSet::Ball { center, rho, metric } => center
                .iter()
                .map(|c| match metric {
                    Metric::Interval => ((c + rho).min(1.0) - (c - rho).max(0.0)).max(0.0),
                    Metric::Circle => (2.0 * rho).min(1.0),
                })
                .product(),
            TargetSet::TorusStrip { rho } => (2.0 * rho).min(1.0),
            TargetSet::DiagonalStrip { nu } => {
                let n = map.dimension() as i32;
                let nu = nu.min(1.0);
                n as f64 * nu.powi(n - 1) - (n - 1) as f64 * nu.powi(n)
            }
        })
    }

    /// `μ(U)`: the closed form when available, otherwise a Monte Carlo
    /// estimate from `n_samples` stationary draws.
    pub fn measure(&self, map: &MapSystem, n_samples: u64, key: &StreamKey) -> Result<MeasureEstimate> {
        self.validate_for(map)?;
        match self.exact_measure(map) {
            Some(m) => Ok(MeasureEstimate::exact(m)),
            None => self.measure_monte_carlo(map, n_samples, key),
        }
    }

    pub fn measure_monte_carlo(
        &self,
        map: &MapSystem,
        n_samples: u64,
        key: &StreamKey,
    ) -> Result<MeasureEstimate> {
        self.validate_for(map)?;
        if n_samples == 0 {
            return Err(Error::InvalidParameter("need at least one sample".into()));
        }
        const CHUNK: u64 = 4096;
        let n_chunks = n_samples.div_ceil(CHUNK);
        let hits: u64 = (0..n_chunks)
            .into_par_iter()
            .map(|c| -> Result<u64> {
                let mut h = 0;
                for i in c * CHUNK..((c + 1) * CHUNK).min(n_samples) {
                    let s = map.sample_stationary(key, i)?;
                    h += self.contains(&s) as u64;
                }
                Ok(h)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        Ok(MeasureEstimate::from_counts(hits, n_samples))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Zero for closed-form values.
    pub n_samples: u64,
    pub exact: bool,
}

impl MeasureEstimate {
    pub fn exact(mean: f64) -> Self {
        MeasureEstimate { mean, std_error: 0.0, n_samples: 0, exact: true }
    }

    pub fn from_counts(hits: u64, n: u64) -> Self {
        let mean = hits as f64 / n as f64;
        MeasureEstimate {
            mean,
            std_error: (mean * (1.0 - mean) / n as f64).sqrt(),
            n_samples: n,
            exact: false,
        }
    }
}
