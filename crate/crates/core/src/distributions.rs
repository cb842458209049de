//! Finite-truncation pmfs for compound Poisson, Pólya-Aeppli and compound
//! binomial laws on the non-negative integers.
//!
//! Every pmf carries the mass it drops beyond the truncation index in
//! `tail_mass`, so `sum(probs) + tail_mass == 1` holds to rounding.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{Error, Result};

/// Tail tolerance used when a caller does not pick one.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Largest truncation index tried by [`Truncation::auto`].
pub const AUTO_K_CAP: usize = 1 << 16;

/// How far a pmf is tabulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    /// Fixed truncation index, or `None` for the smallest index whose tail
    /// drops below `tail_tol`.
    pub k_max: Option<usize>,
    pub tail_tol: f64,
}

impl Truncation {
    pub fn at(k_max: usize) -> Self {
        Truncation { k_max: Some(k_max), tail_tol: DEFAULT_TAIL_TOL }
    }

    pub fn auto() -> Self {
        Truncation { k_max: None, tail_tol: DEFAULT_TAIL_TOL }
    }

    pub fn with_tol(mut self, tail_tol: f64) -> Self {
        self.tail_tol = tail_tol;
        self
    }
}

impl Default for Truncation {
    fn default() -> Self {
        Self::auto()
    }
}

/// A pmf on `0..probs.len()` plus the mass beyond it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
    tail_mass: f64,
}

impl DiscreteDistribution {
    /// Checks entries lie in `[0,1]` and that the total is one within 1e-12.
    pub fn new(probs: Vec<f64>, tail_mass: f64) -> Result<Self> {
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter("probabilities must lie in [0,1]".into()));
        }
        if !(tail_mass >= 0.0) {
            return Err(Error::InvalidParameter("tail mass must be non-negative".into()));
        }
        let total: f64 = probs.iter().sum::<f64>() + tail_mass;
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(DiscreteDistribution { probs, tail_mass })
    }

    /// Builds from computed probabilities, assigning `1 - sum` to the tail.
    fn from_computed(mut probs: Vec<f64>) -> Self {
        for p in probs.iter_mut() {
            *p = p.clamp(0.0, 1.0);
        }
        let total: f64 = probs.iter().sum();
        DiscreteDistribution { probs, tail_mass: (1.0 - total).max(0.0) }
    }

    /// Point mass at `k`.
    pub fn point_mass(k: usize) -> Self {
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        DiscreteDistribution { probs, tail_mass: 0.0 }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Number of tabulated entries (`k_max + 1`).
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn pmf(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    /// Mean over the tabulated part.
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn generating_function(&self, z: f64) -> f64 {
        generating_function_eval(self, z)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "prob"])?;
        for (k, p) in self.probs.iter().enumerate() {
            out.write_record([k.to_string(), format!("{p:e}")])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the `k,prob` CSV; missing mass becomes the tail.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut probs = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let k: usize = rec[0].trim().parse().map_err(|e| Error::Io(format!("bad k: {e}")))?;
            let p: f64 = rec[1].trim().parse().map_err(|e| Error::Io(format!("bad prob: {e}")))?;
            if k != probs.len() {
                return Err(Error::Io(format!("expected k={}, got {k}", probs.len())));
            }
            probs.push(p);
        }
        let tail = (1.0 - probs.iter().sum::<f64>()).max(0.0);
        DiscreteDistribution::new(probs, tail)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: DiscreteDistribution = serde_json::from_str(s)?;
        DiscreteDistribution::new(d.probs, d.tail_mass)
    }
}

/// Observed frequencies of a non-negative integer variable.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    /// `counts[k]` observations of the value `k`.
    pub counts: Vec<u64>,
    pub n: u64,
}

impl EmpiricalDistribution {
    pub fn from_samples<I: IntoIterator<Item = u64>>(samples: I) -> Self {
        let mut e = EmpiricalDistribution::default();
        for k in samples {
            e.push(k);
        }
        e
    }

    pub fn push(&mut self, k: u64) {
        let k = k as usize;
        if k >= self.counts.len() {
            self.counts.resize(k + 1, 0);
        }
        self.counts[k] += 1;
        self.n += 1;
    }

    pub fn merge(&mut self, other: &EmpiricalDistribution) {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.n += other.n;
    }

    pub fn mean(&self) -> f64 {
        let s: f64 = self.counts.iter().enumerate().map(|(k, c)| k as f64 * *c as f64).sum();
        s / self.n as f64
    }

    /// Relative frequencies with zero tail.
    pub fn to_distribution(&self) -> Result<DiscreteDistribution> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("empty sample".into()));
        }
        let probs: Vec<f64> = self.counts.iter().map(|c| *c as f64 / self.n as f64).collect();
        let tail = (1.0 - probs.iter().sum::<f64>()).max(0.0);
        Ok(DiscreteDistribution { probs, tail_mass: tail })
    }
}

/// Cluster-size law `λ_ℓ = P(X = ℓ)` for `ℓ = 1, 2, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSizeDist {
    /// `lambdas[i]` is `λ_{i+1}`.
    lambdas: Vec<f64>,
}

impl ClusterSizeDist {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::InvalidParameter("empty cluster-size law".into()));
        }
        if lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::InvalidParameter("cluster probabilities must be >= 0".into()));
        }
        let total: f64 = lambdas.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "cluster probabilities sum to {total}, expected 1"
            )));
        }
        Ok(ClusterSizeDist { lambdas })
    }

    /// Rescales non-negative weights to a law.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParameter("weights must be non-negative with positive sum".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    /// Every cluster has size one.
    pub fn single() -> Self {
        ClusterSizeDist { lambdas: vec![1.0] }
    }

    /// Geometric law `λ_ℓ = (1-p) p^{ℓ-1}`, cut where the remaining mass
    /// drops below 1e-17 and renormalised.
    pub fn geometric(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("geometric parameter {p} outside [0,1)")));
        }
        let mut lambdas = Vec::new();
        let mut term = 1.0 - p;
        let mut remaining = 1.0;
        while remaining > 1e-17 && lambdas.len() < AUTO_K_CAP {
            lambdas.push(term);
            remaining *= p;
            term *= p;
        }
        Self::from_weights(&lambdas)
    }

    /// `λ_ℓ`, zero outside the support.
    pub fn get(&self, ell: usize) -> f64 {
        if ell == 0 {
            return 0.0;
        }
        self.lambdas.get(ell - 1).copied().unwrap_or(0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.lambdas
    }

    /// Largest `ℓ` represented.
    pub fn max_size(&self) -> usize {
        self.lambdas.len()
    }

    pub fn mean(&self) -> f64 {
        self.lambdas.iter().enumerate().map(|(i, l)| (i + 1) as f64 * l).sum()
    }

    /// `φ_X(z) = Σ z^ℓ λ_ℓ`.
    pub fn pgf(&self, z: f64) -> f64 {
        self.lambdas.iter().rev().fold(0.0, |acc, l| (acc + l) * z)
    }
}

/// Poisson intensity and cluster-size law of a compound Poisson variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundSpec {
    pub intensity: f64,
    pub clusters: ClusterSizeDist,
}

impl CompoundSpec {
    pub fn new(intensity: f64, clusters: ClusterSizeDist) -> Result<Self> {
        if !(intensity > 0.0) || !intensity.is_finite() {
            return Err(Error::InvalidParameter(format!("intensity {intensity} must be > 0")));
        }
        Ok(CompoundSpec { intensity, clusters })
    }

    /// `E W = s E X`.
    pub fn mean(&self) -> f64 {
        self.intensity * self.clusters.mean()
    }

    /// `exp(-s (1 - φ_X(z)))`.
    pub fn pgf(&self, z: f64) -> f64 {
        (-self.intensity * (1.0 - self.clusters.pgf(z))).exp()
    }
}

fn finish(probs: Vec<f64>, k_max: usize, tol: f64) -> Result<DiscreteDistribution> {
    let dist = DiscreteDistribution::from_computed(probs);
    if dist.tail_mass > tol {
        return Err(Error::Truncation { k_max, tail: dist.tail_mass, tol });
    }
    Ok(dist)
}

/// Runs `fill(k_max)` at the fixed index, or at doubling indices until the
/// tail is within tolerance.
fn tabulate<F>(trunc: Truncation, start: usize, fill: F) -> Result<DiscreteDistribution>
where
    F: Fn(usize) -> Vec<f64>,
{
    match trunc.k_max {
        Some(k_max) => finish(fill(k_max), k_max, trunc.tail_tol),
        None => {
            let mut k_max = start.max(8);
            loop {
                let probs = fill(k_max);
                let total: f64 = probs.iter().sum();
                if 1.0 - total <= trunc.tail_tol {
                    // Shrink to the smallest index that still meets the tolerance.
                    let mut acc = total;
                    let mut len = probs.len();
                    while len > 1 && 1.0 - (acc - probs[len - 1]) <= trunc.tail_tol {
                        acc -= probs[len - 1];
                        len -= 1;
                    }
                    let mut probs = probs;
                    probs.truncate(len);
                    return finish(probs, len - 1, trunc.tail_tol);
                }
                if k_max >= AUTO_K_CAP {
                    return finish(probs, k_max, trunc.tail_tol);
                }
                k_max = (k_max * 2).min(AUTO_K_CAP);
            }
        }
    }
}

/// Law of `W = Σ_{j=1}^P X_j`, `P ~ Poisson(s)`, via the recursion
/// `P(W=k) = (s/k) Σ_{ℓ=1}^k ℓ λ_ℓ P(W=k-ℓ)` started at `P(W=0) = e^{-s}`.
pub fn compound_poisson_pmf(spec: &CompoundSpec, trunc: Truncation) -> Result<DiscreteDistribution> {
    let s = spec.intensity;
    let lam = spec.clusters.as_slice();
    let start = (spec.mean() * 4.0) as usize + 16;
    tabulate(trunc, start, |k_max| {
        let mut probs = Vec::with_capacity(k_max + 1);
        probs.push((-s).exp());
        for k in 1..=k_max {
            let upto = k.min(lam.len());
            let mut acc = 0.0;
            for ell in 1..=upto {
                acc += ell as f64 * lam[ell - 1] * probs[k - ell];
            }
            probs.push(s / k as f64 * acc);
        }
        probs
    })
}

/// Pólya-Aeppli pmf from the closed form
/// `P(W=k) = e^{-s} Σ_{j=1}^k p^{k-j} (1-p)^j s^j/j! C(k-1, j-1)`,
/// each term evaluated in log space.
pub fn polya_aeppli_pmf(s: f64, p: f64, trunc: Truncation) -> Result<DiscreteDistribution> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!("intensity {s} must be > 0")));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "Pólya-Aeppli parameter p={p} must lie in [0,1)"
        )));
    }
    let ln_s = s.ln();
    let ln_p = p.ln();
    let ln_q = (1.0 - p).ln();
    let mean = s / (1.0 - p);
    tabulate(trunc, (mean * 4.0) as usize + 16, |k_max| {
        let mut probs = Vec::with_capacity(k_max + 1);
        probs.push((-s).exp());
        for k in 1..=k_max as u64 {
            let mut acc = 0.0;
            for j in 1..=k {
                let geo = if k == j { 0.0 } else { (k - j) as f64 * ln_p };
                let ln_term = -s + geo + j as f64 * (ln_q + ln_s) - ln_factorial(j)
                    + ln_binomial(k - 1, j - 1);
                acc += ln_term.exp();
            }
            probs.push(acc);
        }
        probs
    })
}

fn poly_mul_trunc(a: &[f64], b: &[f64], k_max: usize) -> Vec<f64> {
    let len = (a.len() + b.len() - 1).min(k_max + 1);
    let mut out = vec![0.0; len];
    for (i, &ai) in a.iter().enumerate().take(len) {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(len - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Law of `W = Σ_{i=1}^Q Y_i` with `Q ~ Binomial(n_blocks, p)`: the
/// `n_blocks`-th power of `1 - p + p φ_Y(z)`, by repeated squaring with
/// every product truncated at `k_max`.
pub fn compound_binomial_pmf(
    n_blocks: u64,
    p: f64,
    clusters: &ClusterSizeDist,
    trunc: Truncation,
) -> Result<DiscreteDistribution> {
    if n_blocks < 1 {
        return Err(Error::InvalidParameter("need at least one block".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("block probability {p} outside [0,1]")));
    }
    let mean = n_blocks as f64 * p * clusters.mean();
    tabulate(trunc, (mean * 4.0) as usize + 16, |k_max| {
        let mut base = Vec::with_capacity(k_max + 1);
        base.push(1.0 - p);
        for ell in 1..=k_max.min(clusters.max_size()) {
            base.push(p * clusters.get(ell));
        }
        let mut result = vec![1.0];
        let mut e = n_blocks;
        while e > 0 {
            if e & 1 == 1 {
                result = poly_mul_trunc(&result, &base, k_max);
            }
            e >>= 1;
            if e > 0 {
                base = poly_mul_trunc(&base, &base, k_max);
            }
        }
        result
    })
}

/// `Σ_k z^k P(W=k)` over the tabulated part (Horner).
pub fn generating_function_eval(dist: &DiscreteDistribution, z: f64) -> f64 {
    dist.probs.iter().rev().fold(0.0, |acc, p| acc * z + p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn poisson(s: f64) -> CompoundSpec {
        CompoundSpec::new(s, ClusterSizeDist::single()).unwrap()
    }

    #[test]
    fn unit_clusters_give_poisson() {
        let d = compound_poisson_pmf(&poisson(1.0), Truncation::at(10).with_tol(1e-6)).unwrap();
        let e = (-1.0f64).exp();
        assert_abs_diff_eq!(d.pmf(0), e, epsilon = 1e-15);
        assert_abs_diff_eq!(d.pmf(1), e, epsilon = 1e-15);
        assert_abs_diff_eq!(d.pmf(2), e / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn truncation_too_short_is_reported() {
        let err = compound_poisson_pmf(&poisson(1.0), Truncation::at(10)).unwrap_err();
        assert!(matches!(err, Error::Truncation { k_max: 10, .. }));
        let err = polya_aeppli_pmf(3.0, 0.5, Truncation::at(5)).unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }));
    }

    #[test]
    fn auto_truncation_is_minimal() {
        let d = compound_poisson_pmf(&poisson(1.0), Truncation::auto()).unwrap();
        assert!(d.tail_mass() <= DEFAULT_TAIL_TOL);
        let k = d.len() - 1;
        assert!(compound_poisson_pmf(&poisson(1.0), Truncation::at(k - 1)).is_err());
    }

    #[test]
    fn geometric_half_clusters_start_at_exp_minus_s() {
        let spec = CompoundSpec::new(1.0, ClusterSizeDist::geometric(0.5).unwrap()).unwrap();
        let d = compound_poisson_pmf(&spec, Truncation::auto()).unwrap();
        assert_eq!(d.pmf(0), (-1.0f64).exp());
    }

    #[test]
    fn polya_aeppli_hand_values() {
        let d = polya_aeppli_pmf(1.0, 0.5, Truncation::auto()).unwrap();
        assert_abs_diff_eq!(d.pmf(1), 0.5 * (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(d.pmf(1), 0.183_939_7, epsilon = 1e-7);
        // k=2: e^{-1}(p(1-p) s + (1-p)^2 s^2/2) = e^{-1}(1/4 + 1/8)
        assert_abs_diff_eq!(d.pmf(2), 0.375 * (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn polya_aeppli_p_zero_is_poisson() {
        let pa = polya_aeppli_pmf(1.0, 0.0, Truncation::auto()).unwrap();
        let po = compound_poisson_pmf(&poisson(1.0), Truncation::auto()).unwrap();
        for k in 0..pa.len().max(po.len()) {
            assert_abs_diff_eq!(pa.pmf(k), po.pmf(k), epsilon = 1e-15);
        }
    }

    #[test]
    fn polya_aeppli_rejects_degenerate_p() {
        assert!(polya_aeppli_pmf(1.0, 1.0, Truncation::auto()).is_err());
        assert!(polya_aeppli_pmf(0.0, 0.5, Truncation::auto()).is_err());
    }

    #[test]
    fn polya_aeppli_large_k_does_not_overflow() {
        let d = polya_aeppli_pmf(20.0, 0.7, Truncation::auto()).unwrap();
        assert!(d.len() > 100);
        assert!(d.probs().iter().all(|p| p.is_finite()));
        assert_abs_diff_eq!(d.mean(), 20.0 / 0.3, epsilon = 1e-8);
    }

    #[test]
    fn single_block_binomial() {
        let d = compound_binomial_pmf(1, 0.3, &ClusterSizeDist::single(), Truncation::at(1)).unwrap();
        assert_abs_diff_eq!(d.pmf(0), 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(d.pmf(1), 0.3, epsilon = 1e-15);

        let lam = ClusterSizeDist::new(vec![0.2, 0.5, 0.3]).unwrap();
        let d = compound_binomial_pmf(1, 0.4, &lam, Truncation::auto()).unwrap();
        assert_abs_diff_eq!(d.pmf(0), 0.6, epsilon = 1e-15);
        for k in 1..=3 {
            assert_abs_diff_eq!(d.pmf(k), 0.4 * lam.get(k), epsilon = 1e-15);
        }
    }

    #[test]
    fn binomial_matches_direct_convolution() {
        let lam = ClusterSizeDist::new(vec![0.6, 0.4]).unwrap();
        let d = compound_binomial_pmf(7, 0.2, &lam, Truncation::auto()).unwrap();
        // Oracle: fold seven single-block laws by plain convolution.
        let block = [0.8, 0.2 * 0.6, 0.2 * 0.4];
        let mut direct = vec![1.0];
        for _ in 0..7 {
            let mut next = vec![0.0; direct.len() + 2];
            for (i, a) in direct.iter().enumerate() {
                for (j, b) in block.iter().enumerate() {
                    next[i + j] += a * b;
                }
            }
            direct = next;
        }
        for (k, p) in direct.iter().enumerate() {
            assert_abs_diff_eq!(d.pmf(k), *p, epsilon = 1e-15);
        }
    }

    #[test]
    fn generating_function_edges() {
        let d = compound_poisson_pmf(&poisson(1.0), Truncation::auto()).unwrap();
        assert_abs_diff_eq!(generating_function_eval(&d, 1.0), 1.0 - d.tail_mass(), epsilon = 1e-15);
        assert_eq!(generating_function_eval(&d, 0.0), d.pmf(0));
        assert_abs_diff_eq!(generating_function_eval(&d, 0.5), (-0.5f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(generating_function_eval(&d, 0.5), 0.606_530_7, epsilon = 1e-7);
    }

    #[test]
    fn construction_validates() {
        assert!(DiscreteDistribution::new(vec![0.5, 0.4], 0.1).is_ok());
        assert!(DiscreteDistribution::new(vec![0.5, 0.4], 0.0).is_err());
        assert!(DiscreteDistribution::new(vec![1.5, -0.5], 0.0).is_err());
        assert!(ClusterSizeDist::new(vec![0.5, 0.6]).is_err());
        assert!(CompoundSpec::new(0.0, ClusterSizeDist::single()).is_err());
    }

    #[test]
    fn json_and_csv_shapes() {
        let d = DiscreteDistribution::new(vec![0.25, 0.75], 0.0).unwrap();
        let js = d.to_json().unwrap();
        assert_eq!(js, r#"{"probs":[0.25,0.75],"tail_mass":0.0}"#);
        assert_eq!(DiscreteDistribution::from_json(&js).unwrap(), d);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,prob\n0,"));
        let back = DiscreteDistribution::read_csv(&buf[..]).unwrap();
        assert_eq!(back, d);
    }
}
