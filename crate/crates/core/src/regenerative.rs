//! Symbolic regenerative processes: i.i.d. blocks of a repeated symbol,
//! observed through the sets `U_m = {X_0 > m}` under the shift.

use std::io::Write;

use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::distributions::ClusterSizeDist;
use crate::error::{Error, Result};
use crate::estimators::{cluster_statistics, ClusterConfig, ClusterStats, IndicatorProcess};
use crate::rng::{StreamKey, StreamRng};

/// Default cut-off for the symbol law.
pub const DEFAULT_K_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockRule {
    /// A block of symbol `k` has length 1 with probability `1 - 1/k` and
    /// length `k + 1` with probability `1/k`.
    Smith,
    /// Block lengths are i.i.d. with the given law, independent of the symbol.
    FixedLengths { lengths: ClusterSizeDist },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegenSpec {
    /// `gamma[k-1] = P(Y = k)`.
    pub gamma: Vec<f64>,
    pub rule: BlockRule,
}

/// `γ_k ∝ 1/k²` on `1..=k_cap`.
pub fn inverse_square_symbols(k_cap: usize) -> Vec<f64> {
    let w: Vec<f64> = (1..=k_cap).map(|k| 1.0 / (k as f64 * k as f64)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

impl RegenSpec {
    pub fn new(gamma: Vec<f64>, rule: BlockRule) -> Result<Self> {
        let spec = RegenSpec { gamma, rule };
        spec.validate()?;
        Ok(spec)
    }

    pub fn smith(k_cap: usize) -> Result<Self> {
        Self::new(inverse_square_symbols(k_cap), BlockRule::Smith)
    }

    pub fn fixed_lengths(lengths: ClusterSizeDist, k_cap: usize) -> Result<Self> {
        Self::new(inverse_square_symbols(k_cap), BlockRule::FixedLengths { lengths })
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_empty() || self.gamma.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidParameter("symbol law must be non-negative".into()));
        }
        let total: f64 = self.gamma.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("symbol law sums to {total}")));
        }
        if self.gamma.len() > u32::MAX as usize {
            return Err(Error::InvalidParameter("symbol alphabet too large".into()));
        }
        let m = self.mean_block_len();
        if !m.is_finite() {
            return Err(Error::InvalidParameter("mean block length is infinite".into()));
        }
        Ok(())
    }

    pub fn k_cap(&self) -> usize {
        self.gamma.len()
    }

    /// `E[block length | symbol k]`.
    pub fn mean_len_given(&self, k: usize) -> f64 {
        match &self.rule {
            BlockRule::Smith => {
                let k = k as f64;
                (1.0 - 1.0 / k) + (k + 1.0) / k
            }
            BlockRule::FixedLengths { lengths } => lengths.mean(),
        }
    }

    pub fn mean_block_len(&self) -> f64 {
        self.gamma.iter().enumerate().map(|(i, g)| g * self.mean_len_given(i + 1)).sum()
    }

    /// Stationary `μ(U_m) = P(X_0 > m)`.
    pub fn measure_u(&self, m: u64) -> f64 {
        let tail: f64 = self
            .gamma
            .iter()
            .enumerate()
            .skip(m as usize)
            .map(|(i, g)| g * self.mean_len_given(i + 1))
            .sum();
        tail / self.mean_block_len()
    }

    /// `(length, weight)` pairs of the block-length law given symbol `k`.
    fn length_law(&self, k: usize) -> Vec<(u64, f64)> {
        match &self.rule {
            BlockRule::Smith => {
                let q = 1.0 / k as f64;
                vec![(1, 1.0 - q), (k as u64 + 1, q)]
            }
            BlockRule::FixedLengths { lengths } => lengths
                .as_slice()
                .iter()
                .enumerate()
                .map(|(i, l)| (i as u64 + 1, *l))
                .collect(),
        }
    }
}

/// One block: `symbol` repeated over indices `start .. start + len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    /// Index of the block head; the block covering index 0 may start before it.
    pub start: i64,
    pub len: u64,
    pub symbol: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolStream {
    pub symbols: Vec<u32>,
    pub blocks: Vec<Block>,
}

impl SymbolStream {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "symbol"])?;
        for (i, s) in self.symbols.iter().enumerate() {
            out.write_record([i.to_string(), s.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn alias(weights: Vec<f64>) -> Result<WeightedAliasIndex<f64>> {
    WeightedAliasIndex::new(weights).map_err(|e| Error::InvalidParameter(format!("alias table: {e}")))
}

/// Precomputed samplers for one spec.
#[derive(Debug, Clone)]
pub struct BlockSampler {
    spec: RegenSpec,
    symbols: WeightedAliasIndex<f64>,
    fixed: Option<WeightedAliasIndex<f64>>,
    /// Size-biased law of the block covering index 0, over `outcomes`.
    biased: WeightedAliasIndex<f64>,
    outcomes: Vec<(u32, u64)>,
}

impl BlockSampler {
    pub fn new(spec: &RegenSpec) -> Result<Self> {
        spec.validate()?;
        let symbols = alias(spec.gamma.clone())?;
        let fixed = match &spec.rule {
            BlockRule::FixedLengths { lengths } => Some(alias(lengths.as_slice().to_vec())?),
            BlockRule::Smith => None,
        };
        let mut outcomes = Vec::new();
        let mut weights = Vec::new();
        match &spec.rule {
            BlockRule::Smith => {
                for (i, g) in spec.gamma.iter().enumerate() {
                    for (len, p) in spec.length_law(i + 1) {
                        if p > 0.0 && *g > 0.0 {
                            outcomes.push((i as u32 + 1, len));
                            weights.push(g * p * len as f64);
                        }
                    }
                }
            }
            BlockRule::FixedLengths { lengths } => {
                // Symbol and length are independent, so bias the length only
                // and draw the symbol separately; `outcomes` carries lengths.
                for (i, l) in lengths.as_slice().iter().enumerate() {
                    outcomes.push((0, i as u64 + 1));
                    weights.push(l * (i + 1) as f64);
                }
            }
        }
        Ok(BlockSampler { spec: spec.clone(), symbols, fixed, biased: alias(weights)?, outcomes })
    }

    #[inline]
    fn length_for(&self, k: u32, rng: &mut StreamRng) -> u64 {
        match &self.fixed {
            Some(lens) => lens.sample(rng) as u64 + 1,
            None => {
                if rng.below(k as u64) == 0 {
                    k as u64 + 1
                } else {
                    1
                }
            }
        }
    }

    /// An i.i.d. block `(symbol, length)`.
    #[inline]
    pub fn block(&self, rng: &mut StreamRng) -> (u32, u64) {
        let k = self.symbols.sample(rng) as u32 + 1;
        (k, self.length_for(k, rng))
    }

    /// The size-biased block covering index 0 and the offset of index 0
    /// inside it.
    pub fn covering_block(&self, rng: &mut StreamRng) -> (u32, u64, u64) {
        let (mut k, len) = self.outcomes[self.biased.sample(rng)];
        if self.fixed.is_some() {
            k = self.symbols.sample(rng) as u32 + 1;
        }
        (k, len, rng.below(len))
    }

    pub fn spec(&self) -> &RegenSpec {
        &self.spec
    }
}

/// A stationary stream of `length` symbols.
pub fn generate_stationary(
    sampler: &BlockSampler,
    length: u64,
    key: &StreamKey,
    index: u64,
) -> Result<SymbolStream> {
    if length < 1 {
        return Err(Error::InvalidParameter("stream length must be >= 1".into()));
    }
    let mut rng = key.stream(index);
    let (k, len, phase) = sampler.covering_block(&mut rng);
    let mut blocks = vec![Block { start: -(phase as i64), len, symbol: k }];
    let mut end = len - phase;
    while end < length {
        let (k, len) = sampler.block(&mut rng);
        blocks.push(Block { start: end as i64, len, symbol: k });
        end += len;
    }
    let mut symbols = Vec::with_capacity(length as usize);
    for b in &blocks {
        let from = b.start.max(0) as u64;
        let to = ((b.start + b.len as i64) as u64).min(length);
        symbols.extend(std::iter::repeat_n(b.symbol, (to - from) as usize));
    }
    Ok(SymbolStream { symbols, blocks })
}

/// The indicator of `U_m` along stationary streams.
///
/// With `gap_cap = Some(c)`, every run of symbols outside `U_m` is cut
/// short once it reaches length `c`; the next block in `U_m` is then drawn
/// directly from its conditional law. Runs of at least `c >= 2K+1` zeros
/// keep windows of length `2K+1` on either side apart, so ratio statistics
/// conditioned on a visit are unchanged while the empty stretches between
/// clusters, which are most of the stream, are skipped.
#[derive(Debug, Clone)]
pub struct RegenProcess {
    sampler: BlockSampler,
    m: u64,
    mu: f64,
    gap_cap: Option<u64>,
    /// `P(block symbol > m)`.
    q_u: f64,
    inside: WeightedAliasIndex<f64>,
    outside: Option<WeightedAliasIndex<f64>>,
}

impl RegenProcess {
    pub fn new(spec: &RegenSpec, m: u64, gap_cap: Option<u64>) -> Result<Self> {
        let sampler = BlockSampler::new(spec)?;
        let mu = spec.measure_u(m);
        if !(mu > 0.0) {
            return Err(Error::ZeroMeasureTarget);
        }
        let m_us = m as usize;
        let q_u: f64 = spec.gamma[m_us..].iter().sum();
        let inside = alias(spec.gamma[m_us..].to_vec())?;
        let outside = if m_us > 0 && spec.gamma[..m_us].iter().any(|g| *g > 0.0) {
            Some(alias(spec.gamma[..m_us].to_vec())?)
        } else {
            None
        };
        if let Some(c) = gap_cap {
            if c < 1 {
                return Err(Error::InvalidParameter("gap cap must be >= 1".into()));
            }
        }
        Ok(RegenProcess { sampler, m, mu, gap_cap, q_u, inside, outside })
    }

    pub fn m(&self) -> u64 {
        self.m
    }
}

impl IndicatorProcess for RegenProcess {
    fn mu(&self) -> f64 {
        self.mu
    }

    fn visits(&self, key: &StreamKey, index: u64, len: u64, out: &mut Vec<u64>) -> Result<()> {
        out.clear();
        let mut rng = key.stream(index);
        let push = |out: &mut Vec<u64>, from: u64, n: u64| {
            out.extend(from..(from + n).min(len));
        };
        let (k, blen, phase) = self.sampler.covering_block(&mut rng);
        let mut cursor = blen - phase;
        let mut zeros = 0u64;
        if k as u64 > self.m {
            push(out, 0, cursor);
        } else {
            zeros = cursor;
        }
        match self.gap_cap {
            None => {
                while cursor < len {
                    let (k, blen) = self.sampler.block(&mut rng);
                    if k as u64 > self.m {
                        push(out, cursor, blen);
                    }
                    cursor += blen;
                }
            }
            Some(cap) => {
                let between = if self.q_u < 1.0 {
                    Some(Geometric::new(self.q_u).map_err(|e| Error::InvalidParameter(e.to_string()))?)
                } else {
                    None
                };
                while cursor < len {
                    let g = between.as_ref().map_or(0, |d| d.sample(&mut rng));
                    let mut drawn = 0;
                    while drawn < g && zeros < cap && cursor < len {
                        let outside = self.outside.as_ref().expect("outside symbols");
                        let k = outside.sample(&mut rng) as u32 + 1;
                        let blen = self.sampler.length_for(k, &mut rng);
                        cursor += blen;
                        zeros += blen;
                        drawn += 1;
                    }
                    if cursor >= len {
                        break;
                    }
                    let k = (self.inside.sample(&mut rng) as u64 + self.m + 1) as u32;
                    let blen = self.sampler.length_for(k, &mut rng);
                    push(out, cursor, blen);
                    cursor += blen;
                    zeros = 0;
                }
            }
        }
        Ok(())
    }
}

/// Cluster statistics of `U_m` from `n_streams` streams of `stream_len`
/// positions each (after gap capping at `2K+1`).
pub fn regen_cluster_stats(
    spec: &RegenSpec,
    m: u64,
    k: u64,
    n_streams: u64,
    stream_len: u64,
    key: &StreamKey,
) -> Result<ClusterStats> {
    let process = RegenProcess::new(spec, m, Some(2 * k + 1))?;
    let mut cfg = ClusterConfig::new(k, 100);
    cfg.orbit_len = Some(stream_len);
    cfg.orbits_per_round = n_streams;
    cfg.max_steps = n_streams.saturating_mul(stream_len);
    cluster_statistics(&process, &cfg, key)
}
