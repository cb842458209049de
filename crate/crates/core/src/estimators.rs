//! Counting, cluster and return-time statistics of an indicator sequence
//! `I_j = 1_U(T^j x)` along stationary orbits.
//!
//! Orbits are generated in rounds of a fixed number of orbit indices, each
//! orbit reduced to integer tallies, and the tallies merged in index order.
//! The worker count therefore never changes a result.

use std::io::Write;

use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::EmpiricalDistribution;
use crate::dynamics::{MapSystem, OrbitState};
use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::targets::TargetSet;

/// Largest admissible horizon `⌊t/μ⌋`.
pub const MAX_HORIZON: f64 = 1e12;

/// Fewer observed events than this mark an estimate as low-confidence.
pub const CONFIDENT_EVENTS: u64 = 30;

/// A stationary 0/1 sequence with known `P(I_0 = 1)`.
pub trait IndicatorProcess: Sync {
    fn mu(&self) -> f64;

    /// Writes the sorted indices `j < len` with `I_j = 1` for the sample
    /// path numbered `index`.
    fn visits(&self, key: &StreamKey, index: u64, len: u64, out: &mut Vec<u64>) -> Result<()>;
}

/// Visits of a map orbit to a target.
#[derive(Debug, Clone)]
pub struct OrbitProcess<'a> {
    pub map: &'a MapSystem,
    pub target: &'a TargetSet,
    mu: f64,
}

impl<'a> OrbitProcess<'a> {
    pub fn new(map: &'a MapSystem, target: &'a TargetSet, mu: f64) -> Result<Self> {
        target.validate_for(map)?;
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::ZeroMeasureTarget);
        }
        Ok(OrbitProcess { map, target, mu })
    }
}

impl IndicatorProcess for OrbitProcess<'_> {
    fn mu(&self) -> f64 {
        self.mu
    }

    fn visits(&self, key: &StreamKey, index: u64, len: u64, out: &mut Vec<u64>) -> Result<()> {
        out.clear();
        if len == 0 {
            return Ok(());
        }
        let mut s = self.map.sample_stationary(key, index)?;
        for j in 0..len {
            if j > 0 {
                self.map.step_in_place(&mut s);
            }
            if self.target.contains(&s) {
                out.push(j);
            }
        }
        Ok(())
    }
}

/// I.i.d. Bernoulli(`mu`) indicators.
#[derive(Debug, Clone, Copy)]
pub struct BernoulliProcess {
    pub mu: f64,
}

impl IndicatorProcess for BernoulliProcess {
    fn mu(&self) -> f64 {
        self.mu
    }

    fn visits(&self, key: &StreamKey, index: u64, len: u64, out: &mut Vec<u64>) -> Result<()> {
        out.clear();
        let geo = Geometric::new(self.mu)
            .map_err(|e| Error::InvalidParameter(format!("Bernoulli mu: {e}")))?;
        let mut rng = key.stream(index);
        let mut pos = geo.sample(&mut rng);
        while pos < len {
            out.push(pos);
            pos = pos.saturating_add(1 + geo.sample(&mut rng));
        }
        Ok(())
    }
}

/// `N = ⌊t/μ⌋`, rejecting horizons beyond [`MAX_HORIZON`].
pub fn horizon(t: f64, mu: f64) -> Result<u64> {
    if !(t > 0.0) || !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("need t > 0 and mu > 0 (t={t}, mu={mu})")));
    }
    let n = (t / mu).floor();
    if !(n <= MAX_HORIZON) {
        return Err(Error::HorizonOverflow(n));
    }
    Ok(n as u64)
}

/// `ξ^t_U(s0) = Σ_{n=0}^{⌊t/μ⌋} 1_U(T^n s0)`.
pub fn count_visits(map: &MapSystem, target: &TargetSet, s0: OrbitState, t: f64, mu: f64) -> Result<u64> {
    let n = horizon(t, mu)?;
    let mut s = s0;
    let mut count = target.contains(&s) as u64;
    for _ in 0..n {
        map.step_in_place(&mut s);
        count += target.contains(&s) as u64;
    }
    Ok(count)
}

fn per_index<T, F>(n: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Empirical law of `ξ^t_U` over `n_trials` stationary starts.
pub fn counting_distribution<P: IndicatorProcess>(
    process: &P,
    t: f64,
    n_trials: u64,
    key: &StreamKey,
) -> Result<EmpiricalDistribution> {
    let n = horizon(t, process.mu())?;
    let counts = per_index(n_trials, |i| {
        let mut v = Vec::new();
        process.visits(key, i, n + 1, &mut v)?;
        Ok(v.len() as u64)
    })?;
    Ok(EmpiricalDistribution::from_samples(counts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Window half-length `K`.
    pub k: u64,
    pub min_entries: u64,
    /// Length of each orbit; chosen from `mu` and `min_entries` when unset.
    pub orbit_len: Option<u64>,
    /// Step budget over all orbits.
    pub max_steps: u64,
    pub orbits_per_round: u64,
}

impl ClusterConfig {
    pub fn new(k: u64, min_entries: u64) -> Self {
        ClusterConfig { k, min_entries, orbit_len: None, max_steps: 1 << 36, orbits_per_round: 16 }
    }

    pub fn resolved_orbit_len(&self, mu: f64) -> u64 {
        self.orbit_len.unwrap_or_else(|| {
            let w = 2 * self.k + 1;
            let want = self.min_entries as f64 / (mu * self.orbits_per_round as f64);
            (want.ceil() as u64).clamp(64 * w, 1 << 25).max(4 * w)
        })
    }
}

#[derive(Debug, Clone, Default)]
struct OrbitTally {
    entries: u64,
    /// `w_hist[w]`: entries whose forward window holds `w` visits.
    w_hist: Vec<u64>,
    /// `z_hist[z]`: centred windows holding `z` visits.
    z_hist: Vec<u64>,
}

fn tally_orbit(visits: &[u64], len: u64, k: u64) -> OrbitTally {
    let w = 2 * k + 1;
    let mut t = OrbitTally { entries: 0, w_hist: vec![0; k as usize + 2], z_hist: vec![0; w as usize + 1] };

    // Forward windows W = #{visits in [v, v+K]}, entries with v + 2K < len.
    let mut j = 0;
    for (i, &v) in visits.iter().enumerate() {
        if v + 2 * k >= len {
            break;
        }
        while j < visits.len() && visits[j] <= v + k {
            j += 1;
        }
        t.w_hist[j - i] += 1;
        t.entries += 1;
    }

    // Centred windows [s, s+2K] for every s <= len - w. A visit v lies in
    // the windows s in [v-2K, v], so Z steps up at v-2K and down at v+1.
    if len >= w {
        let last = len - w;
        let n = visits.len();
        let (mut a, mut b) = (0, 0);
        let mut z = 0usize;
        let mut prev = 0u64;
        while b < n {
            let up = if a < n { visits[a].saturating_sub(2 * k) } else { u64::MAX };
            let down = visits[b] + 1;
            let next = up.min(down);
            if z > 0 && next > prev && prev <= last {
                t.z_hist[z] += next.min(last + 1) - prev;
            }
            prev = next;
            while a < n && visits[a].saturating_sub(2 * k) == next {
                z += 1;
                a += 1;
            }
            while b < n && visits[b] + 1 == next {
                z -= 1;
                b += 1;
            }
        }
    }
    t
}

/// Empirical `α̂_ℓ(K)`, `λ̂_ℓ(K)` and the extremal index, with standard
/// errors from batch means over orbits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub k: u64,
    /// Conditioning events `I_0 = 1`.
    pub n_entries: u64,
    /// Centred windows with `Z^K >= 1`.
    pub n_windows: u64,
    pub n_orbits: u64,
    pub steps: u64,
    /// `alpha_hat[ℓ-1] = #{W^K >= ℓ} / n_entries`.
    pub alpha_hat: Vec<f64>,
    pub alpha_hat_se: Vec<f64>,
    pub alpha_hat_counts: Vec<u64>,
    /// `lambda_hat[ℓ-1] = #{Z^K = ℓ} / #{Z^K >= 1}`.
    pub lambda_hat: Vec<f64>,
    pub lambda_hat_se: Vec<f64>,
    pub lambda_hat_counts: Vec<u64>,
    /// `1 - α̂_2`.
    pub extremal_index: f64,
    pub extremal_index_se: f64,
    /// Largest `ℓ` up to which every `α̂` count reaches [`CONFIDENT_EVENTS`].
    pub alpha_confident_to: usize,
    pub lambda_confident_to: usize,
    /// The step budget ran out before `min_entries` entries were seen.
    pub insufficient: bool,
}

/// Ratio `Σa/Σb` with its batch-means standard error.
fn batch_ratio(num: &[u64], den: &[u64]) -> (f64, f64) {
    let sn: u64 = num.iter().sum();
    let sd: u64 = den.iter().sum();
    if sd == 0 {
        return (0.0, 0.0);
    }
    let r = sn as f64 / sd as f64;
    let m = num.len() as f64;
    if m < 2.0 {
        return (r, 0.0);
    }
    let ss: f64 = num.iter().zip(den).map(|(a, b)| (*a as f64 - r * *b as f64).powi(2)).sum();
    (r, (m / (m - 1.0) * ss).sqrt() / sd as f64)
}

fn confident_prefix(counts: &[u64]) -> usize {
    counts.iter().take_while(|c| **c >= CONFIDENT_EVENTS).count()
}

impl ClusterStats {
    fn from_tallies(k: u64, tallies: &[OrbitTally], steps: u64, insufficient: bool) -> Self {
        let entries: Vec<u64> = tallies.iter().map(|t| t.entries).collect();
        let n_entries: u64 = entries.iter().sum();
        let wmax = k as usize + 1;
        let zmax = 2 * k as usize + 1;

        // Tail sums #{W >= ℓ} per orbit.
        let at_least: Vec<Vec<u64>> = tallies
            .iter()
            .map(|t| {
                let mut acc = vec![0u64; wmax + 2];
                for l in (1..=wmax).rev() {
                    acc[l] = acc[l + 1] + t.w_hist[l];
                }
                acc
            })
            .collect();
        let mut alpha_len = (1..=wmax)
            .rev()
            .find(|l| at_least.iter().any(|a| a[*l] > 0))
            .unwrap_or(1)
            .max(2)
            .min(wmax.max(2));
        if wmax < 2 {
            alpha_len = 2;
        }
        let mut alpha_hat = Vec::with_capacity(alpha_len);
        let mut alpha_hat_se = Vec::with_capacity(alpha_len);
        let mut alpha_hat_counts = Vec::with_capacity(alpha_len);
        for l in 1..=alpha_len {
            let num: Vec<u64> = at_least.iter().map(|a| a.get(l).copied().unwrap_or(0)).collect();
            let (r, se) = batch_ratio(&num, &entries);
            alpha_hat.push(if l == 1 { 1.0 } else { r });
            alpha_hat_se.push(if l == 1 { 0.0 } else { se });
            alpha_hat_counts.push(num.iter().sum());
        }

        let windows: Vec<u64> = tallies.iter().map(|t| t.z_hist[1..].iter().sum()).collect();
        let n_windows: u64 = windows.iter().sum();
        let lambda_len =
            (1..=zmax).rev().find(|l| tallies.iter().any(|t| t.z_hist[*l] > 0)).unwrap_or(0);
        let mut lambda_hat = Vec::with_capacity(lambda_len);
        let mut lambda_hat_se = Vec::with_capacity(lambda_len);
        let mut lambda_hat_counts = Vec::with_capacity(lambda_len);
        for l in 1..=lambda_len {
            let num: Vec<u64> = tallies.iter().map(|t| t.z_hist[l]).collect();
            let (r, se) = batch_ratio(&num, &windows);
            lambda_hat.push(r);
            lambda_hat_se.push(se);
            lambda_hat_counts.push(num.iter().sum());
        }

        ClusterStats {
            k,
            n_entries,
            n_windows,
            n_orbits: tallies.len() as u64,
            steps,
            extremal_index: 1.0 - alpha_hat[1],
            extremal_index_se: alpha_hat_se[1],
            alpha_confident_to: confident_prefix(&alpha_hat_counts),
            lambda_confident_to: confident_prefix(&lambda_hat_counts),
            alpha_hat,
            alpha_hat_se,
            alpha_hat_counts,
            lambda_hat,
            lambda_hat_se,
            lambda_hat_counts,
            insufficient,
        }
    }

    /// `α̂_ℓ(K)`, zero beyond the reported range.
    pub fn alpha_hat(&self, ell: usize) -> f64 {
        self.alpha_hat.get(ell.wrapping_sub(1)).copied().unwrap_or(0.0)
    }

    pub fn lambda_hat(&self, ell: usize) -> f64 {
        self.lambda_hat.get(ell.wrapping_sub(1)).copied().unwrap_or(0.0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per `ℓ` with `low_confidence` set past the confident range.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "ell",
            "alpha_hat",
            "alpha_hat_se",
            "alpha_count",
            "lambda_hat",
            "lambda_hat_se",
            "lambda_count",
            "low_confidence",
        ])?;
        let rows = self.alpha_hat.len().max(self.lambda_hat.len());
        for i in 0..rows {
            let l = i + 1;
            let low = l > self.alpha_confident_to.max(1) || l > self.lambda_confident_to;
            let cell = |v: &[f64]| v.get(i).map(|x| format!("{x:e}")).unwrap_or_default();
            let count = |v: &[u64]| v.get(i).map(|x| x.to_string()).unwrap_or_default();
            out.write_record([
                l.to_string(),
                cell(&self.alpha_hat),
                cell(&self.alpha_hat_se),
                count(&self.alpha_hat_counts),
                cell(&self.lambda_hat),
                cell(&self.lambda_hat_se),
                count(&self.lambda_hat_counts),
                low.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs orbits in fixed-size rounds until `min_entries` entries are seen or
/// the step budget is spent.
pub fn cluster_statistics<P: IndicatorProcess>(
    process: &P,
    cfg: &ClusterConfig,
    key: &StreamKey,
) -> Result<ClusterStats> {
    if cfg.k < 1 {
        return Err(Error::InvalidParameter("window half-length K must be >= 1".into()));
    }
    if cfg.min_entries < 100 {
        return Err(Error::InvalidParameter("min_entries must be >= 100".into()));
    }
    if cfg.orbits_per_round < 2 {
        return Err(Error::InvalidParameter("need at least two orbits per round".into()));
    }
    let len = cfg.resolved_orbit_len(process.mu());
    if len < 2 * cfg.k + 1 {
        return Err(Error::InvalidParameter("orbit shorter than one window".into()));
    }
    let mut tallies: Vec<OrbitTally> = Vec::new();
    let mut entries = 0u64;
    let mut steps = 0u64;
    let mut next = 0u64;
    while entries < cfg.min_entries && steps < cfg.max_steps {
        let round = per_index(cfg.orbits_per_round, |i| {
            let mut v = Vec::new();
            process.visits(key, next + i, len, &mut v)?;
            Ok(tally_orbit(&v, len, cfg.k))
        })?;
        next += cfg.orbits_per_round;
        steps += cfg.orbits_per_round * len;
        entries += round.iter().map(|t| t.entries).sum::<u64>();
        tallies.extend(round);
    }
    Ok(ClusterStats::from_tallies(cfg.k, &tallies, steps, entries < cfg.min_entries))
}

/// Successive return gaps after one entry into `U`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReturnTimeRecord {
    pub orbit: u64,
    pub entry_index: u64,
    /// `τ, τ²-τ, …` for all returns with `τ^j <= max_gap`.
    pub gaps: Vec<u64>,
    /// The orbit ended before `entry_index + max_gap`, so returns may be
    /// missing.
    pub censored: bool,
}

impl ReturnTimeRecord {
    /// `W^K` recovered from the gaps: one plus the returns within `K`.
    pub fn forward_count(&self, k: u64) -> u64 {
        let mut tau = 0;
        let mut w = 1;
        for g in &self.gaps {
            tau += g;
            if tau > k {
                break;
            }
            w += 1;
        }
        w
    }
}

pub fn return_time_records<P: IndicatorProcess>(
    process: &P,
    n_entries: u64,
    max_gap: u64,
    orbit_len: u64,
    key: &StreamKey,
) -> Result<Vec<ReturnTimeRecord>> {
    if n_entries < 1 || max_gap < 1 || orbit_len < 1 {
        return Err(Error::InvalidParameter("n_entries, max_gap and orbit_len must be >= 1".into()));
    }
    const ROUND: u64 = 16;
    let mut out = Vec::new();
    let mut next = 0u64;
    while (out.len() as u64) < n_entries {
        let round = per_index(ROUND, |i| {
            let orbit = next + i;
            let mut v = Vec::new();
            process.visits(key, orbit, orbit_len, &mut v)?;
            let mut recs = Vec::with_capacity(v.len());
            for (i, &e) in v.iter().enumerate() {
                let gaps = v[i + 1..]
                    .iter()
                    .take_while(|r| **r - e <= max_gap)
                    .scan(e, |prev, r| {
                        let g = r - *prev;
                        *prev = *r;
                        Some(g)
                    })
                    .collect();
                recs.push(ReturnTimeRecord {
                    orbit,
                    entry_index: e,
                    gaps,
                    censored: e + max_gap >= orbit_len,
                });
            }
            Ok(recs)
        })?;
        next += ROUND;
        for recs in round {
            out.extend(recs);
        }
        if next > (1 << 40) {
            break;
        }
    }
    out.truncate(n_entries as usize);
    Ok(out)
}

/// `α̂_ℓ(K)` for `ℓ = 1..=K+1` from uncensored records.
pub fn alpha_hat_from_records(records: &[ReturnTimeRecord], k: u64) -> Vec<f64> {
    let mut at_least = vec![0u64; k as usize + 2];
    let mut n = 0u64;
    for r in records.iter().filter(|r| !r.censored) {
        n += 1;
        let w = r.forward_count(k) as usize;
        for c in at_least.iter_mut().take(w + 1).skip(1) {
            *c += 1;
        }
    }
    at_least[1..].iter().map(|c| *c as f64 / n.max(1) as f64).collect()
}

/// `P̂(τ_U <= L) / (L μ(U))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRatio {
    pub l: u64,
    pub ratio: f64,
    pub std_error: f64,
    pub hits: u64,
    pub n_trials: u64,
    /// No trial entered `U` within `L`; the ratio carries no information.
    pub zero_hit: bool,
}

pub fn entry_time_ratio<P: IndicatorProcess>(
    process: &P,
    l: u64,
    n_trials: u64,
    key: &StreamKey,
) -> Result<EntryRatio> {
    if l < 1 || n_trials < 1 {
        return Err(Error::InvalidParameter("L and n_trials must be >= 1".into()));
    }
    let hit = per_index(n_trials, |i| {
        let mut v = Vec::new();
        process.visits(key, i, l + 1, &mut v)?;
        Ok(v.iter().any(|j| *j >= 1))
    })?;
    let hits = hit.iter().filter(|h| **h).count() as u64;
    let p = hits as f64 / n_trials as f64;
    let scale = l as f64 * process.mu();
    Ok(EntryRatio {
        l,
        ratio: p / scale,
        std_error: (p * (1.0 - p) / n_trials as f64).sqrt() / scale,
        hits,
        n_trials,
        zero_hit: hits == 0,
    })
}

/// `R₂ = Σ_{n=2}^{Δ} P(Z ≥ 1 ∧ Z∘T^{(2K+1)n} ≥ 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Estimate {
    pub value: f64,
    pub std_error: f64,
    /// `terms[i]` is the `n = i + 2` summand.
    pub terms: Vec<f64>,
    pub n_trials: u64,
}

pub fn r2_overlap<P: IndicatorProcess>(
    process: &P,
    k: u64,
    delta: u64,
    n_trials: u64,
    key: &StreamKey,
) -> Result<R2Estimate> {
    if delta < 2 || n_trials < 2 {
        return Err(Error::InvalidParameter("need delta >= 2 and n_trials >= 2".into()));
    }
    let w = 2 * k + 1;
    let len = w * (delta + 1);
    let hits = per_index(n_trials, |i| {
        let mut v = Vec::new();
        process.visits(key, i, len, &mut v)?;
        let mut occupied = vec![false; delta as usize + 1];
        for j in v {
            occupied[(j / w) as usize] = true;
        }
        Ok(if occupied[0] { occupied[2..].to_vec() } else { vec![false; delta as usize - 1] })
    })?;
    let nt = n_trials as f64;
    let mut terms = vec![0.0; delta as usize - 1];
    let mut sums = Vec::with_capacity(hits.len());
    for h in &hits {
        let mut s = 0.0;
        for (t, b) in terms.iter_mut().zip(h) {
            if *b {
                *t += 1.0;
                s += 1.0;
            }
        }
        sums.push(s);
    }
    for t in terms.iter_mut() {
        *t /= nt;
    }
    let value: f64 = sums.iter().sum::<f64>() / nt;
    let var = sums.iter().map(|s| (s - value).powi(2)).sum::<f64>() / (nt - 1.0);
    Ok(R2Estimate { value, std_error: (var / nt).sqrt(), terms, n_trials })
}
