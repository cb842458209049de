//! Conversions among `α̂`, `α` and `λ`, and distances between pmfs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::distributions::{DiscreteDistribution, EmpiricalDistribution};
use crate::error::{Error, Result};

/// `α̂`, `α` and `λ` up to a truncation index `M`, with the geometric tail
/// `α̂_{M+j} = α̂_M r^j`, `r = α̂_M / α̂_{M-1}`, summed in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSequences {
    /// `α̂_1..=α̂_M`.
    pub alpha_hat: Vec<f64>,
    /// `α_k = α̂_k - α̂_{k+1}` for `k = 1..=M`.
    pub alpha: Vec<f64>,
    /// `λ_k = (α_k - α_{k+1}) / α_1` for `k = 1..=M`.
    pub lambda: Vec<f64>,
    pub extremal_index: f64,
    /// Ratio of the geometric tail envelope.
    pub tail_ratio: f64,
    /// `Σ_{k>M} λ_k`.
    pub lambda_tail_mass: f64,
    /// `Σ_k k λ_k` including the tail.
    pub mean_cluster_size: f64,
    /// Every `λ_k >= 0`, i.e. `α̂` is convex.
    pub convex: bool,
}

impl AlphaSequences {
    /// `λ_ℓ`, zero beyond the retained range.
    pub fn lambda(&self, ell: usize) -> f64 {
        self.lambda.get(ell.wrapping_sub(1)).copied().unwrap_or(0.0)
    }
}

pub fn lambda_from_alpha_hat(alpha_hat: &[f64]) -> Result<AlphaSequences> {
    let m = alpha_hat.len();
    if m < 2 {
        return Err(Error::AlphaSequence("need at least α̂_1 and α̂_2".into()));
    }
    if (alpha_hat[0] - 1.0).abs() > 1e-12 {
        return Err(Error::AlphaSequence(format!("α̂_1 = {} ≠ 1", alpha_hat[0])));
    }
    if alpha_hat.iter().any(|a| !(0.0..=1.0 + 1e-12).contains(a)) {
        return Err(Error::AlphaSequence("α̂ entries must lie in [0,1]".into()));
    }
    if let Some(i) = alpha_hat.windows(2).position(|w| w[1] > w[0]) {
        return Err(Error::AlphaSequence(format!("α̂ increases at ℓ = {}", i + 2)));
    }
    let a1 = 1.0 - alpha_hat[1];
    if !(a1 > 0.0) {
        return Err(Error::AlphaSequence("extremal index α_1 = 0".into()));
    }
    let last = alpha_hat[m - 1];
    let r = if last > 0.0 { last / alpha_hat[m - 2] } else { 0.0 };
    if r >= 1.0 {
        return Err(Error::AlphaSequence("α̂ tail is not summable".into()));
    }
    let hat = |k: usize| -> f64 {
        // 1-based, extended geometrically past M.
        if k <= m {
            alpha_hat[k - 1]
        } else {
            last * r.powi((k - m) as i32)
        }
    };
    let alpha: Vec<f64> = (1..=m).map(|k| hat(k) - hat(k + 1)).collect();
    let alpha_next = hat(m + 1) - hat(m + 2);
    let lambda: Vec<f64> = (0..m)
        .map(|i| {
            let next = if i + 1 < m { alpha[i + 1] } else { alpha_next };
            (alpha[i] - next) / a1
        })
        .collect();
    // Σ_{k>M} λ_k = α_{M+1}/α_1 and Σ_{k>M} kλ_k = ((M+1)α_{M+1} + α̂_{M+2})/α_1.
    let lambda_tail_mass = alpha_next / a1;
    let tail_mean = ((m + 1) as f64 * alpha_next + hat(m + 2)) / a1;
    let head_mean: f64 = lambda.iter().enumerate().map(|(i, l)| (i + 1) as f64 * l).sum();
    Ok(AlphaSequences {
        alpha_hat: alpha_hat.to_vec(),
        convex: lambda.iter().all(|l| *l >= -1e-12),
        alpha,
        lambda,
        extremal_index: a1,
        tail_ratio: r,
        lambda_tail_mass,
        mean_cluster_size: head_mean + tail_mean,
    })
}

/// `½ Σ|p_k - q_k| + ½ |tail_p - tail_q|`.
pub fn total_variation(d1: &DiscreteDistribution, d2: &DiscreteDistribution) -> f64 {
    let n = d1.len().max(d2.len());
    let body: f64 = (0..n).map(|k| (d1.pmf(k) - d2.pmf(k)).abs()).sum();
    0.5 * body + 0.5 * (d1.tail_mass() - d2.tail_mass()).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub tv_distance: f64,
    pub chi_square: f64,
    pub dof: u64,
    pub p_value: f64,
    pub n: u64,
    /// Bins after merging; the last may pool several values.
    pub bins: usize,
}

/// Pearson goodness of fit. Values whose model mass is below `5/n` are
/// pooled into one bin together with the model tail; if that pool is
/// itself too light it joins the lightest regular bin.
pub fn chi_square_gof(empirical: &EmpiricalDistribution, model: &DiscreteDistribution) -> Result<GofReport> {
    let n = empirical.n;
    if n < 1 {
        return Err(Error::InvalidParameter("empty sample".into()));
    }
    let nf = n as f64;
    let cut = 5.0 / nf;
    let len = model.len().max(empirical.counts.len());
    let mut bins: Vec<(f64, f64)> = Vec::new(); // (expected mass, observed count)
    let mut pool = (model.tail_mass(), 0.0);
    for k in 0..len {
        let m = model.pmf(k);
        let o = empirical.counts.get(k).copied().unwrap_or(0) as f64;
        if m >= cut {
            bins.push((m, o));
        } else {
            pool.0 += m;
            pool.1 += o;
        }
    }
    if pool.0 >= cut {
        bins.push(pool);
    } else if pool.0 > 0.0 || pool.1 > 0.0 {
        match bins.iter_mut().min_by(|a, b| a.0.total_cmp(&b.0)) {
            Some(b) => {
                b.0 += pool.0;
                b.1 += pool.1;
            }
            None => bins.push(pool),
        }
    }
    if bins.len() < 2 {
        return Err(Error::TooFewBins(bins.len()));
    }
    let chi_square: f64 = bins
        .iter()
        .map(|(m, o)| {
            let e = m * nf;
            if e > 0.0 {
                (o - e).powi(2) / e
            } else if *o > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum();
    let dof = bins.len() as u64 - 1;
    let p_value = if chi_square <= 0.0 {
        1.0
    } else if chi_square.is_finite() {
        gamma_ur(dof as f64 / 2.0, chi_square / 2.0)
    } else {
        0.0
    };
    Ok(GofReport {
        tv_distance: total_variation(&empirical.to_distribution()?, model),
        chi_square,
        dof,
        p_value,
        n,
        bins: bins.len(),
    })
}

/// Side-by-side table of two pmfs for terminal output.
pub fn comparison_table(observed: &DiscreteDistribution, model: &DiscreteDistribution, rows: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>4}  {:>12}  {:>12}  {:>12}", "k", "observed", "model", "diff");
    for k in 0..rows.min(observed.len().max(model.len())) {
        let (o, m) = (observed.pmf(k), model.pmf(k));
        let _ = writeln!(s, "{k:>4}  {o:>12.6}  {m:>12.6}  {:>+12.6}", o - m);
    }
    s
}
