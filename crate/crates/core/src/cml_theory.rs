//! Return statistics to the diagonal of a coupled map lattice, evaluated
//! by quadrature:
//!
//! `α̂_{k+1} = ∫ h((x)^n) |DT^k(x)|^{-(n-1)} dx / ((1-γ)^{k(n-1)} ∫ h((x)^n) dx)`.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::IntervalMap;
use crate::error::{Error, Result};
use crate::quadrature::{integrate, tree_sum};

/// Largest number of monotone branches of `T^k` integrated separately.
pub const DEFAULT_PARTITION_BUDGET: usize = 1 << 20;

type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The invariant density restricted to the diagonal, `x ↦ h((x)^n)`.
#[derive(Clone)]
pub enum DiagonalDensity {
    /// `h ≡ 1`.
    Lebesgue,
    /// `h((x)^n)` given directly.
    Diagonal(DensityFn),
    /// `ĥ(x)^n` for the product of `n` copies of a map with density `ĥ`.
    Product(DensityFn),
}

impl fmt::Debug for DiagonalDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagonalDensity::Lebesgue => write!(f, "Lebesgue"),
            DiagonalDensity::Diagonal(_) => write!(f, "Diagonal(<fn>)"),
            DiagonalDensity::Product(_) => write!(f, "Product(<fn>)"),
        }
    }
}

impl DiagonalDensity {
    #[inline]
    pub fn eval(&self, x: f64, n: usize) -> f64 {
        match self {
            DiagonalDensity::Lebesgue => 1.0,
            DiagonalDensity::Diagonal(h) => h(x),
            DiagonalDensity::Product(h) => h(x).powi(n as i32),
        }
    }
}

/// Edges `0 = x_0 < … < x_m = 1` of the monotone branches of `T^k`.
pub fn branch_partition(map: &IntervalMap, k: usize, budget: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Ok(vec![0.0, 1.0]);
    }
    let b = map.n_branches();
    let needed = (b as f64).powi(k as i32);
    if needed > budget as f64 {
        return Err(Error::PartitionBudget { k, needed: needed.min(u64::MAX as f64) as u64, budget: budget as u64 });
    }
    let edges = map.branch_edges();
    let mut part = edges.clone();
    // x is an edge of T^{j+1} iff it is an edge of T or T(x) is an edge of T^j.
    for _ in 1..k {
        let interior = &part[1..part.len() - 1];
        let mut next = Vec::with_capacity(b * part.len());
        for i in 0..b {
            next.push(edges[i]);
            next.extend(interior.iter().map(|y| map.inverse_branch(i, *y)));
        }
        next.push(1.0);
        part = next;
    }
    Ok(part)
}

/// `|DT^k(x)|` along an orbit known to avoid breakpoints.
#[inline]
fn chain_derivative(map: &IntervalMap, x: f64, k: usize) -> f64 {
    let mut y = x;
    let mut d = 1.0;
    for _ in 0..k {
        d *= map.derivative(y);
        y = map.eval(y);
    }
    d
}

/// `α̂_{k+1}` and an error bound, with each integral accurate to `tol`.
pub fn alpha_hat_integral_with_error(
    base: &IntervalMap,
    h: &DiagonalDensity,
    n: usize,
    gamma: f64,
    k: usize,
    tol: f64,
) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InvalidParameter("lattice needs n >= 2".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("gamma={gamma} outside [0,1)")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be > 0".into()));
    }
    base.validate()?;
    if k == 0 {
        return Ok((1.0, 0.0));
    }
    let part = branch_partition(base, k, DEFAULT_PARTITION_BUDGET)?;
    let e = (n - 1) as i32;
    let pieces: Vec<(f64, f64, f64, f64)> = part
        .par_windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let local = tol * (b - a);
            let num = integrate(&|x| h.eval(x, n) / chain_derivative(base, x, k).powi(e), a, b, local)?;
            let den = match h {
                DiagonalDensity::Lebesgue => (b - a, 0.0),
                _ => integrate(&|x| h.eval(x, n), a, b, local)?,
            };
            Ok((num.0, num.1, den.0, den.1))
        })
        .collect::<Result<_>>()?;
    let num = tree_sum(&pieces.iter().map(|p| p.0).collect::<Vec<_>>());
    let num_err: f64 = pieces.iter().map(|p| p.1).sum();
    let den = tree_sum(&pieces.iter().map(|p| p.2).collect::<Vec<_>>());
    let den_err: f64 = pieces.iter().map(|p| p.3).sum();
    if !(den > 0.0) {
        return Err(Error::Quadrature("density integrates to zero".into()));
    }
    let scale = (1.0 - gamma).powi(k as i32 * e);
    let value = num / den / scale;
    let err = (num_err + value * scale * den_err) / den / scale;
    Ok((value, err))
}

pub fn alpha_hat_integral(
    base: &IntervalMap,
    h: &DiagonalDensity,
    n: usize,
    gamma: f64,
    k: usize,
    tol: f64,
) -> Result<f64> {
    alpha_hat_integral_with_error(base, h, n, gamma, k, tol).map(|v| v.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmlPrediction {
    pub n: usize,
    pub gamma: f64,
    /// `alpha_hat[k] = α̂_{k+1}` for `k = 0..=k_max`.
    pub alpha_hat: Vec<f64>,
    /// `alphas[k-1] = α_k = α̂_k - α̂_{k+1}` for `k = 1..=k_max`.
    pub alphas: Vec<f64>,
    /// `lambdas[k-1] = λ_k = (α_k - α_{k+1}) / α_1` for `k = 1..k_max`;
    /// empty when `α_1 <= 0`.
    pub lambdas: Vec<f64>,
    /// `Σ_{k >= k_max} λ_k = α_{k_max} / α_1`.
    pub lambda_tail_mass: f64,
    pub extremal_index: f64,
    pub quadrature_error: f64,
    pub warnings: Vec<String>,
}

pub fn cml_prediction(
    base: &IntervalMap,
    h: &DiagonalDensity,
    n: usize,
    gamma: f64,
    k_max: usize,
    tol: f64,
) -> Result<CmlPrediction> {
    if k_max < 1 {
        return Err(Error::InvalidParameter("k_max must be >= 1".into()));
    }
    let mut alpha_hat = Vec::with_capacity(k_max + 1);
    let mut quadrature_error: f64 = 0.0;
    for k in 0..=k_max {
        let (v, e) = alpha_hat_integral_with_error(base, h, n, gamma, k, tol)?;
        alpha_hat.push(v);
        quadrature_error = quadrature_error.max(e);
    }
    let alphas: Vec<f64> = alpha_hat.windows(2).map(|w| w[0] - w[1]).collect();
    let a1 = alphas[0];
    let mut warnings = Vec::new();
    let contraction = (1.0 - gamma) * base.min_derivative();
    if contraction <= 1.0 {
        warnings.push(format!(
            "min (1-γ)|DT| = {contraction} <= 1: transverse expansion is lost"
        ));
    }
    let (lambdas, lambda_tail_mass) = if a1 > 0.0 {
        let l: Vec<f64> = alphas.windows(2).map(|w| (w[0] - w[1]) / a1).collect();
        if l.iter().any(|x| *x < -quadrature_error.max(1e-12)) {
            warnings.push("α̂ is not convex; some λ_k are negative".into());
        }
        (l, alphas[k_max - 1] / a1)
    } else {
        warnings.push(format!("extremal index {a1} <= 0; λ undefined"));
        (Vec::new(), 0.0)
    };
    Ok(CmlPrediction {
        n,
        gamma,
        alpha_hat,
        alphas,
        lambdas,
        lambda_tail_mass,
        extremal_index: a1,
        quadrature_error,
        warnings,
    })
}

impl CmlPrediction {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Columns `k, alpha_hat, alpha, lambda`, indexed from `k = 1`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "alpha_hat", "alpha", "lambda"])?;
        for k in 1..=self.alpha_hat.len() {
            let cell = |v: &[f64]| v.get(k - 1).map(|x| format!("{x:e}")).unwrap_or_default();
            out.write_record([k.to_string(), cell(&self.alpha_hat), cell(&self.alphas), cell(&self.lambdas)])?;
        }
        out.flush()?;
        Ok(())
    }
}
