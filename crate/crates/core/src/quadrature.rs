//! Gauss-Legendre rules and adaptive composite integration on an interval.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point rule on `[-1, 1]` by Newton iteration
/// on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "rule needs at least two nodes");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (x, w) = gl16();
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(w).map(|(xi, wi)| wi * f(c + h * xi)).sum::<f64>() * h
}

/// Integral of a smooth `f` over `[a, b]`, bisecting until one panel and
/// its two halves agree within a tolerance proportional to the panel width.
/// Returns the value and the summed error estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<(f64, f64)> {
    const MAX_DEPTH: u32 = 40;
    let width = b - a;
    let mut total = 0.0;
    let mut err = 0.0;
    let mut stack = vec![(a, b, panel(f, a, b), 0u32)];
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let (l, r) = (panel(f, lo, mid), panel(f, mid, hi));
        let diff = (l + r - whole).abs();
        let allowed = tol * (hi - lo) / width.max(f64::MIN_POSITIVE);
        if diff <= allowed.max(1e-15 * (l + r).abs()) {
            total += l + r;
            err += diff;
        } else if depth >= MAX_DEPTH {
            return Err(Error::Quadrature(format!("no convergence on [{lo}, {hi}]")));
        } else {
            stack.push((mid, hi, r, depth + 1));
            stack.push((lo, mid, l, depth + 1));
        }
    }
    Ok((total, err))
}

/// Pairwise sum in a fixed tree order.
pub fn tree_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => tree_sum(&v[..n / 2]) + tree_sum(&v[n / 2..]),
    }
}
