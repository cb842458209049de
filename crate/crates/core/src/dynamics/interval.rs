//! One-dimensional piecewise expanding maps of `[0,1)`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A full-branch, piecewise increasing, uniformly expanding map of `[0,1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntervalMap {
    /// `x ↦ a·x mod 1`.
    Linear { a: u32 },
    /// Branch `i` maps `[breaks[i], breaks[i+1])` affinely onto `[0,1)`.
    /// `breaks` starts at 0 and ends at 1.
    PiecewiseLinear { breaks: Vec<f64> },
    /// `x ↦ a·x + eps·sin(2πx) mod 1`.
    SinePerturbed { a: u32, eps: f64 },
}

impl IntervalMap {
    pub fn linear(a: u32) -> Result<Self> {
        if a < 2 {
            return Err(Error::InvalidParameter(format!("slope a={a} must be at least 2")));
        }
        Ok(IntervalMap::Linear { a })
    }

    pub fn piecewise_linear(breaks: Vec<f64>) -> Result<Self> {
        let ok = breaks.len() >= 3
            && breaks[0] == 0.0
            && *breaks.last().unwrap() == 1.0
            && breaks.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] < 1.0);
        if !ok {
            return Err(Error::InvalidParameter(
                "breaks must run strictly increasing from 0 to 1 with at least two branches".into(),
            ));
        }
        Ok(IntervalMap::PiecewiseLinear { breaks })
    }

    pub fn sine_perturbed(a: u32, eps: f64) -> Result<Self> {
        if a < 2 || !(a as f64 - TAU * eps.abs() > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "a={a}, eps={eps}: need a - 2π|eps| > 1 for uniform expansion"
            )));
        }
        Ok(IntervalMap::SinePerturbed { a, eps })
    }

    /// Checks the invariants of a value built without a constructor
    /// (e.g. deserialized).
    pub fn validate(&self) -> Result<()> {
        match self {
            IntervalMap::Linear { a } => Self::linear(*a).map(drop),
            IntervalMap::PiecewiseLinear { breaks } => Self::piecewise_linear(breaks.clone()).map(drop),
            IntervalMap::SinePerturbed { a, eps } => Self::sine_perturbed(*a, *eps).map(drop),
        }
    }

    pub fn n_branches(&self) -> usize {
        match self {
            IntervalMap::Linear { a } | IntervalMap::SinePerturbed { a, .. } => *a as usize,
            IntervalMap::PiecewiseLinear { breaks } => breaks.len() - 1,
        }
    }

    /// Whether Lebesgue measure is invariant.
    pub fn preserves_lebesgue(&self) -> bool {
        !matches!(self, IntervalMap::SinePerturbed { .. })
    }

    /// Integer slope for maps that admit the exact-digit backend.
    pub fn integer_slope(&self) -> Option<u32> {
        match self {
            IntervalMap::Linear { a } => Some(*a),
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let y = match self {
            IntervalMap::Linear { a } => (*a as f64 * x).fract(),
            IntervalMap::PiecewiseLinear { breaks } => {
                let i = branch_of(breaks, x);
                (x - breaks[i]) / (breaks[i + 1] - breaks[i])
            }
            IntervalMap::SinePerturbed { a, eps } => {
                (*a as f64 * x + eps * (TAU * x).sin()).rem_euclid(1.0)
            }
        };
        if y >= 1.0 {
            0.0
        } else {
            y
        }
    }

    /// `|T'(x)|`.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            IntervalMap::Linear { a } => *a as f64,
            IntervalMap::PiecewiseLinear { breaks } => {
                let i = branch_of(breaks, x);
                1.0 / (breaks[i + 1] - breaks[i])
            }
            IntervalMap::SinePerturbed { a, eps } => *a as f64 + TAU * eps * (TAU * x).cos(),
        }
    }

    pub fn min_derivative(&self) -> f64 {
        match self {
            IntervalMap::Linear { a } => *a as f64,
            IntervalMap::PiecewiseLinear { breaks } => breaks
                .windows(2)
                .map(|w| 1.0 / (w[1] - w[0]))
                .fold(f64::INFINITY, f64::min),
            IntervalMap::SinePerturbed { a, eps } => *a as f64 - TAU * eps.abs(),
        }
    }

    /// Branch edges `0 = e_0 < e_1 < … < e_m = 1`.
    pub fn branch_edges(&self) -> Vec<f64> {
        match self {
            IntervalMap::Linear { a } => {
                (0..=*a).map(|j| j as f64 / *a as f64).collect()
            }
            IntervalMap::PiecewiseLinear { breaks } => breaks.clone(),
            IntervalMap::SinePerturbed { a, .. } => {
                let mut edges = vec![0.0];
                for j in 1..*a {
                    edges.push(self.solve_lift(j as f64, 0.0, 1.0));
                }
                edges.push(1.0);
                edges
            }
        }
    }

    /// Interior discontinuities of `T` on `(0,1)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let e = self.branch_edges();
        e[1..e.len() - 1].to_vec()
    }

    /// The point of branch `i` mapped to `y`.
    pub fn inverse_branch(&self, i: usize, y: f64) -> f64 {
        match self {
            IntervalMap::Linear { a } => (i as f64 + y) / *a as f64,
            IntervalMap::PiecewiseLinear { breaks } => breaks[i] + y * (breaks[i + 1] - breaks[i]),
            IntervalMap::SinePerturbed { .. } => {
                let e = self.branch_edges();
                self.solve_lift(i as f64 + y, e[i], e[i + 1])
            }
        }
    }

    /// Solves `a x + eps sin(2πx) = v` on `[lo, hi]` by bisection; the lift
    /// is strictly increasing.
    fn solve_lift(&self, v: f64, mut lo: f64, mut hi: f64) -> f64 {
        let IntervalMap::SinePerturbed { a, eps } = self else {
            unreachable!("lift only defined for the sine map")
        };
        let lift = |x: f64| *a as f64 * x + eps * (TAU * x).sin();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if lift(mid) < v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

#[inline]
fn branch_of(breaks: &[f64], x: f64) -> usize {
    let i = breaks.partition_point(|b| *b <= x);
    i.clamp(1, breaks.len() - 1) - 1
}

/// `|DT^k(x)| = ∏_{j<k} |T'(T^j x)|`.
///
/// Fails with [`Error::SingularPoint`] if some `T^j x`, `j < k`, lands on an
/// interior breakpoint, where no branch is singled out.
pub fn derivative_along(map: &IntervalMap, x: f64, k: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::InvalidParameter(format!("x={x} outside [0,1)")));
    }
    let bps = map.breakpoints();
    let mut y = x;
    let mut d = 1.0;
    for j in 0..k {
        if bps.iter().any(|b| *b == y) {
            return Err(Error::SingularPoint { x, iterate: j });
        }
        d *= map.derivative(y);
        y = map.eval(y);
    }
    Ok(d)
}
