//! Concrete dynamical systems and their orbits.
//!
//! Linear maps `a·x mod 1` (alone, as the vertical factor of the torus map
//! or as uncoupled CML sites) default to the exact-digit backend: a
//! coordinate is a 64-bit binary fixed-point number `X` and one step is
//! `X ← a·X + d (mod 2^64)` with `d` uniform on `0..a`. For a uniformly
//! distributed point the bits below the window are i.i.d. and independent of
//! `X`, and `d` is exactly the carry they would produce, so the orbit is
//! exact in law and never collapses the way doubles do under `2x mod 1`.

mod interval;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use interval::{derivative_along, IntervalMap};

use crate::error::{Error, Result};
use crate::rng::{DigitSource, StreamKey, StreamRng};

const DITHER: f64 = 1.0 / (1u64 << 40) as f64;
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// `n` copies of a base map coupled through the constant-column matrix
/// `M_ij = p_j` with strength `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmlSpec {
    pub base: IntervalMap,
    pub n: usize,
    pub gamma: f64,
    pub weights: Vec<f64>,
}

impl CmlSpec {
    pub fn new(base: IntervalMap, n: usize, gamma: f64, weights: Vec<f64>) -> Result<Self> {
        let spec = CmlSpec { base, n, gamma, weights };
        spec.validate()?;
        Ok(spec)
    }

    /// Equal weights `p_j = 1/n`.
    pub fn uniform(base: IntervalMap, n: usize, gamma: f64) -> Result<Self> {
        Self::new(base, n, gamma, vec![1.0 / n as f64; n])
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.n < 2 {
            return Err(Error::InvalidParameter("lattice needs at least two sites".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!("gamma={} outside [0,1]", self.gamma)));
        }
        if self.weights.len() != self.n || self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParameter("need n non-negative weights".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapKind {
    Interval(IntervalMap),
    /// `(x, y) ↦ (x + y, a·y) mod 1`, the matrix `[[1,1],[0,a]]`.
    TorusAffine { a: u32 },
    Cml(CmlSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    ExactDigit,
    Float64,
    /// Float64 plus uniform noise of size `2^-40` on every coordinate
    /// after every step.
    Float64Dither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSystem {
    pub kind: MapKind,
    pub backend: Backend,
    /// Steps discarded after a uniform start when Lebesgue measure is not
    /// invariant.
    pub burn_in: u64,
}

impl MapSystem {
    /// Exact-digit where supported, float64 otherwise.
    pub fn new(kind: MapKind) -> Result<Self> {
        let backend = if supports_digits(&kind) { Backend::ExactDigit } else { Backend::Float64 };
        Self::with_backend(kind, backend)
    }

    pub fn with_backend(kind: MapKind, backend: Backend) -> Result<Self> {
        let sys = MapSystem { kind, backend, burn_in: 0 };
        sys.validate()?;
        Ok(sys)
    }

    pub fn with_burn_in(mut self, burn_in: u64) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn linear(a: u32) -> Result<Self> {
        Self::new(MapKind::Interval(IntervalMap::linear(a)?))
    }

    pub fn torus(a: u32) -> Result<Self> {
        Self::new(MapKind::TorusAffine { a })
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            MapKind::Interval(m) => m.validate()?,
            MapKind::TorusAffine { a } => {
                if *a < 2 {
                    return Err(Error::InvalidParameter(format!("torus slope a={a} must be >= 2")));
                }
            }
            MapKind::Cml(c) => c.validate()?,
        }
        if self.backend == Backend::ExactDigit && !supports_digits(&self.kind) {
            return Err(Error::InvalidParameter(
                "exact-digit backend needs integer-slope linear dynamics".into(),
            ));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        match &self.kind {
            MapKind::Interval(_) => 1,
            MapKind::TorusAffine { .. } => 2,
            MapKind::Cml(c) => c.n,
        }
    }

    pub fn preserves_lebesgue(&self) -> bool {
        match &self.kind {
            MapKind::Interval(m) => m.preserves_lebesgue(),
            MapKind::TorusAffine { .. } => true,
            MapKind::Cml(c) => c.gamma == 0.0 && c.base.preserves_lebesgue(),
        }
    }

    /// `|DT|` along the expanding direction at `p` (for the CML, the base
    /// map's derivative at the first site).
    pub fn branch_derivative(&self, p: &[f64]) -> f64 {
        match &self.kind {
            MapKind::Interval(m) => m.derivative(p[0]),
            MapKind::TorusAffine { a } => *a as f64,
            MapKind::Cml(c) => c.base.derivative(p[0]),
        }
    }

    /// A state at the point `p`, stepped with the float backend.
    pub fn state_at(&self, p: &[f64], rng: StreamRng) -> Result<OrbitState> {
        if p.len() != self.dimension() || p.iter().any(|x| !(0.0..1.0).contains(x)) {
            return Err(Error::InvalidParameter("point outside the state space".into()));
        }
        let backend = if self.backend == Backend::Float64Dither {
            Backend::Float64Dither
        } else {
            Backend::Float64
        };
        Ok(OrbitState { coords: Coords::Float(p.to_vec()), backend, rng, digits: None })
    }

    /// A state drawn from the invariant measure: uniform for
    /// Lebesgue-preserving systems, otherwise uniform followed by `burn_in`
    /// steps.
    pub fn sample_stationary(&self, key: &StreamKey, trial_index: u64) -> Result<OrbitState> {
        if !self.preserves_lebesgue() && self.burn_in == 0 {
            return Err(Error::NoStationarySampler);
        }
        let mut rng = key.stream(trial_index);
        let dim = self.dimension();
        let mut state = if self.backend == Backend::ExactDigit {
            let a = self.digit_base();
            let coords = (0..dim).map(|_| rng.next_u64()).collect();
            OrbitState {
                coords: Coords::Digits(coords),
                backend: Backend::ExactDigit,
                rng,
                digits: Some(DigitSource::new(a)),
            }
        } else {
            let coords = (0..dim).map(|_| rng.uniform()).collect();
            OrbitState { coords: Coords::Float(coords), backend: self.backend, rng, digits: None }
        };
        for _ in 0..self.burn_in {
            self.step_in_place(&mut state);
        }
        Ok(state)
    }

    fn digit_base(&self) -> u64 {
        match &self.kind {
            MapKind::Interval(m) => m.integer_slope().unwrap() as u64,
            MapKind::TorusAffine { a } => *a as u64,
            MapKind::Cml(c) => c.base.integer_slope().unwrap() as u64,
        }
    }

    /// Advances `s` by one step.
    #[inline]
    pub fn step_in_place(&self, s: &mut OrbitState) {
        match &mut s.coords {
            Coords::Digits(xs) => {
                let src = s.digits.as_mut().expect("digit source");
                let a = src.base();
                match &self.kind {
                    MapKind::TorusAffine { .. } => {
                        xs[0] = xs[0].wrapping_add(xs[1]);
                        xs[1] = xs[1].wrapping_mul(a).wrapping_add(src.next_digit(&mut s.rng));
                    }
                    _ => {
                        for x in xs.iter_mut() {
                            *x = x.wrapping_mul(a).wrapping_add(src.next_digit(&mut s.rng));
                        }
                    }
                }
            }
            Coords::Float(xs) => {
                match &self.kind {
                    MapKind::Interval(m) => xs[0] = m.eval(xs[0]),
                    MapKind::TorusAffine { a } => {
                        let x = xs[0] + xs[1];
                        xs[0] = if x >= 1.0 { x - 1.0 } else { x };
                        xs[1] = (*a as f64 * xs[1]).fract();
                    }
                    MapKind::Cml(c) => {
                        let mut mean = 0.0;
                        for (x, p) in xs.iter_mut().zip(&c.weights) {
                            *x = c.base.eval(*x);
                            mean += p * *x;
                        }
                        let g = c.gamma;
                        for x in xs.iter_mut() {
                            *x = ((1.0 - g) * *x + g * mean).min(BELOW_ONE);
                        }
                    }
                }
                if s.backend == Backend::Float64Dither {
                    for x in xs.iter_mut() {
                        let y = *x + DITHER * s.rng.uniform();
                        *x = if y >= 1.0 { y - 1.0 } else { y };
                    }
                }
            }
        }
    }

    /// `T(s)`.
    pub fn step(&self, s: &OrbitState) -> OrbitState {
        let mut next = s.clone();
        self.step_in_place(&mut next);
        next
    }
}

fn supports_digits(kind: &MapKind) -> bool {
    match kind {
        MapKind::Interval(m) => m.integer_slope().is_some(),
        MapKind::TorusAffine { .. } => true,
        MapKind::Cml(c) => c.gamma == 0.0 && c.base.integer_slope().is_some(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Coords {
    Float(Vec<f64>),
    /// Binary fixed point: `x = X / 2^64`.
    Digits(Vec<u64>),
}

/// A point on an orbit together with the random stream feeding it.
#[derive(Debug, Clone)]
pub struct OrbitState {
    coords: Coords,
    backend: Backend,
    rng: StreamRng,
    digits: Option<DigitSource>,
}

impl OrbitState {
    pub fn dimension(&self) -> usize {
        match &self.coords {
            Coords::Float(v) => v.len(),
            Coords::Digits(v) => v.len(),
        }
    }

    /// Coordinate `i` as a double in `[0,1)`.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        match &self.coords {
            Coords::Float(v) => v[i],
            Coords::Digits(v) => (v[i] >> 11) as f64 * (1.0 / (1u64 << 53) as f64),
        }
    }

    pub fn point(&self) -> Vec<f64> {
        (0..self.dimension()).map(|i| self.coord(i)).collect()
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// Raw fixed-point coordinates under the exact-digit backend.
    pub fn digit_words(&self) -> Option<&[u64]> {
        match &self.coords {
            Coords::Digits(v) => Some(v),
            Coords::Float(_) => None,
        }
    }

    /// Position of the underlying random stream.
    pub fn draw_counter(&self) -> u128 {
        self.rng.draw_counter()
    }
}

impl PartialEq for OrbitState {
    fn eq(&self, other: &Self) -> bool {
        self.coords == other.coords
            && self.backend == other.backend
            && self.rng.draw_counter() == other.rng.draw_counter()
    }
}

/// Calls `visit(j, T^j s0)` for `j = 0..=n_steps` and returns `T^{n_steps} s0`.
pub fn orbit_visitor<F>(map: &MapSystem, s0: OrbitState, n_steps: u64, mut visit: F) -> OrbitState
where
    F: FnMut(u64, &OrbitState),
{
    let mut s = s0;
    visit(0, &s);
    for j in 1..=n_steps {
        map.step_in_place(&mut s);
        visit(j, &s);
    }
    s
}
