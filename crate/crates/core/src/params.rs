//! Signature bookkeeping and the reduced equations.
//!
//! A translating graph `u = f(pi)` that is invariant under a cohomogeneity one
//! action reduces to a second order ODE for the profile `f`:
//!
//! ```text
//! f'' = (eps_tilde + eps_prime f'^2) (1 - f' h(s)),     h(s) = eps_tilde c / s
//! ```
//!
//! where `eps_prime` is the sign of the vertical factor `dt^2`, `eps_tilde` the
//! sign of `|grad pi|^2` and `h` the mean curvature of the orbits. Writing
//! `w = f'` gives the first order slope equation integrated by [`crate::ode`].

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolitonError};

/// Inputs within this distance of `+-1` are treated as sitting on a barrier.
pub const BARRIER_EPS: f64 = 1e-12;

/// A sign in `{+1, -1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn of(x: f64) -> Sign {
        if x < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// Ambient and action signature data defining the reduced ODE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    n: usize,
    eps_prime: Sign,
    eps_tilde: Sign,
    fiber_coeff: f64,
}

impl FlowParams {
    pub fn new(n: usize, eps_prime: Sign, eps_tilde: Sign, fiber_coeff: f64) -> Result<Self> {
        if n < 2 {
            return Err(SolitonError::Parameter(format!(
                "base dimension n must be >= 2, got {n}"
            )));
        }
        if !(fiber_coeff > 0.0 && fiber_coeff.is_finite()) {
            return Err(SolitonError::Parameter(format!(
                "fiber coefficient must be positive, got {fiber_coeff}"
            )));
        }
        Ok(FlowParams {
            n,
            eps_prime,
            eps_tilde,
            fiber_coeff,
        })
    }

    /// `SO(n)` acting on `R^n` inside Minkowski `L^{n+1}`: `eps' = -1`, `eps~ = +1`, `c = n - 1`.
    pub fn rotational(n: usize) -> Result<Self> {
        Self::new(n, Sign::Minus, Sign::Plus, n as f64 - 1.0)
    }

    /// `SO(n)` acting on Euclidean `R^{n+1}`: `eps' = eps~ = +1`, `c = n - 1`.
    pub fn euclidean_rotational(n: usize) -> Result<Self> {
        Self::new(n, Sign::Plus, Sign::Plus, n as f64 - 1.0)
    }

    /// Boost action `SO^(n-1,1)` on `L^n x R` (`eps' = +1`).
    ///
    /// `eps_tilde = +1` on the spacelike region, `-1` on the timelike cones.
    /// The orbit mean curvature uses `c = n - 1`; `strict_unit_coeff` forces
    /// `c = 1` for every `n`. Both agree for `n = 2`.
    pub fn boost(n: usize, eps_tilde: Sign, strict_unit_coeff: bool) -> Result<Self> {
        let c = if strict_unit_coeff { 1.0 } else { n as f64 - 1.0 };
        Self::new(n, Sign::Plus, eps_tilde, c)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eps_prime(&self) -> Sign {
        self.eps_prime
    }

    pub fn eps_tilde(&self) -> Sign {
        self.eps_tilde
    }

    pub fn fiber_coeff(&self) -> f64 {
        self.fiber_coeff
    }

    /// `eps~ eps' = -1`: the constants `w = +-1` solve the slope equation.
    pub fn has_barriers(&self) -> bool {
        self.eps_prime != self.eps_tilde
    }

    /// `eps~ = +1, eps' = -1`, the form every strip/Gamma classification is stated in.
    pub fn is_rotational_form(&self) -> bool {
        self.eps_tilde == Sign::Plus && self.eps_prime == Sign::Minus
    }

    /// The parameters of `q = -f`. For `eps~ = -1, eps' = +1` this is the rotational form.
    pub fn mirrored(&self) -> FlowParams {
        FlowParams {
            eps_prime: self.eps_prime.flip(),
            eps_tilde: self.eps_tilde.flip(),
            ..*self
        }
    }

    /// Orbit mean curvature `h(s) = eps~ c / s`.
    pub fn orbit_curvature(&self, s: f64) -> f64 {
        self.eps_tilde.value() * self.fiber_coeff / s
    }

    /// Causal sign `sign(eps' + eps~ w^2)` of the graph generated by slope `w`.
    pub fn causal_value(&self, w: f64) -> f64 {
        self.eps_prime.value() + self.eps_tilde.value() * w * w
    }
}

/// A point `(s, w = f'(s))` of the phase plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub s: f64,
    pub w: f64,
}

impl PhaseState {
    pub fn new(s: f64, w: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(SolitonError::Domain(format!("s must be positive, got {s}")));
        }
        if !w.is_finite() {
            return Err(SolitonError::Domain(format!("w must be finite, got {w}")));
        }
        Ok(PhaseState { s, w })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// `|w| < 1`
    InnerStrip,
    /// `w > 1`
    GammaPlus,
    /// `w < -1`
    GammaMinus,
    BarrierPlus,
    BarrierMinus,
}

/// Tag a phase state by the `|w|` partition of the half plane `s > 0`.
pub fn region_of(state: PhaseState) -> Region {
    let w = state.w;
    if (w - 1.0).abs() <= BARRIER_EPS {
        Region::BarrierPlus
    } else if (w + 1.0).abs() <= BARRIER_EPS {
        Region::BarrierMinus
    } else if w > 1.0 {
        Region::GammaPlus
    } else if w < -1.0 {
        Region::GammaMinus
    } else {
        Region::InnerStrip
    }
}

/// Causal character of a generated graph, `sign(eps' + eps~ w^2)` over all samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CausalSign {
    /// `eps = +1`
    Plus,
    /// `eps = -1`
    Minus,
    /// lightlike throughout (`eps' + eps~ w^2 = 0`, the barriers)
    Null,
    Mixed,
}

impl CausalSign {
    pub fn from_slopes<I: IntoIterator<Item = f64>>(params: &FlowParams, slopes: I) -> CausalSign {
        let mut plus = false;
        let mut minus = false;
        for w in slopes {
            let v = params.causal_value(w);
            if v > 0.0 {
                plus = true;
            } else if v < 0.0 {
                minus = true;
            }
        }
        match (plus, minus) {
            (true, false) => CausalSign::Plus,
            (false, true) => CausalSign::Minus,
            (false, false) => CausalSign::Null,
            (true, true) => CausalSign::Mixed,
        }
    }
}

/// Slope equation right-hand side `w' = (eps~ + eps' w^2)(1 - w h(s))`.
pub fn rhs(params: &FlowParams, state: PhaseState) -> Result<f64> {
    if !(state.s > 0.0) {
        return Err(SolitonError::Domain(format!(
            "s must be positive, got {}",
            state.s
        )));
    }
    Ok(rhs_unchecked(params, state.s, state.w))
}

#[inline]
pub(crate) fn rhs_unchecked(params: &FlowParams, s: f64, w: f64) -> f64 {
    (params.eps_tilde.value() + params.eps_prime.value() * w * w)
        * (1.0 - w * params.orbit_curvature(s))
}

/// Wing equation `alpha'' = (eps' + eps~ alpha'^2)(h(alpha) - alpha')` for curves `s = alpha(y)`.
pub fn rhs_wing(params: &FlowParams, alpha: f64, alpha_prime: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(SolitonError::Domain(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    Ok(rhs_wing_unchecked(params, alpha, alpha_prime))
}

#[inline]
pub(crate) fn rhs_wing_unchecked(params: &FlowParams, alpha: f64, alpha_prime: f64) -> f64 {
    (params.eps_prime.value() + params.eps_tilde.value() * alpha_prime * alpha_prime)
        * (params.orbit_curvature(alpha) - alpha_prime)
}

/// The line `r`: the unique `w` with `1 - w h(s) = 0`, i.e. `w = eps~ s / c`.
pub fn critical_line(params: &FlowParams, s: f64) -> f64 {
    params.eps_tilde.value() * s / params.fiber_coeff
}

/// `w''(s1)` of a solution through the critical point `(s1, critical_line(s1))`.
///
/// Since `w'(s1) = 0`, only the `s`-derivative of `1 - w h(s)` survives:
/// `w'' = (eps~ + eps' w^2) (-h'(s1) w) = (eps~ + eps' w^2) / s1`.
pub fn critical_concavity(params: &FlowParams, s1: f64) -> Result<f64> {
    if !(s1 > 0.0) {
        return Err(SolitonError::Domain(format!("s1 must be positive, got {s1}")));
    }
    let w = critical_line(params, s1);
    let dh = -params.orbit_curvature(s1) / s1;
    Ok((params.eps_tilde.value() + params.eps_prime.value() * w * w) * (-dh * w))
}

/// Cumulative trapezoid primitive `v` of `1/z` with `v(grid[0]) = 0`.
///
/// Turns a submersion with `|grad pi|^2 = eps~ z(pi)^2` into one with unit
/// gradient, `v' = 1/z`.
pub fn reparametrize_unit_gradient(grid: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    if grid.len() != z.len() {
        return Err(SolitonError::Config(format!(
            "grid has {} nodes but z has {}",
            grid.len(),
            z.len()
        )));
    }
    if grid.len() < 2 {
        return Err(SolitonError::Config("need at least two nodes".into()));
    }
    if let Some(bad) = z.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(SolitonError::Domain(format!(
            "z must be strictly positive, found {bad}"
        )));
    }
    if grid.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(SolitonError::Config("grid must be strictly increasing".into()));
    }
    let mut v = Vec::with_capacity(grid.len());
    v.push(0.0);
    let mut acc = 0.0;
    for i in 1..grid.len() {
        acc += 0.5 * (grid[i] - grid[i - 1]) * (1.0 / z[i] + 1.0 / z[i - 1]);
        v.push(acc);
    }
    Ok(v)
}
