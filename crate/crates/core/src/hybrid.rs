//! The boost-invariant entire translator of `L^2 x R`, glued across the lightcone
//! from the even solutions `f1` (spacelike orbits, `eps~ = +1`) and `f2`
//! (timelike orbits, `eps~ = -1`) with `f(0) = f'(0) = 0`.
//!
//! Near the cone both pieces are evaluated as power series in `q = x^2 - y^2`
//! (resp. `y^2 - x^2`), so no square root of a small number is ever taken.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolitonError};
use crate::params::{rhs_unchecked, FlowParams, Sign};
use crate::rk::{self, DenseStep, RkSettings, RkStatus, StepAction};
use crate::series::bowl_series_coeffs;
use crate::verify::{Axis, GridField};

pub const HYBRID_ORDER: usize = 12;
/// Series evaluation for `s <= HANDOFF_RADIUS`, dense integration beyond.
pub const HANDOFF_RADIUS: f64 = 0.5;

/// Selected quadrants among `Omega_1` (x > |y|), `Omega_2` (y > |x|),
/// `Omega_3` (x < -|y|), `Omega_4` (y < -|x|).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct QuadrantMask(u8);

impl QuadrantMask {
    pub fn all() -> QuadrantMask {
        QuadrantMask(0b1111)
    }

    /// Quadrants are numbered 1..=4. Accepts 2, 3 or 4 cyclically adjacent ones.
    pub fn new(quadrants: &[usize]) -> Result<QuadrantMask> {
        let mut bits = 0u8;
        for &q in quadrants {
            if !(1..=4).contains(&q) {
                return Err(SolitonError::Config(format!("quadrant {q} is not in 1..=4")));
            }
            bits |= 1 << (q - 1);
        }
        let mask = QuadrantMask(bits);
        match bits.count_ones() {
            3 | 4 => Ok(mask),
            2 if bits == 0b0101 || bits == 0b1010 => Err(SolitonError::Config(format!(
                "quadrants {:?} are opposite; the glued boundary would be lightlike",
                mask.quadrants()
            ))),
            2 => Ok(mask),
            k => Err(SolitonError::Config(format!(
                "select 2, 3 or 4 adjacent quadrants, got {k}"
            ))),
        }
    }

    pub fn contains(&self, quadrant: usize) -> bool {
        (1..=4).contains(&quadrant) && self.0 & (1 << (quadrant - 1)) != 0
    }

    pub fn quadrants(&self) -> Vec<usize> {
        (1..=4).filter(|&q| self.contains(q)).collect()
    }

    pub fn is_full(&self) -> bool {
        self.0 == 0b1111
    }
}

impl Default for QuadrantMask {
    fn default() -> Self {
        QuadrantMask::all()
    }
}

impl TryFrom<Vec<usize>> for QuadrantMask {
    type Error = SolitonError;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        QuadrantMask::new(&v)
    }
}

impl From<QuadrantMask> for Vec<usize> {
    fn from(m: QuadrantMask) -> Self {
        m.quadrants()
    }
}

impl FromStr for QuadrantMask {
    type Err = SolitonError;
    fn from_str(s: &str) -> Result<Self> {
        let qs = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| SolitonError::Config(format!("bad quadrant '{t}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        QuadrantMask::new(&qs)
    }
}

impl fmt::Display for QuadrantMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let qs: Vec<String> = self.quadrants().iter().map(|q| q.to_string()).collect();
        write!(f, "{}", qs.join(","))
    }
}

/// Quadrant of a point off the cone, `None` on `|x| = |y|`.
pub fn quadrant(x: f64, y: f64) -> Option<usize> {
    let (ax, ay) = (x.abs(), y.abs());
    if ax > ay {
        Some(if x > 0.0 { 1 } else { 3 })
    } else if ay > ax {
        Some(if y > 0.0 { 2 } else { 4 })
    } else {
        None
    }
}

/// Euclidean distance to the lines `x = y` and `x = -y`.
pub fn cone_distance(x: f64, y: f64) -> f64 {
    (x - y).abs().min((x + y).abs()) * std::f64::consts::FRAC_1_SQRT_2
}

/// Boost `A_theta (x, y) = (x cosh + y sinh, x sinh + y cosh)`.
pub fn boost(theta: f64, x: f64, y: f64) -> (f64, f64) {
    let (sh, ch) = (theta.sinh(), theta.cosh());
    (x * ch + y * sh, x * sh + y * ch)
}

/// Even solution `f(s) = sum_k c_k s^{2k}` of the reduced equation through the origin.
#[derive(Debug, Clone)]
pub struct EvenProfile {
    params: FlowParams,
    /// `c_k = f^{(2k)}(0) / (2k)!`, `k = 0..=m`
    coeffs: Vec<f64>,
    tail: Vec<DenseStep<2>>,
    s_max: f64,
}

impl EvenProfile {
    /// Taylor coefficients through `s^{2m}`, then `(w, f)` integrated on `[0.5, s_max]`.
    pub fn new(params: FlowParams, m: usize, s_max: f64) -> Result<EvenProfile> {
        let slope = bowl_series_coeffs(&params, 2 * m - 1);
        let mut coeffs = vec![0.0; m + 1];
        for (k, c) in coeffs.iter_mut().enumerate().skip(1) {
            *c = slope.coeff(2 * k - 1) / (2 * k) as f64;
        }
        let r = HANDOFF_RADIUS;
        let y0 = [slope.eval(r), horner(&coeffs, r * r)];
        let settings = RkSettings {
            rel_tol: 1e-13,
            abs_tol: 1e-15,
            max_step: 0.02,
            ..RkSettings::default()
        };
        let mut tail = Vec::new();
        if s_max > r {
            let out = rk::solve(
                |s, y: &[f64; 2]| [rhs_unchecked(&params, s, y[0]), y[0]],
                r,
                y0,
                s_max,
                &settings,
                |_| StepAction::Continue,
            );
            if out.status != RkStatus::ReachedEnd {
                return Err(SolitonError::SearchFailure(format!(
                    "hybrid profile integration stopped with {:?}",
                    out.status
                )));
            }
            tail = out.steps;
        }
        Ok(EvenProfile { params, coeffs, tail, s_max: s_max.max(r) })
    }

    pub fn params(&self) -> &FlowParams {
        &self.params
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    /// `f^{(2k)}(0)`.
    pub fn even_derivative(&self, k: usize) -> Option<f64> {
        let c = self.coeffs.get(k)?;
        Some(c * (1..=2 * k).map(|j| j as f64).product::<f64>())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `f(sqrt(q))` for `0 <= q <= s_max^2`.
    pub fn eval_q(&self, q: f64) -> Option<f64> {
        if !(q >= 0.0) {
            return None;
        }
        if q <= HANDOFF_RADIUS * HANDOFF_RADIUS {
            return Some(horner(&self.coeffs, q));
        }
        self.eval(q.sqrt()).map(|(f, _)| f)
    }

    /// `(f, f')` at `s >= 0`.
    pub fn eval(&self, s: f64) -> Option<(f64, f64)> {
        let s = s.abs();
        if s <= HANDOFF_RADIUS {
            let q = s * s;
            let df = self
                .coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * q + 2.0 * k as f64 * c);
            return Some((horner(&self.coeffs, q), df * s));
        }
        if s > self.s_max {
            return None;
        }
        let i = self.tail.partition_point(|st| st.t1 < s).min(self.tail.len() - 1);
        let y = self.tail[i].eval(s);
        Some((y[1], y[0]))
    }
}

fn horner(c: &[f64], q: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, ck| acc * q + ck)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    /// smoothness order `m`; the profiles carry Taylor terms through `s^{2m}`
    pub order: usize,
    pub mask: QuadrantMask,
    /// largest `sqrt|x^2 - y^2|` that can be evaluated
    pub s_max: f64,
    /// negative control: use `-f2` on the timelike quadrants
    pub mismatched: bool,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            order: HYBRID_ORDER,
            mask: QuadrantMask::all(),
            s_max: 4.0,
            mismatched: false,
        }
    }
}

/// `u = f1(sqrt(x^2 - y^2))` on `Omega_1, Omega_3`, `f2(sqrt(y^2 - x^2))` on
/// `Omega_2, Omega_4`, zero on the cone.
#[derive(Debug, Clone)]
pub struct HybridField {
    config: HybridConfig,
    f1: Arc<EvenProfile>,
    f2: Arc<EvenProfile>,
}

impl HybridField {
    pub fn new(config: HybridConfig) -> Result<HybridField> {
        if config.order < 2 {
            return Err(SolitonError::Config(format!(
                "hybrid order must be >= 2, got {}",
                config.order
            )));
        }
        if !(config.s_max > 0.0 && config.s_max.is_finite()) {
            return Err(SolitonError::Config(format!("bad s_max {}", config.s_max)));
        }
        let p1 = FlowParams::boost(2, Sign::Plus, true)?;
        let p2 = FlowParams::boost(2, Sign::Minus, true)?;
        Ok(HybridField {
            config,
            f1: Arc::new(EvenProfile::new(p1, config.order, config.s_max)?),
            f2: Arc::new(EvenProfile::new(p2, config.order, config.s_max)?),
        })
    }

    pub fn config(&self) -> &HybridConfig {
        &self.config
    }

    pub fn f1(&self) -> &EvenProfile {
        &self.f1
    }

    pub fn f2(&self) -> &EvenProfile {
        &self.f2
    }

    /// Whether `(x, y)` lies on the glued surface's domain.
    ///
    /// A cone ray belongs to it when both quadrants it separates are selected;
    /// the origin only when all four are.
    pub fn covers(&self, x: f64, y: f64) -> bool {
        let mask = self.config.mask;
        match quadrant(x, y) {
            Some(q) => mask.contains(q),
            None if x == 0.0 && y == 0.0 => mask.is_full(),
            None => {
                let (a, b) = match (x > 0.0, y > 0.0) {
                    (true, true) => (1, 2),
                    (false, true) => (2, 3),
                    (false, false) => (3, 4),
                    (true, false) => (4, 1),
                };
                mask.contains(a) && mask.contains(b)
            }
        }
    }

    /// `u(x, y)`; `None` outside the selected quadrants or beyond `s_max`.
    pub fn u(&self, x: f64, y: f64) -> Option<f64> {
        if !self.covers(x, y) {
            return None;
        }
        let q = (x - y) * (x + y);
        match quadrant(x, y) {
            None => Some(0.0),
            Some(1 | 3) => self.f1.eval_q(q),
            Some(_) => {
                let v = self.f2.eval_q(-q)?;
                Some(if self.config.mismatched { -v } else { v })
            }
        }
    }

    /// `u~(x, y) = u(|x|, y)` on `R^{n-1} x R`.
    pub fn u_tilde(&self, x: &[f64], y: f64) -> Option<f64> {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.u(r, y)
    }

    /// `max_k |f2^{(2k)}(0) - (-1)^k f1^{(2k)}(0)|`, relative to `|f1^{(2k)}(0)|`, for `k <= k_max`.
    pub fn coefficient_relation_defect(&self, k_max: usize) -> f64 {
        (0..=k_max.min(self.config.order))
            .map(|k| {
                let a = self.f1.even_derivative(k).unwrap_or(0.0);
                let b = self.f2.even_derivative(k).unwrap_or(0.0);
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let d = (b - sign * a).abs();
                if a == 0.0 {
                    d
                } else {
                    d / a.abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Square grid `[lo, hi]^2` with spacing `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridGrid {
    pub lo: f64,
    pub hi: f64,
    pub h: f64,
}

impl HybridGrid {
    pub fn axes(&self) -> Result<[Axis; 2]> {
        let a = Axis::span(self.lo, self.hi, self.h)?;
        Ok([a, a])
    }

    fn radius(&self) -> f64 {
        self.lo.abs().max(self.hi.abs()) * std::f64::consts::SQRT_2
    }
}

/// The hybrid field and its samples on `L^2` (signature `(+, -)`, `eps' = +1`);
/// nodes outside the selected quadrants are masked. `s_max` is raised to cover the grid.
pub fn build_hybrid(config: HybridConfig, grid: HybridGrid) -> Result<(HybridField, GridField)> {
    let [ax, ay] = grid.axes()?;
    let config = HybridConfig {
        s_max: config.s_max.max(grid.radius() * (1.0 + 1e-9)),
        ..config
    };
    let field = HybridField::new(config)?;
    // nodes meant to lie on x = -y miss it by rounding in `start + i h`
    let snap = 1e-9 * grid.h;
    let samples = GridField::from_fn(vec![ax, ay], vec![Sign::Plus, Sign::Minus], Sign::Plus, |p| {
        let (x, mut y) = (p[0], p[1]);
        if (x.abs() - y.abs()).abs() <= snap {
            y = x.abs().copysign(y);
        }
        field.u(x, y)
    })?;
    Ok((field, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_validation() {
        for ok in [&[1, 2][..], &[2, 3], &[3, 4], &[4, 1], &[1, 2, 3], &[2, 3, 4, 1]] {
            assert!(QuadrantMask::new(ok).is_ok(), "{ok:?}");
        }
        for bad in [&[1, 3][..], &[2, 4], &[1], &[], &[0, 1], &[5, 1]] {
            assert!(matches!(QuadrantMask::new(bad), Err(SolitonError::Config(_))), "{bad:?}");
        }
        assert_eq!("1, 2,3".parse::<QuadrantMask>().unwrap().quadrants(), vec![1, 2, 3]);
        let json = serde_json::to_string(&QuadrantMask::new(&[4, 1]).unwrap()).unwrap();
        assert_eq!(json, "[1,4]");
        assert!(serde_json::from_str::<QuadrantMask>("[2,4]").is_err());
    }

    #[test]
    fn cone_and_saddle() {
        let f = HybridField::new(HybridConfig::default()).unwrap();
        assert_eq!(f.u(0.0, 0.0), Some(0.0));
        for t in [0.1, 0.7, 1.9, -1.3] {
            assert_eq!(f.u(t, t), Some(0.0));
            assert_eq!(f.u(t, -t), Some(0.0));
        }
        let x = 1e-2;
        assert!((f.u(x, 0.0).unwrap() / (x * x) - 0.25).abs() < 1e-4);
        assert!((f.u(0.0, x).unwrap() / (x * x) + 0.25).abs() < 1e-4);
    }

    #[test]
    fn series_matches_tail_at_handoff() {
        let f = HybridField::new(HybridConfig::default()).unwrap();
        for p in [f.f1(), f.f2()] {
            let r = HANDOFF_RADIUS;
            let (f_s, w_s) = p.eval(r).unwrap();
            let (f_t, w_t) = p.eval(r * (1.0 + f64::EPSILON)).unwrap();
            assert!((f_s - f_t).abs() < 1e-15 && (w_s - w_t).abs() < 1e-15);
            // the truncated series is exact to rounding at the hand-off radius
            let short = EvenProfile::new(*p.params(), 20, 0.0).unwrap();
            assert!((short.eval_q(r * r).unwrap() - f_s).abs() < 1e-16);
        }
    }

    #[test]
    fn tail_solves_the_reduced_equation() {
        let f = HybridField::new(HybridConfig::default()).unwrap();
        for p in [f.f1(), f.f2()] {
            let mut s = 0.6;
            while s < 3.9 {
                let d = 1e-4;
                let (_, w) = p.eval(s).unwrap();
                let dw = (p.eval(s + d).unwrap().1 - p.eval(s - d).unwrap().1) / (2.0 * d);
                let rhs = rhs_unchecked(p.params(), s, w);
                assert!((dw - rhs).abs() < 1e-6, "s = {s}: {dw} vs {rhs}");
                s += 0.1;
            }
        }
    }

    #[test]
    fn coefficient_relation() {
        let f = HybridField::new(HybridConfig::default()).unwrap();
        assert!(f.coefficient_relation_defect(12) < 1e-14);
        assert_eq!(f.f1().even_derivative(1), Some(0.5));
        assert_eq!(f.f2().even_derivative(1), Some(-0.5));
    }

    #[test]
    fn masks_exclude_quadrants_and_rays() {
        let cfg = HybridConfig { mask: QuadrantMask::new(&[1, 2]).unwrap(), ..HybridConfig::default() };
        let f = HybridField::new(cfg).unwrap();
        assert!(f.u(1.0, 0.0).is_some() && f.u(0.0, 1.0).is_some());
        assert!(f.u(-1.0, 0.0).is_none() && f.u(0.0, -1.0).is_none());
        assert_eq!(f.u(0.5, 0.5), Some(0.0));
        assert!(f.u(-0.5, 0.5).is_none() && f.u(0.5, -0.5).is_none());
        assert!(f.u(0.0, 0.0).is_none());
    }

    #[test]
    fn grid_cone_nodes_follow_the_mask() {
        let cfg = HybridConfig { mask: QuadrantMask::new(&[2, 3]).unwrap(), ..HybridConfig::default() };
        let (_, g) = build_hybrid(cfg, HybridGrid { lo: -2.0, hi: 2.0, h: 0.02 }).unwrap();
        let len = g.axes[0].len;
        let on_ray: Vec<bool> = (0..len / 2).map(|i| !g.mask[g.flat_index(&[i, len - 1 - i])]).collect();
        assert!(on_ray.iter().all(|&b| b), "x < 0 < y ray between quadrants 2 and 3");
        let k = g.flat_index(&[len - 1, 0]);
        assert!(g.mask[k]);
        for i in 0..len / 2 {
            assert_eq!(g.values[g.flat_index(&[i, len - 1 - i])], 0.0);
        }
    }

    #[test]
    fn boost_invariance() {
        let f = HybridField::new(HybridConfig { s_max: 12.0, ..HybridConfig::default() }).unwrap();
        for theta in [-1.0, -0.5, 0.5, 1.0] {
            for (x, y) in [(1.0, 0.3), (0.2, 1.5), (-0.7, 0.1), (0.4, -0.9), (0.5, 0.5)] {
                let (bx, by) = boost(theta, x, y);
                let d = (f.u(bx, by).unwrap() - f.u(x, y).unwrap()).abs();
                assert!(d < 1e-10, "theta {theta} ({x},{y}): {d}");
            }
        }
        let a = f.u_tilde(&[0.3, 0.4], 0.2).unwrap();
        assert_eq!(a, f.u(0.5, 0.2).unwrap());
    }
}
