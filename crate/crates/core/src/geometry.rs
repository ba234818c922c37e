//! Profile curves: graphs `f(s)` from slope trajectories, wings and spindles
//! `s = alpha(y)` from the wing equation, and the timelike family obtained by
//! negating strip solutions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classify::{compute_bowl, ClassTag, Classifier};
use crate::error::{Result, SolitonError};
use crate::ode::{IntegratorConfig, Termination, Trajectory};
use crate::params::{rhs_unchecked, rhs_wing_unchecked, FlowParams, Sign};
use crate::rk::{self, DenseStep, RkSettings, RkStatus, StepAction};

/// 5-point Gauss-Legendre rule on [-1, 1].
const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

fn gauss<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS.iter())
        .map(|(x, wt)| wt * f(m + r * x))
        .sum::<f64>()
        * r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    /// samples `(s, f, f', f'')`
    GraphOverS,
    /// samples `(y, alpha, alpha', alpha'')`
    WingOverY,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub t: f64,
    pub x: f64,
    pub dx: f64,
    pub ddx: f64,
}

/// Dense `f = f0 + int_{s_ref}^s w` over a trajectory.
#[derive(Debug, Clone)]
pub struct GraphEvaluator {
    traj: Arc<Trajectory>,
    ranges: Vec<(f64, f64)>,
    /// primitive at each segment's left end, relative to the span start
    cum: Vec<f64>,
    offset: f64,
}

impl GraphEvaluator {
    fn new(traj: Arc<Trajectory>, s_ref: f64, f0: f64) -> Result<GraphEvaluator> {
        let ranges = traj.segment_ranges();
        let mut cum = Vec::with_capacity(ranges.len());
        let mut acc = 0.0;
        for &(lo, hi) in &ranges {
            cum.push(acc);
            acc += gauss(|s| traj.eval(s).unwrap_or(f64::NAN), lo, hi);
        }
        let mut ev = GraphEvaluator { traj, ranges, cum, offset: 0.0 };
        let p_ref = ev.primitive(s_ref).ok_or_else(|| {
            SolitonError::Domain(format!("reference point s = {s_ref} outside the trajectory"))
        })?;
        ev.offset = f0 - p_ref;
        Ok(ev)
    }

    fn primitive(&self, s: f64) -> Option<f64> {
        let (lo, hi) = (self.ranges.first()?.0, self.ranges.last()?.1);
        if s < lo * (1.0 - 1e-12) || s > hi * (1.0 + 1e-12) {
            return None;
        }
        let i = self.ranges.partition_point(|r| r.1 < s).min(self.ranges.len() - 1);
        let a = self.ranges[i].0;
        Some(self.cum[i] + gauss(|x| self.traj.eval(x).unwrap_or(f64::NAN), a, s))
    }

    /// `(f, f', f'')` at `s`.
    pub fn eval(&self, s: f64) -> Option<(f64, f64, f64)> {
        let p = self.primitive(s)?;
        Some((
            self.offset + p,
            self.traj.eval(s)?,
            self.traj.eval_derivative(s)?,
        ))
    }

    pub fn span(&self) -> (f64, f64) {
        self.traj.span()
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub kind: CurveKind,
    pub params: FlowParams,
    pub f0: f64,
    pub samples: Vec<CurveSample>,
    /// The generating solution blew up or hit the lightcone inside the requested span.
    pub truncated: bool,
    #[serde(skip)]
    graph: Option<Arc<GraphEvaluator>>,
}

impl ProfileCurve {
    fn from_samples(kind: CurveKind, params: FlowParams, f0: f64, samples: Vec<CurveSample>, truncated: bool) -> Self {
        ProfileCurve { kind, params, f0, samples, truncated, graph: None }
    }

    /// Dense `(f, f', f'')` for graphs built from a trajectory.
    pub fn eval(&self, s: f64) -> Option<(f64, f64, f64)> {
        self.graph.as_ref()?.eval(s)
    }

    pub fn evaluator(&self) -> Option<&GraphEvaluator> {
        self.graph.as_deref()
    }

    /// Negated copy `-f` (the timelike mirror); `params` become `mirror_params`.
    fn negated(&self, mirror_params: FlowParams) -> ProfileCurve {
        ProfileCurve {
            kind: self.kind,
            params: mirror_params,
            f0: -self.f0,
            samples: self
                .samples
                .iter()
                .map(|p| CurveSample { t: p.t, x: -p.x, dx: -p.dx, ddx: -p.ddx })
                .collect(),
            truncated: self.truncated,
            graph: None,
        }
    }
}

/// `f(s) = f0 + int_{s_ref}^s w` with `s_ref` the trajectory's initial point.
pub fn build_graph(trajectory: &Trajectory, f0: f64) -> Result<ProfileCurve> {
    let s_ref = trajectory.origin().s;
    let traj = Arc::new(trajectory.clone());
    let ev = GraphEvaluator::new(traj.clone(), s_ref, f0)?;
    let samples = traj
        .nodes_with_midpoints()
        .into_iter()
        .filter_map(|s| ev.eval(s).map(|(f, df, ddf)| CurveSample { t: s, x: f, dx: df, ddx: ddf }))
        .collect();
    let truncated = matches!(traj.termination_right, Termination::BlowUp { .. })
        || matches!(traj.termination_left, Termination::BlowUp { .. });
    Ok(ProfileCurve {
        kind: CurveKind::GraphOverS,
        params: *traj.params(),
        f0,
        samples,
        truncated,
        graph: Some(Arc::new(ev)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WingConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// Stop a branch when `alpha` falls to this value (the axis / cone contact).
    pub alpha_stop: f64,
    /// Maximal `|y - y0|` integrated per direction.
    pub y_span: f64,
    /// Branch samples with `|alpha - s0|` below this are dropped (`f'` is infinite at the apex).
    pub apex_radius: f64,
}

impl Default for WingConfig {
    fn default() -> Self {
        WingConfig {
            rel_tol: 1e-13,
            abs_tol: 1e-15,
            max_step: 0.002,
            min_step: 1e-14,
            alpha_stop: 1e-4,
            y_span: 20.0,
            apex_radius: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WingEnd {
    /// `alpha` reached `alpha_stop` at `y`; `contact` extrapolates linearly to `alpha = 0`.
    AxisContact { y: f64, slope: f64, contact: f64 },
    SpanLimit { y: f64 },
    Failure { y: f64 },
}

impl WingEnd {
    pub fn y(&self) -> f64 {
        match *self {
            WingEnd::AxisContact { y, .. } | WingEnd::SpanLimit { y } | WingEnd::Failure { y } => y,
        }
    }
}

/// Solution `(alpha, alpha')(y)` of the wing equation through an apex.
#[derive(Debug, Clone)]
pub struct WingSolution {
    pub params: FlowParams,
    pub y0: f64,
    pub s0: f64,
    up: Vec<DenseStep<2>>,
    down: Vec<DenseStep<2>>,
    pub end_up: WingEnd,
    pub end_down: WingEnd,
}

impl WingSolution {
    /// `[y_down, y_up]`
    pub fn domain(&self) -> (f64, f64) {
        (self.end_down.y(), self.end_up.y())
    }

    /// `(alpha, alpha', alpha'')` at `y`, the last from the dense output.
    pub fn eval(&self, y: f64) -> Option<(f64, f64, f64)> {
        let (lo, hi) = self.domain();
        if y < lo || y > hi {
            return None;
        }
        if y == self.y0 {
            return Some((self.s0, 0.0, rhs_wing_unchecked(&self.params, self.s0, 0.0)));
        }
        let steps = if y > self.y0 { &self.up } else { &self.down };
        let st = steps.iter().find(|st| y >= st.lo() && y <= st.hi())?;
        let v = st.eval(y);
        let d = st.eval_derivative(y);
        Some((v[0], v[1], d[1]))
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.end_up, WingEnd::AxisContact { .. }) && matches!(self.end_down, WingEnd::AxisContact { .. })
    }

    /// Dense samples on both sides, ascending in `y`: step ends and midpoints.
    fn nodes(&self) -> Vec<f64> {
        let mut ys = Vec::new();
        for st in self.down.iter().rev().chain(self.up.iter()) {
            ys.push(st.lo());
            ys.push(0.5 * (st.lo() + st.hi()));
            ys.push(st.hi());
        }
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        ys
    }

    pub fn profile(&self) -> ProfileCurve {
        let samples = self
            .nodes()
            .into_iter()
            .filter_map(|y| self.eval(y).map(|(a, da, dda)| CurveSample { t: y, x: a, dx: da, ddx: dda }))
            .collect();
        ProfileCurve::from_samples(CurveKind::WingOverY, self.params, self.y0, samples, false)
    }

    /// Graph branch `y = f(s)` over the part `y > y0` (`upper`) or `y < y0`,
    /// keeping only `|s - s0| >= apex_radius`.
    pub fn branch(&self, upper: bool, apex_radius: f64) -> ProfileCurve {
        let mut samples: Vec<CurveSample> = self
            .nodes()
            .into_iter()
            .filter(|y| if upper { *y > self.y0 } else { *y < self.y0 })
            .filter_map(|y| {
                let (a, da, dda) = self.eval(y)?;
                (da != 0.0 && (a - self.s0).abs() >= apex_radius).then(|| CurveSample {
                    t: a,
                    x: y,
                    dx: 1.0 / da,
                    ddx: -dda / (da * da * da),
                })
            })
            .collect();
        samples.sort_by(|p, q| p.t.total_cmp(&q.t));
        samples.dedup_by(|p, q| p.t == q.t);
        let end = if upper { self.end_up } else { self.end_down };
        ProfileCurve::from_samples(
            CurveKind::GraphOverS,
            self.params,
            self.y0,
            samples,
            matches!(end, WingEnd::AxisContact { .. }),
        )
    }
}

#[derive(Debug, Clone)]
pub struct Wing {
    pub solution: WingSolution,
    pub curve: ProfileCurve,
    /// graph branch over `y > y0`
    pub upper: ProfileCurve,
    /// graph branch over `y < y0`
    pub lower: ProfileCurve,
}

fn wing_direction(params: &FlowParams, s0: f64, y0: f64, forward: bool, cfg: &WingConfig) -> (Vec<DenseStep<2>>, WingEnd) {
    let p = *params;
    let y_end = if forward { y0 + cfg.y_span } else { y0 - cfg.y_span };
    let settings = RkSettings {
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.abs_tol,
        max_step: cfg.max_step,
        min_step: cfg.min_step,
        max_steps: 5_000_000,
    };
    let mut contact: Option<f64> = None;
    let out = rk::solve(
        |_, z: &[f64; 2]| [z[1], rhs_wing_unchecked(&p, z[0], z[1])],
        y0,
        [s0, 0.0],
        y_end,
        &settings,
        |st| {
            if st.y1()[0] <= cfg.alpha_stop {
                let r = rk::find_root(st, |_, z| z[0] - cfg.alpha_stop, 1e-15).unwrap_or(st.t1);
                contact = Some(r);
                StepAction::StopAt(r)
            } else {
                StepAction::Continue
            }
        },
    );
    let mut steps = out.steps;
    if let (Some(r), Some(last)) = (contact, steps.last_mut()) {
        *last = last.truncated(r);
    }
    let y_last = steps.last().map_or(y0, |st| st.t1);
    let end = match (contact, out.status) {
        (Some(y), _) => {
            let z = steps.last().map(|st| st.eval(y)).unwrap_or([s0, 0.0]);
            WingEnd::AxisContact { y, slope: z[1], contact: y - z[0] / z[1] }
        }
        (None, RkStatus::ReachedEnd) => WingEnd::SpanLimit { y: y_last },
        _ => WingEnd::Failure { y: y_last },
    };
    (steps, end)
}

/// Wing through the apex `(alpha, alpha')(y0) = (s0, 0)`.
pub fn build_wing(params: &FlowParams, s0: f64, y0: f64, cfg: &WingConfig) -> Result<Wing> {
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(SolitonError::Domain(format!("s0 must be positive, got {s0}")));
    }
    if !(cfg.alpha_stop > 0.0 && cfg.alpha_stop < s0) {
        return Err(SolitonError::Config(format!(
            "alpha_stop must lie in (0, s0), got {}",
            cfg.alpha_stop
        )));
    }
    if !(cfg.y_span > 0.0 && cfg.rel_tol > 0.0 && cfg.abs_tol > 0.0 && cfg.min_step < cfg.max_step) {
        return Err(SolitonError::Config("invalid wing integration settings".into()));
    }
    let (up, end_up) = wing_direction(params, s0, y0, true, cfg);
    let (down, end_down) = wing_direction(params, s0, y0, false, cfg);
    let solution = WingSolution { params: *params, y0, s0, up, down, end_up, end_down };
    Ok(Wing {
        curve: solution.profile(),
        upper: solution.branch(true, cfg.apex_radius),
        lower: solution.branch(false, cfg.apex_radius),
        solution,
    })
}

/// Closed rotational timelike profile: the wing continued to the axis on both sides.
pub fn build_spindle(params: &FlowParams, s0: f64, cfg: &WingConfig) -> Result<Wing> {
    if !params.is_rotational_form() {
        return Err(SolitonError::Parameter("spindles need eps~ = +1, eps' = -1".into()));
    }
    let wing = build_wing(params, s0, 0.0, cfg)?;
    if !wing.solution.is_closed() {
        return Err(SolitonError::SearchFailure(format!(
            "spindle did not reach the axis within |y| <= {} (ends {:?}, {:?})",
            cfg.y_span, wing.solution.end_down, wing.solution.end_up
        )));
    }
    Ok(wing)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangencyReport {
    /// `max (beta - alpha2)` over samples with `0 < |y - y0| <= radius`
    pub max_gap: f64,
    pub gap_at_apex: f64,
    pub slope_gap_at_apex: f64,
    pub samples: usize,
}

/// Compare `beta = alpha1 + alpha2(y0) - alpha1(y0)` against `alpha2` near the common apex.
pub fn tangency_comparison(
    params: &FlowParams,
    s1: f64,
    s2: f64,
    radius: f64,
    samples: usize,
    cfg: &WingConfig,
) -> Result<TangencyReport> {
    let y0 = 0.0;
    let w1 = build_wing(params, s1, y0, cfg)?.solution;
    let w2 = build_wing(params, s2, y0, cfg)?.solution;
    let (a1, d1, _) = w1.eval(y0).expect("apex");
    let (a2, d2, _) = w2.eval(y0).expect("apex");
    let shift = a2 - a1;
    let mut max_gap = f64::NEG_INFINITY;
    let mut count = 0;
    for i in 0..=2 * samples {
        let y = y0 + radius * (i as f64 / samples as f64 - 1.0);
        if y == y0 {
            continue;
        }
        let (Some(p), Some(q)) = (w1.eval(y), w2.eval(y)) else {
            return Err(SolitonError::Domain(format!("wing undefined at y = {y}")));
        };
        max_gap = max_gap.max(p.0 + shift - q.0);
        count += 1;
    }
    Ok(TangencyReport {
        max_gap,
        gap_at_apex: a1 + shift - a2,
        slope_gap_at_apex: d1 - d2,
        samples: count,
    })
}

/// Timelike solutions for boost parameters with `eps~ = -1`: `f = -q` where `q` is
/// a strip solution of the mirrored (rotational-form) equation.
///
/// `start` picks the strip solution for `BelowBowl`/`AboveBowl`; by default the
/// start sits halfway between the bowl and the corresponding barrier at `s = 1`.
pub fn timelike_family_from_strip(
    params: &FlowParams,
    request: ClassTag,
    start: Option<(f64, f64)>,
    cfg: &IntegratorConfig,
) -> Result<ProfileCurve> {
    if !(params.eps_tilde() == Sign::Minus && params.eps_prime() == Sign::Plus) {
        return Err(SolitonError::Parameter("need boost-timelike parameters eps~ = -1, eps' = +1".into()));
    }
    let mirror = params.mirrored();
    let q_traj = match request {
        ClassTag::Bowl => compute_bowl(&mirror, cfg)?,
        ClassTag::BelowBowl | ClassTag::AboveBowl => {
            let clf = Classifier::new(mirror, *cfg)?;
            let (s0, w0) = match start {
                Some(p) => p,
                None => {
                    let wb = clf.bowl()?.eval(1.0).expect("bowl covers s = 1");
                    let target = if request == ClassTag::BelowBowl { -1.0 } else { 1.0 };
                    (1.0, 0.5 * (wb + target))
                }
            };
            let (cls, traj) = clf.classify_with_trajectory(s0, w0)?;
            if cls.tag != request {
                return Err(SolitonError::Config(format!(
                    "start ({s0}, {w0}) generates {} rather than {}",
                    cls.tag.name(),
                    request.name()
                )));
            }
            traj
        }
        other => {
            return Err(SolitonError::Config(format!(
                "timelike family only covers Bowl/BelowBowl/AboveBowl, not {}",
                other.name()
            )))
        }
    };
    let q = build_graph(&q_traj, 0.0)?;
    let mut f = q.negated(*params);
    f.graph = None;
    Ok(f)
}

/// `max |f'' - (eps~ + eps' f'^2)(1 - f' h(s))|` over a graph profile.
pub fn residual_key_ode(profile: &ProfileCurve) -> Result<f64> {
    if profile.kind != CurveKind::GraphOverS {
        return Err(SolitonError::Config("residual needs a graph_over_s profile".into()));
    }
    Ok(profile
        .samples
        .iter()
        .map(|p| (p.ddx - rhs_unchecked(&profile.params, p.t, p.dx)).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate_both, IntegratorConfig};
    use crate::params::PhaseState;

    #[test]
    fn barrier_graph_is_linear() {
        let p = FlowParams::rotational(3).unwrap();
        let t = integrate_both(&p, PhaseState::new(2.0, 1.0).unwrap(), &IntegratorConfig::default())
            .unwrap()
            .trajectory;
        let g = build_graph(&t, 0.0).unwrap();
        for s in [0.5, 2.0, 7.25, 60.0] {
            let (f, df, ddf) = g.eval(s).unwrap();
            assert!((f - (s - 2.0)).abs() < 1e-12);
            assert_eq!((df, ddf), (1.0, 0.0));
        }
        assert_eq!(residual_key_ode(&g).unwrap(), 0.0);
    }

    #[test]
    fn bowl_graph_near_zero() {
        let p = FlowParams::rotational(3).unwrap();
        let b = compute_bowl(&p, &IntegratorConfig::default()).unwrap();
        let g = build_graph(&b, 0.0).unwrap();
        let (f0, _, _) = g.eval(1e-6).unwrap();
        let (f, _, _) = g.eval(0.05).unwrap();
        let s: f64 = 0.05;
        // f(s) - f(0) = s^2/6 - s^4/540 + ...
        assert!(((f - f0) - (s * s / 6.0 - s.powi(4) / 540.0)).abs() < 1e-10);
        assert!(residual_key_ode(&g).unwrap() < 1e-8);
    }

    #[test]
    fn euclidean_wing_apex_is_minimum() {
        let p = FlowParams::new(2, Sign::Plus, Sign::Plus, 1.0).unwrap();
        let w = build_wing(&p, 1.0, 0.0, &WingConfig { y_span: 3.0, ..Default::default() }).unwrap();
        let (a, da, dda) = w.solution.eval(0.0).unwrap();
        assert_eq!((a, da, dda), (1.0, 0.0, 1.0));
        assert!(w.curve.samples.iter().all(|p| p.x >= 1.0));
        let (ru, rl) = (residual_key_ode(&w.upper).unwrap(), residual_key_ode(&w.lower).unwrap());
        assert!(ru < 1e-6 && rl < 1e-6, "{ru:e} {rl:e}");
    }

    #[test]
    fn spindle_closes() {
        let p = FlowParams::rotational(3).unwrap();
        let w = build_spindle(&p, 1.0, &WingConfig::default()).unwrap();
        let (a, b) = w.solution.domain();
        assert!(a < 0.0 && b > 0.0 && b - a < 10.0);
        for end in [w.solution.end_up, w.solution.end_down] {
            let WingEnd::AxisContact { slope, .. } = end else { panic!() };
            assert!((slope.abs() - 1.0).abs() < 1e-2, "{slope}");
        }
        assert_eq!(w.solution.eval(0.0).unwrap().2, -2.0);
        assert!(w.curve.samples.iter().all(|q| q.x <= 1.0));
        let r_up = residual_key_ode(&w.upper).unwrap();
        let r_lo = residual_key_ode(&w.lower).unwrap();
        assert!(r_up < 1e-6 && r_lo < 1e-6, "{r_up} {r_lo}");
    }

    #[test]
    fn tangency() {
        let p = FlowParams::rotational(3).unwrap();
        let r = tangency_comparison(&p, 1.0, 2.0, 0.2, 200, &WingConfig::default()).unwrap();
        assert!(r.max_gap < 0.0);
        assert_eq!(r.gap_at_apex, 0.0);
        assert_eq!(r.slope_gap_at_apex, 0.0);
    }

    #[test]
    fn timelike_bowl() {
        let p = FlowParams::boost(2, Sign::Minus, false).unwrap();
        let f = timelike_family_from_strip(&p, ClassTag::Bowl, None, &IntegratorConfig::default()).unwrap();
        assert!(f.samples.iter().all(|q| q.dx.abs() < 1.0));
        assert!(f.samples[0].dx.abs() < 1e-9);
        assert!(residual_key_ode(&f).unwrap() < 1e-8);
        // the dense derivative is good to about tol^(4/5); 1e-8 needs rel_tol 1e-12
        let tight = IntegratorConfig::default().tightened(100.0);
        for tag in [ClassTag::BelowBowl, ClassTag::AboveBowl] {
            let mut f = timelike_family_from_strip(&p, tag, None, &tight).unwrap();
            assert!(f.samples.iter().all(|q| q.dx.abs() < 1.0));
            // below s ~ 1e-6 f'' is under the rounding floor of w ~ -+1 divided by s
            f.samples.retain(|q| q.t >= 1e-6);
            let r = residual_key_ode(&f).unwrap();
            assert!(r < 1e-8, "{tag:?} {r:e}");
        }
        assert!(timelike_family_from_strip(&p, ClassTag::Separatrix, None, &IntegratorConfig::default()).is_err());
    }
}
