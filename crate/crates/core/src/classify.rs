//! Phase-plane classification and the two distinguished solutions: the bowl
//! slope `w_B` (through the origin) and the separatrix in `w > 1` asymptotic to
//! the line `r`.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolitonError};
use crate::ode::{
    detect_blowup, integrate, integrate_both, BlowUp, Direction, EventKind, EventRecord,
    IntegratorConfig, Termination, Trajectory,
};
use crate::params::{critical_line, region_of, CausalSign, FlowParams, PhaseState, Region, Sign};
use crate::series::{bowl_series_coeffs, bowl_start};

/// Where the bowl slope leaves its series and the integrator takes over.
const BOWL_SERIES_END: f64 = 1e-4;
const BOWL_SERIES_ORDER: usize = 5;
/// Relative width of the band around a reference solution treated as "on it".
const MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassTag {
    ConstantPlus,
    ConstantMinus,
    Bowl,
    BelowBowl,
    AboveBowl,
    GammaMinusBlowup,
    Separatrix,
    GammaPlusGlobal,
    GammaPlusBlowup,
}

impl ClassTag {
    pub fn name(self) -> &'static str {
        match self {
            ClassTag::ConstantPlus => "ConstantPlus",
            ClassTag::ConstantMinus => "ConstantMinus",
            ClassTag::Bowl => "Bowl",
            ClassTag::BelowBowl => "BelowBowl",
            ClassTag::AboveBowl => "AboveBowl",
            ClassTag::GammaMinusBlowup => "GammaMinusBlowup",
            ClassTag::Separatrix => "Separatrix",
            ClassTag::GammaPlusGlobal => "GammaPlusGlobal",
            ClassTag::GammaPlusBlowup => "GammaPlusBlowup",
        }
    }
}

/// Numeric endpoint value with the change over the last decade (zero end) or
/// the last tenth of the span (infinite end) as its accuracy indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitValue {
    pub value: f64,
    pub drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EndLimit {
    Value(LimitValue),
    BlowUp { s_star: f64, sign: Sign },
    /// Unbounded and tracking `r`: `defect = |c w - eps~ s|` at the horizon.
    AlongLineR { defect: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitsReport {
    pub at_zero: EndLimit,
    pub at_infinity: EndLimit,
}

impl EndLimit {
    /// Finite endpoint value if any.
    pub fn value(&self) -> Option<f64> {
        match self {
            EndLimit::Value(v) => Some(v.value),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub limits: LimitsReport,
    pub critical_points: Vec<f64>,
    pub blowup: Option<BlowUp>,
    pub causal_sign: CausalSign,
    /// Reference-solution comparison and direct integration agree on the class.
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionClass {
    pub tag: ClassTag,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixResult {
    pub anchor: f64,
    /// `A`, midpoint of the final bracket.
    pub value: f64,
    pub bracket: (f64, f64),
    pub bisection_steps: usize,
    /// `(S, sup_{S <= s <= s_max} |c w(s) - s|)`
    pub defects: Vec<(f64, f64)>,
    /// Backward-integrated trajectory value at the anchor minus `value`.
    pub anchor_discrepancy: f64,
}

impl SeparatrixResult {
    /// Asymptote defect at `s_from`, interpolated from the tabulated values.
    pub fn defect_at(&self, s_from: f64) -> Option<f64> {
        self.defects.iter().find(|(s, _)| *s >= s_from).map(|(_, d)| *d)
    }
}

fn require_rotational(params: &FlowParams) -> Result<()> {
    if params.is_rotational_form() {
        Ok(())
    } else {
        Err(SolitonError::Parameter(
            "classification needs eps~ = +1, eps' = -1 (mirror boost-timelike parameters first)".into(),
        ))
    }
}

/// The bowl slope `w_B` on `[s_min_eps, s_max]`: odd series near zero, integration beyond.
pub fn compute_bowl(params: &FlowParams, cfg: &IntegratorConfig) -> Result<Trajectory> {
    require_rotational(params)?;
    cfg.validate()?;
    let start = bowl_start(params, BOWL_SERIES_END, BOWL_SERIES_ORDER, cfg.abs_tol)?;
    let series = Arc::new(bowl_series_coeffs(params, BOWL_SERIES_ORDER));
    let lo = cfg.s_min_eps.min(BOWL_SERIES_END / 2.0);
    let head = Trajectory::from_series(*params, series, lo, BOWL_SERIES_END, 9);
    let tail = integrate(params, start, Direction::TowardInfinity, cfg)?.trajectory;
    Ok(head.append(tail))
}

/// Forward fate of a start at the separatrix anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fate {
    Global,
    BlowUp,
}

fn fate(params: &FlowParams, s0: f64, w0: f64, cfg: &IntegratorConfig) -> Result<Fate> {
    let out = integrate(params, PhaseState::new(s0, w0)?, Direction::TowardInfinity, cfg)?;
    if out.events.iter().any(|e| e.kind == EventKind::CrossedLineR) {
        return Ok(Fate::Global);
    }
    if detect_blowup(&out.trajectory).is_some() {
        return Ok(Fate::BlowUp);
    }
    let last = out.trajectory.samples().last().copied().unwrap_or(PhaseState { s: s0, w: w0 });
    Ok(if last.w > critical_line(params, last.s) {
        Fate::BlowUp
    } else {
        Fate::Global
    })
}

/// Bisection for the separatrix value at `s = c`, then the separatrix itself.
///
/// Forward from the anchor the separatrix is unstable (nearby solutions leave at
/// rate `exp(s^2 / 2c)`), so the trajectory is built backward from far out on
/// its asymptote `w ~ s/c + 1/s`, where the flow contracts, and checked against
/// the bisection value at the anchor.
pub fn compute_separatrix(
    params: &FlowParams,
    cfg: &IntegratorConfig,
    tol: f64,
) -> Result<(SeparatrixResult, Trajectory)> {
    compute_separatrix_at(params, cfg, tol, params.fiber_coeff())
}

pub fn compute_separatrix_at(
    params: &FlowParams,
    cfg: &IntegratorConfig,
    tol: f64,
    anchor: f64,
) -> Result<(SeparatrixResult, Trajectory)> {
    require_rotational(params)?;
    cfg.validate()?;
    if !(tol > 0.0) {
        return Err(SolitonError::Config(format!("tolerance must be positive, got {tol}")));
    }
    if !(anchor > 0.0 && anchor < cfg.s_max) {
        return Err(SolitonError::Domain(format!("anchor {anchor} outside (0, s_max)")));
    }
    let c = params.fiber_coeff();
    let tight = cfg.tightened(1e3);
    let lower_start = 1.0f64.max(anchor / c) + 1e-6;
    let mut lo = lower_start;
    if fate(params, anchor, lo, &tight)? != Fate::Global {
        return Err(SolitonError::SearchFailure(format!(
            "lower bracket w = {lo} at s = {anchor} does not stay global"
        )));
    }
    let mut hi = 2.0 * lo;
    while fate(params, anchor, hi, &tight)? != Fate::BlowUp {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(SolitonError::SearchFailure(format!(
                "no blow-up found above w = {lo} at s = {anchor}"
            )));
        }
    }
    let mut steps = 0;
    while hi - lo >= tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match fate(params, anchor, mid, &tight)? {
            Fate::Global => lo = mid,
            Fate::BlowUp => hi = mid,
        }
        steps += 1;
    }
    let value = 0.5 * (lo + hi);

    let s_far = cfg.s_max + 10.0;
    let w_far = s_far / c + s_far / (s_far * s_far - c * c);
    let back_cfg = IntegratorConfig { s_max: s_far, ..tight };
    let mut traj = integrate(params, PhaseState::new(s_far, w_far)?, Direction::TowardZero, &back_cfg)?.trajectory;
    traj.clip_right(cfg.s_max);
    let at_anchor = traj.eval(anchor).ok_or_else(|| {
        SolitonError::SearchFailure("backward separatrix does not reach the anchor".into())
    })?;

    let defects = [5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 75.0]
        .iter()
        .copied()
        .filter(|s| *s < cfg.s_max)
        .map(|s_from| (s_from, asymptote_defect(&traj, params, s_from, cfg.s_max)))
        .collect();
    Ok((
        SeparatrixResult {
            anchor,
            value,
            bracket: (lo, hi),
            bisection_steps: steps,
            defects,
            anchor_discrepancy: at_anchor - value,
        },
        traj,
    ))
}

fn asymptote_defect(traj: &Trajectory, params: &FlowParams, from: f64, to: f64) -> f64 {
    let c = params.fiber_coeff();
    let n = 400;
    let dense = (0..=n).map(|i| from + (to - from) * i as f64 / n as f64);
    let nodes = traj.samples().iter().map(|p| p.s).filter(|s| *s >= from && *s <= to);
    dense
        .chain(nodes)
        .filter_map(|s| traj.eval(s).map(|w| (c * w - s).abs()))
        .fold(0.0, f64::max)
}

fn end_limit_right(traj: &Trajectory) -> EndLimit {
    let params = traj.params();
    if let Some(b) = detect_blowup(traj) {
        if matches!(traj.termination_right, Termination::BlowUp { .. }) {
            return EndLimit::BlowUp { s_star: b.s_star, sign: b.sign };
        }
    }
    let (_, hi) = traj.span();
    let w = traj.eval(hi).unwrap_or(f64::NAN);
    let r = critical_line(params, hi);
    if w.abs() > 2.0 && ((w - r) / r).abs() < 0.05 {
        return EndLimit::AlongLineR { defect: (params.fiber_coeff() * (w - r)).abs() };
    }
    let prev = traj.eval(0.9 * hi).unwrap_or(w);
    EndLimit::Value(LimitValue { value: w, drift: (w - prev).abs() })
}

fn end_limit_left(traj: &Trajectory) -> EndLimit {
    if let Termination::BlowUp { s_star, sign, .. } = traj.termination_left {
        return EndLimit::BlowUp { s_star, sign };
    }
    let (lo, _) = traj.span();
    let w = traj.eval(lo).unwrap_or(f64::NAN);
    let prev = traj.eval(10.0 * lo).unwrap_or(w);
    EndLimit::Value(LimitValue { value: w, drift: (w - prev).abs() })
}

/// Endpoint behavior of a trajectory integrated in both directions.
pub fn limits_report(trajectory: &Trajectory) -> LimitsReport {
    LimitsReport {
        at_zero: end_limit_left(trajectory),
        at_infinity: end_limit_right(trajectory),
    }
}

/// Cached reference solutions for one parameter set and integrator configuration.
pub struct Classifier {
    params: FlowParams,
    cfg: IntegratorConfig,
    separatrix_tol: f64,
    bowl: OnceLock<std::result::Result<Trajectory, SolitonError>>,
    separatrix: OnceLock<std::result::Result<(SeparatrixResult, Trajectory), SolitonError>>,
}

impl Classifier {
    pub fn new(params: FlowParams, cfg: IntegratorConfig) -> Result<Classifier> {
        require_rotational(&params)?;
        cfg.validate()?;
        Ok(Classifier {
            params,
            cfg,
            separatrix_tol: 1e-10,
            bowl: OnceLock::new(),
            separatrix: OnceLock::new(),
        })
    }

    pub fn params(&self) -> &FlowParams {
        &self.params
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    pub fn bowl(&self) -> Result<&Trajectory> {
        self.bowl
            .get_or_init(|| compute_bowl(&self.params, &self.cfg))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn separatrix(&self) -> Result<(&SeparatrixResult, &Trajectory)> {
        self.separatrix
            .get_or_init(|| compute_separatrix(&self.params, &self.cfg, self.separatrix_tol))
            .as_ref()
            .map(|(r, t)| (r, t))
            .map_err(Clone::clone)
    }

    /// Classify the solution through `(s0, w0)`, returning its trajectory too.
    pub fn classify_with_trajectory(&self, s0: f64, w0: f64) -> Result<(SolutionClass, Trajectory)> {
        if !(s0 > 0.0) {
            return Err(SolitonError::Domain(format!("s0 must be positive, got {s0}")));
        }
        let state = PhaseState::new(s0, w0)?;
        match region_of(state) {
            Region::BarrierPlus | Region::BarrierMinus => {
                let out = integrate_both(&self.params, state, &self.cfg)?;
                let tag = if w0 > 0.0 { ClassTag::ConstantPlus } else { ClassTag::ConstantMinus };
                Ok((self.assemble(tag, &out.trajectory, &out.events, true, state), out.trajectory))
            }
            Region::InnerStrip => self.classify_strip(state),
            Region::GammaMinus => {
                let out = integrate_both(&self.params, state, &self.cfg)?;
                let consistent = detect_blowup(&out.trajectory).is_some();
                let cls = self.assemble(ClassTag::GammaMinusBlowup, &out.trajectory, &out.events, consistent, state);
                Ok((cls, out.trajectory))
            }
            Region::GammaPlus => self.classify_gamma_plus(state),
        }
    }

    pub fn classify(&self, s0: f64, w0: f64) -> Result<SolutionClass> {
        self.classify_with_trajectory(s0, w0).map(|(c, _)| c)
    }

    fn reference_value(traj: &Trajectory, s0: f64, what: &str) -> Result<f64> {
        traj.eval(s0).ok_or_else(|| {
            let (lo, hi) = traj.span();
            SolitonError::Domain(format!("s0 = {s0} outside the {what} span [{lo}, {hi}]"))
        })
    }

    fn classify_strip(&self, state: PhaseState) -> Result<(SolutionClass, Trajectory)> {
        let bowl = self.bowl()?;
        let wb = Self::reference_value(bowl, state.s, "bowl")?;
        if (state.w - wb).abs() <= MATCH_TOL * wb.abs().max(1.0) {
            let cls = self.assemble(ClassTag::Bowl, bowl, &[], true, state);
            return Ok((cls, bowl.clone()));
        }
        let tag = if state.w < wb { ClassTag::BelowBowl } else { ClassTag::AboveBowl };
        let out = integrate_both(&self.params, state, &self.cfg)?;
        let crossings = out.events.iter().filter(|e| e.kind == EventKind::CrossedLineR).count()
            + usize::from(self.on_line_r(state));
        let consistent = match tag {
            ClassTag::AboveBowl => crossings == 1,
            _ => crossings == 0,
        };
        Ok((self.assemble(tag, &out.trajectory, &out.events, consistent, state), out.trajectory))
    }

    fn classify_gamma_plus(&self, state: PhaseState) -> Result<(SolutionClass, Trajectory)> {
        let (_, sep) = self.separatrix()?;
        let ws = Self::reference_value(sep, state.s, "separatrix")?;
        if (state.w - ws).abs() <= MATCH_TOL * ws.abs().max(1.0) {
            let cls = self.assemble(ClassTag::Separatrix, sep, &[], true, state);
            return Ok((cls, sep.clone()));
        }
        let tag = if state.w < ws { ClassTag::GammaPlusGlobal } else { ClassTag::GammaPlusBlowup };
        let out = integrate_both(&self.params, state, &self.cfg)?;
        let blew_up = matches!(out.trajectory.termination_right, Termination::BlowUp { .. });
        let consistent = blew_up == (tag == ClassTag::GammaPlusBlowup);
        Ok((self.assemble(tag, &out.trajectory, &out.events, consistent, state), out.trajectory))
    }

    fn on_line_r(&self, state: PhaseState) -> bool {
        let r = critical_line(&self.params, state.s);
        (state.w - r).abs() <= 1e-12 * r.abs().max(1.0)
    }

    fn assemble(
        &self,
        tag: ClassTag,
        traj: &Trajectory,
        events: &[EventRecord],
        consistent: bool,
        origin: PhaseState,
    ) -> SolutionClass {
        let mut critical_points: Vec<f64> = events
            .iter()
            .filter(|e| e.kind == EventKind::CrossedLineR)
            .map(|e| e.s)
            .collect();
        if self.on_line_r(origin) && !matches!(tag, ClassTag::ConstantPlus | ClassTag::ConstantMinus) {
            critical_points.push(origin.s);
        }
        critical_points.sort_by(f64::total_cmp);
        let mut limits = limits_report(traj);
        if tag == ClassTag::Bowl {
            // w_B(0) = 0 is the defining boundary value
            limits.at_zero = EndLimit::Value(LimitValue { value: 0.0, drift: 0.0 });
        }
        SolutionClass {
            tag,
            evidence: Evidence {
                limits,
                critical_points,
                blowup: detect_blowup(traj),
                causal_sign: traj.causal_sign,
                consistent,
            },
        }
    }
}

/// One-shot classification (builds the reference solutions it needs).
pub fn classify(params: &FlowParams, s0: f64, w0: f64, cfg: &IntegratorConfig) -> Result<SolutionClass> {
    if !(s0 > 0.0) {
        return Err(SolitonError::Domain(format!("s0 must be positive, got {s0}")));
    }
    Classifier::new(*params, *cfg)?.classify(s0, w0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clf(n: usize) -> Classifier {
        Classifier::new(FlowParams::rotational(n).unwrap(), IntegratorConfig::default()).unwrap()
    }

    #[test]
    fn bowl_shape() {
        let c = clf(3);
        let b = c.bowl().unwrap();
        assert!((b.eval(50.0).unwrap() - 1.0).abs() < 0.05);
        assert!((b.eval(1e-3).unwrap() - 1e-3 / 3.0).abs() < 1e-9);
        // strictly increasing until w_B rounds to 1
        assert!(b
            .samples()
            .windows(2)
            .all(|p| p[1].w > p[0].w || (p[0].w >= 1.0 - 1e-15 && p[1].w >= p[0].w)));
        assert_eq!(b.causal_sign, CausalSign::Minus);
    }

    #[test]
    fn spec_examples() {
        let c = clf(3);
        let below = c.classify(1.0, 0.0).unwrap();
        assert_eq!(below.tag, ClassTag::BelowBowl);
        assert!(below.evidence.critical_points.is_empty());

        let global = c.classify(4.0, 2.0).unwrap();
        assert_eq!(global.tag, ClassTag::GammaPlusGlobal);
        assert_eq!(global.evidence.critical_points, vec![4.0]);
        assert!(global.evidence.consistent);

        let minus = c.classify(1.0, -2.0).unwrap();
        assert_eq!(minus.tag, ClassTag::GammaMinusBlowup);
        let s = minus.evidence.blowup.unwrap().s_star;
        assert!(s > 1.0 && s < 1.5494);

        let high = c.classify(2.0, 1000.0).unwrap();
        assert_eq!(high.tag, ClassTag::GammaPlusBlowup);
        assert!(high.evidence.blowup.is_some());

        assert_eq!(c.classify(3.0, 1.0).unwrap().tag, ClassTag::ConstantPlus);
        assert_eq!(c.classify(3.0, -1.0).unwrap().tag, ClassTag::ConstantMinus);
        assert!(matches!(c.classify(0.0, 0.0), Err(SolitonError::Domain(_))));
    }

    #[test]
    fn bowl_start_is_bowl() {
        let c = clf(3);
        let wb = c.bowl().unwrap().eval(2.0).unwrap();
        let cls = c.classify(2.0, wb).unwrap();
        assert_eq!(cls.tag, ClassTag::Bowl);
        assert_eq!(cls.evidence.limits.at_zero.value(), Some(0.0));
    }

    #[test]
    fn separatrix_is_found() {
        let c = clf(3);
        let (res, traj) = c.separatrix().unwrap();
        assert!(res.bracket.1 - res.bracket.0 < 1e-10);
        assert!(res.anchor_discrepancy.abs() < 1e-7, "{}", res.anchor_discrepancy);
        let w50 = traj.eval(50.0).unwrap();
        assert!((2.0 * w50 - 50.0).abs() < 0.05);
        // w - 1 ~ s^4 rounds to zero near the left cutoff
        assert!(traj
            .samples()
            .windows(2)
            .all(|p| p[1].w > p[0].w || (p[1].w <= 1.0 + 1e-15 && p[1].w >= p[0].w)));
        let d: Vec<f64> = res.defects.iter().map(|d| d.1).collect();
        assert!(d.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn non_rotational_rejected() {
        let p = FlowParams::euclidean_rotational(3).unwrap();
        assert!(matches!(
            Classifier::new(p, IntegratorConfig::default()),
            Err(SolitonError::Parameter(_))
        ));
    }
}
