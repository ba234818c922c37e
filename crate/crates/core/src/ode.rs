//! Adaptive integration of the slope equation with event and blow-up detection.
//!
//! Three charts are used:
//!
//! * linear: `w(s)` in the original coordinate, used toward infinity;
//! * log: `z(t) = w(e^t)`, `z' = (eps~ + eps' z^2)(e^t - eps~ c z)`, used toward
//!   `s = 0` where the `1/s` coefficient would otherwise force tiny steps;
//! * reciprocal: `s(u)` with `u = 1/w`, `ds/du = -u s / ((eps~ u^2 + eps')(u s - eps~ c))`,
//!   entered once `|w|` runs away. It is regular at `u = 0`, so the blow-up
//!   location is the value `s(0)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolitonError};
use crate::params::{critical_line, rhs_unchecked, CausalSign, FlowParams, PhaseState, Sign, BARRIER_EPS};
use crate::rk::{self, DenseStep, RkSettings, RkStatus, StepAction};
use crate::series::OddSeries;

/// Largest step in `t = ln s`.
const LOG_MAX_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// `|w|` beyond which a trajectory is declared to blow up.
    pub escape_threshold: f64,
    /// Right integration horizon.
    pub s_max: f64,
    /// Left cutoff standing in for the singular endpoint `s = 0`.
    pub s_min_eps: f64,
    /// Integrate toward zero in `t = ln s` (otherwise in raw `s`).
    pub log_toward_zero: bool,
    /// `|w|` at which a runaway trajectory moves to the reciprocal chart.
    pub reciprocal_switch: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: 0.25,
            min_step: 1e-14,
            escape_threshold: 1e8,
            s_max: 100.0,
            s_min_eps: 1e-10,
            log_toward_zero: true,
            reciprocal_switch: 1e4,
            max_steps: 5_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(SolitonError::Config("tolerances must be positive".into()));
        }
        if !(self.min_step > 0.0 && self.min_step < self.max_step) {
            return Err(SolitonError::Config(
                "need 0 < min_step < max_step".into(),
            ));
        }
        if !(self.escape_threshold > 1.0) {
            return Err(SolitonError::Config("escape threshold must exceed 1".into()));
        }
        if !(self.s_min_eps > 0.0 && self.s_min_eps < self.s_max) {
            return Err(SolitonError::Config("need 0 < s_min_eps < s_max".into()));
        }
        if !(self.reciprocal_switch > 1.0 && self.reciprocal_switch < self.escape_threshold) {
            return Err(SolitonError::Config(
                "reciprocal switch must lie in (1, escape_threshold)".into(),
            ));
        }
        Ok(())
    }

    /// Same configuration with both tolerances divided by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        IntegratorConfig {
            rel_tol: self.rel_tol / factor,
            abs_tol: self.abs_tol / factor,
            ..*self
        }
    }

    fn rk(&self) -> RkSettings {
        RkSettings {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            min_step: self.min_step,
            max_steps: self.max_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    TowardZero,
    TowardInfinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    /// `|w|` passed the escape threshold; `s_star` is where `1/w` reaches zero.
    /// `final_step` is the remaining distance `s* - s` at the escape sample, the
    /// largest step a raw-`s` integrator could still take there.
    BlowUp {
        s_star: f64,
        sign: Sign,
        final_step: f64,
    },
    /// Reached the left cutoff; `limit` is the value of `w` there.
    DomainBoundaryZero { limit: f64 },
    ReachedSMax,
    /// The numerical solution reached `|w| = 1` from off the barrier.
    BarrierContact { s: f64 },
    /// This side was not integrated: the trajectory starts here.
    Initial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    CrossedLineR,
    TouchedBarrier,
    StepCollapse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: EventKind,
    pub s: f64,
    pub w: f64,
}

#[derive(Debug, Clone)]
enum Piece {
    Linear(DenseStep<1>),
    Log(DenseStep<1>),
    /// independent variable `u = 1/w`, state `s`
    Reciprocal(DenseStep<1>),
    Series(Arc<OddSeries>),
    Constant(f64),
}

/// A piece of dense output valid on `[lo, hi]` in `s`.
#[derive(Debug, Clone)]
struct Segment {
    piece: Piece,
    lo: f64,
    hi: f64,
}

impl Segment {
    fn step_range(piece: &Piece) -> (f64, f64) {
        match piece {
            Piece::Linear(st) => (st.lo(), st.hi()),
            Piece::Log(st) => (st.lo().exp(), st.hi().exp()),
            Piece::Reciprocal(st) => {
                let a = st.eval(st.t0)[0];
                let b = st.y1()[0];
                (a.min(b), a.max(b))
            }
            Piece::Series(_) | Piece::Constant(_) => (f64::NAN, f64::NAN),
        }
    }

    fn from_step(piece: Piece) -> Segment {
        let (lo, hi) = Self::step_range(&piece);
        Segment { piece, lo, hi }
    }

    fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn reciprocal_u(st: &DenseStep<1>, s: f64) -> f64 {
        let (mut a, mut b) = (st.t0, st.t1);
        let sa = st.eval(a)[0];
        let increasing = st.eval(b)[0] > sa;
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let sm = st.eval(m)[0];
            if (sm < s) == increasing {
                a = m;
            } else {
                b = m;
            }
            if (b - a).abs() <= 1e-16 * (a.abs() + b.abs()) {
                break;
            }
        }
        0.5 * (a + b)
    }

    fn eval(&self, s: f64) -> f64 {
        match &self.piece {
            Piece::Linear(st) => st.eval(s)[0],
            Piece::Log(st) => st.eval(s.ln())[0],
            Piece::Reciprocal(st) => 1.0 / Self::reciprocal_u(st, s),
            Piece::Series(series) => series.eval(s),
            Piece::Constant(v) => *v,
        }
    }

    fn eval_derivative(&self, s: f64) -> f64 {
        match &self.piece {
            Piece::Linear(st) => st.eval_derivative(s)[0],
            Piece::Log(st) => st.eval_derivative(s.ln())[0] / s,
            Piece::Reciprocal(st) => {
                let u = Self::reciprocal_u(st, s);
                -1.0 / (u * u * st.eval_derivative(u)[0])
            }
            Piece::Series(series) => series.eval_derivative(s),
            Piece::Constant(_) => 0.0,
        }
    }
}

/// A numerically integrated slope `w(s)` with dense output and termination metadata.
#[derive(Debug, Clone)]
pub struct Trajectory {
    params: FlowParams,
    origin: PhaseState,
    samples: Vec<PhaseState>,
    segments: Vec<Segment>,
    pub termination_left: Termination,
    pub termination_right: Termination,
    pub causal_sign: CausalSign,
}

impl Trajectory {
    pub fn params(&self) -> &FlowParams {
        &self.params
    }

    /// The initial condition the trajectory was integrated from.
    pub fn origin(&self) -> PhaseState {
        self.origin
    }

    /// Samples ordered by increasing `s`.
    pub fn samples(&self) -> &[PhaseState] {
        &self.samples
    }

    /// Covered interval `[s_lo, s_hi]`.
    pub fn span(&self) -> (f64, f64) {
        let lo = self.segments.first().map(|s| s.range().0);
        let hi = self.segments.last().map(|s| s.range().1);
        match (lo, hi) {
            (Some(lo), Some(hi)) => (lo, hi),
            _ => (self.origin.s, self.origin.s),
        }
    }

    fn segment_at(&self, s: f64) -> Option<&Segment> {
        let (lo, hi) = self.span();
        let slack = 1e-12 * hi.abs().max(1.0);
        if s < lo * (1.0 - 1e-12) || s > hi + slack || self.segments.is_empty() {
            return None;
        }
        let idx = self.segments.partition_point(|seg| seg.range().1 < s);
        self.segments.get(idx.min(self.segments.len() - 1))
    }

    /// Dense-output value `w(s)` inside the covered span.
    pub fn eval(&self, s: f64) -> Option<f64> {
        self.segment_at(s).map(|seg| seg.eval(s))
    }

    /// Derivative of the dense output (not the right-hand side) at `s`.
    pub fn eval_derivative(&self, s: f64) -> Option<f64> {
        self.segment_at(s).map(|seg| seg.eval_derivative(s))
    }

    /// Interior nodes of the dense representation, including step midpoints.
    pub(crate) fn nodes_with_midpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for seg in &self.segments {
            let (lo, hi) = seg.range();
            if hi <= lo {
                continue;
            }
            out.push(lo);
            out.push(match seg {
                Segment { piece: Piece::Log(_), .. } => (lo * hi).sqrt(),
                _ => 0.5 * (lo + hi),
            });
        }
        if let Some(seg) = self.segments.last() {
            out.push(seg.range().1);
        }
        out.dedup();
        out
    }

    /// `(lo, hi)` of every dense segment, ascending.
    pub(crate) fn segment_ranges(&self) -> Vec<(f64, f64)> {
        self.segments.iter().map(|s| s.range()).collect()
    }

    /// Drop everything beyond `s_cut` and mark the right end as the horizon.
    pub fn clip_right(&mut self, s_cut: f64) {
        self.samples.retain(|p| p.s <= s_cut);
        let mut kept = Vec::new();
        for seg in self.segments.drain(..) {
            let (lo, hi) = seg.range();
            if lo >= s_cut {
                continue;
            }
            if hi <= s_cut {
                kept.push(seg);
                continue;
            }
            kept.push(Segment { hi: s_cut, ..seg });
        }
        self.segments = kept;
        if let Some(w) = self.eval(s_cut) {
            if self.samples.last().map_or(true, |p| p.s < s_cut) {
                self.samples.push(PhaseState { s: s_cut, w });
            }
        }
        self.termination_right = Termination::ReachedSMax;
    }

    pub(crate) fn from_series(
        params: FlowParams,
        series: Arc<OddSeries>,
        lo: f64,
        hi: f64,
        n_samples: usize,
    ) -> Trajectory {
        let n = n_samples.max(2);
        let samples: Vec<PhaseState> = (0..n)
            .map(|i| {
                let s = lo * (hi / lo).powf(i as f64 / (n - 1) as f64);
                PhaseState { s, w: series.eval(s) }
            })
            .collect();
        let causal_sign = CausalSign::from_slopes(&params, samples.iter().map(|p| p.w));
        Trajectory {
            params,
            origin: samples[n - 1],
            samples,
            segments: vec![Segment { piece: Piece::Series(series), lo, hi }],
            termination_left: Termination::DomainBoundaryZero { limit: 0.0 },
            termination_right: Termination::Initial,
            causal_sign,
        }
    }

    /// Glue a trajectory whose left end is this one's right end.
    pub(crate) fn append(mut self, right: Trajectory) -> Trajectory {
        let skip = usize::from(
            matches!((self.samples.last(), right.samples.first()), (Some(a), Some(b)) if a.s >= b.s),
        );
        self.samples.extend(right.samples.iter().skip(skip).copied());
        self.segments.extend(right.segments);
        self.termination_right = right.termination_right;
        self.causal_sign = CausalSign::from_slopes(&self.params, self.samples.iter().map(|p| p.w));
        self
    }
}

/// Result of one call to [`integrate`].
#[derive(Debug, Clone)]
pub struct Integration {
    pub trajectory: Trajectory,
    pub events: Vec<EventRecord>,
}

struct Builder {
    samples: Vec<PhaseState>,
    segments: Vec<Segment>,
    events: Vec<EventRecord>,
}

/// Integrate the slope equation from `init` in one direction.
pub fn integrate(
    params: &FlowParams,
    init: PhaseState,
    direction: Direction,
    cfg: &IntegratorConfig,
) -> Result<Integration> {
    cfg.validate()?;
    let init = PhaseState::new(init.s, init.w)?;
    if let Some(out) = barrier_trajectory(params, init, direction, cfg) {
        return Ok(out);
    }
    let mut b = Builder {
        samples: vec![init],
        segments: Vec::new(),
        events: Vec::new(),
    };
    let term = match direction {
        Direction::TowardInfinity => {
            if init.s >= cfg.s_max {
                Termination::ReachedSMax
            } else {
                run_linear(params, init, cfg.s_max, cfg, &mut b)?
            }
        }
        Direction::TowardZero => {
            if init.s <= cfg.s_min_eps {
                Termination::DomainBoundaryZero { limit: init.w }
            } else if cfg.log_toward_zero {
                run_log(params, init, cfg, &mut b)?
            } else {
                run_linear(params, init, cfg.s_min_eps, cfg, &mut b)?
            }
        }
    };
    if direction == Direction::TowardZero {
        b.samples.reverse();
        b.segments.reverse();
    }
    let causal_sign = CausalSign::from_slopes(params, b.samples.iter().map(|p| p.w));
    let (termination_left, termination_right) = match direction {
        Direction::TowardZero => (term, Termination::Initial),
        Direction::TowardInfinity => (Termination::Initial, term),
    };
    Ok(Integration {
        trajectory: Trajectory {
            params: *params,
            origin: init,
            samples: b.samples,
            segments: b.segments,
            termination_left,
            termination_right,
            causal_sign,
        },
        events: b.events,
    })
}

/// Integrate toward zero and toward infinity and join the two halves.
pub fn integrate_both(params: &FlowParams, init: PhaseState, cfg: &IntegratorConfig) -> Result<Integration> {
    let left = integrate(params, init, Direction::TowardZero, cfg)?;
    let right = integrate(params, init, Direction::TowardInfinity, cfg)?;
    let mut events = left.events;
    events.reverse();
    events.extend(right.events);
    let mut traj = left.trajectory.append(right.trajectory);
    traj.origin = init;
    Ok(Integration { trajectory: traj, events })
}

fn barrier_trajectory(
    params: &FlowParams,
    init: PhaseState,
    direction: Direction,
    cfg: &IntegratorConfig,
) -> Option<Integration> {
    if !params.has_barriers() {
        return None;
    }
    let value = if (init.w - 1.0).abs() <= BARRIER_EPS {
        1.0
    } else if (init.w + 1.0).abs() <= BARRIER_EPS {
        -1.0
    } else {
        return None;
    };
    let (lo, hi, left, right) = match direction {
        Direction::TowardInfinity => (
            init.s,
            cfg.s_max.max(init.s),
            Termination::Initial,
            Termination::ReachedSMax,
        ),
        Direction::TowardZero => (
            cfg.s_min_eps.min(init.s),
            init.s,
            Termination::DomainBoundaryZero { limit: value },
            Termination::Initial,
        ),
    };
    let samples = vec![PhaseState { s: lo, w: value }, PhaseState { s: hi, w: value }];
    let causal_sign = CausalSign::from_slopes(params, [value]);
    Some(Integration {
        trajectory: Trajectory {
            params: *params,
            origin: PhaseState { s: init.s, w: value },
            samples,
            segments: vec![Segment { piece: Piece::Constant(value), lo, hi }],
            termination_left: left,
            termination_right: right,
            causal_sign,
        },
        events: Vec::new(),
    })
}

fn barrier_side(w: f64) -> (bool, bool) {
    (w > 1.0, w > -1.0)
}

/// Raw-`s` chart toward `s_end` (either direction). Handles the reciprocal switch
/// when moving right.
fn run_linear(
    params: &FlowParams,
    init: PhaseState,
    s_end: f64,
    cfg: &IntegratorConfig,
    b: &mut Builder,
) -> Result<Termination> {
    let p = *params;
    let side0 = barrier_side(init.w);
    let mut stop: Option<Termination> = None;
    let mut switch_at: Option<(f64, f64)> = None;
    let forward = s_end > init.s;
    let mut new_segments = Vec::new();
    let mut new_samples = Vec::new();
    let mut new_events = Vec::new();
    let out = rk::solve(
        |s, y: &[f64; 1]| [rhs_unchecked(&p, s, y[0])],
        init.s,
        [init.w],
        s_end,
        &cfg.rk(),
        |st| {
            let g = |s: f64, y: &[f64; 1]| y[0] - critical_line(&p, s);
            let mut cut = st.t1;
            // barrier contact ends the run
            let w1 = st.y1()[0];
            if barrier_side(w1) != side0 {
                let target = if side0.0 != barrier_side(w1).0 { 1.0 } else { -1.0 };
                if let Some(r) = rk::find_root(st, |_, y| y[0] - target, 1e-15) {
                    cut = r;
                }
                new_events.push(EventRecord { kind: EventKind::TouchedBarrier, s: cut, w: target });
                stop = Some(Termination::BarrierContact { s: cut });
            }
            if forward && stop.is_none() && w1.abs() > cfg.reciprocal_switch {
                let sw = cfg.reciprocal_switch;
                let r = if st.y0()[0].abs() < sw {
                    rk::find_root(st, |_, y| y[0].abs() - sw, 1e-15).unwrap_or(st.t1)
                } else {
                    st.t1
                };
                let wr = st.eval(r)[0];
                if wr.abs() > 4.0 * critical_line(&p, r).abs() {
                    cut = r;
                    switch_at = Some((r, wr));
                }
            }
            let trimmed = if cut != st.t1 { st.truncated(cut) } else { *st };
            if let Some(r) = rk::find_root(&trimmed, g, 1e-15) {
                if (r - init.s).abs() > 1e-12 * init.s.max(1.0) {
                    new_events.push(EventRecord {
                        kind: EventKind::CrossedLineR,
                        s: r,
                        w: trimmed.eval(r)[0],
                    });
                }
            }
            new_segments.push(Segment::from_step(Piece::Linear(trimmed)));
            new_samples.push(PhaseState { s: cut, w: trimmed.eval(cut)[0] });
            if stop.is_some() || switch_at.is_some() {
                StepAction::StopAt(cut)
            } else {
                StepAction::Continue
            }
        },
    );
    b.segments.extend(new_segments);
    b.samples.extend(new_samples);
    b.events.extend(sort_events(new_events, forward));
    if let Some(t) = stop {
        return Ok(t);
    }
    if let Some((s_sw, w_sw)) = switch_at {
        return run_reciprocal(params, s_sw, w_sw, cfg, b);
    }
    match out.status {
        RkStatus::ReachedEnd => Ok(if forward {
            Termination::ReachedSMax
        } else {
            Termination::DomainBoundaryZero {
                limit: out.last_state().map_or(init.w, |(_, y)| y[0]),
            }
        }),
        RkStatus::StepCollapse { t, h } => {
            let w = out.last_state().map_or(init.w, |(_, y)| y[0]);
            b.events.push(EventRecord { kind: EventKind::StepCollapse, s: t, w });
            Err(SolitonError::StepCollapse { s: t, w, h })
        }
        RkStatus::MaxSteps => Err(SolitonError::StepCollapse {
            s: out.last_state().map_or(init.s, |(t, _)| t),
            w: out.last_state().map_or(init.w, |(_, y)| y[0]),
            h: 0.0,
        }),
        RkStatus::Stopped => unreachable!("monitor only stops with a termination"),
    }
}

fn sort_events(mut ev: Vec<EventRecord>, ascending: bool) -> Vec<EventRecord> {
    ev.sort_by(|a, b| a.s.total_cmp(&b.s));
    if !ascending {
        ev.reverse();
    }
    ev
}

/// `s(u)` for `u = 1/w` from the switch point down to `u = 0`.
fn run_reciprocal(
    params: &FlowParams,
    s_sw: f64,
    w_sw: f64,
    cfg: &IntegratorConfig,
    b: &mut Builder,
) -> Result<Termination> {
    let p = *params;
    let et = p.eps_tilde().value();
    let ep = p.eps_prime().value();
    let c = p.fiber_coeff();
    let sign = Sign::of(w_sw);
    let u0 = 1.0 / w_sw;
    let u_escape = sign.value() / cfg.escape_threshold;
    let settings = RkSettings {
        max_step: u0.abs() / 4.0,
        min_step: cfg.min_step * u0.abs(),
        ..cfg.rk()
    };
    let mut hit_smax: Option<f64> = None;
    let out = rk::solve(
        |u, y: &[f64; 1]| {
            let s = y[0];
            [-u * s / ((et * u * u + ep) * (u * s - et * c))]
        },
        u0,
        [s_sw],
        0.0,
        &settings,
        |st| {
            if st.y1()[0] > cfg.s_max {
                let r = rk::find_root(st, |_, y| y[0] - cfg.s_max, 1e-15).unwrap_or(st.t1);
                hit_smax = Some(r);
                StepAction::StopAt(r)
            } else {
                StepAction::Continue
            }
        },
    );
    match out.status {
        RkStatus::ReachedEnd | RkStatus::Stopped => {}
        RkStatus::StepCollapse { t, h } => {
            return Err(SolitonError::StepCollapse { s: s_sw, w: 1.0 / t, h });
        }
        RkStatus::MaxSteps => {
            return Err(SolitonError::StepCollapse { s: s_sw, w: w_sw, h: 0.0 });
        }
    }
    if let Some(u_end) = hit_smax {
        for st in &out.steps {
            b.segments.push(Segment::from_step(Piece::Reciprocal(*st)));
            b.samples.push(PhaseState { s: st.y1()[0], w: 1.0 / st.t1 });
        }
        debug_assert!(out.steps.last().map_or(true, |st| st.t1 == u_end));
        return Ok(Termination::ReachedSMax);
    }
    let s_star = out.last_state().map(|(_, y)| y[0]).unwrap_or(s_sw);
    // keep the chart up to |w| = escape threshold
    for st in &out.steps {
        let beyond = st.t0.abs() <= u_escape.abs();
        if beyond {
            break;
        }
        let piece = if st.t1.abs() < u_escape.abs() { st.truncated(u_escape) } else { *st };
        b.segments.push(Segment::from_step(Piece::Reciprocal(piece)));
        b.samples.push(PhaseState { s: piece.y1()[0], w: 1.0 / piece.t1 });
    }
    // a raw-s integrator cannot step past the remaining distance to s*
    let final_step = b.samples.last().map_or(0.0, |p| (s_star - p.s).abs());
    Ok(Termination::BlowUp { s_star, sign, final_step })
}

/// Log chart `t = ln s` from `init` down to `s_min_eps`.
fn run_log(params: &FlowParams, init: PhaseState, cfg: &IntegratorConfig, b: &mut Builder) -> Result<Termination> {
    let p = *params;
    let et = p.eps_tilde().value();
    let ep = p.eps_prime().value();
    let c = p.fiber_coeff();
    let side0 = barrier_side(init.w);
    let t0 = init.s.ln();
    let t_end = cfg.s_min_eps.ln();
    let mut stop: Option<Termination> = None;
    let mut new_segments = Vec::new();
    let mut new_samples = Vec::new();
    let mut new_events = Vec::new();
    // w' = z_t / s: keep t-steps short so the dense derivative stays accurate near 0
    let settings = RkSettings {
        max_step: cfg.max_step.min(LOG_MAX_STEP),
        ..cfg.rk()
    };
    let out = rk::solve(
        |t, y: &[f64; 1]| {
            let z = y[0];
            [(et + ep * z * z) * (t.exp() - et * c * z)]
        },
        t0,
        [init.w],
        t_end,
        &settings,
        |st| {
            let mut cut = st.t1;
            let z1 = st.y1()[0];
            if barrier_side(z1) != side0 {
                let target = if side0.0 != barrier_side(z1).0 { 1.0 } else { -1.0 };
                if let Some(r) = rk::find_root(st, |_, y| y[0] - target, 1e-15) {
                    cut = r;
                }
                new_events.push(EventRecord { kind: EventKind::TouchedBarrier, s: cut.exp(), w: target });
                stop = Some(Termination::BarrierContact { s: cut.exp() });
            } else if z1.abs() > cfg.escape_threshold {
                let thr = cfg.escape_threshold;
                cut = rk::find_root(st, |_, y| y[0].abs() - thr, 1e-15).unwrap_or(st.t1);
                stop = Some(Termination::BlowUp {
                    s_star: cut.exp(),
                    sign: Sign::of(z1),
                    final_step: (st.t0.exp() - cut.exp()).abs(),
                });
            }
            let trimmed = if cut != st.t1 { st.truncated(cut) } else { *st };
            if let Some(r) = rk::find_root(&trimmed, |t, y| y[0] - et * t.exp() / c, 1e-15) {
                if (r - t0).abs() > 1e-12 {
                    new_events.push(EventRecord {
                        kind: EventKind::CrossedLineR,
                        s: r.exp(),
                        w: trimmed.eval(r)[0],
                    });
                }
            }
            new_segments.push(Segment::from_step(Piece::Log(trimmed)));
            new_samples.push(PhaseState { s: cut.exp(), w: trimmed.eval(cut)[0] });
            if stop.is_some() {
                StepAction::StopAt(cut)
            } else {
                StepAction::Continue
            }
        },
    );
    b.segments.extend(new_segments);
    b.samples.extend(new_samples);
    b.events.extend(sort_events(new_events, false));
    if let Some(t) = stop {
        return Ok(t);
    }
    match out.status {
        RkStatus::ReachedEnd => Ok(Termination::DomainBoundaryZero {
            limit: out.last_state().map_or(init.w, |(_, y)| y[0]),
        }),
        RkStatus::StepCollapse { t, h } => {
            let w = out.last_state().map_or(init.w, |(_, y)| y[0]);
            b.events.push(EventRecord { kind: EventKind::StepCollapse, s: t.exp(), w });
            Err(SolitonError::StepCollapse { s: t.exp(), w, h })
        }
        RkStatus::MaxSteps => Err(SolitonError::StepCollapse { s: init.s, w: init.w, h: 0.0 }),
        RkStatus::Stopped => unreachable!("monitor only stops with a termination"),
    }
}

/// Blow-up summary of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowUp {
    /// Extrapolation of the last two samples with the comparison tail `|w|^-1 ~ (s* - s)`.
    pub s_star: f64,
    pub sign: Sign,
    /// Extrapolation with the actual tail `w^-2 ~ (s* - s)` of `w' ~ -eps' eps~ c w^3 / s`.
    pub s_star_cubic_fit: f64,
    /// Where `1/w` vanishes in the reciprocal chart.
    pub s_star_chart: f64,
    pub final_step: f64,
}

/// Blow-up location of a trajectory that escaped, if any.
pub fn detect_blowup(trajectory: &Trajectory) -> Option<BlowUp> {
    let (s_chart, sign, final_step, right) = match (trajectory.termination_right, trajectory.termination_left) {
        (Termination::BlowUp { s_star, sign, final_step }, _) => (s_star, sign, final_step, true),
        (_, Termination::BlowUp { s_star, sign, final_step }) => (s_star, sign, final_step, false),
        _ => return None,
    };
    let smp = trajectory.samples();
    if smp.len() < 2 {
        return Some(BlowUp { s_star: s_chart, sign, s_star_cubic_fit: s_chart, s_star_chart: s_chart, final_step });
    }
    let (a, b) = if right {
        (smp[smp.len() - 2], smp[smp.len() - 1])
    } else {
        (smp[1], smp[0])
    };
    let extrapolate = |ga: f64, gb: f64| {
        if ga == gb {
            b.s
        } else {
            b.s + (b.s - a.s) * gb / (ga - gb)
        }
    };
    Some(BlowUp {
        s_star: extrapolate(1.0 / a.w.abs(), 1.0 / b.w.abs()),
        sign,
        s_star_cubic_fit: extrapolate(1.0 / (a.w * a.w), 1.0 / (b.w * b.w)),
        s_star_chart: s_chart,
        final_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot3() -> FlowParams {
        FlowParams::rotational(3).unwrap()
    }

    fn st(s: f64, w: f64) -> PhaseState {
        PhaseState::new(s, w).unwrap()
    }

    #[test]
    fn barrier_start_is_constant() {
        let cfg = IntegratorConfig::default();
        let out = integrate(&rot3(), st(1.0, 1.0), Direction::TowardInfinity, &cfg).unwrap();
        let t = &out.trajectory;
        assert_eq!(t.termination_right, Termination::ReachedSMax);
        assert_eq!(t.span().1, cfg.s_max);
        for s in [1.0, 3.0, 50.0, 100.0] {
            assert_eq!(t.eval(s), Some(1.0));
        }
        assert!(out.events.is_empty());
    }

    #[test]
    fn gamma_minus_blows_up_before_coth_bound() {
        let cfg = IntegratorConfig::default();
        let out = integrate(&rot3(), st(1.0, -2.0), Direction::TowardInfinity, &cfg).unwrap();
        let b = detect_blowup(&out.trajectory).expect("blow-up");
        assert_eq!(b.sign, Sign::Minus);
        assert!(b.s_star > 1.0 && b.s_star < 1.5494, "{}", b.s_star);
        assert!((b.s_star_cubic_fit - b.s_star_chart).abs() < 1e-12);
        assert!((b.s_star - b.s_star_chart).abs() < 1e-7);
        assert!(b.final_step < cfg.min_step);
        let last = out.trajectory.samples().last().unwrap();
        assert!(last.w.abs() >= cfg.escape_threshold * (1.0 - 1e-9));
    }

    #[test]
    fn gamma_minus_tends_to_minus_one_at_zero() {
        let cfg = IntegratorConfig::default();
        let out = integrate(&rot3(), st(1.0, -2.0), Direction::TowardZero, &cfg).unwrap();
        match out.trajectory.termination_left {
            Termination::DomainBoundaryZero { limit } => assert!((limit + 1.0).abs() < 1e-3),
            other => panic!("{other:?}"),
        }
        assert!(detect_blowup(&out.trajectory).is_none());
    }

    #[test]
    fn gamma_plus_blowup_from_far_above() {
        let cfg = IntegratorConfig::default();
        let out = integrate(&rot3(), st(2.0, 1000.0), Direction::TowardInfinity, &cfg).unwrap();
        let b = detect_blowup(&out.trajectory).unwrap();
        assert_eq!(b.sign, Sign::Plus);
        assert!(b.s_star > 2.0 && b.s_star.is_finite());
    }

    #[test]
    fn samples_are_monotone_and_dense_output_matches() {
        let cfg = IntegratorConfig::default();
        let out = integrate_both(&rot3(), st(1.0, 0.3), &cfg).unwrap();
        let t = &out.trajectory;
        assert!(t.samples().windows(2).all(|p| p[1].s > p[0].s));
        for p in t.samples() {
            assert!((t.eval(p.s).unwrap() - p.w).abs() < 1e-9 * p.w.abs().max(1.0));
        }
        assert_eq!(t.origin().s, 1.0);
        assert_eq!(t.eval(1.0), Some(0.3));
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = IntegratorConfig::default();
        assert!(integrate(&rot3(), PhaseState { s: 0.0, w: 0.0 }, Direction::TowardZero, &cfg).is_err());
        let bad = IntegratorConfig { min_step: 1.0, ..cfg };
        assert!(matches!(
            integrate(&rot3(), st(1.0, 0.0), Direction::TowardZero, &bad),
            Err(SolitonError::Config(_))
        ));
    }

    #[test]
    fn line_r_event_accuracy() {
        let cfg = IntegratorConfig::default();
        let p = rot3();
        // above the bowl: one crossing of r
        let out = integrate_both(&p, st(1.0, 0.9), &cfg).unwrap();
        let crossings: Vec<_> = out.events.iter().filter(|e| e.kind == EventKind::CrossedLineR).collect();
        assert_eq!(crossings.len(), 1);
        for e in crossings {
            assert!((e.w - critical_line(&p, e.s)).abs() <= 10.0 * cfg.rel_tol * e.w.abs().max(1.0));
        }
    }
}
