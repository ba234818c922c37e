//! Dormand-Prince 5(4) with PI step control and a 4th order continuous extension.
//!
//! The engine is dimension generic over `[f64; N]` and integrates in either
//! direction. Every accepted step is handed to a monitor together with its
//! dense output, which is how the callers implement event location and
//! chart switches.

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// PI controller (Hairer-Norsett-Wanner, DOPRI5 defaults)
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RkSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for RkSettings {
    fn default() -> Self {
        RkSettings {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: 0.25,
            min_step: 1e-14,
            max_steps: 5_000_000,
        }
    }
}

/// One accepted step with its continuous extension on `[t0, t1]`.
///
/// `t1` may lie short of `t0 + h` when a monitor cut the step at an event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub h: f64,
    rc: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn y0(&self) -> [f64; N] {
        self.rc[0]
    }

    /// State at the nominal end of the step `t0 + h`.
    pub fn y_full(&self) -> [f64; N] {
        let mut y = [0.0; N];
        for i in 0..N {
            y[i] = self.rc[0][i] + self.rc[1][i];
        }
        y
    }

    pub fn y1(&self) -> [f64; N] {
        if self.t1 == self.t0 + self.h {
            self.y_full()
        } else {
            self.eval(self.t1)
        }
    }

    pub fn lo(&self) -> f64 {
        self.t0.min(self.t1)
    }

    pub fn hi(&self) -> f64 {
        self.t0.max(self.t1)
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let mut y = [0.0; N];
        for i in 0..N {
            let r = &self.rc;
            y[i] = r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])));
        }
        y
    }

    /// Time derivative of the continuous extension.
    pub fn eval_derivative(&self, t: f64) -> [f64; N] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let mut dy = [0.0; N];
        for i in 0..N {
            let r = &self.rc;
            let rr = r[3][i] + th1 * r[4][i];
            let drr = -r[4][i];
            let q = r[2][i] + th * rr;
            let dq = rr + th * drr;
            let p = r[1][i] + th1 * q;
            let dp = -q + th1 * dq;
            dy[i] = (p + th * dp) / self.h;
        }
        dy
    }

    pub(crate) fn truncated(&self, t_end: f64) -> Self {
        DenseStep { t1: t_end, ..*self }
    }
}

pub enum StepAction {
    Continue,
    /// Stop the integration; the step is kept up to this time.
    StopAt(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RkStatus {
    ReachedEnd,
    Stopped,
    StepCollapse { t: f64, h: f64 },
    MaxSteps,
}

#[derive(Debug, Clone)]
pub struct RkOutcome<const N: usize> {
    pub steps: Vec<DenseStep<N>>,
    pub status: RkStatus,
}

impl<const N: usize> RkOutcome<N> {
    pub fn last_state(&self) -> Option<(f64, [f64; N])> {
        self.steps.last().map(|s| (s.t1, s.y1()))
    }
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

fn finite<const N: usize>(y: &[f64; N]) -> bool {
    y.iter().all(|v| v.is_finite())
}

/// Integrate `y' = f(t, y)` from `t0` to `t_end` (either direction).
///
/// `monitor` sees every accepted step and may stop the run inside it.
pub fn solve<const N: usize, F, M>(
    f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    settings: &RkSettings,
    mut monitor: M,
) -> RkOutcome<N>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    M: FnMut(&DenseStep<N>) -> StepAction,
{
    let mut steps = Vec::new();
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let span = (t_end - t0).abs();
    if span == 0.0 {
        return RkOutcome {
            steps,
            status: RkStatus::ReachedEnd,
        };
    }

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = initial_step(&f, t, &y, &k1, dir, span, settings);
    let mut fac_old: f64 = 1e-4;
    let mut rejected_last = false;

    for _ in 0..settings.max_steps {
        let remaining = (t_end - t).abs();
        let mut last = false;
        if h.abs() >= remaining {
            h = dir * remaining;
            last = true;
        }
        if h.abs() < settings.min_step && !last {
            return RkOutcome {
                steps,
                status: RkStatus::StepCollapse { t, h: h.abs() },
            };
        }

        let y2 = axpy(&y, h, &[(A21, &k1)]);
        let k2 = f(t + C2 * h, &y2);
        let y3 = axpy(&y, h, &[(A31, &k1), (A32, &k2)]);
        let k3 = f(t + C3 * h, &y3);
        let y4 = axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        let k4 = f(t + C4 * h, &y4);
        let y5 = axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        let k5 = f(t + C5 * h, &y5);
        let y6 = axpy(
            &y,
            h,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        );
        let t_new = if last { t_end } else { t + h };
        let k6 = f(t + h, &y6);
        let y_new = axpy(
            &y,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let k7 = f(t_new, &y_new);

        let mut err = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = settings.abs_tol + settings.rel_tol * y[i].abs().max(y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        err = (err / N as f64).sqrt();

        if !err.is_finite() || !finite(&y_new) || !finite(&k7) {
            h *= 0.25;
            rejected_last = true;
            continue;
        }

        let fac11 = err.powf(0.2 - BETA * 0.75);
        if err <= 1.0 {
            let mut rc = [[0.0; N]; 5];
            for i in 0..N {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                rc[0][i] = y[i];
                rc[1][i] = ydiff;
                rc[2][i] = bspl;
                rc[3][i] = ydiff - h * k7[i] - bspl;
                rc[4][i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let step = DenseStep {
                t0: t,
                t1: t_new,
                h,
                rc,
            };
            match monitor(&step) {
                StepAction::Continue => steps.push(step),
                StepAction::StopAt(ts) => {
                    steps.push(step.truncated(ts));
                    return RkOutcome {
                        steps,
                        status: RkStatus::Stopped,
                    };
                }
            }
            if last {
                return RkOutcome {
                    steps,
                    status: RkStatus::ReachedEnd,
                };
            }
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if rejected_last {
                h_new = dir * h_new.abs().min(h.abs());
            }
            fac_old = err.max(1e-4);
            t = t_new;
            y = y_new;
            k1 = k7;
            h = dir * h_new.abs().min(settings.max_step);
            rejected_last = false;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            rejected_last = true;
        }
    }
    RkOutcome {
        steps,
        status: RkStatus::MaxSteps,
    }
}

fn initial_step<const N: usize, F>(
    f: &F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    dir: f64,
    span: f64,
    s: &RkSettings,
) -> f64
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..N {
        let sk = s.abs_tol + s.rel_tol * y[i].abs();
        dnf += (k1[i] / sk).powi(2);
        dny += (y[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(s.max_step).min(span);
    let y1 = axpy(y, dir * h, &[(1.0, k1)]);
    let k2 = f(t + dir * h, &y1);
    let mut der2 = 0.0;
    for i in 0..N {
        let sk = s.abs_tol + s.rel_tol * y[i].abs();
        der2 += ((k2[i] - k1[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.abs().max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    let h = (100.0 * h).min(h1).min(s.max_step).min(span);
    if h.is_finite() && h > 0.0 {
        dir * h
    } else {
        dir * 1e-6_f64.min(span)
    }
}

/// Locate a sign change of `g(t, y(t))` on a dense step by bisection refined with
/// the Illinois variant of regula falsi.
pub fn find_root<const N: usize, G>(step: &DenseStep<N>, g: G, tol: f64) -> Option<f64>
where
    G: Fn(f64, &[f64; N]) -> f64,
{
    let (mut a, mut b) = (step.t0, step.t1);
    let mut ga = g(a, &step.eval(a));
    let mut gb = g(b, &step.eval(b));
    if ga == 0.0 {
        return Some(a);
    }
    if gb == 0.0 {
        return Some(b);
    }
    if ga.signum() == gb.signum() {
        return None;
    }
    let mut side = 0;
    for _ in 0..200 {
        let c = (a * gb - b * ga) / (gb - ga);
        let c = if c.is_finite() && (c - a) * (c - b) < 0.0 {
            c
        } else {
            0.5 * (a + b)
        };
        let gc = g(c, &step.eval(c));
        if gc == 0.0 {
            return Some(c);
        }
        if gc.signum() == ga.signum() {
            a = c;
            ga = gc;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            gb = gc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
        if (b - a).abs() <= tol * (1.0 + a.abs().max(b.abs())) {
            break;
        }
    }
    Some(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_to_tolerance() {
        let s = RkSettings {
            rel_tol: 1e-12,
            abs_tol: 1e-14,
            ..Default::default()
        };
        let out = solve(|_, y: &[f64; 1]| [-y[0]], 0.0, [1.0], 5.0, &s, |_| StepAction::Continue);
        assert_eq!(out.status, RkStatus::ReachedEnd);
        let (t, y) = out.last_state().unwrap();
        assert_eq!(t, 5.0);
        assert!((y[0] - (-5.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn backward_harmonic_oscillator_and_dense_output() {
        let s = RkSettings {
            rel_tol: 1e-11,
            abs_tol: 1e-13,
            ..Default::default()
        };
        let out = solve(
            |_, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            [0.0, 1.0],
            -6.0,
            &s,
            |_| StepAction::Continue,
        );
        for st in &out.steps {
            let tm = 0.5 * (st.t0 + st.t1);
            let y = st.eval(tm);
            assert!((y[0] - tm.sin()).abs() < 1e-9);
            assert!((y[1] - tm.cos()).abs() < 1e-9);
            let dy = st.eval_derivative(tm);
            assert!((dy[0] - tm.cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn dense_output_matches_endpoints() {
        let s = RkSettings::default();
        let out = solve(|t, y: &[f64; 1]| [t * y[0]], 0.0, [1.0], 1.0, &s, |_| StepAction::Continue);
        for st in &out.steps {
            assert_eq!(st.eval(st.t0)[0], st.y0()[0]);
            assert!((st.eval(st.t0 + st.h)[0] - st.y_full()[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn monitor_stops_at_root() {
        let s = RkSettings::default();
        let out = solve(
            |_, _y: &[f64; 1]| [1.0],
            0.0,
            [0.0],
            10.0,
            &s,
            |st| match find_root(st, |_, y| y[0] - std::f64::consts::PI, 1e-14) {
                Some(r) => StepAction::StopAt(r),
                None => StepAction::Continue,
            },
        );
        assert_eq!(out.status, RkStatus::Stopped);
        let (t, y) = out.last_state().unwrap();
        assert!((t - std::f64::consts::PI).abs() < 1e-12);
        assert!((y[0] - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn blowup_collapses_steps() {
        let s = RkSettings {
            min_step: 1e-12,
            ..Default::default()
        };
        let out = solve(|_, y: &[f64; 1]| [y[0] * y[0]], 0.0, [1.0], 2.0, &s, |_| StepAction::Continue);
        match out.status {
            RkStatus::StepCollapse { t, .. } => assert!((t - 1.0).abs() < 1e-4),
            other => panic!("unexpected {other:?}"),
        }
    }
}
