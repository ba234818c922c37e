//! Grid certification of the soliton equation `div(grad u / W) = 1/W` with
//! `W = sqrt(eps (eps' + |grad u|^2_g))`, convergence orders, and one-sided
//! derivative jumps across the lightcone.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SolitonError};
use crate::params::Sign;

/// Uniform axis `start + i h`, `i < len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub h: f64,
    pub len: usize,
}

impl Axis {
    /// Nodes from `lo` to `hi` inclusive with spacing `h` (rounded to the nearest count).
    pub fn span(lo: f64, hi: f64, h: f64) -> Result<Axis> {
        if !(h > 0.0 && hi > lo) {
            return Err(SolitonError::Config(format!("bad axis [{lo}, {hi}] with h = {h}")));
        }
        let cells = ((hi - lo) / h).round();
        if (cells * h - (hi - lo)).abs() > 1e-9 * (hi - lo) {
            return Err(SolitonError::Config(format!(
                "h = {h} does not divide [{lo}, {hi}]"
            )));
        }
        Ok(Axis { start: lo, h, len: cells as usize + 1 })
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.start + i as f64 * self.h
    }
}

/// Samples of a height function `u` on a uniform flat grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridField {
    pub axes: Vec<Axis>,
    /// `eps_i` of the base metric
    pub signature: Vec<Sign>,
    /// `eps'` of the vertical factor
    pub eps_prime: Sign,
    /// row-major, last axis fastest
    pub values: Vec<f64>,
    /// `true` marks an excluded node
    pub mask: Vec<bool>,
}

impl GridField {
    pub fn new(
        axes: Vec<Axis>,
        signature: Vec<Sign>,
        eps_prime: Sign,
        values: Vec<f64>,
        mask: Option<Vec<bool>>,
    ) -> Result<GridField> {
        if axes.is_empty() || axes.len() != signature.len() {
            return Err(SolitonError::Config(format!(
                "{} axes but {} signature entries",
                axes.len(),
                signature.len()
            )));
        }
        if axes.iter().any(|a| !(a.h > 0.0) || a.len == 0) {
            return Err(SolitonError::Config("axes need h > 0 and at least one node".into()));
        }
        let n: usize = axes.iter().map(|a| a.len).product();
        if values.len() != n {
            return Err(SolitonError::Config(format!("{} values for {n} nodes", values.len())));
        }
        let mask = mask.unwrap_or_else(|| vec![false; n]);
        if mask.len() != n {
            return Err(SolitonError::Config(format!("mask has {} entries for {n} nodes", mask.len())));
        }
        Ok(GridField { axes, signature, eps_prime, values, mask })
    }

    /// Sample `f` at every node; `None` masks the node.
    pub fn from_fn<F>(axes: Vec<Axis>, signature: Vec<Sign>, eps_prime: Sign, f: F) -> Result<GridField>
    where
        F: Fn(&[f64]) -> Option<f64> + Sync,
    {
        let n: usize = axes.iter().map(|a| a.len).product();
        let probe = GridField {
            axes: axes.clone(),
            signature: signature.clone(),
            eps_prime,
            values: Vec::new(),
            mask: Vec::new(),
        };
        let vals: Vec<Option<f64>> = (0..n)
            .into_par_iter()
            .map(|k| f(&probe.coords(k)))
            .collect();
        let mask = vals.iter().map(|v| v.map_or(true, |x| !x.is_finite())).collect();
        let values = vals.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        GridField::new(axes, signature, eps_prime, values, Some(mask))
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for i in (0..self.dim().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.axes[i + 1].len;
        }
        s
    }

    pub fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for i in (0..self.dim()).rev() {
            idx[i] = k % self.axes[i].len;
            k /= self.axes[i].len;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn coords(&self, k: usize) -> Vec<f64> {
        self.multi_index(k)
            .iter()
            .zip(&self.axes)
            .map(|(i, a)| a.coord(*i))
            .collect()
    }

    /// Value at a signed multi-index if it exists, is unmasked and finite.
    fn get(&self, idx: &[i64]) -> Option<f64> {
        let mut k = 0usize;
        let strides = self.strides();
        for (d, &i) in idx.iter().enumerate() {
            if i < 0 || i as usize >= self.axes[d].len {
                return None;
            }
            k += i as usize * strides[d];
        }
        (!self.mask[k] && self.values[k].is_finite()).then_some(self.values[k])
    }

    /// Copy with additional nodes excluded where `pred(coords)` holds.
    pub fn masked_where<P: Fn(&[f64]) -> bool>(&self, pred: P) -> GridField {
        let mut out = self.clone();
        for k in 0..out.len() {
            if pred(&self.coords(k)) {
                out.mask[k] = true;
            }
        }
        out
    }

    fn spacing_is_uniform(&self) -> bool {
        self.axes.iter().all(|a| a.h > 0.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    pub max: f64,
    pub mean: f64,
    pub evaluated: usize,
    /// sign `eps` of `W^2` inferred from the median
    pub eps: Sign,
    /// `R` per node, NaN where it was not evaluated
    #[serde(skip)]
    pub field: Vec<f64>,
}

struct Flux {
    /// `eps_i d_i u / W` per axis, NaN where unavailable
    v: Vec<Vec<f64>>,
    inv_w: Vec<f64>,
    eps: Sign,
}

fn flux(field: &GridField, w2_floor: f64) -> Result<Flux> {
    if !field.spacing_is_uniform() {
        return Err(SolitonError::Config("non-uniform grid".into()));
    }
    let n = field.len();
    let d = field.dim();
    let eps_p = field.eps_prime.value();
    let grads: Vec<Option<(Vec<f64>, f64)>> = (0..n)
        .into_par_iter()
        .map(|k| {
            if field.mask[k] || !field.values[k].is_finite() {
                return None;
            }
            let idx: Vec<i64> = field.multi_index(k).into_iter().map(|i| i as i64).collect();
            let mut g = vec![0.0; d];
            let mut s = eps_p;
            for i in 0..d {
                let mut a = idx.clone();
                let mut b = idx.clone();
                a[i] += 1;
                b[i] -= 1;
                g[i] = (field.get(&a)? - field.get(&b)?) / (2.0 * field.axes[i].h);
                s += field.signature[i].value() * g[i] * g[i];
            }
            Some((g, s))
        })
        .collect();
    let mut signs: Vec<f64> = grads.iter().flatten().map(|(_, s)| *s).collect();
    if signs.is_empty() {
        return Err(SolitonError::Config("no interior nodes with a full stencil".into()));
    }
    let mid = signs.len() / 2;
    signs.select_nth_unstable_by(mid, f64::total_cmp);
    let eps = Sign::of(signs[mid]);
    for (k, g) in grads.iter().enumerate() {
        if let Some((_, s)) = g {
            let w2 = eps.value() * s;
            if !(w2 >= w2_floor) {
                return Err(SolitonError::Degenerate(format!(
                    "W^2 = {w2:e} at {:?} (eps = {:+})",
                    field.coords(k),
                    eps.value()
                )));
            }
        }
    }
    let mut v = vec![vec![f64::NAN; n]; d];
    let mut inv_w = vec![f64::NAN; n];
    for (k, g) in grads.into_iter().enumerate() {
        if let Some((g, s)) = g {
            let w = (eps.value() * s).sqrt();
            inv_w[k] = 1.0 / w;
            for i in 0..d {
                v[i][k] = field.signature[i].value() * g[i] / w;
            }
        }
    }
    Ok(Flux { v, inv_w, eps })
}

/// Discrete `div(grad u / W)` per node (NaN where the stencil is incomplete),
/// together with `1/W` and the inferred `eps`.
pub fn divergence_term(field: &GridField, w2_floor: f64) -> Result<(Vec<f64>, Vec<f64>, Sign)> {
    let fl = flux(field, w2_floor)?;
    let d = field.dim();
    let strides = field.strides();
    let div: Vec<f64> = (0..field.len())
        .into_par_iter()
        .map(|k| {
            if fl.inv_w[k].is_nan() {
                return f64::NAN;
            }
            let idx = field.multi_index(k);
            let mut acc = 0.0;
            for i in 0..d {
                if idx[i] == 0 || idx[i] + 1 >= field.axes[i].len {
                    return f64::NAN;
                }
                let a = fl.v[i][k + strides[i]];
                let b = fl.v[i][k - strides[i]];
                acc += (a - b) / (2.0 * field.axes[i].h);
            }
            acc
        })
        .collect();
    Ok((div, fl.inv_w, fl.eps))
}

/// `R = div(grad u / W) - 1/W` on unmasked nodes whose width-2 stencil is unmasked.
pub fn residual_fund_eq(field: &GridField) -> Result<ResidualReport> {
    residual_fund_eq_with(field, 1e-6)
}

pub fn residual_fund_eq_with(field: &GridField, w2_floor: f64) -> Result<ResidualReport> {
    let (div, inv_w, eps) = divergence_term(field, w2_floor)?;
    let r: Vec<f64> = div.iter().zip(&inv_w).map(|(d, iw)| d - iw).collect();
    let vals: Vec<f64> = r.iter().copied().filter(|x| x.is_finite()).collect();
    if vals.is_empty() {
        return Err(SolitonError::Config("no node has a complete residual stencil".into()));
    }
    let max = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mean = vals.iter().map(|x| x.abs()).sum::<f64>() / vals.len() as f64;
    Ok(ResidualReport { max, mean, evaluated: vals.len(), eps, field: r })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub h: Vec<f64>,
    pub max_residuals: Vec<f64>,
    /// `log2(R(h) / R(h/2))`, undefined when the residual grows
    pub order: Option<f64>,
    /// same from the `h/2, h/4` pair
    pub order_cross: Option<f64>,
    pub note: Option<String>,
}

impl ConvergenceReport {
    pub fn order_within(&self, lo: f64, hi: f64) -> bool {
        matches!((self.order, self.order_cross), (Some(p), Some(q)) if p >= lo && p <= hi && q >= lo && q <= hi)
    }
}

/// Orders from maximal residuals on grids with spacings `h, h/2, h/4`.
pub fn convergence_order_from(h: [f64; 3], max_residuals: [f64; 3]) -> ConvergenceReport {
    let pair = |a: f64, b: f64| -> Option<f64> {
        if !(a.is_finite() && b.is_finite()) || b > a || a <= 0.0 {
            None
        } else if b == 0.0 {
            Some(f64::INFINITY)
        } else {
            Some((a / b).log2())
        }
    };
    let order = pair(max_residuals[0], max_residuals[1]);
    let order_cross = pair(max_residuals[1], max_residuals[2]);
    let note = match (order, order_cross) {
        (None, _) | (_, None) => Some("residual does not decrease under refinement: order undefined".into()),
        (Some(p), Some(q)) if (p - q).abs() > 0.5 => Some(format!("orders disagree: {p:.3} vs {q:.3}")),
        _ => None,
    };
    ConvergenceReport {
        h: h.to_vec(),
        max_residuals: max_residuals.to_vec(),
        order,
        order_cross,
        note,
    }
}

/// Convergence order of the residual over three nested grids.
pub fn convergence_order(fields: [&GridField; 3]) -> Result<ConvergenceReport> {
    let mut r = [0.0; 3];
    let mut h = [0.0; 3];
    for (i, f) in fields.iter().enumerate() {
        r[i] = residual_fund_eq(f)?.max;
        h[i] = f.axes[0].h;
    }
    for i in 0..2 {
        if ((h[i] / h[i + 1]) - 2.0).abs() > 1e-9 {
            return Err(SolitonError::Config(format!(
                "grids are not nested by halving: h = {:?}",
                h
            )));
        }
    }
    Ok(convergence_order_from(h, r))
}

/// Finite-difference weights for the `m`-th derivative at `x0` on nodes `xs`.
pub fn fornberg_weights(x0: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanLine {
    /// `x = y`, transverse direction `(1, -1)`
    Diagonal,
    /// `x = -y`, transverse direction `(1, 1)`
    AntiDiagonal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderJump {
    pub order: usize,
    /// `max |D+ - D-|` over scanned nodes
    pub max_jump: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub h: f64,
    pub jumps: Vec<OrderJump>,
    pub warnings: Vec<String>,
}

impl SmoothnessReport {
    pub fn jump(&self, order: usize) -> Option<f64> {
        self.jumps.iter().find(|j| j.order == order).map(|j| j.max_jump)
    }
}

/// One-sided derivatives of orders `0..=max_order` transverse to the cone lines,
/// from each side, compared at every on-line node.
///
/// Each side uses the `k + 2` nodes `0, 1, ..., k + 1` steps away (second order
/// one-sided stencils); the transverse spacing is `h sqrt 2`.
pub fn smoothness_scan(field: &GridField, lines: &[ScanLine], max_order: usize) -> Result<SmoothnessReport> {
    if field.dim() != 2 {
        return Err(SolitonError::Config("smoothness scan needs a 2-D field".into()));
    }
    let (ax, ay) = (field.axes[0], field.axes[1]);
    if (ax.h - ay.h).abs() > 1e-12 * ax.h {
        return Err(SolitonError::Config("scan needs equal spacing on both axes".into()));
    }
    let h = ax.h;
    let ix0 = -ax.start / h;
    let iy0 = -ay.start / h;
    if (ix0 - ix0.round()).abs() > 1e-9 || (iy0 - iy0.round()).abs() > 1e-9 {
        return Err(SolitonError::Config("the origin must be a grid node".into()));
    }
    let (ix0, iy0) = (ix0.round() as i64, iy0.round() as i64);
    let mut warnings = Vec::new();
    let reach = ax.len.min(ay.len) as i64;
    let mut max_order = max_order;
    let cap = (reach / 2 - 2).max(0) as usize;
    if max_order > cap {
        warnings.push(format!(
            "order {max_order} needs {} transverse nodes per side; capped at {cap}",
            max_order + 2
        ));
        max_order = cap;
    }
    let dt = h * std::f64::consts::SQRT_2;
    let mut jumps = Vec::new();
    for k in 0..=max_order {
        let offsets: Vec<f64> = (0..k as i64 + 2).map(|j| j as f64 * dt).collect();
        let fwd = fornberg_weights(0.0, &offsets, k);
        let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
        let mut max_jump = 0.0f64;
        let mut count = 0;
        for line in lines {
            let (tx, ty, ly): (i64, i64, i64) = match line {
                ScanLine::Diagonal => (1, -1, 1),
                ScanLine::AntiDiagonal => (1, 1, -1),
            };
            for t in -reach..=reach {
                let (cx, cy) = (ix0 + t, iy0 + ly * t);
                let side = |dir: i64| -> Option<f64> {
                    let mut acc = 0.0;
                    for (j, wj) in fwd.iter().enumerate() {
                        let j = j as i64 * dir;
                        acc += wj * field.get(&[cx + j * tx, cy + j * ty])?;
                    }
                    Some(acc)
                };
                if let (Some(p), Some(m)) = (side(1), side(-1)) {
                    max_jump = max_jump.max((p - sgn * m).abs());
                    count += 1;
                }
            }
        }
        if count == 0 {
            warnings.push(format!("order {k}: no node has complete stencils on both sides"));
        }
        jumps.push(OrderJump { order: k, max_jump, nodes: count });
    }
    Ok(SmoothnessReport { h, jumps, warnings })
}

/// Decay of one order's jump over successively halved grids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JumpDecay {
    pub order: usize,
    pub jumps: Vec<f64>,
    /// `log2` ratios of consecutive jumps; `None` where both sit below the floor
    pub orders: Vec<Option<f64>>,
}

impl JumpDecay {
    /// Every consecutive pair is either at the rounding floor or decays at least at `p_min`.
    pub fn decays(&self, p_min: f64) -> bool {
        self.orders.iter().all(|p| p.map_or(true, |p| p >= p_min))
    }
}

/// Observed decay orders of the order-`k` jump; pairs where both jumps are at or
/// below `floor` (rounding level) carry no order.
pub fn jump_decay(reports: &[SmoothnessReport], order: usize, floor: f64) -> Option<JumpDecay> {
    let jumps: Vec<f64> = reports.iter().map(|r| r.jump(order)).collect::<Option<_>>()?;
    let orders = jumps
        .windows(2)
        .map(|p| {
            if p[0] <= floor && p[1] <= floor {
                None
            } else {
                Some((p[0] / p[1]).log2())
            }
        })
        .collect();
    Some(JumpDecay { order, jumps, orders })
}
