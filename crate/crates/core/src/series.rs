//! Odd power series of the analytic slope through the singular endpoint `s = 0`.

use crate::error::{Result, SolitonError};
use crate::params::{FlowParams, PhaseState};

/// `w(s) = sum_k coeffs[k] s^k`; only odd powers are nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct OddSeries {
    coeffs: Vec<f64>,
}

impl OddSeries {
    /// Coefficient of `s^k` (zero past the computed order).
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Highest power carried.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    pub fn eval_derivative(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * s + k as f64 * c)
    }

    /// Primitive `F(s) = sum c_k s^{k+1}/(k+1)` with `F(0) = 0`.
    pub fn eval_primitive(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (k, c)| acc * s + c / (k as f64 + 1.0))
            * s
    }
}

/// Taylor coefficients of the slope `w_B` with `w_B(0) = 0`, up to power `order`.
///
/// Substituting `w = sum a_j s^j` into `s w' = (eps~ + eps' w^2)(s - eps~ c w)` and
/// matching `s^j` gives
/// `(j + c) a_j = eps~ [j = 1] + eps' [w^2]_{j-1} - eps' eps~ c [w^3]_j`,
/// where the right side only involves lower coefficients.
pub fn bowl_series_coeffs(params: &FlowParams, order: usize) -> OddSeries {
    let order = order.max(1);
    let et = params.eps_tilde().value();
    let ep = params.eps_prime().value();
    let c = params.fiber_coeff();
    let mut a = vec![0.0; order + 1];
    for j in (1..=order).step_by(2) {
        let mut rhs = if j == 1 { et } else { 0.0 };
        rhs += ep * power_coeff(&a, 2, j - 1);
        rhs -= ep * et * c * power_coeff(&a, 3, j);
        a[j] = rhs / (j as f64 + c);
    }
    OddSeries { coeffs: a }
}

/// Coefficient of `s^k` in `(sum a_i s^i)^p` using only the entries of `a` already set.
fn power_coeff(a: &[f64], p: usize, k: usize) -> f64 {
    match p {
        1 => a.get(k).copied().unwrap_or(0.0),
        _ => (1..k)
            .map(|i| a.get(i).copied().unwrap_or(0.0) * power_coeff(a, p - 1, k - i))
            .sum(),
    }
}

/// Initial state on the bowl slope at a small `s_start`, from the odd series up to `order`.
///
/// Fails when the first omitted term `a_{order+2} s^{order+2}` exceeds `tol`.
pub fn bowl_start(params: &FlowParams, s_start: f64, order: usize, tol: f64) -> Result<PhaseState> {
    if !(s_start >= 0.0) {
        return Err(SolitonError::Domain(format!(
            "s_start must be non-negative, got {s_start}"
        )));
    }
    let top = if order % 2 == 0 { order + 1 } else { order + 2 };
    let series = bowl_series_coeffs(params, top);
    let truncation = (series.coeff(top) * s_start.powi(top as i32)).abs();
    if truncation > tol {
        return Err(SolitonError::Precision(format!(
            "series of order {order} at s = {s_start} has truncation {truncation:e} > {tol:e}"
        )));
    }
    let w = series
        .coeffs()
        .iter()
        .take(order + 1)
        .rev()
        .fold(0.0, |acc, c| acc * s_start + c);
    // s = 0 is the boundary value itself; PhaseState keeps s > 0 for everything integrated
    Ok(PhaseState { s: s_start, w })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Sign;

    #[test]
    fn rotational_coefficients() {
        let p = FlowParams::rotational(3).unwrap();
        let a = bowl_series_coeffs(&p, 7);
        assert!((a.coeff(1) - 1.0 / 3.0).abs() < 1e-16);
        assert!((a.coeff(3) + 1.0 / 135.0).abs() < 1e-17);
        assert_eq!(a.coeff(2), 0.0);
        assert_eq!(a.coeff(4), 0.0);
        assert_eq!(a.coeff(6), 0.0);
    }

    #[test]
    fn start_values() {
        let p = FlowParams::rotational(3).unwrap();
        let st = bowl_start(&p, 1e-3, 3, 1e-12).unwrap();
        let expected = 1e-3 / 3.0 - 1e-9 / 135.0;
        assert!((st.w - expected).abs() < 1e-18);
        assert!((st.w - 3.3333e-4).abs() < 1e-8);

        assert_eq!(bowl_start(&p, 0.0, 3, 1e-12).unwrap().w, 0.0);

        let p2 = FlowParams::rotational(2).unwrap();
        let st = bowl_start(&p2, 1e-3, 1, 1e-10).unwrap();
        assert!((st.w - 5e-4).abs() < 1e-15);
        assert!(matches!(
            bowl_start(&p2, 1e-3, 1, 1e-12),
            Err(SolitonError::Precision(_))
        ));
        assert!(matches!(
            bowl_start(&p2, 0.5, 3, 1e-14),
            Err(SolitonError::Precision(_))
        ));
    }

    #[test]
    fn hybrid_leading_terms() {
        let f1 = bowl_series_coeffs(&FlowParams::boost(2, Sign::Plus, true).unwrap(), 3);
        let f2 = bowl_series_coeffs(&FlowParams::boost(2, Sign::Minus, true).unwrap(), 3);
        assert_eq!(f1.coeff(1), 0.5);
        assert_eq!(f2.coeff(1), -0.5);
    }

    #[test]
    fn evaluators_agree_with_definition() {
        let p = FlowParams::rotational(4).unwrap();
        let a = bowl_series_coeffs(&p, 9);
        let s: f64 = 0.3;
        let direct: f64 = (0..=9).map(|k| a.coeff(k) * s.powi(k as i32)).sum();
        assert!((a.eval(s) - direct).abs() < 1e-16);
        let prim: f64 = (0..=9)
            .map(|k| a.coeff(k) * s.powi(k as i32 + 1) / (k as f64 + 1.0))
            .sum();
        assert!((a.eval_primitive(s) - prim).abs() < 1e-16);
        let d: f64 = (1..=9).map(|k| k as f64 * a.coeff(k) * s.powi(k as i32 - 1)).sum();
        assert!((a.eval_derivative(s) - d).abs() < 1e-15);
    }
}
