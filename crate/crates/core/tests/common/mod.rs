//! Exact Taylor matching of the slope equation `s w' = (et + ep w^2)(s - et c w)`
//! for an odd series `w = sum a_j s^j`, in rational arithmetic.

#![allow(dead_code)]

use num_rational::BigRational;
use num_traits::{One, Zero};

pub type Q = BigRational;

pub fn int(v: i64) -> Q {
    Q::from_integer(v.into())
}

/// Coefficient of `s^j` in the product of the given series.
fn product_coeff(series: &[&[Q]], j: usize) -> Q {
    fn rec(series: &[&[Q]], j: usize) -> Q {
        match series {
            [] => {
                if j == 0 {
                    Q::one()
                } else {
                    Q::zero()
                }
            }
            [first, rest @ ..] => {
                let mut acc = Q::zero();
                for (i, c) in first.iter().enumerate().take(j + 1) {
                    if !c.is_zero() {
                        acc += c * rec(rest, j - i);
                    }
                }
                acc
            }
        }
    }
    rec(series, j)
}

/// Coefficients `a_0..=a_order` (even ones zero) of the solution with `w(0) = 0`.
///
/// Matching `s^j`: `(j + c) a_j = et [j = 1] + ep (w^2)_{j-1} - et ep c (w^3)_j`,
/// where the right side only involves `a_i` with `i <= j - 2`.
pub fn odd_slope_series(et: i64, ep: i64, c: i64, order: usize) -> Vec<Q> {
    let mut a = vec![Q::zero(); order + 1];
    for j in (1..=order).step_by(2) {
        let w2 = product_coeff(&[&a, &a], j - 1);
        let w3 = product_coeff(&[&a, &a, &a], j);
        let mut rhs = int(ep) * w2 - int(et * ep * c) * w3;
        if j == 1 {
            rhs += int(et);
        }
        a[j] = rhs / int(j as i64 + c);
    }
    a
}

/// `f^{(2k)}(0)` for `f' = w`, `f(0) = 0`: `(2k - 1)! a_{2k-1}`.
pub fn even_derivative(a: &[Q], k: usize) -> Q {
    let fact: i64 = (1..2 * k as i64).product();
    int(fact) * a[2 * k - 1].clone()
}

pub fn to_f64(q: &Q) -> f64 {
    use num_traits::ToPrimitive;
    q.to_f64().expect("finite rational")
}

pub fn eval_odd(a: &[Q], s: f64) -> f64 {
    a.iter().rev().fold(0.0, |acc, c| acc * s + to_f64(c))
}
