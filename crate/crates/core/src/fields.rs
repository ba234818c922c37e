//! Sample fields for the grid verifier: radial bowls, the hybrid translator with
//! its cone tube removed, and analytic test fields.

use crate::classify::compute_bowl;
use crate::error::Result;
use crate::geometry::build_graph;
use crate::hybrid::{build_hybrid, cone_distance, HybridConfig, HybridGrid};
use crate::ode::IntegratorConfig;
use crate::params::{FlowParams, Sign};
use crate::verify::{Axis, GridField};

/// Exclusion tube half-width around axes and cones, in grid cells.
pub const TUBE_CELLS: f64 = 3.0;

/// `u(x) = f_B(|x|)` on `[lo, hi]^n` for rotational parameters, with the axis
/// tube `|x| < 3h` masked. The base signature is Euclidean.
pub fn radial_bowl_field(params: &FlowParams, lo: f64, hi: f64, h: f64, cfg: &IntegratorConfig) -> Result<GridField> {
    let n = params.n();
    let reach = lo.abs().max(hi.abs()) * (n as f64).sqrt();
    let cfg = IntegratorConfig { s_max: cfg.s_max.max(reach + 1.0), ..*cfg };
    let bowl = compute_bowl(params, &cfg)?;
    let graph = build_graph(&bowl, 0.0)?;
    let axis = Axis::span(lo, hi, h)?;
    GridField::from_fn(vec![axis; n], vec![Sign::Plus; n], params.eps_prime(), |p| {
        let s = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if s < TUBE_CELLS * h {
            return None;
        }
        graph.eval(s).map(|(f, _, _)| f)
    })
}

/// The hybrid field on `[lo, hi]^2` with the cone tube of half-width `3h` masked.
pub fn hybrid_residual_field(config: HybridConfig, lo: f64, hi: f64, h: f64) -> Result<GridField> {
    let (_, field) = build_hybrid(config, HybridGrid { lo, hi, h })?;
    Ok(field.masked_where(|p| cone_distance(p[0], p[1]) < TUBE_CELLS * h))
}

/// `u = value` on `[lo, hi]^n`.
pub fn constant_field(n: usize, lo: f64, hi: f64, h: f64, signature: Vec<Sign>, eps_prime: Sign, value: f64) -> Result<GridField> {
    let axis = Axis::span(lo, hi, h)?;
    GridField::from_fn(vec![axis; n], signature, eps_prime, |_| Some(value))
}

/// `u = sum a_i x_i^2` on `[lo, hi]^n`.
pub fn quadratic_field(a: &[f64], lo: f64, hi: f64, h: f64, signature: Vec<Sign>, eps_prime: Sign) -> Result<GridField> {
    let axis = Axis::span(lo, hi, h)?;
    let a = a.to_vec();
    GridField::from_fn(vec![axis; a.len()], signature, eps_prime, move |p| {
        Some(p.iter().zip(&a).map(|(x, ai)| ai * x * x).sum())
    })
}

/// Closed form of `sum_i d_i(eps_i d_i u / W)` for `u = sum a_i x_i^2`, where
/// `W^2 = eps (eps' + sum eps_i (2 a_i x_i)^2)`.
pub fn quadratic_divergence(a: &[f64], signature: &[Sign], eps_prime: Sign, eps: Sign, x: &[f64]) -> f64 {
    let g: Vec<f64> = a.iter().zip(x).map(|(ai, xi)| 2.0 * ai * xi).collect();
    let norm: f64 = g.iter().zip(signature).map(|(gi, e)| e.value() * gi * gi).sum();
    let w2 = eps.value() * (eps_prime.value() + norm);
    let w = w2.sqrt();
    // d_i(e_i g_i / W) = e_i 2a_i / W - e_i g_i * (eps * e_i g_i 2a_i) / W^3
    a.iter()
        .zip(&g)
        .zip(signature)
        .map(|((ai, gi), e)| {
            let e = e.value();
            e * 2.0 * ai / w - eps.value() * gi * gi * 2.0 * ai / (w * w2)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::{convergence_order, divergence_term, residual_fund_eq};

    #[test]
    fn quadratic_divergence_is_second_order() {
        let a = [0.3, -0.2];
        let sig = vec![Sign::Plus, Sign::Minus];
        let mut errs = Vec::new();
        for h in [0.04, 0.02] {
            let f = quadratic_field(&a, -1.0, 1.0, h, sig.clone(), Sign::Plus).unwrap();
            let (div, _, eps) = divergence_term(&f, 1e-6).unwrap();
            let mut m = 0.0f64;
            for k in 0..f.len() {
                if div[k].is_finite() {
                    let exact = quadratic_divergence(&a, &sig, Sign::Plus, eps, &f.coords(k));
                    m = m.max((div[k] - exact).abs());
                }
            }
            errs.push(m);
        }
        let p = (errs[0] / errs[1]).log2();
        assert!(errs[0] < 1e-2 && (1.8..2.2).contains(&p), "{errs:?}");
    }

    #[test]
    fn bowl_field_converges() {
        let params = FlowParams::rotational(2).unwrap();
        let cfg = IntegratorConfig::default().tightened(100.0);
        let fields: Vec<_> = [0.04, 0.02, 0.01]
            .iter()
            .map(|&h| radial_bowl_field(&params, -2.0, 2.0, h, &cfg).unwrap())
            .collect();
        let rep = convergence_order([&fields[0], &fields[1], &fields[2]]).unwrap();
        assert!(rep.order_within(1.7, 2.3), "{rep:?}");
        let r = residual_fund_eq(&fields[2]).unwrap();
        assert_eq!(r.eps, Sign::Minus);
    }

    #[test]
    fn hybrid_field_converges() {
        let fields: Vec<_> = [0.04, 0.02, 0.01]
            .iter()
            .map(|&h| hybrid_residual_field(HybridConfig::default(), -2.0, 2.0, h).unwrap())
            .collect();
        let rep = convergence_order([&fields[0], &fields[1], &fields[2]]).unwrap();
        assert!(rep.order_within(1.7, 2.3), "{rep:?}");
    }
}
