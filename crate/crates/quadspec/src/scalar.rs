//! The scalar self-consistent equation `−1/m = z + γ(m)` and its Nevanlinna
//! solution.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::PolynomialSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GammaH {
    #[serde(with = "crate::cx::one")]
    pub gamma: C64,
    #[serde(with = "crate::cx::one")]
    pub gamma_prime: C64,
    #[serde(with = "crate::cx::one")]
    pub h: C64,
}

/// `γ`, `γ′` and `h = 1/m² − γ′` at `m`.
pub fn evaluate_gamma_h(spec: &PolynomialSpec, m: C64) -> Result<GammaH> {
    let poles = poles(spec);
    let near = |p: f64| (m - p).norm() < 1e-13;
    if poles.gamma_poles.iter().any(|&p| near(p)) || m.norm() < 1e-13 {
        return Err(Error::PoleProximity { m });
    }
    let (gamma, gamma_prime) = gamma_pair(spec, m);
    Ok(GammaH { gamma, gamma_prime, h: 1.0 / (m * m) - gamma_prime })
}

/// `(γ(m), γ′(m))` without any pole guard.
pub(crate) fn gamma_pair(spec: &PolynomialSpec, m: C64) -> (C64, C64) {
    let mut g = C64::new(-spec.c(), 0.0);
    let mut gp = C64::new(0.0, 0.0);
    for &mu in spec.mu() {
        if mu != 0.0 {
            let d = 1.0 + m * mu;
            g -= mu / d;
            gp += mu * mu / (d * d);
        }
    }
    for (&mh, &bp) in spec.mu_hat().iter().zip(spec.b_proj()) {
        if bp != 0.0 {
            let d = 1.0 + 2.0 * m * mh;
            g += m * bp * (1.0 + m * mh) / (d * d);
            gp += bp / (d * d * d);
        }
    }
    (g, gp)
}

/// Real-axis values used by the edge scan: `h(x)`, `h′(x)`, and the sum of
/// absolute values of the terms in `h(x)` (a rounding-error scale).
pub(crate) fn h_real(spec: &PolynomialSpec, x: f64) -> (f64, f64, f64) {
    let mut h = 1.0 / (x * x);
    let mut hp = -2.0 / (x * x * x);
    let mut scale = h;
    for &mu in spec.mu() {
        if mu != 0.0 {
            let d = 1.0 + x * mu;
            let t = mu * mu / (d * d);
            h -= t;
            scale += t;
            hp += 2.0 * mu * mu * mu / (d * d * d);
        }
    }
    for (&mh, &bp) in spec.mu_hat().iter().zip(spec.b_proj()) {
        if bp != 0.0 {
            let d = 1.0 + 2.0 * x * mh;
            let t = bp / (d * d * d);
            h -= t;
            scale += t.abs();
            hp += 6.0 * bp * mh / (d * d * d * d);
        }
    }
    (h, hp, scale)
}

pub(crate) fn gamma_real(spec: &PolynomialSpec, x: f64) -> f64 {
    gamma_pair(spec, C64::new(x, 0.0)).0.re
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoleSet {
    pub gamma_poles: Vec<f64>,
    pub h_poles: Vec<f64>,
    pub m_star_plus: f64,
    pub m_star_minus: f64,
}

pub fn poles(spec: &PolynomialSpec) -> PoleSet {
    let mut gp: Vec<f64> = spec
        .mu()
        .iter()
        .filter(|&&mu| mu != 0.0)
        .map(|&mu| -1.0 / mu)
        .collect();
    for (&mh, &bp) in spec.mu_hat().iter().zip(spec.b_proj()) {
        if mh != 0.0 && bp != 0.0 {
            gp.push(-1.0 / (2.0 * mh));
        }
    }
    gp.sort_by(f64::total_cmp);
    gp.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * a.abs().max(b.abs()));
    let mut hp = gp.clone();
    hp.push(0.0);
    hp.sort_by(f64::total_cmp);
    let m_star_plus = gp.iter().cloned().filter(|&p| p < 0.0).fold(f64::NEG_INFINITY, f64::max);
    let m_star_minus = gp.iter().cloned().filter(|&p| p > 0.0).fold(f64::INFINITY, f64::min);
    PoleSet { gamma_poles: gp, h_poles: hp, m_star_plus, m_star_minus }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StieltjesPoint {
    #[serde(with = "crate::cx::one")]
    pub z: C64,
    #[serde(with = "crate::cx::one")]
    pub m: C64,
    pub residual: f64,
    pub iterations: usize,
}

const RATIO: f64 = 0.7;
const MAX_NEWTON: usize = 200;

fn tolerance(z: C64) -> f64 {
    1e-11 * (1.0 + z.norm())
}

/// Imaginary part at which continuation starts.
pub(crate) fn start_height(spec: &PolynomialSpec) -> f64 {
    let s = 1.0 + spec.norm_a() + spec.norm_b() + spec.c().abs();
    10.0 * s * s
}

pub fn solve_m(spec: &PolynomialSpec, z: C64) -> Result<StieltjesPoint> {
    if z.im.is_nan() || z.im <= 0.0 {
        return Err(Error::InvalidInput(format!("Im z must be positive, got {z}")));
    }
    let mut eta = start_height(spec).max(z.im);
    let mut zk = C64::new(z.re, eta);
    let mut m = -1.0 / zk;
    let mut total = 0;
    loop {
        let (next, its) = newton(zk, m, |m| gamma_pair(spec, m))?;
        m = next;
        total += its;
        if eta <= z.im {
            break;
        }
        eta = (eta * RATIO).max(z.im);
        zk = C64::new(z.re, eta);
    }
    let (g, _) = gamma_pair(spec, m);
    Ok(StieltjesPoint { z, m, residual: (1.0 / m + z + g).norm(), iterations: total })
}

/// Damped Newton for `f(m) = 1/m + z + γ(m)` staying in the upper half-plane.
pub(crate) fn newton<F>(z: C64, mut m: C64, gamma: F) -> Result<(C64, usize)>
where
    F: Fn(C64) -> (C64, C64),
{
    let tol = tolerance(z);
    let f_of = |m: C64| {
        let (g, gp) = gamma(m);
        (1.0 / m + z + g, gp - 1.0 / (m * m))
    };
    let (mut f, mut fp) = f_of(m);
    for it in 0..MAX_NEWTON {
        if f.norm() <= tol {
            return Ok((m, it));
        }
        let step = f / fp;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = m - step * t;
            if cand.im > 0.0 && cand.is_finite() {
                let (fc, fpc) = f_of(cand);
                if fc.norm() < f.norm() || t < 1e-3 {
                    m = cand;
                    f = fc;
                    fp = fpc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if f.norm() <= tol {
        return Ok((m, MAX_NEWTON));
    }
    Err(Error::NoConvergence { z, residual: f.norm() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_spec, RawSpec};
    use approx::assert_abs_diff_eq;

    fn wsq() -> PolynomialSpec {
        validate_spec(&RawSpec::real(&[&[1.0]], &[0.0], 0.0)).unwrap()
    }

    fn anti() -> PolynomialSpec {
        validate_spec(&RawSpec::real(&[&[0.0, 1.0], &[1.0, 0.0]], &[0.0, 0.0], 0.0)).unwrap()
    }

    #[test]
    fn gamma_at_examples() {
        let g = evaluate_gamma_h(&wsq(), C64::new(-0.5, 0.0)).unwrap();
        assert_abs_diff_eq!(g.gamma.re, -2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.h.norm(), 0.0, epsilon = 1e-13);
        let g = evaluate_gamma_h(&anti(), C64::new(0.0, 1.0)).unwrap();
        assert_abs_diff_eq!((g.gamma - C64::new(0.0, 1.0)).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn pole_guard() {
        assert!(matches!(
            evaluate_gamma_h(&wsq(), C64::new(-1.0, 0.0)),
            Err(Error::PoleProximity { .. })
        ));
        assert!(evaluate_gamma_h(&wsq(), C64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn pole_sets() {
        let p = poles(&wsq());
        assert_eq!(p.gamma_poles, vec![-1.0]);
        assert_eq!(p.m_star_plus, -1.0);
        assert_eq!(p.m_star_minus, f64::INFINITY);
        let p = poles(&anti());
        assert_eq!(p.gamma_poles.len(), 2);
        assert_abs_diff_eq!(p.m_star_plus, -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.m_star_minus, 1.0, epsilon = 1e-14);
        let neg = validate_spec(&RawSpec::real(&[&[-1.0]], &[0.0], 0.0)).unwrap();
        let p = poles(&neg);
        assert_eq!(p.gamma_poles, vec![1.0]);
        assert_eq!(p.m_star_plus, f64::NEG_INFINITY);
        assert_eq!(p.m_star_minus, 1.0);
    }

    #[test]
    fn wigner_square_values() {
        let p = solve_m(&wsq(), C64::new(5.0, 1e-9)).unwrap();
        assert_abs_diff_eq!(p.m.re, (-5.0 + 5f64.sqrt()) / 10.0, epsilon = 1e-8);
        let p = solve_m(&wsq(), C64::new(2.0, 1e-9)).unwrap();
        assert_abs_diff_eq!(p.m.re, -0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(p.m.im, 0.5, epsilon = 1e-8);
    }

    #[test]
    fn large_z_asymptotics() {
        for s in [wsq(), anti()] {
            let z = C64::new(0.0, 1e6);
            let p = solve_m(&s, z).unwrap();
            assert!((z * p.m + 1.0).norm() <= 1e-4);
        }
    }

    #[test]
    fn rejects_real_z() {
        assert!(solve_m(&wsq(), C64::new(1.0, 0.0)).is_err());
    }
}
