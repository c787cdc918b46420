//! Spectral edges from the roots of `h` next to zero, and the singularity
//! type of hard edges.
//!
//! Only the negative half-line is ever scanned: the positive side of `q` is
//! the negative side of `−q`, since `h_q(−m) = h_{−q}(m)`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PolynomialSpec, Reducible, SpectralClassification};
use crate::roots::brent;
use crate::scalar::{self, PoleSet};

/// Relative tolerance for the measure-zero threshold cases.
const THRESHOLD_TOL: f64 = 1e-9;
const SCAN_CAP: f64 = 1e8;
const SCAN_NEAR: f64 = 1e-8;
const SCAN_POINTS: usize = 400;

/// Whether `h` has a root on `(m*_+, 0)`, and if not, the decay power `p`
/// in `h(m) ~ (−m)^{−p}` as `m → −∞`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum RootCondition {
    RootExists,
    NoRoot { p: u8 },
}

impl RootCondition {
    /// Density exponent at the corresponding edge.
    pub fn exponent(self) -> f64 {
        match self {
            RootCondition::RootExists => 0.5,
            RootCondition::NoRoot { p } => -1.0 / (p as f64 - 1.0),
        }
    }
}

fn threshold(ratio: f64, at: u8) -> RootCondition {
    if (ratio - 1.0).abs() <= THRESHOLD_TOL {
        RootCondition::NoRoot { p: at }
    } else if ratio < 1.0 {
        RootCondition::NoRoot { p: 3 }
    } else {
        RootCondition::RootExists
    }
}

pub fn root_existence_conditions(spec: &PolynomialSpec) -> RootCondition {
    let nonzero: Vec<f64> = spec.mu().iter().cloned().filter(|&x| x != 0.0).collect();
    if nonzero.len() != 1 || nonzero[0] > 0.0 {
        return RootCondition::RootExists;
    }
    let outside: f64 = spec
        .mu_hat()
        .iter()
        .zip(spec.b_proj())
        .filter(|(&mh, _)| mh == 0.0)
        .map(|(_, &bp)| bp)
        .sum();
    let tol = 1e-10 * (spec.norm_b() + 1.0);
    if outside.sqrt() > tol {
        return RootCondition::RootExists;
    }
    let norm_a = spec.norm_a();
    if spec.a_is_real() {
        threshold(spec.norm_b() / (4.0 * norm_a), 5)
    } else {
        let weighted: f64 = spec
            .mu_hat()
            .iter()
            .zip(spec.b_proj())
            .filter(|(&mh, _)| mh != 0.0)
            .map(|(&mh, &bp)| bp / (-mh / norm_a).powi(3))
            .sum();
        threshold(weighted.sqrt() / (4.0 * norm_a), 4)
    }
}

/// Verdict for the side opposite to the pole `−1/α` of a reducible
/// polynomial, from its parameters alone.
pub fn reducible_verdict(r: &Reducible) -> Result<RootCondition> {
    if r.xi == 0.0 {
        return Ok(RootCondition::NoRoot { p: 3 });
    }
    if r.v_is_real_up_to_phase {
        Ok(threshold(r.xi / 2.0, 5))
    } else {
        let s = compute_s_a(&r.v)?.s;
        Ok(threshold(s * r.xi / 2.0, 4))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SigmaMu {
    pub sigma: f64,
    pub mu: f64,
    /// Absent when `μ = 0`.
    pub a_plus: Option<f64>,
    pub a_minus: Option<f64>,
    pub s: f64,
}

pub fn compute_s_a(v: &[C64]) -> Result<SigmaMu> {
    let vtv: C64 = v.iter().map(|z| z * z).sum();
    let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    if (vtv.norm() - norm2).abs() <= 1e-12 * norm2 {
        return Err(Error::RealDirection);
    }
    let sigma2: f64 = v.iter().map(|z| z.re * z.re).sum();
    let mu: f64 = v.iter().map(|z| z.re * z.im).sum();
    let sigma = sigma2.sqrt();
    if mu.abs() <= 1e-15 {
        return Ok(SigmaMu { sigma, mu, a_plus: None, a_minus: None, s: 1.0 / sigma2 });
    }
    let k = (1.0 - 2.0 * sigma2) / (2.0 * mu);
    let root = (k * k + 1.0).sqrt();
    // the pair has product −1; form the smaller one without cancellation
    let (a_plus, a_minus) = if k >= 0.0 { (k + root, -1.0 / (k + root)) } else { (1.0 / (root - k), k - root) };
    let term = |a: f64| 1.0 / ((sigma2 + a * a * (1.0 - sigma2) + 2.0 * a * mu) * (sigma2 + a * mu));
    let s = (term(a_plus) + term(a_minus)).sqrt();
    Ok(SigmaMu { sigma, mu, a_plus: Some(a_plus), a_minus: Some(a_minus), s })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Scan {
    pub root: Option<f64>,
    pub sign_changes: usize,
}

/// Grid on `(lo, 0)`: geometric from `−1e-8` outward, plus a geometric
/// cluster against the pole when `lo` is finite.
fn scan_grid(lo: f64) -> Vec<f64> {
    let far = if lo.is_finite() { -lo } else { SCAN_CAP };
    let mut xs = Vec::with_capacity(SCAN_POINTS);
    if lo.is_finite() {
        let half = SCAN_POINTS / 2;
        let span = (0.5 * far / SCAN_NEAR).max(1.0).ln();
        for k in 0..half {
            xs.push(-SCAN_NEAR * (span * k as f64 / (half - 1) as f64).exp());
        }
        let span = (0.5f64 / 1e-12).ln();
        for k in 0..half {
            let s = 1e-12 * (span * k as f64 / (half - 1) as f64).exp();
            xs.push(lo * (1.0 - s));
        }
    } else {
        let span = (far / SCAN_NEAR).ln();
        for k in 0..SCAN_POINTS {
            xs.push(-SCAN_NEAR * (span * k as f64 / (SCAN_POINTS - 1) as f64).exp());
        }
    }
    xs.sort_by(|a, b| b.total_cmp(a));
    xs.dedup();
    xs
}

/// Scan `h` on `(m*_+, 0)` for sign changes and refine the first one.
pub fn scan_negative_side(spec: &PolynomialSpec, m_star_plus: f64) -> Scan {
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    let mut changes = 0;
    for x in scan_grid(m_star_plus) {
        if x <= m_star_plus {
            continue;
        }
        let (h, _, scale) = scalar::h_real(spec, x);
        if !h.is_finite() || h.abs() <= 64.0 * f64::EPSILON * scale {
            continue;
        }
        if let Some((px, ph)) = prev {
            if ph.signum() != h.signum() {
                changes += 1;
                if bracket.is_none() {
                    bracket = Some((x, px));
                }
            }
        }
        prev = Some((x, h));
    }
    let root = bracket.and_then(|(a, b)| brent(|x| scalar::h_real(spec, x).0, a, b, 1e-13));
    Scan { root, sign_changes: changes }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EdgeRoots {
    pub m_plus: Option<f64>,
    pub m_minus: Option<f64>,
    pub right: RootCondition,
    pub left: RootCondition,
    pub sign_changes: (usize, usize),
}

pub fn find_edge_roots(spec: &PolynomialSpec, poles: &PoleSet) -> Result<EdgeRoots> {
    let neg = spec.negated();
    let right = root_existence_conditions(spec);
    let left = root_existence_conditions(&neg);
    let rs = scan_negative_side(spec, poles.m_star_plus);
    let ls = scan_negative_side(&neg, -poles.m_star_minus);
    if (right == RootCondition::RootExists) != rs.root.is_some() {
        return Err(Error::InconsistentClassification { side: "right" });
    }
    if (left == RootCondition::RootExists) != ls.root.is_some() {
        return Err(Error::InconsistentClassification { side: "left" });
    }
    Ok(EdgeRoots {
        m_plus: rs.root,
        m_minus: ls.root.map(|x| -x),
        right,
        left,
        sign_changes: (rs.sign_changes, ls.sign_changes),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeReport {
    pub tau_plus: f64,
    pub tau_minus: f64,
    pub m_plus: Option<f64>,
    pub m_minus: Option<f64>,
    pub right_edge_regular: bool,
    pub left_edge_regular: bool,
    pub left_exponent: f64,
    pub right_exponent: f64,
    pub h_prime_at_roots: (Option<f64>, Option<f64>),
    pub tau_star: f64,
}

impl EdgeReport {
    pub fn width(&self) -> f64 {
        self.tau_plus - self.tau_minus
    }
}

/// Value of `−1/m − γ(m)` as `|m| → ∞`; the position of a hard edge.
pub fn hard_edge(spec: &PolynomialSpec) -> f64 {
    let shift: f64 = spec
        .mu_hat()
        .iter()
        .zip(spec.b_proj())
        .filter(|(&mh, _)| mh != 0.0)
        .map(|(&mh, &bp)| bp / (4.0 * mh))
        .sum();
    spec.c() - shift
}

pub fn compute_edges(spec: &PolynomialSpec, classification: &SpectralClassification) -> Result<EdgeReport> {
    let poles = scalar::poles(spec);
    let roots = find_edge_roots(spec, &poles)?;
    if let Some(r) = classification.reducible() {
        let predicted = reducible_verdict(&r)?;
        let (side, seen) = if r.alpha > 0.0 { ("left", roots.left) } else { ("right", roots.right) };
        if predicted != seen {
            return Err(Error::InconsistentClassification { side });
        }
    }
    let tau = |m: f64| -1.0 / m - scalar::gamma_real(spec, m);
    let hard = hard_edge(spec);
    let tau_plus = roots.m_plus.map_or(hard, tau);
    let tau_minus = roots.m_minus.map_or(hard, tau);
    let hp = |m: f64| scalar::h_real(spec, m).1;
    Ok(EdgeReport {
        tau_plus,
        tau_minus,
        m_plus: roots.m_plus,
        m_minus: roots.m_minus,
        right_edge_regular: roots.m_plus.is_some(),
        left_edge_regular: roots.m_minus.is_some(),
        left_exponent: roots.left.exponent(),
        right_exponent: roots.right.exponent(),
        h_prime_at_roots: (roots.m_plus.map(hp), roots.m_minus.map(hp)),
        tau_star: tau_plus.abs().max(tau_minus.abs()),
    })
}

/// Left side of the auxiliary inequality behind the uniqueness of roots.
pub fn quad_stab_condition(y: &[f64], y_hat: &[f64], c: &[f64]) -> f64 {
    let a: f64 = y.iter().map(|&t| (t / (t + 1.0)).powi(2)).sum();
    let b: f64 = y_hat.iter().zip(c).map(|(&t, &cj)| cj * cj / (2.0 * t + 1.0).powi(3)).sum();
    a + b
}

pub fn quad_stab_implication(y: &[f64], y_hat: &[f64], c: &[f64]) -> f64 {
    let a: f64 = y.iter().map(|&t| (t / (t + 1.0)).powi(3)).sum();
    let b: f64 = y_hat.iter().zip(c).map(|(&t, &cj)| 3.0 * cj * cj * t / (2.0 * t + 1.0).powi(4)).sum();
    a + b
}

/// `Some(holds)` for an admissible tuple meeting the hypothesis, else `None`.
pub fn check_quad_stab(y: &[f64], y_hat: &[f64], c: &[f64]) -> Option<bool> {
    let sorted = |v: &[f64]| v.windows(2).all(|w| w[0] >= w[1]);
    let admissible = !y.is_empty()
        && y_hat.len() <= y.len()
        && c.len() == y_hat.len()
        && sorted(y)
        && sorted(y_hat)
        && y_hat.first().is_none_or(|&h| y[0] >= h)
        && *y.last().unwrap() > -1.0
        && y_hat.last().is_none_or(|&h| h > -0.5)
        && c.iter().all(|&x| x > 0.0);
    if !admissible || quad_stab_condition(y, y_hat, c) > 1.0 {
        return None;
    }
    Some(quad_stab_implication(y, y_hat, c) < 1.0)
}
