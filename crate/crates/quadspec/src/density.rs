//! Density of states by Stieltjes inversion on an edge-refined grid.

use std::io::Write;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::edges::EdgeReport;
use crate::error::{Error, Result};
use crate::model::PolynomialSpec;
use crate::scalar::solve_m;

const ETA_1: f64 = 1e-6;
const ETA_2: f64 = 5e-7;
/// Closest refined point to an edge.
const EDGE_CUTOFF: f64 = 1e-6;
const REFINE_RATIO: f64 = 0.8;
const FIT_WINDOW: (f64, f64) = (1e-5, 1e-2);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityCurve {
    pub energies: Vec<f64>,
    pub rho: Vec<f64>,
    pub mass: f64,
    pub edges: EdgeReport,
    /// Knots of the unnormalized cumulative integral, edges included.
    #[serde(skip)]
    cdf_x: Vec<f64>,
    #[serde(skip)]
    cdf_f: Vec<f64>,
}

/// `ρ(E)` from two heights, extrapolated linearly to `η = 0`.
pub fn density_at(spec: &PolynomialSpec, e: f64) -> Result<f64> {
    let m1 = solve_m(spec, C64::new(e, ETA_1))?.m.im;
    let m2 = solve_m(spec, C64::new(e, ETA_2))?.m.im;
    let slope = (m1 - m2) / (ETA_1 - ETA_2);
    Ok(((m2 - slope * ETA_2) / std::f64::consts::PI).max(0.0))
}

/// Energies: uniform over the padded support plus geometric clusters on the
/// inner side of both edges.
pub fn density_grid(edges: &EdgeReport, n_grid: usize) -> Vec<f64> {
    let (lo, hi) = (edges.tau_minus, edges.tau_plus);
    let w = hi - lo;
    let (a, b) = (lo - 0.1 * w, hi + 0.1 * w);
    let near_edge = |x: f64| (x - lo).abs() < EDGE_CUTOFF || (x - hi).abs() < EDGE_CUTOFF;
    let mut xs: Vec<f64> = (0..n_grid)
        .map(|i| a + (b - a) * i as f64 / (n_grid - 1) as f64)
        .filter(|&x| !near_edge(x))
        .collect();
    let mut d = 0.1 * w;
    while d >= EDGE_CUTOFF * (1.0 - 1e-12) {
        xs.push(lo + d);
        xs.push(hi - d);
        d *= REFINE_RATIO;
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

pub fn compute_density(spec: &PolynomialSpec, edges: &EdgeReport, n_grid: usize) -> Result<DensityCurve> {
    if n_grid < 64 {
        return Err(Error::InvalidInput(format!("n_grid must be at least 64, got {n_grid}")));
    }
    let energies = density_grid(edges, n_grid);
    let rho = energies
        .par_iter()
        .map(|&e| density_at(spec, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityCurve::from_samples(energies, rho, edges.clone()))
}

impl DensityCurve {
    /// Builds the cumulative integral from samples. Segments inside the edge
    /// zones are integrated as local power laws; the piece between an edge
    /// and its nearest sample uses the edge exponent.
    pub fn from_samples(energies: Vec<f64>, rho: Vec<f64>, edges: EdgeReport) -> Self {
        let (lo, hi) = (edges.tau_minus, edges.tau_plus);
        let zone = 0.1 * (hi - lo);
        let mut pts: Vec<(f64, f64, Option<Side>)> =
            energies.iter().zip(&rho).map(|(&x, &r)| (x, r, None)).collect();
        pts.push((lo, 0.0, Some(Side::Left)));
        pts.push((hi, 0.0, Some(Side::Right)));
        pts.sort_by(|p, q| p.0.total_cmp(&q.0));

        let inside = |x: f64| x > lo && x < hi;
        let in_zone = |x: f64| inside(x) && (x - lo < zone || hi - x < zone);
        let mut cdf_x = Vec::with_capacity(pts.len());
        let mut cdf_f = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        cdf_x.push(pts[0].0);
        cdf_f.push(0.0);
        for w in pts.windows(2) {
            let ((x0, r0, e0), (x1, r1, e1)) = (w[0], w[1]);
            let piece = match (e0, e1) {
                (Some(Side::Left), None) if inside(x1) => tail(r1, x1 - lo, edges.left_exponent),
                (None, Some(Side::Right)) if inside(x0) => tail(r0, hi - x0, edges.right_exponent),
                _ if e0.is_none() && e1.is_none() && in_zone(x0) && in_zone(x1) => {
                    let (d0, d1) = if x1 - lo < zone { (x0 - lo, x1 - lo) } else { (hi - x0, hi - x1) };
                    power_segment(d0, r0, d1, r1)
                }
                _ => 0.5 * (r0 + r1) * (x1 - x0),
            };
            acc += piece;
            cdf_x.push(x1);
            cdf_f.push(acc);
        }
        DensityCurve { energies, rho, mass: acc, edges, cdf_x, cdf_f }
    }

    /// Normalized cumulative distribution at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.cdf_x.len();
        if x <= self.cdf_x[0] {
            return 0.0;
        }
        if x >= self.cdf_x[n - 1] {
            return 1.0;
        }
        let i = self.cdf_x.partition_point(|&t| t <= x);
        let (x0, x1) = (self.cdf_x[i - 1], self.cdf_x[i]);
        let (f0, f1) = (self.cdf_f[i - 1], self.cdf_f[i]);
        let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 1.0 };
        ((f0 + t * (f1 - f0)) / self.mass).clamp(0.0, 1.0)
    }

    /// Inverse of [`cdf`](Self::cdf) at level `p ∈ [0, 1]`.
    pub fn inverse_cdf(&self, p: f64) -> f64 {
        let target = p * self.mass;
        let i = self.cdf_f.partition_point(|&f| f < target).clamp(1, self.cdf_f.len() - 1);
        let (x0, x1) = (self.cdf_x[i - 1], self.cdf_x[i]);
        let (f0, f1) = (self.cdf_f[i - 1], self.cdf_f[i]);
        if f1 > f0 {
            x0 + (target - f0) / (f1 - f0) * (x1 - x0)
        } else {
            x0
        }
    }

    pub fn grid_step(&self) -> f64 {
        let w = self.edges.width();
        1.2 * w / (self.energies.len().max(2) - 1) as f64
    }

    /// Writes `E,rho` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "E,rho")?;
        for (e, r) in self.energies.iter().zip(&self.rho) {
            writeln!(out, "{e:.16e},{r:.16e}")?;
        }
        Ok(())
    }
}

/// `∫_0^d C t^p dt` for `C d^p = r`.
fn tail(r: f64, d: f64, p: f64) -> f64 {
    r * d / (1.0 + p)
}

/// Integral over `[d0, d1]` (distances from the edge) of the power law
/// through both samples.
fn power_segment(d0: f64, r0: f64, d1: f64, r1: f64) -> f64 {
    let width = (d1 - d0).abs();
    if r0 <= 0.0 || r1 <= 0.0 {
        return 0.5 * (r0 + r1) * width;
    }
    let p = (r1 / r0).ln() / (d1 / d0).ln();
    if !p.is_finite() || p <= -1.0 + 1e-9 {
        return 0.5 * (r0 + r1) * width;
    }
    (r1 * d1 - r0 * d0).abs() / (1.0 + p)
}

pub fn quantiles(curve: &DensityCurve, n: usize) -> Result<Vec<f64>> {
    if (curve.mass - 1.0).abs() > 1e-3 {
        return Err(Error::MassDeficit { mass: curve.mass });
    }
    Ok((1..=n)
        .map(|k| curve.inverse_cdf((k as f64 - 0.5) / n as f64))
        .collect())
}

pub fn fit_edge_exponent(curve: &DensityCurve, which: Side) -> Result<f64> {
    let edge = match which {
        Side::Left => curve.edges.tau_minus,
        Side::Right => curve.edges.tau_plus,
    };
    let (lx, ly): (Vec<f64>, Vec<f64>) = curve
        .energies
        .iter()
        .zip(&curve.rho)
        .filter_map(|(&e, &r)| {
            let d = match which {
                Side::Left => e - edge,
                Side::Right => edge - e,
            };
            (d >= FIT_WINDOW.0 * (1.0 - 1e-12) && d <= FIT_WINDOW.1 && r > 0.0).then(|| (d.ln(), r.ln()))
        })
        .unzip();
    if lx.len() < 20 {
        return Err(Error::InsufficientPoints { found: lx.len() });
    }
    Ok(slope(&lx, &ly))
}

/// Least-squares slope.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edges::compute_edges;
    use crate::model::{classify_polynomial, validate_spec, RawSpec};
    use approx::assert_abs_diff_eq;

    fn curve(a: &[&[f64]], b: &[f64], c: f64, n: usize) -> DensityCurve {
        let s = validate_spec(&RawSpec::real(a, b, c)).unwrap();
        let e = compute_edges(&s, &classify_polynomial(&s)).unwrap();
        compute_density(&s, &e, n).unwrap()
    }

    #[test]
    fn wigner_square_point_values() {
        let s = validate_spec(&RawSpec::real(&[&[1.0]], &[0.0], 0.0)).unwrap();
        assert_abs_diff_eq!(density_at(&s, 2.0).unwrap(), 0.5 / std::f64::consts::PI, epsilon = 1e-7);
        assert!(density_at(&s, 5.0).unwrap() <= 1e-6);
    }

    #[test]
    fn wigner_square_curve() {
        let c = curve(&[&[1.0]], &[0.0], 0.0, 400);
        assert_abs_diff_eq!(c.mass, 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(fit_edge_exponent(&c, Side::Right).unwrap(), 0.5, epsilon = 0.05);
        assert_abs_diff_eq!(fit_edge_exponent(&c, Side::Left).unwrap(), -0.5, epsilon = 0.05);
        let q = quantiles(&c, 1000).unwrap();
        assert!((4.0 - q[999]).abs() < 0.05);
        assert!(q.windows(2).all(|w| w[0] <= w[1]));
        let med = quantiles(&c, 1).unwrap()[0];
        assert_abs_diff_eq!(c.cdf(med), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn csv_header_and_precision() {
        let c = curve(&[&[1.0]], &[0.0], 0.0, 64);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("E,rho"));
        let row = lines.next().unwrap();
        let digits = row.split(',').next().unwrap().split('e').next().unwrap().replace(['-', '.'], "");
        assert_eq!(digits.len(), 17);
    }

    #[test]
    fn small_grid_rejected() {
        let s = validate_spec(&RawSpec::real(&[&[1.0]], &[0.0], 0.0)).unwrap();
        let e = compute_edges(&s, &classify_polynomial(&s)).unwrap();
        assert!(compute_density(&s, &e, 10).is_err());
    }

    #[test]
    fn power_segment_is_exact_for_power_laws() {
        let f = |d: f64| 3.0 * d.powf(-0.25);
        let exact = 3.0 / 0.75 * (0.02f64.powf(0.75) - 0.01f64.powf(0.75));
        assert_abs_diff_eq!(power_segment(0.01, f(0.01), 0.02, f(0.02)), exact, epsilon = 1e-14);
    }
}
