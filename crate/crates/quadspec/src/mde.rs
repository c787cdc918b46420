//! Linearization, the Dyson equation solution `M_δ` and the stability
//! operator `𝓛[R] = R − M Γ[R] M`.
//!
//! Matrices here are `(l+1)×(l+1)`; index 0 is the scalar slot.

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, I};
use crate::model::{classify_polynomial, PolynomialSpec};
use crate::scalar::{self, solve_m};

#[derive(Clone, Debug)]
pub struct Linearization {
    pub k0: CMat,
    pub k: Vec<CMat>,
    pub j: CMat,
}

pub fn build_linearization(spec: &PolynomialSpec) -> Result<Linearization> {
    if !spec.a_is_invertible() {
        return Err(Error::SingularA);
    }
    Ok(linearize(spec.a(), spec.b(), spec.c()))
}

/// Linearization of `A + εI` with `ε = 1e-7·|A|`, for singular `A`.
pub fn build_linearization_regularized(spec: &PolynomialSpec) -> (Linearization, f64) {
    let eps = 1e-7 * spec.norm_a();
    let l = spec.l();
    let a = Mat::from_fn(l, l, |i, j| spec.a()[(i, j)] + if i == j { c(eps) } else { c(0.0) });
    (linearize(&a, spec.b(), spec.c()), eps)
}

fn linearize(a: &CMat, b: &[f64], c0: f64) -> Linearization {
    let l = a.nrows();
    let n = l + 1;
    let a_inv = linalg::inverse(a.as_ref());
    let k0 = Mat::from_fn(n, n, |i, j| match (i, j) {
        (0, 0) => c(c0),
        (0, _) | (_, 0) => c(0.0),
        _ => -a_inv[(i - 1, j - 1)],
    });
    let k = (0..l)
        .map(|q| {
            Mat::from_fn(n, n, |i, j| match (i, j) {
                (0, 0) => c(b[q]),
                (0, j) if j == q + 1 => c(1.0),
                (i, 0) if i == q + 1 => c(1.0),
                _ => c(0.0),
            })
        })
        .collect();
    let j = Mat::from_fn(n, n, |i, j| if i == 0 && j == 0 { c(1.0) } else { c(0.0) });
    Linearization { k0, k, j }
}

/// The self-energy `Γ` acting on `[[ω, vᵗ], [w, T]]`.
pub fn gamma_operator(r: &CMat, spec: &PolynomialSpec) -> CMat {
    gamma_with(r, spec.b())
}

fn gamma_with(r: &CMat, b: &[f64]) -> CMat {
    let n = r.nrows();
    let l = n - 1;
    let omega = r[(0, 0)];
    let mut out = Mat::zeros(n, n);
    let mut corner = omega * b.iter().map(|x| x * x).sum::<f64>();
    for i in 0..l {
        corner += b[i] * (r[(0, i + 1)] + r[(i + 1, 0)]) + r[(i + 1, i + 1)];
    }
    out[(0, 0)] = corner;
    for i in 0..l {
        out[(0, i + 1)] = omega * b[i] + r[(i + 1, 0)];
        out[(i + 1, 0)] = omega * b[i] + r[(0, i + 1)];
        out[(i + 1, i + 1)] = omega;
    }
    out
}

/// `A_δ = A(I + iδηA)⁻¹`.
pub(crate) fn a_delta(a: &CMat, delta: f64, eta: f64) -> CMat {
    let l = a.nrows();
    let shift = Mat::from_fn(l, l, |i, j| {
        let id = if i == j { c(1.0) } else { c(0.0) };
        id + I * (delta * eta) * a[(i, j)]
    });
    a * linalg::inverse(shift.as_ref())
}

/// Regularized coefficients for fixed `(η, δ)`.
struct Regularized<'a> {
    a: CMat,
    a_hat: CMat,
    b: &'a [f64],
    c: f64,
}

impl<'a> Regularized<'a> {
    fn new(spec: &'a PolynomialSpec, eta: f64, delta: f64) -> Self {
        let a = a_delta(spec.a(), delta, eta);
        let l = a.nrows();
        let a_hat = Mat::from_fn(l, l, |i, j| (a[(i, j)] + a[(j, i)]) * 0.5);
        Regularized { a, a_hat, b: spec.b(), c: spec.c() }
    }

    fn l(&self) -> usize {
        self.a.nrows()
    }

    /// `(I + x A_δ)⁻¹` and `(I + 2x Â_δ)⁻¹`.
    fn resolvents(&self, x: C64) -> (CMat, CMat) {
        let l = self.l();
        let id = linalg::identity(l);
        let r1 = linalg::inverse((&id + linalg::scale(self.a.as_ref(), x)).as_ref());
        let r2 = linalg::inverse((&id + linalg::scale(self.a_hat.as_ref(), 2.0 * x)).as_ref());
        (r1, r2)
    }

    /// `γ_δ(x)` and its derivative.
    fn gamma(&self, x: C64) -> (C64, C64) {
        let l = self.l();
        let (r1, p) = self.resolvents(x);
        let ar = &self.a * &r1;
        let mut g = -linalg::trace(ar.as_ref()) - self.c;
        let mut gp = linalg::trace((&ar * &ar).as_ref());
        let bv = Mat::from_fn(l, 1, |i, _| c(self.b[i]));
        let pb = &p * &bv;
        let id = linalg::identity(l);
        let mid = &id + linalg::scale(self.a_hat.as_ref(), x);
        let ppb = &p * &pb;
        let quad = &(&mid * &pb);
        let p3b = &p * &ppb;
        for i in 0..l {
            g += x * self.b[i] * (&p * quad)[(i, 0)];
            gp += self.b[i] * p3b[(i, 0)];
        }
        (g, gp)
    }

    /// `M_δ[x]`.
    fn matrix(&self, x: C64) -> CMat {
        let l = self.l();
        let (r1, p) = self.resolvents(x);
        let v = linalg::scale(p.as_ref(), x);
        let bv = Mat::from_fn(l, 1, |i, _| c(self.b[i]));
        let col = &(&self.a * &v) * &bv;
        let row = &(bv.transpose() * &v) * &self.a;
        let lower = &self.a * &r1;
        Mat::from_fn(l + 1, l + 1, |i, j| match (i, j) {
            (0, 0) => x,
            (0, j) => -x * row[(0, j - 1)],
            (i, 0) => -x * col[(i - 1, 0)],
            (i, j) => -lower[(i - 1, j - 1)] + x * col[(i - 1, 0)] * row[(0, j - 1)],
        })
    }
}

#[derive(Clone, Debug)]
pub struct MdeSolution {
    pub z: C64,
    pub delta: f64,
    pub m_delta: C64,
    pub m: CMat,
    /// `None` when `A` is singular.
    pub de_residual: Option<f64>,
}

const DELTA_STEPS: usize = 8;

pub fn solve_m_delta(z: C64, delta: f64, spec: &PolynomialSpec) -> Result<MdeSolution> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidInput(format!("delta must lie in [0, 1], got {delta}")));
    }
    let mut x = solve_m(spec, z)?.m;
    let eta = z.im;
    if delta > 0.0 {
        for k in 1..=DELTA_STEPS {
            let reg = Regularized::new(spec, eta, delta * k as f64 / DELTA_STEPS as f64);
            x = scalar::newton(z, x, |m| reg.gamma(m))?.0;
        }
    }
    let reg = Regularized::new(spec, eta, delta);
    let m = reg.matrix(x);
    let de_residual = build_linearization(spec)
        .ok()
        .map(|lin| dyson_residual(&lin, &m, z, delta, spec.b()));
    Ok(MdeSolution { z, delta, m_delta: x, m, de_residual })
}

/// `M_δ[x]` for a given `(1,1)` entry.
pub fn m_delta_matrix(spec: &PolynomialSpec, x: C64, eta: f64, delta: f64) -> CMat {
    Regularized::new(spec, eta, delta).matrix(x)
}

/// `d M_δ[x] / dx` by a central difference.
pub fn m_delta_derivative(spec: &PolynomialSpec, x: C64, eta: f64, delta: f64) -> CMat {
    let reg = Regularized::new(spec, eta, delta);
    let h = 1e-5 * x.norm().max(1e-3);
    let up = reg.matrix(x + h);
    let dn = reg.matrix(x - h);
    linalg::scale((&up - &dn).as_ref(), c(0.5 / h))
}

/// `‖I + (zJ + iηδ(I−J) − K₀ + Γ[M])M‖_F`.
pub fn dyson_residual(lin: &Linearization, m: &CMat, z: C64, delta: f64, b: &[f64]) -> f64 {
    let n = m.nrows();
    let shift = Mat::from_fn(n, n, |i, j| match (i, j) {
        (0, 0) => z,
        (i, j) if i == j => I * (z.im * delta),
        _ => c(0.0),
    });
    let lhs = &(&(&shift - &lin.k0) + gamma_with(m, b)) * m;
    let res = &linalg::identity(n) + &lhs;
    linalg::frobenius(res.as_ref())
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    #[serde(with = "crate::cx::one")]
    pub beta: C64,
    #[serde(skip)]
    pub b: CMat,
    #[serde(skip)]
    pub l: CMat,
    pub overlap: f64,
    pub cubic: f64,
    pub inv_norm: f64,
    /// Modulus of the second smallest eigenvalue.
    pub next_modulus: f64,
    /// Next eigenvalue at least `2|β| + 0.01` in modulus.
    pub isolated: bool,
    /// Eigenvalues within `1e-6` of `β`, itself included.
    pub multiplicity: usize,
}

/// `𝓛` as a dense matrix on row-major vectorized `(l+1)×(l+1)` matrices.
pub fn stability_matrix(m: &CMat, b: &[f64]) -> CMat {
    let n = m.nrows();
    let mut out = Mat::zeros(n * n, n * n);
    for p in 0..n {
        for q in 0..n {
            let mut e = Mat::zeros(n, n);
            e[(p, q)] = c(1.0);
            let img = &e - &(&(m * gamma_with(&e, b)) * m);
            for i in 0..n {
                for j in 0..n {
                    out[(i * n + j, p * n + q)] = img[(i, j)];
                }
            }
        }
    }
    out
}

fn unvec(v: &[C64], n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| v[i * n + j])
}

pub fn stability_spectrum(z: C64, delta: f64, spec: &PolynomialSpec) -> Result<StabilityReport> {
    if classify_polynomial(spec).is_wigner_square() {
        return Err(Error::WignerSquareUnsupported);
    }
    stability_spectrum_unchecked(z, delta, spec)
}

/// As [`stability_spectrum`] without the Wigner-square guard; for those the
/// critical eigenvalue is double and `B` is one vector of the eigenspace.
pub fn stability_spectrum_unchecked(z: C64, delta: f64, spec: &PolynomialSpec) -> Result<StabilityReport> {
    let sol = solve_m_delta(z, delta, spec)?;
    let m = &sol.m;
    let n = m.nrows();
    let op = stability_matrix(m, spec.b());
    let evals = op.eigenvalues().map_err(|_| Error::ConvergenceFailure)?;
    let mut evals: Vec<C64> = evals;
    evals.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let beta = evals[0];
    let next_modulus = evals.get(1).map_or(f64::INFINITY, |x| x.norm());
    let multiplicity = evals.iter().filter(|x| (**x - beta).norm() <= 1e-6).count();

    let dim = n * n;
    let shifted = Mat::from_fn(dim, dim, |i, j| op[(i, j)] - if i == j { beta } else { c(0.0) });
    let svd = shifted.svd().map_err(|_| Error::ConvergenceFailure)?;
    let right: Vec<C64> = (0..dim).map(|i| svd.V()[(i, dim - 1)]).collect();
    let left: Vec<C64> = (0..dim).map(|i| svd.U()[(i, dim - 1)]).collect();
    let bm = unvec(&right, n);
    let lm = unvec(&left, n);
    let overlap = linalg::hs_inner(lm.as_ref(), bm.as_ref()).norm();
    let cubic_term = &(m * gamma_with(&bm, spec.b())) * &bm;
    let cubic = linalg::hs_inner(lm.as_ref(), cubic_term.as_ref()).norm();
    let sv = linalg::singular_values(op.as_ref())?;
    Ok(StabilityReport {
        beta,
        b: bm,
        l: lm,
        overlap,
        cubic,
        inv_norm: 1.0 / sv[dim - 1],
        next_modulus,
        isolated: next_modulus >= 2.0 * beta.norm() + 0.01,
        multiplicity,
    })
}

/// Relative distance of `x` from the line spanned by `y`.
pub fn distance_from_span(x: &CMat, y: &CMat) -> f64 {
    let yy = linalg::hs_inner(y.as_ref(), y.as_ref());
    let coef = linalg::hs_inner(y.as_ref(), x.as_ref()) / yy;
    let diff = x - linalg::scale(y.as_ref(), coef);
    linalg::frobenius(diff.as_ref()) / linalg::frobenius(x.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edges::compute_edges;
    use crate::model::{validate_spec, RawSpec};
    use approx::assert_abs_diff_eq;

    fn wsq() -> PolynomialSpec {
        validate_spec(&RawSpec::real(&[&[1.0]], &[0.0], 0.0)).unwrap()
    }

    fn anti() -> PolynomialSpec {
        validate_spec(&RawSpec::real(&[&[0.0, 1.0], &[1.0, 0.0]], &[0.0, 0.0], 0.0)).unwrap()
    }

    #[test]
    fn linearization_examples() {
        let lin = build_linearization(&wsq()).unwrap();
        assert_eq!(lin.k0[(0, 0)], c(0.0));
        assert_eq!(lin.k0[(1, 1)], c(-1.0));
        assert_eq!(lin.k[0][(0, 1)], c(1.0));
        assert_eq!(lin.k[0][(1, 0)], c(1.0));
        assert_eq!(lin.k[0][(0, 0)], c(0.0));
        let lin = build_linearization(&anti()).unwrap();
        assert_abs_diff_eq!(lin.k0[(1, 2)].re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lin.k0[(1, 1)].norm(), 0.0, epsilon = 1e-15);
        let sing = validate_spec(&RawSpec::real(&[&[1.0, 0.0], &[0.0, 0.0]], &[0.0, 0.0], 0.0)).unwrap();
        assert!(matches!(build_linearization(&sing), Err(Error::SingularA)));
        let (reg, eps) = build_linearization_regularized(&sing);
        assert!(eps > 0.0 && reg.k0[(2, 2)].re < -1e6);
    }

    #[test]
    fn gamma_examples() {
        let s = wsq();
        let mut r = Mat::zeros(2, 2);
        r[(0, 0)] = c(1.0);
        let g = gamma_operator(&r, &s);
        assert_eq!(g[(0, 0)], c(0.0));
        assert_eq!(g[(1, 1)], c(1.0));
        let g = gamma_operator(&linalg::identity(2), &s);
        assert_eq!(g, linalg::identity(2));
    }

    #[test]
    fn delta_zero_matches_scalar_solver() {
        let s = anti();
        let z = C64::new(0.7, 0.3);
        let sol = solve_m_delta(z, 0.0, &s).unwrap();
        assert_abs_diff_eq!((sol.m_delta - solve_m(&s, z).unwrap().m).norm(), 0.0, epsilon = 1e-11);
        assert!(sol.de_residual.unwrap() <= 1e-9);
    }

    #[test]
    fn regularized_solution_residual() {
        let s = anti();
        let sol = solve_m_delta(C64::new(-1.2, 0.05), 1.0, &s).unwrap();
        assert!(sol.de_residual.unwrap() <= 1e-9, "{:?}", sol.de_residual);
        assert!(sol.m_delta.im > 0.0);
    }

    #[test]
    fn wigner_square_rejected() {
        assert!(matches!(
            stability_spectrum(C64::new(4.0, 1e-3), 0.0, &wsq()),
            Err(Error::WignerSquareUnsupported)
        ));
    }

    #[test]
    fn anticommutator_edge_eigenvectors() {
        let s = anti();
        let e = compute_edges(&s, &crate::model::classify_polynomial(&s)).unwrap();
        let z = C64::new(e.tau_plus, 1e-10);
        let rep = stability_spectrum(z, 0.0, &s).unwrap();
        assert!(rep.beta.norm() < 1e-3);
        let m = solve_m(&s, z).unwrap().m;
        let mp = m_delta_derivative(&s, m, z.im, 0.0);
        assert!(distance_from_span(&rep.b, &mp) < 1e-4);
        let gb = gamma_operator(&rep.b, &s);
        assert!(distance_from_span(&rep.l, &gb) < 1e-4);
    }

    #[test]
    fn away_from_spectrum_is_stable() {
        let s = anti();
        let e = compute_edges(&s, &crate::model::classify_polynomial(&s)).unwrap();
        let rep = stability_spectrum(C64::new(e.tau_plus + 1.0, 1e-3), 0.0, &s).unwrap();
        assert!(rep.inv_norm <= 20.0);
        assert!(rep.overlap >= 0.05);
    }
}
