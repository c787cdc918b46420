//! Polynomial coefficients, their cached eigendata and the reducibility
//! classifier.
//!
//! A polynomial is `q(X) = Σ X_i A_ij X_j + Σ b_i X_i + c` with `A` Hermitian,
//! `b` real and `c` real. Everything downstream works from the eigenvalues of
//! `A` and of its entrywise real part `Â = (A + Aᵗ)/2`.

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// Complex number in the `{"re": .., "im": ..}` wire format.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cx {
    pub re: f64,
    pub im: f64,
}

impl From<Cx> for C64 {
    fn from(x: Cx) -> Self {
        C64::new(x.re, x.im)
    }
}

impl From<C64> for Cx {
    fn from(z: C64) -> Self {
        Cx { re: z.re, im: z.im }
    }
}

/// Unvalidated coefficients as they appear in a spec file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSpec {
    pub l: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<Cx>>,
    pub b: Vec<f64>,
    pub c: f64,
}

impl RawSpec {
    /// Real coefficient matrix given row by row.
    pub fn real(a: &[&[f64]], b: &[f64], c: f64) -> Self {
        let rows = a
            .iter()
            .map(|r| r.iter().map(|&x| Cx { re: x, im: 0.0 }).collect())
            .collect();
        RawSpec { l: a.len(), a: rows, b: b.to_vec(), c }
    }

    pub fn complex(a: &[Vec<C64>], b: &[f64], c: f64) -> Self {
        let rows = a
            .iter()
            .map(|r| r.iter().map(|&z| Cx::from(z)).collect())
            .collect();
        RawSpec { l: a.len(), a: rows, b: b.to_vec(), c }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Validated polynomial with eigendata of `A` and `Â`.
#[derive(Clone, Debug)]
pub struct PolynomialSpec {
    l: usize,
    a: CMat,
    b: Vec<f64>,
    c: f64,
    a_hat: Mat<f64>,
    mu: Vec<f64>,
    a_vecs: CMat,
    mu_hat: Vec<f64>,
    w: Mat<f64>,
    b_proj: Vec<f64>,
}

/// Relative size below which eigenvalues of `A` and `Â` are treated as zero.
const ZERO_EIG: f64 = 1e-13;
/// Relative size (in units of `|b|²`) below which a projection `⟨w_i, b⟩²` is dropped.
const ZERO_PROJ: f64 = 1e-12;

pub fn validate_spec(raw: &RawSpec) -> Result<PolynomialSpec> {
    let l = raw.l;
    if l == 0 {
        return Err(Error::InvalidInput("l must be at least 1".into()));
    }
    if raw.a.len() != l || raw.a.iter().any(|r| r.len() != l) {
        return Err(Error::DimensionMismatch(format!("A must be {l}x{l}")));
    }
    if raw.b.len() != l {
        return Err(Error::DimensionMismatch(format!(
            "b has length {}, expected {l}",
            raw.b.len()
        )));
    }
    if raw.a.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("A"));
    }
    if raw.b.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("b"));
    }
    if !raw.c.is_finite() {
        return Err(Error::NonFinite("c"));
    }

    let a0 = Mat::from_fn(l, l, |i, j| C64::from(raw.a[i][j]));
    let norm = linalg::frobenius(a0.as_ref());
    if norm == 0.0 {
        return Err(Error::ZeroA);
    }
    let asym = linalg::frobenius((&a0 - a0.adjoint()).as_ref());
    if asym > 1e-8 * norm {
        return Err(Error::NonHermitian { asym });
    }
    let a = Mat::from_fn(l, l, |i, j| (a0[(i, j)] + a0[(j, i)].conj()) * 0.5);
    build(a, raw.b.clone(), raw.c)
}

fn build(a: CMat, b: Vec<f64>, c: f64) -> Result<PolynomialSpec> {
    let l = a.nrows();
    let (mut mu, a_vecs) = linalg::hermitian_eigen(a.as_ref())?;
    let a_norm = mu.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for x in &mut mu {
        if x.abs() <= ZERO_EIG * a_norm {
            *x = 0.0;
        }
    }

    let a_hat = Mat::from_fn(l, l, |i, j| a[(i, j)].re);
    let (mut mu_hat, w) = linalg::symmetric_eigen(a_hat.as_ref())?;
    let hat_norm = mu_hat.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for x in &mut mu_hat {
        if x.abs() <= ZERO_EIG * hat_norm {
            *x = 0.0;
        }
    }

    let b2: f64 = b.iter().map(|x| x * x).sum();
    let b_proj = (0..l)
        .map(|k| {
            let p: f64 = (0..l).map(|i| w[(i, k)] * b[i]).sum();
            let p2 = p * p;
            if p2 <= ZERO_PROJ * b2 {
                0.0
            } else {
                p2
            }
        })
        .collect();

    Ok(PolynomialSpec { l, a, b, c, a_hat, mu, a_vecs, mu_hat, w, b_proj })
}

impl PolynomialSpec {
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn a(&self) -> &CMat {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn a_hat(&self) -> &Mat<f64> {
        &self.a_hat
    }

    /// Eigenvalues of `A`, ascending, with multiplicity.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Unit eigenvectors of `A` (columns), matching [`mu`](Self::mu).
    pub fn a_eigenvectors(&self) -> &CMat {
        &self.a_vecs
    }

    /// Eigenvalues of `Â`, ascending.
    pub fn mu_hat(&self) -> &[f64] {
        &self.mu_hat
    }

    /// Real orthonormal eigenvectors of `Â` (columns).
    pub fn w(&self) -> &Mat<f64> {
        &self.w
    }

    /// `⟨w_i, b⟩²`, with negligible projections set to zero.
    pub fn b_proj(&self) -> &[f64] {
        &self.b_proj
    }

    /// Operator norm of `A`.
    pub fn norm_a(&self) -> f64 {
        self.mu.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn norm_a_hat(&self) -> f64 {
        self.mu_hat.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn norm_b(&self) -> f64 {
        self.b.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Whether `A` has (numerically) real entries.
    pub fn a_is_real(&self) -> bool {
        let mut im = 0.0f64;
        for j in 0..self.l {
            for i in 0..self.l {
                im = im.max(self.a[(i, j)].im.abs());
            }
        }
        im <= 1e-12 * self.norm_a()
    }

    pub fn rank_a(&self) -> usize {
        numeric_rank(&self.mu)
    }

    pub fn rank_a_hat(&self) -> usize {
        numeric_rank(&self.mu_hat)
    }

    /// The polynomial `-q`.
    pub fn negated(&self) -> PolynomialSpec {
        let a = linalg::scale(self.a.as_ref(), C64::new(-1.0, 0.0));
        let b = self.b.iter().map(|x| -x).collect();
        build(a, b, -self.c).expect("negation of a valid spec is valid")
    }

    pub fn to_raw(&self) -> RawSpec {
        RawSpec {
            l: self.l,
            a: (0..self.l)
                .map(|i| (0..self.l).map(|j| Cx::from(self.a[(i, j)])).collect())
                .collect(),
            b: self.b.clone(),
            c: self.c,
        }
    }

    /// `A` has no eigenvalue smaller than `1e-10·|A|` in modulus.
    pub fn a_is_invertible(&self) -> bool {
        let n = self.norm_a();
        self.mu.iter().all(|x| x.abs() >= 1e-10 * n)
    }
}

fn numeric_rank(vals: &[f64]) -> usize {
    let top = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    vals.iter().filter(|x| x.abs() > 1e-10 * top).count()
}

/// Outcome of the eigenvalue comparisons between `A` and `Â`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct HatACheck {
    pub max_dominates: bool,
    pub min_dominates: bool,
    pub norm_dominates: bool,
    /// `None` unless `A` has rank one.
    pub rank_one_rule: Option<bool>,
}

impl HatACheck {
    pub fn holds(&self) -> bool {
        self.max_dominates && self.min_dominates && self.norm_dominates && self.rank_one_rule != Some(false)
    }
}

pub fn check_hat_a(spec: &PolynomialSpec) -> HatACheck {
    let tol = 1e-10 * spec.norm_a();
    let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let rank_one_rule = (spec.rank_a() == 1).then(|| {
        let want = if spec.a_is_real() { 1 } else { 2 };
        spec.rank_a_hat() == want
    });
    HatACheck {
        max_dominates: max(&spec.mu) >= max(&spec.mu_hat) - tol,
        min_dominates: min(&spec.mu) <= min(&spec.mu_hat) + tol,
        norm_dominates: spec.norm_a() >= spec.norm_a_hat() - tol,
        rank_one_rule,
    }
}

/// Parameters of `q = α (v*X − ξ)(v*X − ξ)* − β`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reducible {
    pub alpha: f64,
    pub beta: f64,
    pub xi: f64,
    #[serde(with = "crate::cx::vec")]
    pub v: Vec<C64>,
    pub v_is_real_up_to_phase: bool,
}

impl Reducible {
    /// `A = α v v*`.
    pub fn a(&self) -> CMat {
        let n = self.v.len();
        Mat::from_fn(n, n, |i, j| self.v[i] * self.v[j].conj() * self.alpha)
    }

    /// `b = −αξ(v + v̄)`.
    pub fn b(&self) -> Vec<f64> {
        self.v.iter().map(|z| -2.0 * self.alpha * self.xi * z.re).collect()
    }

    /// `c = αξ² − β`.
    pub fn c(&self) -> f64 {
        self.alpha * self.xi * self.xi - self.beta
    }

    pub fn to_raw(&self) -> RawSpec {
        let a = self.a();
        let rows: Vec<Vec<C64>> = (0..a.nrows())
            .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
            .collect();
        RawSpec::complex(&rows, &self.b(), self.c())
    }

    /// `|A − αvv*| + |b + αξ(v+v̄)| + |c − αξ² + β|`.
    pub fn reconstruction_error(&self, spec: &PolynomialSpec) -> f64 {
        let da = linalg::frobenius((spec.a() - self.a()).as_ref());
        let db = spec
            .b()
            .iter()
            .zip(self.b())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        da + db + (spec.c() - self.c()).abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SpectralClassification {
    NonReducible,
    ShiftedReducible(Reducible),
    WignerSquare {
        a: f64,
        c_shift: f64,
        #[serde(with = "crate::cx::vec")]
        v: Vec<C64>,
    },
}

impl SpectralClassification {
    /// Reducible parameters, also for the Wigner-square special case.
    pub fn reducible(&self) -> Option<Reducible> {
        match self {
            SpectralClassification::NonReducible => None,
            SpectralClassification::ShiftedReducible(r) => Some(r.clone()),
            SpectralClassification::WignerSquare { a, c_shift, v } => Some(Reducible {
                alpha: *a,
                beta: -c_shift,
                xi: 0.0,
                v: v.clone(),
                v_is_real_up_to_phase: true,
            }),
        }
    }

    pub fn is_wigner_square(&self) -> bool {
        matches!(self, SpectralClassification::WignerSquare { .. })
    }
}

pub fn classify_polynomial(spec: &PolynomialSpec) -> SpectralClassification {
    let l = spec.l;
    let mu = spec.mu();
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&i, &j| mu[j].abs().total_cmp(&mu[i].abs()));
    let top = order[0];
    if l > 1 && mu[order[1]].abs() > 1e-10 * mu[top].abs() {
        return SpectralClassification::NonReducible;
    }
    let alpha = mu[top];
    let v: Vec<C64> = (0..l).map(|i| spec.a_vecs[(i, top)]).collect();
    let b = spec.b();
    let bnorm = spec.norm_b();
    let tol = 1e-10 * (bnorm + 1.0);

    let (xi, v, real) = if spec.a_is_real() {
        // rotate to a real unit vector
        let vtv: C64 = v.iter().map(|z| z * z).sum();
        let rot = C64::from_polar(1.0, -vtv.arg() / 2.0);
        let mut u: Vec<f64> = v.iter().map(|z| (z * rot).re).collect();
        let un = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        u.iter_mut().for_each(|x| *x /= un);
        let x: f64 = u.iter().zip(b).map(|(p, q)| p * q).sum();
        let res = u.iter().zip(b).map(|(p, q)| (q - x * p).powi(2)).sum::<f64>().sqrt();
        if res > tol {
            return SpectralClassification::NonReducible;
        }
        let xi = if bnorm <= 1e-10 * spec.norm_a() { 0.0 } else { x.abs() / (2.0 * alpha.abs()) };
        let sign = if xi > 0.0 {
            -(x / alpha).signum()
        } else {
            let big = u.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            big.signum()
        };
        (xi, u.iter().map(|x| C64::new(sign * x, 0.0)).collect::<Vec<_>>(), true)
    } else {
        let re: Vec<f64> = v.iter().map(|z| z.re).collect();
        let im: Vec<f64> = v.iter().map(|z| z.im).collect();
        let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).sum::<f64>();
        let (g11, g12, g22) = (dot(&re, &re), dot(&re, &im), dot(&im, &im));
        let (r1, r2) = (dot(&re, b), dot(&im, b));
        let det = g11 * g22 - g12 * g12;
        let x = (g22 * r1 - g12 * r2) / det;
        let y = (g11 * r2 - g12 * r1) / det;
        let res = (0..l).map(|i| (b[i] - x * re[i] - y * im[i]).powi(2)).sum::<f64>().sqrt();
        if res > tol {
            return SpectralClassification::NonReducible;
        }
        let xi = if bnorm <= 1e-10 * spec.norm_a() { 0.0 } else { x.hypot(y) / (2.0 * alpha.abs()) };
        let v = if xi > 0.0 {
            let s = 2.0 * alpha * xi;
            let phase = C64::new(-x / s, y / s);
            v.iter().map(|z| z * phase).collect()
        } else {
            v
        };
        (xi, v, false)
    };

    if real && xi == 0.0 {
        return SpectralClassification::WignerSquare { a: alpha, c_shift: spec.c(), v };
    }
    SpectralClassification::ShiftedReducible(Reducible {
        alpha,
        beta: alpha * xi * xi - spec.c(),
        xi,
        v,
        v_is_real_up_to_phase: real,
    })
}
