//! Wigner ensembles, assembly of `q(X)` and per-trial spectral statistics.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::mde::{a_delta, build_linearization};
use crate::model::PolynomialSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dist {
    GaussianComplex,
    GaussianReal,
    Rademacher,
}

impl FromStr for Dist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-complex" => Ok(Dist::GaussianComplex),
            "gaussian-real" => Ok(Dist::GaussianReal),
            "rademacher" => Ok(Dist::Rademacher),
            _ => Err(Error::InvalidInput(format!("unknown distribution {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n: usize,
    pub dist: Dist,
    pub seed: u64,
    pub trials: usize,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    /// Collect eigenvectors for the eigenpairs nearest this energy.
    pub edge: Option<f64>,
}

impl EnsembleConfig {
    pub fn new(n: usize, dist: Dist, seed: u64, trials: usize) -> Self {
        EnsembleConfig { n, dist, seed, trials, threads: None, edge: None }
    }
}

/// Independent stream for one trial.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn diag_entry<R: Rng>(dist: Dist, rng: &mut R) -> f64 {
    match dist {
        Dist::Rademacher => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        _ => rng.sample(StandardNormal),
    }
}

fn off_entry<R: Rng>(dist: Dist, rng: &mut R) -> C64 {
    match dist {
        Dist::GaussianComplex => {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        }
        Dist::GaussianReal => c(rng.sample(StandardNormal)),
        Dist::Rademacher => c(diag_entry(dist, rng)),
    }
}

/// Hermitian `n×n` Wigner matrix with entry variance `1/n`.
pub fn sample_wigner<R: Rng>(n: usize, dist: Dist, rng: &mut R) -> CMat {
    let s = 1.0 / (n as f64).sqrt();
    let mut w = Mat::zeros(n, n);
    for i in 0..n {
        w[(i, i)] = c(s * diag_entry(dist, rng));
        for j in i + 1..n {
            let z = off_entry(dist, rng) * s;
            w[(i, j)] = z;
            w[(j, i)] = z.conj();
        }
    }
    w
}

/// `Q = Σ X_i A_ij X_j + Σ b_i X_i + cI`.
pub fn assemble_polynomial(spec: &PolynomialSpec, xs: &[CMat]) -> Result<CMat> {
    let l = spec.l();
    if xs.len() != l {
        return Err(Error::DimensionMismatch(format!("expected {l} matrices, got {}", xs.len())));
    }
    let n = xs[0].nrows();
    if xs.iter().any(|x| x.nrows() != n || x.ncols() != n) {
        return Err(Error::DimensionMismatch("matrices differ in size".into()));
    }
    let a = spec.a();
    // P = Σ_i X_i (A_ii/2 X_i + Σ_{j>i} A_ij X_j), then Q = P + P* + ...
    let mut p: CMat = Mat::zeros(n, n);
    for i in 0..l {
        let coef: Vec<(usize, C64)> = (i..l)
            .map(|j| (j, if j == i { a[(i, i)] * 0.5 } else { a[(i, j)] }))
            .filter(|(_, v)| *v != c(0.0))
            .collect();
        if coef.is_empty() {
            continue;
        }
        let y = Mat::from_fn(n, n, |r, s| coef.iter().map(|&(j, v)| v * xs[j][(r, s)]).sum::<C64>());
        p += &xs[i] * &y;
    }
    let mut q = &p + p.adjoint();
    for (i, &bi) in spec.b().iter().enumerate() {
        if bi != 0.0 {
            q += linalg::scale(xs[i].as_ref(), c(bi));
        }
    }
    for k in 0..n {
        q[(k, k)] += spec.c();
    }
    let asym = linalg::frobenius((&q - q.adjoint()).as_ref());
    let norm = linalg::frobenius(q.as_ref());
    if asym > 1e-10 * norm {
        return Err(Error::AsymmetryBlowup { ratio: asym / norm });
    }
    Ok(Mat::from_fn(n, n, |i, j| (q[(i, j)] + q[(j, i)].conj()) * 0.5))
}

/// Ascending eigenvalues and, on request, eigenvectors as columns.
pub fn spectrum(q: &CMat, vectors: bool) -> Result<(Vec<f64>, Option<CMat>)> {
    if vectors {
        let (vals, vecs) = linalg::hermitian_eigen(q.as_ref())?;
        Ok((vals, Some(vecs)))
    } else {
        let mut vals = linalg::hermitian_eigenvalues(q.as_ref())?;
        vals.sort_by(f64::total_cmp);
        Ok((vals, None))
    }
}

/// `(1/N) Σ 1/(λ_i − z)`.
pub fn resolvent_trace(eigenvalues: &[f64], z: C64) -> C64 {
    let n = eigenvalues.len() as f64;
    eigenvalues.iter().map(|&l| 1.0 / (l - z)).sum::<C64>() / n
}

fn normalized_trace_of_product(x: &CMat, y: &CMat) -> C64 {
    // (1/N) Tr(XY) without forming XY
    let n = x.nrows();
    let mut acc = c(0.0);
    for i in 0..n {
        for k in 0..n {
            acc += x[(i, k)] * y[(k, i)];
        }
    }
    acc / n as f64
}

/// Blockwise normalized traces of the generalized resolvent, via the Schur
/// complement form.
pub fn build_generalized_resolvent(spec: &PolynomialSpec, xs: &[CMat], z: C64, delta: f64) -> Result<CMat> {
    let l = spec.l();
    let n = xs[0].nrows();
    let ad = a_delta(spec.a(), delta, z.im);
    let mut h: CMat = Mat::zeros(n, n);
    for i in 0..l {
        let coef: Vec<(usize, C64)> = (0..l).map(|j| (j, ad[(i, j)])).filter(|(_, v)| *v != c(0.0)).collect();
        if coef.is_empty() {
            continue;
        }
        let y = Mat::from_fn(n, n, |r, s| coef.iter().map(|&(j, v)| v * xs[j][(r, s)]).sum::<C64>());
        h += &xs[i] * &y;
        h += linalg::scale(xs[i].as_ref(), c(spec.b()[i]));
    }
    for k in 0..n {
        h[(k, k)] += spec.c() - z;
    }
    let g = linalg::inverse(h.as_ref());
    let gx: Vec<CMat> = xs.iter().map(|x| &g * x).collect();
    let t: Vec<C64> = gx.iter().map(|y| linalg::trace(y.as_ref()) / n as f64).collect();
    let mut s = vec![vec![c(0.0); l]; l];
    for (j, xj) in xs.iter().enumerate() {
        for (m, ym) in gx.iter().enumerate() {
            s[j][m] = normalized_trace_of_product(ym, xj);
        }
    }
    let mut out = Mat::zeros(l + 1, l + 1);
    out[(0, 0)] = linalg::trace(g.as_ref()) / n as f64;
    for q in 0..l {
        out[(0, q + 1)] = (0..l).map(|i| t[i] * ad[(i, q)]).sum();
        out[(q + 1, 0)] = (0..l).map(|j| ad[(q, j)] * t[j]).sum();
    }
    for i in 0..l {
        for k in 0..l {
            let mut acc = -ad[(i, k)];
            for j in 0..l {
                for m in 0..l {
                    acc += ad[(i, j)] * s[j][m] * ad[(m, k)];
                }
            }
            out[(i + 1, k + 1)] = acc;
        }
    }
    Ok(out)
}

/// The full `(l+1)N` generalized resolvent `(L − zJ − iηδ(I−J))⁻¹` by direct
/// inversion; needs invertible `A`.
pub fn full_generalized_resolvent(spec: &PolynomialSpec, xs: &[CMat], z: C64, delta: f64) -> Result<CMat> {
    let lin = build_linearization(spec)?;
    let n = xs[0].nrows();
    let blocks = spec.l() + 1;
    let big = Mat::from_fn(blocks * n, blocks * n, |r, s| {
        let (p, a) = (r / n, r % n);
        let (q, b) = (s / n, s % n);
        let mut v = if a == b { lin.k0[(p, q)] } else { c(0.0) };
        for (k, x) in lin.k.iter().zip(xs) {
            if k[(p, q)] != c(0.0) {
                v += k[(p, q)] * x[(a, b)];
            }
        }
        if a == b && p == q {
            v -= if p == 0 { z } else { linalg::I * (z.im * delta) };
        }
        v
    });
    Ok(linalg::inverse(big.as_ref()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeVector {
    pub lambda: f64,
    pub max_component2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventSample {
    #[serde(with = "crate::cx::one")]
    pub z: C64,
    #[serde(with = "crate::cx::one")]
    pub g: C64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialResult {
    pub index: usize,
    pub eigenvalues: Vec<f64>,
    pub norm: f64,
    /// Largest squared coordinate of the eigenvector nearest the edge.
    pub edge_vector_max_component2: Option<f64>,
    /// Up to eight eigenpairs nearest the edge.
    pub edge_vectors: Vec<EdgeVector>,
    pub resolvent_traces: Vec<ResolventSample>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationResult {
    pub config: EnsembleConfig,
    pub trials: Vec<TrialResult>,
}

impl SimulationResult {
    /// All eigenvalues of all trials, sorted.
    pub fn pooled(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.trials.iter().flat_map(|t| t.eigenvalues.iter().cloned()).collect();
        all.sort_by(f64::total_cmp);
        all
    }

    pub fn norms(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.norm).collect()
    }
}

/// Fraction of `sorted` not exceeding `x`.
pub fn empirical_cdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64
}

const EDGE_PAIRS: usize = 8;

pub fn run_trial(spec: &PolynomialSpec, cfg: &EnsembleConfig, index: usize, probes: &[C64]) -> Result<TrialResult> {
    let mut rng = trial_rng(cfg.seed, index);
    let xs: Vec<CMat> = (0..spec.l()).map(|_| sample_wigner(cfg.n, cfg.dist, &mut rng)).collect();
    let q = assemble_polynomial(spec, &xs)?;
    drop(xs);
    let (eigenvalues, vecs) = spectrum(&q, cfg.edge.is_some())?;
    let norm = eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut edge_vectors = Vec::new();
    if let (Some(edge), Some(v)) = (cfg.edge, vecs) {
        let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
        order.sort_by(|&i, &j| (eigenvalues[i] - edge).abs().total_cmp(&(eigenvalues[j] - edge).abs()));
        for &k in order.iter().take(EDGE_PAIRS) {
            let max = (0..v.nrows()).map(|a| v[(a, k)].norm_sqr()).fold(0.0, f64::max);
            edge_vectors.push(EdgeVector { lambda: eigenvalues[k], max_component2: max });
        }
    }
    let resolvent_traces = probes
        .iter()
        .map(|&z| ResolventSample { z, g: resolvent_trace(&eigenvalues, z) })
        .collect();
    Ok(TrialResult {
        index,
        edge_vector_max_component2: edge_vectors.first().map(|e| e.max_component2),
        eigenvalues,
        norm,
        edge_vectors,
        resolvent_traces,
    })
}

pub fn simulate_run(spec: &PolynomialSpec, cfg: &EnsembleConfig, probes: &[C64]) -> Result<SimulationResult> {
    if cfg.n < 2 || cfg.trials == 0 {
        return Err(Error::InvalidInput("need N >= 2 and at least one trial".into()));
    }
    // trials already run in parallel; keep each eigensolve sequential
    faer::set_global_parallelism(faer::Par::Seq);
    let work = || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|i| run_trial(spec, cfg, i, probes).map_err(|e| Error::Trial { index: i, source: Box::new(e) }))
            .collect::<Vec<_>>()
    };
    let results = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .install(work),
        None => work(),
    };
    let trials = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SimulationResult { config: cfg.clone(), trials })
}

/// One `lambda` column per trial file.
pub fn write_trial_csv(path: &Path, eigenvalues: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "lambda")?;
    for l in eigenvalues {
        writeln!(out, "{l:.16e}")?;
    }
    Ok(())
}
