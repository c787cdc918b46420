//! Verification suites comparing the analytic side with simulation, and the
//! append-only run store.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density::{compute_density, fit_edge_exponent, quantiles, slope, DensityCurve, Side};
use crate::edges::{check_quad_stab, compute_edges, EdgeReport};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mde::{self, gamma_operator, m_delta_derivative, solve_m_delta, stability_spectrum_unchecked};
use crate::model::{check_hat_a, classify_polynomial, validate_spec, PolynomialSpec, RawSpec, SpectralClassification};
use crate::scalar::solve_m;
use crate::sim::{simulate_run, Dist, EnsembleConfig};

/// Kolmogorov–Smirnov distance between a sorted sample and the curve's CDF.
pub fn compare_ks(empirical: &[f64], curve: &DensityCurve) -> Result<f64> {
    if empirical.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    if (curve.mass - 1.0).abs() > 1e-3 {
        return Err(Error::MassDeficit { mass: curve.mass });
    }
    let n = empirical.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < empirical.len() {
        let x = empirical[i];
        let mut j = i;
        while j < empirical.len() && empirical[j] == x {
            j += 1;
        }
        let f = curve.cdf(x);
        d = d.max((f - i as f64 / n).abs()).max((f - j as f64 / n).abs());
        i = j;
    }
    Ok(d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub pass: bool,
}

impl Criterion {
    fn at_most(name: impl Into<String>, value: f64, max: f64) -> Self {
        Criterion { name: name.into(), value, threshold: format!("<= {max:e}"), pass: value <= max }
    }

    fn at_least(name: impl Into<String>, value: f64, min: f64) -> Self {
        Criterion { name: name.into(), value, threshold: format!(">= {min}"), pass: value >= min }
    }

    fn within(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Criterion {
            name: name.into(),
            value,
            threshold: format!("{target} +- {tol}"),
            pass: (value - target).abs() <= tol,
        }
    }

    fn between(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Criterion { name: name.into(), value, threshold: format!("in [{lo}, {hi}]"), pass: value >= lo && value <= hi }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub suite: String,
    pub spec_hash: String,
    pub ks_distance: Option<f64>,
    pub norm_errors: Vec<(usize, f64)>,
    pub norm_scaling_slope: Option<f64>,
    pub edge_exponent_left: Option<f64>,
    pub edge_exponent_right: Option<f64>,
    pub criteria: Vec<Criterion>,
    pub notes: Vec<String>,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Density,
    Norm,
    Deloc,
    Rigidity,
    Stability,
    Lemmas,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "density" => Suite::Density,
            "norm" => Suite::Norm,
            "deloc" => Suite::Deloc,
            "rigidity" => Suite::Rigidity,
            "stability" => Suite::Stability,
            "lemmas" => Suite::Lemmas,
            _ => return Err(Error::InvalidInput(format!("unknown suite {s:?}"))),
        })
    }
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Density => "density",
            Suite::Norm => "norm",
            Suite::Deloc => "deloc",
            Suite::Rigidity => "rigidity",
            Suite::Stability => "stability",
            Suite::Lemmas => "lemmas",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub n_list: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub dist: Dist,
    /// Imaginary part used by the stability suite.
    pub eta: f64,
    pub n_grid: usize,
    pub quad_stab_samples: usize,
    pub hat_a_samples: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            n_list: vec![1024],
            trials: 20,
            seed: 0,
            threads: None,
            dist: Dist::GaussianComplex,
            eta: 1e-10,
            n_grid: 2000,
            quad_stab_samples: 100_000,
            hat_a_samples: 1000,
        }
    }
}

/// Analytic objects shared by the suites.
pub struct Analysis {
    pub spec: PolynomialSpec,
    pub classification: SpectralClassification,
    pub edges: EdgeReport,
}

impl Analysis {
    pub fn new(spec: PolynomialSpec) -> Result<Self> {
        let classification = classify_polynomial(&spec);
        let edges = compute_edges(&spec, &classification)?;
        Ok(Analysis { spec, classification, edges })
    }

    pub fn density(&self, n_grid: usize) -> Result<DensityCurve> {
        compute_density(&self.spec, &self.edges, n_grid)
    }
}

/// Hex SHA-256 of the spec JSON with keys in canonical order.
pub fn spec_hash(json: &str) -> Result<String> {
    let value: serde_json::Value = serde_json::from_str(json)?;
    let canonical = serde_json::to_string(&value)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn run_suite(spec: Option<&PolynomialSpec>, suite: Suite, opts: &VerifyOptions) -> Result<ComparisonReport> {
    let mut report = ComparisonReport { suite: suite.name().into(), ..Default::default() };
    if suite == Suite::Lemmas {
        lemma_suite(opts, &mut report)?;
        return Ok(report);
    }
    let spec = spec.ok_or_else(|| Error::InvalidInput(format!("suite {} needs a spec", suite.name())))?;
    report.spec_hash = spec_hash(&serde_json::to_string(&spec.to_raw())?)?;
    let an = Analysis::new(spec.clone())?;
    match suite {
        Suite::Density => density_suite(&an, opts, &mut report)?,
        Suite::Norm => norm_suite(&an, opts, &mut report)?,
        Suite::Deloc => deloc_suite(&an, opts, &mut report)?,
        Suite::Rigidity => rigidity_suite(&an, opts, &mut report)?,
        Suite::Stability => stability_suite(&an, opts, &mut report)?,
        Suite::Lemmas => unreachable!(),
    }
    Ok(report)
}

fn config(opts: &VerifyOptions, n: usize) -> EnsembleConfig {
    EnsembleConfig { threads: opts.threads, ..EnsembleConfig::new(n, opts.dist, opts.seed, opts.trials) }
}

fn first_n(opts: &VerifyOptions) -> usize {
    opts.n_list.first().copied().unwrap_or(1024)
}

/// Passing trials needed out of `trials`: 18 of 20 and the same ratio elsewhere.
pub fn required_passes(trials: usize) -> usize {
    (trials * 9).div_ceil(10)
}

fn density_suite(an: &Analysis, opts: &VerifyOptions, report: &mut ComparisonReport) -> Result<()> {
    let curve = an.density(opts.n_grid)?;
    report.criteria.push(Criterion::within("mass", curve.mass, 1.0, 1e-3));
    for (side, predicted) in [(Side::Left, an.edges.left_exponent), (Side::Right, an.edges.right_exponent)] {
        let fit = fit_edge_exponent(&curve, side)?;
        match side {
            Side::Left => report.edge_exponent_left = Some(fit),
            Side::Right => report.edge_exponent_right = Some(fit),
        }
        let name = format!("{}_exponent", if side == Side::Left { "left" } else { "right" });
        report.criteria.push(Criterion::within(name, fit, predicted, 0.05));
    }
    let sim = simulate_run(&an.spec, &config(opts, first_n(opts)), &[])?;
    let ks = compare_ks(&sim.pooled(), &curve)?;
    report.ks_distance = Some(ks);
    report.criteria.push(Criterion::at_most("ks_distance", ks, 0.05));
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn norm_suite(an: &Analysis, opts: &VerifyOptions, report: &mut ComparisonReport) -> Result<()> {
    if opts.n_list.len() < 3 {
        return Err(Error::InvalidInput("the norm suite needs at least three values of N".into()));
    }
    let tau = an.edges.tau_star;
    for &n in &opts.n_list {
        let sim = simulate_run(&an.spec, &config(opts, n), &[])?;
        let err = median(sim.norms().iter().map(|x| (x - tau).abs()).collect());
        report.norm_errors.push((n, err));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) =
        report.norm_errors.iter().map(|&(n, e)| ((n as f64).ln(), e.ln())).unzip();
    let s = slope(&lx, &ly);
    report.norm_scaling_slope = Some(s);
    report.criteria.push(Criterion::between("norm_scaling_slope", s, -0.85, -0.50));
    Ok(())
}

fn deloc_suite(an: &Analysis, opts: &VerifyOptions, report: &mut ComparisonReport) -> Result<()> {
    let n = first_n(opts);
    let tau = an.edges.tau_plus;
    let cfg = EnsembleConfig { edge: Some(tau), ..config(opts, n) };
    let sim = simulate_run(&an.spec, &cfg, &[])?;
    let bound = 10.0 * (n as f64).ln() / n as f64;
    let mut worst = 0.0f64;
    let passes = sim
        .trials
        .iter()
        .filter(|t| {
            let m = t
                .edge_vectors
                .iter()
                .filter(|e| (e.lambda - tau).abs() <= 0.1)
                .map(|e| e.max_component2)
                .fold(0.0, f64::max);
            worst = worst.max(m);
            m <= bound
        })
        .count();
    report.notes.push(format!("largest edge eigenvector component^2 {worst:.4e}, bound {bound:.4e}"));
    report.criteria.push(Criterion::at_least(
        "delocalized_trials",
        passes as f64,
        required_passes(sim.trials.len()) as f64,
    ));
    Ok(())
}

fn rigidity_suite(an: &Analysis, opts: &VerifyOptions, report: &mut ComparisonReport) -> Result<()> {
    let n = first_n(opts);
    let nf = n as f64;
    let curve = an.density(opts.n_grid)?;
    let gamma = quantiles(&curve, n)?;
    let eta = nf.powf(-0.5);
    let z = C64::new(an.edges.tau_plus, eta);
    let m = solve_m(&an.spec, z)?.m;
    let sim = simulate_run(&an.spec, &config(opts, n), &[z])?;
    let rigid_bound = 10.0 * nf.powf(-2.0 / 3.0 + 0.1);
    let law_bound = 10.0 * nf.powf(0.05) / (nf * eta);
    let mut rigid = 0;
    let mut law = 0;
    for t in &sim.trials {
        let dev = (0..3).map(|k| (t.eigenvalues[n - 1 - k] - gamma[n - 1 - k]).abs()).fold(0.0, f64::max);
        if dev <= rigid_bound {
            rigid += 1;
        }
        if (t.resolvent_traces[0].g - m).norm() <= law_bound {
            law += 1;
        }
    }
    let need = required_passes(sim.trials.len()) as f64;
    report.criteria.push(Criterion::at_least("rigid_trials", rigid as f64, need));
    report.criteria.push(Criterion::at_least("trace_local_law_trials", law as f64, need));
    Ok(())
}

fn stability_suite(an: &Analysis, opts: &VerifyOptions, report: &mut ComparisonReport) -> Result<()> {
    let spec = &an.spec;
    let e = &an.edges;
    if spec.a_is_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let (z, delta) = random_z_delta(&mut rng, e);
            let sol = solve_m_delta(z, delta, spec)?;
            worst = worst.max(sol.de_residual.unwrap_or(f64::INFINITY));
        }
        report.criteria.push(Criterion::at_most("dyson_residual", worst, 1e-9));
    } else {
        report.notes.push("A is singular: Dyson residual not checked".into());
    }
    if an.classification.is_wigner_square() {
        report.notes.push("shifted Wigner square: critical eigenvalue is double".into());
    }
    let kappas = [1e-2, 1e-4, 1e-6];
    let edges = [
        ("right", e.right_edge_regular, e.tau_plus, 1.0),
        ("left", e.left_edge_regular, e.tau_minus, -1.0),
    ];
    for (name, regular, tau, dir) in edges {
        if !regular {
            continue;
        }
        let mut betas = Vec::new();
        for k in kappas {
            let rep = stability_spectrum_unchecked(C64::new(tau + dir * k, opts.eta), 0.0, spec)?;
            betas.push(rep.beta.norm());
        }
        let lx: Vec<f64> = kappas.iter().map(|k| k.ln()).collect();
        let ly: Vec<f64> = betas.iter().map(|b| b.ln()).collect();
        report.criteria.push(Criterion::within(format!("{name}_beta_slope"), slope(&lx, &ly), 0.5, 0.05));

        let z = C64::new(tau, opts.eta);
        let rep = stability_spectrum_unchecked(z, 0.0, spec)?;
        let m = solve_m(spec, z)?.m;
        let mp = m_delta_derivative(spec, m, z.im, 0.0);
        if rep.multiplicity == 1 {
            report.criteria.push(Criterion::at_most(
                format!("{name}_edge_b_alignment"),
                mde::distance_from_span(&rep.b, &mp),
                1e-4,
            ));
            let gb = gamma_operator(&rep.b, spec);
            report.criteria.push(Criterion::at_most(
                format!("{name}_edge_l_alignment"),
                mde::distance_from_span(&rep.l, &gb),
                1e-4,
            ));
        } else {
            // M′ must lie in the critical eigenspace
            let op = mde::stability_matrix(&solve_m_delta(z, 0.0, spec)?.m, spec.b());
            let n = mp.nrows();
            let v: Vec<C64> = (0..n * n).map(|i| mp[(i / n, i % n)]).collect();
            let mut res = 0.0;
            for i in 0..n * n {
                let mut acc = -rep.beta * v[i];
                for (j, vj) in v.iter().enumerate() {
                    acc += op[(i, j)] * vj;
                }
                res += acc.norm_sqr();
            }
            let rel = res.sqrt() / linalg::frobenius(mp.as_ref());
            report.criteria.push(Criterion::at_most(format!("{name}_critical_direction"), rel, 1e-3));
        }
    }
    Ok(())
}

fn random_z_delta<R: Rng>(rng: &mut R, e: &EdgeReport) -> (C64, f64) {
    let re = rng.random_range(e.tau_minus - 1.0..e.tau_plus + 1.0);
    let im = 10f64.powf(rng.random_range(-3.0..0.0));
    (C64::new(re, im), rng.random_range(0.0..=1.0))
}

/// A random admissible tuple meeting the hypothesis of the quad-stab
/// inequality.
pub fn random_quad_stab_tuple<R: Rng>(rng: &mut R) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    loop {
        let n = rng.random_range(1..=4);
        let k = rng.random_range(0..=n);
        let mut y: Vec<f64> = (0..n).map(|_| rng.random_range(-0.999..8.0)).collect();
        y.sort_by(|a, b| b.total_cmp(a));
        let sy: f64 = y.iter().map(|&t| (t / (t + 1.0)).powi(2)).sum();
        if sy > 1.0 {
            continue;
        }
        let top = y[0];
        let mut yh: Vec<f64> = (0..k).map(|_| rng.random_range(-0.4999..=top.max(-0.4999))).collect();
        yh.sort_by(|a, b| b.total_cmp(a));
        let mut cs: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
        let t: f64 = yh.iter().zip(&cs).map(|(&h, &cj)| cj * cj / (2.0 * h + 1.0).powi(3)).sum();
        if k > 0 {
            let budget = (1.0 - sy) * if rng.random_bool(0.2) { 1.0 } else { rng.random::<f64>() };
            let f = (budget / t).sqrt();
            cs.iter_mut().for_each(|x| *x *= f);
        }
        if check_quad_stab(&y, &yh, &cs).is_some() {
            return (y, yh, cs);
        }
    }
}

/// Random Hermitian spec; about half the draws have rank one.
pub fn random_hermitian_spec<R: Rng>(rng: &mut R) -> PolynomialSpec {
    let l = rng.random_range(1..=6);
    let rank_one = rng.random_bool(0.5);
    let mut g = || C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    let rows: Vec<Vec<C64>> = if rank_one {
        let v: Vec<C64> = (0..l).map(|_| g()).collect();
        (0..l).map(|i| (0..l).map(|j| v[i] * v[j].conj()).collect()).collect()
    } else {
        let m: Vec<Vec<C64>> = (0..l).map(|_| (0..l).map(|_| g()).collect()).collect();
        (0..l).map(|i| (0..l).map(|j| (m[i][j] + m[j][i].conj()) * 0.5).collect()).collect()
    };
    validate_spec(&RawSpec::complex(&rows, &vec![0.0; l], 0.0)).expect("random Hermitian matrix is valid")
}

fn lemma_suite(opts: &VerifyOptions, report: &mut ComparisonReport) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut bad = 0;
    for _ in 0..opts.quad_stab_samples {
        let (y, yh, cs) = random_quad_stab_tuple(&mut rng);
        if check_quad_stab(&y, &yh, &cs) == Some(false) {
            bad += 1;
        }
    }
    report.criteria.push(Criterion::at_most("quad_stab_violations", bad as f64, 0.0));
    let mut bad = 0;
    for _ in 0..opts.hat_a_samples {
        if !check_hat_a(&random_hermitian_spec(&mut rng)).holds() {
            bad += 1;
        }
    }
    report.criteria.push(Criterion::at_most("hat_a_violations", bad as f64, 0.0));
    report.notes.push(format!(
        "{} quad-stab tuples, {} Hermitian matrices",
        opts.quad_stab_samples, opts.hat_a_samples
    ));
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub timestamp: u64,
    pub spec_hash: String,
    pub command: String,
    pub config: serde_json::Value,
    pub summary: serde_json::Value,
}

impl RunRecord {
    pub fn now(spec_hash: String, command: String, config: serde_json::Value, summary: serde_json::Value) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        RunRecord { timestamp, spec_hash, command, config, summary }
    }
}

pub fn append_record(path: &Path, record: &RunRecord) -> Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(record)?)?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
