use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use quadspec::density::{compute_density, quantiles};
use quadspec::edges::{compute_edges, compute_s_a, find_edge_roots, root_existence_conditions, RootCondition};
use quadspec::harness::{compare_ks, random_hermitian_spec};
use quadspec::linalg::{self, CMat};
use quadspec::mde::{build_linearization, gamma_operator, solve_m_delta, stability_spectrum};
use quadspec::model::{check_hat_a, classify_polynomial, validate_spec, PolynomialSpec, RawSpec, Reducible};
use quadspec::scalar::{evaluate_gamma_h, poles, solve_m};
use quadspec::sim::{full_generalized_resolvent, build_generalized_resolvent, resolvent_trace, sample_wigner, assemble_polynomial, simulate_run, spectrum, Dist, EnsembleConfig};

fn anti() -> PolynomialSpec {
    validate_spec(&RawSpec::real(&[&[0.0, 1.0], &[1.0, 0.0]], &[0.0, 0.0], 0.0)).unwrap()
}

fn complex_a() -> PolynomialSpec {
    let a = vec![
        vec![C64::new(2.0, 0.0), C64::new(1.0, 1.0)],
        vec![C64::new(1.0, -1.0), C64::new(-1.0, 0.0)],
    ];
    validate_spec(&RawSpec::complex(&a, &[0.5, -0.3], 0.2)).unwrap()
}

fn wsq() -> PolynomialSpec {
    validate_spec(&RawSpec::real(&[&[1.0]], &[0.0], 0.0)).unwrap()
}

/// Hermitian `A` with entries in [-2, 2], `b` and `c` in [-1, 1].
fn any_spec() -> impl Strategy<Value = PolynomialSpec> {
    (1usize..=3)
        .prop_flat_map(|l| {
            (
                Just(l),
                prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), l * l),
                prop::collection::vec(-1.0f64..1.0, l),
                -1.0f64..1.0,
                any::<bool>(),
            )
        })
        .prop_filter_map("A too small", |(l, entries, b, c, real)| {
            let a: Vec<Vec<C64>> = (0..l)
                .map(|i| {
                    (0..l)
                        .map(|j| {
                            let (p, q) = entries[i.min(j) * l + i.max(j)];
                            let im = if real || i == j { 0.0 } else if i < j { q } else { -q };
                            C64::new(p, im)
                        })
                        .collect()
                })
                .collect();
            let s = validate_spec(&RawSpec::complex(&a, &b, c)).ok()?;
            (s.norm_a() > 0.1).then_some(s)
        })
}

fn unit_vector(parts: &[(f64, f64)]) -> Option<Vec<C64>> {
    let v: Vec<C64> = parts.iter().map(|&(re, im)| C64::new(re, im)).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    (n > 0.1).then(|| v.iter().map(|z| z / n).collect())
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stieltjes_solution_is_nevanlinna(s in any_spec(), re in -10.0f64..10.0, lg in -3.0f64..1.0) {
        let z = C64::new(re, 10f64.powf(lg));
        let p = solve_m(&s, z).unwrap();
        prop_assert!(p.m.im > 0.0);
        prop_assert!(p.residual <= 1e-11 * (1.0 + z.norm()), "residual {}", p.residual);
    }

    #[test]
    fn anticommutator_reflection(re in -6.0f64..6.0, lg in -3.0f64..1.0) {
        let s = anti();
        let z = C64::new(re, 10f64.powf(lg));
        let m = solve_m(&s, z).unwrap().m;
        let r = solve_m(&s, -z.conj()).unwrap().m;
        prop_assert!((r + m.conj()).norm() <= 1e-9, "{} vs {}", r, -m.conj());
    }

    #[test]
    fn gamma_prime_matches_difference(s in any_spec(), re in -2.0f64..2.0, im in 0.05f64..2.0) {
        let m = C64::new(re, im);
        let d = 1e-6;
        let g = evaluate_gamma_h(&s, m).unwrap();
        let up = evaluate_gamma_h(&s, m + d).unwrap().gamma;
        let dn = evaluate_gamma_h(&s, m - d).unwrap().gamma;
        let fd = (up - dn) / (2.0 * d);
        prop_assert!((fd - g.gamma_prime).norm() <= 1e-6 * (1.0 + g.gamma_prime.norm()));
        prop_assert!((g.h - (1.0 / (m * m) - g.gamma_prime)).norm() <= 1e-12 * (1.0 + g.h.norm()));
    }

    #[test]
    fn derivative_outside_support_is_reciprocal_h(s in any_spec(), gap in 0.2f64..3.0, right in any::<bool>()) {
        let e = compute_edges(&s, &classify_polynomial(&s)).unwrap();
        let x = if right { e.tau_plus + gap } else { e.tau_minus - gap };
        let eta = 1e-9;
        let d = 1e-5;
        let m = solve_m(&s, C64::new(x, eta)).unwrap().m;
        let up = solve_m(&s, C64::new(x + d, eta)).unwrap().m;
        let dn = solve_m(&s, C64::new(x - d, eta)).unwrap().m;
        let fd = (up - dn) / (2.0 * d);
        let h = evaluate_gamma_h(&s, m).unwrap().h;
        prop_assert!(rel(fd, 1.0 / h) <= 1e-5, "{} vs {}", fd, 1.0 / h);
    }

    #[test]
    fn classification_reconstructs_reducible_specs(
        alpha in prop_oneof![-3.0f64..-0.2, 0.2f64..3.0],
        beta in -2.0f64..2.0,
        xi in prop_oneof![Just(0.0), 0.0f64..3.0],
        parts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..=4),
        phi in 0.0f64..std::f64::consts::TAU,
    ) {
        let Some(v) = unit_vector(&parts) else { return Ok(()) };
        let rot = C64::from_polar(1.0, phi);
        let v: Vec<C64> = v.iter().map(|z| z * rot).collect();
        let spec = validate_spec(&Reducible { alpha, beta, xi, v, v_is_real_up_to_phase: false }.to_raw()).unwrap();
        let got = classify_polynomial(&spec).reducible();
        prop_assert!(got.is_some());
        let r = got.unwrap();
        prop_assert!(r.xi >= 0.0);
        prop_assert!(r.reconstruction_error(&spec) <= 1e-8, "error {}", r.reconstruction_error(&spec));
    }

    #[test]
    fn a_plus_a_minus_product(parts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..=5)) {
        let Some(v) = unit_vector(&parts) else { return Ok(()) };
        if let Ok(sm) = compute_s_a(&v) {
            if let (Some(p), Some(m)) = (sm.a_plus, sm.a_minus) {
                prop_assert!((p * m + 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn s_matches_threshold_from_eigendecomposition(
        parts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..=4),
        xi in 0.1f64..2.0,
    ) {
        let Some(v) = unit_vector(&parts) else { return Ok(()) };
        let Ok(sm) = compute_s_a(&v) else { return Ok(()) };
        let r = Reducible { alpha: -1.0, beta: 0.0, xi, v, v_is_real_up_to_phase: false };
        let spec = validate_spec(&r.to_raw()).unwrap();
        // threshold from the eigenpairs of Re A, independent of the closed form
        let t: f64 = spec
            .mu_hat()
            .iter()
            .zip(spec.b_proj())
            .filter(|(&mh, _)| mh < 0.0)
            .map(|(&mh, &bp)| bp / (-mh / spec.norm_a()).powi(3))
            .sum::<f64>()
            .sqrt()
            / (4.0 * spec.norm_a());
        prop_assert!((t - sm.s * xi / 2.0).abs() <= 1e-8 * t.max(1.0), "{} vs {}", t, sm.s * xi / 2.0);
    }

    #[test]
    fn at_most_one_edge_root_per_side(s in any_spec()) {
        prop_assume!(classify_polynomial(&s).reducible().is_none());
        let roots = find_edge_roots(&s, &poles(&s)).unwrap();
        prop_assert!(roots.sign_changes.0 <= 1 && roots.sign_changes.1 <= 1, "{:?}", roots.sign_changes);
    }

    #[test]
    fn hat_a_assertions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_hermitian_spec(&mut rng);
        prop_assert!(check_hat_a(&s).holds(), "{:?}", check_hat_a(&s));
    }

    #[test]
    fn self_energy_is_kraus_sum_and_self_adjoint(
        s in any_spec(),
        entries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16),
    ) {
        prop_assume!(s.a_is_invertible());
        let n = s.l() + 1;
        let r: CMat = faer::Mat::from_fn(n, n, |i, j| C64::new(entries[i * 4 + j].0, entries[i * 4 + j].1));
        let g = gamma_operator(&r, &s);
        let lin = build_linearization(&s).unwrap();
        let mut kraus: CMat = faer::Mat::zeros(n, n);
        for k in &lin.k {
            kraus += &(k * &r) * k;
        }
        prop_assert!(linalg::frobenius((&g - &kraus).as_ref()) <= 1e-12 * (1.0 + linalg::frobenius(g.as_ref())));
        let ga = gamma_operator(&linalg::adjoint(r.as_ref()), &s);
        let diff = &ga - &linalg::adjoint(g.as_ref());
        prop_assert!(linalg::frobenius(diff.as_ref()) <= 1e-12 * (1.0 + linalg::frobenius(g.as_ref())));
    }

    #[test]
    fn dyson_residual_small(re in -5.0f64..5.0, lg in -3.0f64..0.0, delta in 0.0f64..1.0) {
        let sol = solve_m_delta(C64::new(re, 10f64.powf(lg)), delta, &complex_a()).unwrap();
        prop_assert!(sol.de_residual.unwrap() <= 1e-9, "{:?}", sol.de_residual);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn ward_identity_and_trace_block(seed in any::<u64>(), re in -3.0f64..3.0, lg in -1.0f64..0.0) {
        let s = complex_a();
        let n = 64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<CMat> = (0..s.l()).map(|_| sample_wigner(n, Dist::GaussianComplex, &mut rng)).collect();
        let z = C64::new(re, 10f64.powf(lg));
        let g = full_generalized_resolvent(&s, &xs, z, 0.0).unwrap();
        let first = g.subcols(0, n).to_owned();
        let lhs = &first * first.adjoint();
        let img = linalg::scale((&g - g.adjoint()).as_ref(), C64::new(0.0, -0.5 / z.im));
        prop_assert!(linalg::frobenius((&lhs - &img).as_ref()) <= 1e-8 * linalg::frobenius(img.as_ref()));

        let blocks = build_generalized_resolvent(&s, &xs, z, 0.0).unwrap();
        let (eigs, _) = spectrum(&assemble_polynomial(&s, &xs).unwrap(), false).unwrap();
        prop_assert!((blocks[(0, 0)] - resolvent_trace(&eigs, z)).norm() <= 1e-10);
    }

    #[test]
    fn ks_invariant_under_duplication(seed in any::<u64>(), len in 5usize..200, copies in 2usize..4) {
        use rand::Rng;
        let s = wsq();
        let curve = compute_density(&s, &compute_edges(&s, &classify_polynomial(&s)).unwrap(), 400).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<f64> = (0..len).map(|_| rng.random_range(-0.5..4.5)).collect();
        x.sort_by(f64::total_cmp);
        let mut y: Vec<f64> = x.iter().flat_map(|v| std::iter::repeat_n(*v, copies)).collect();
        y.sort_by(f64::total_cmp);
        let a = compare_ks(&x, &curve).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(a, compare_ks(&y, &curve).unwrap());
    }
}

#[test]
fn mass_is_conserved() {
    let cases = [
        wsq(),
        anti(),
        complex_a(),
        validate_spec(&RawSpec::real(&[&[1.0]], &[2.0], 0.0)).unwrap(),
        validate_spec(&RawSpec::real(&[&[1.0]], &[4.0], 0.0)).unwrap(),
        validate_spec(&RawSpec::real(&[&[-1.0, 0.5], &[0.5, 2.0]], &[0.3, 0.0], -0.4)).unwrap(),
    ];
    for s in cases {
        let e = compute_edges(&s, &classify_polynomial(&s)).unwrap();
        let c = compute_density(&s, &e, 2000).unwrap();
        assert!((c.mass - 1.0).abs() <= 1e-3, "mass {}", c.mass);
        // support endpoints agree with the norm limit
        let peak = c.rho.iter().cloned().fold(0.0, f64::max);
        let reach = c
            .energies
            .iter()
            .zip(&c.rho)
            .filter(|(_, &r)| r > 1e-8 * peak)
            .map(|(x, _)| x.abs())
            .fold(0.0, f64::max);
        assert!((reach - e.tau_star).abs() <= 2.0 * c.grid_step(), "{reach} vs {}", e.tau_star);
    }
}

#[test]
fn square_root_expansion_at_regular_edges() {
    for s in [anti(), complex_a()] {
        let e = compute_edges(&s, &classify_polynomial(&s)).unwrap();
        let mp = e.m_plus.unwrap();
        let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&k| (solve_m(&s, C64::new(e.tau_plus + k, 1e-9)).unwrap().m - mp).norm() / f64::sqrt(k))
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        assert!(hi <= 2.0 * lo, "{ratios:?}");
    }
}

#[test]
fn imaginary_part_scaling_near_regular_edge() {
    let s = anti();
    let e = compute_edges(&s, &classify_polynomial(&s)).unwrap();
    let t = e.tau_plus;
    let mut ratios = Vec::new();
    for d in [0.0, 1e-4, 1e-2] {
        for eta in [1e-6, 1e-4, 1e-2] {
            let inside = solve_m(&s, C64::new(t - d, eta)).unwrap().m.im / (d + eta).sqrt();
            ratios.push(inside);
            if d > 0.0 {
                let outside = solve_m(&s, C64::new(t + d, eta)).unwrap().m.im / (eta / (d + eta).sqrt());
                ratios.push(outside);
            }
        }
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(hi / lo <= 25.0, "{ratios:?}");
}

#[test]
fn linear_vanishing_away_from_support() {
    let s = complex_a();
    let e = compute_edges(&s, &classify_polynomial(&s)).unwrap();
    for x in [e.tau_plus + 0.1, e.tau_plus + 3.0, e.tau_minus - 0.5, e.tau_minus - 10.0] {
        let a = solve_m(&s, C64::new(x, 1e-4)).unwrap().m.im / 1e-4;
        let b = solve_m(&s, C64::new(x, 1e-6)).unwrap().m.im / 1e-6;
        assert!(a / b <= 2.0 && b / a <= 2.0, "{a} {b}");
    }
}

#[test]
fn cubic_coefficient_is_order_one_near_edge() {
    let s = anti();
    let e = compute_edges(&s, &classify_polynomial(&s)).unwrap();
    let at = |z: C64| stability_spectrum(z, 0.0, &s).unwrap().cubic;
    let edge = at(C64::new(e.tau_plus, 1e-8));
    for z in [C64::new(e.tau_plus - 0.05, 1e-3), C64::new(e.tau_plus + 0.05, 1e-3), C64::new(e.tau_plus, 0.05)] {
        let r = at(z) / edge;
        assert!((0.1..=10.0).contains(&r), "ratio {r} at {z}");
    }
}

#[test]
fn root_verdicts_match_scan_for_negative_rank_one() {
    for (b, expect) in [(0.0, RootCondition::NoRoot { p: 3 }), (4.0, RootCondition::NoRoot { p: 5 }), (6.0, RootCondition::RootExists)] {
        let s = validate_spec(&RawSpec::real(&[&[-1.0]], &[b], 0.0)).unwrap();
        assert_eq!(root_existence_conditions(&s), expect);
        let roots = find_edge_roots(&s, &poles(&s)).unwrap();
        assert_eq!(roots.m_plus.is_some(), expect == RootCondition::RootExists);
    }
}

#[test]
fn quantiles_of_symmetric_law_are_symmetric() {
    let s = anti();
    let c = compute_density(&s, &compute_edges(&s, &classify_polynomial(&s)).unwrap(), 2000).unwrap();
    let q = quantiles(&c, 1000).unwrap();
    let worst = (0..500).map(|k| (q[k] + q[999 - k]).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-4, "{worst}");
    assert!(q.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn simulation_is_reproducible() {
    let s = anti();
    let cfg = EnsembleConfig { edge: Some(3.33), ..EnsembleConfig::new(96, Dist::Rademacher, 11, 4) };
    let probes = [C64::new(0.5, 0.1)];
    let a = simulate_run(&s, &cfg, &probes).unwrap();
    let b = simulate_run(&s, &EnsembleConfig { threads: Some(1), ..cfg.clone() }, &probes).unwrap();
    assert!(a.trials == b.trials, "thread count changed the results");
    let c = simulate_run(&s, &EnsembleConfig { seed: 12, ..cfg }, &probes).unwrap();
    assert_ne!(a.trials[0].eigenvalues, c.trials[0].eigenvalues);
}
