mod common;

use common::*;
use irscr::channels::*;
use irscr::linalg::{c, eigh, extend_phase, CMat, CVec};
use irscr::Error;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn path_loss_at_reference_distance() {
    assert!((path_loss_db(1.0, 3.75, 30.0, 1.0) - 30.0).abs() < 1e-12);
}

#[test]
fn st_irs_link_loss() {
    // 30 + 22·log10(30)
    let pl = path_loss_db(30.0, 2.2, 30.0, 1.0);
    assert!((pl - 62.4966).abs() < 1e-3, "{pl}");
    assert!((pl - 62.50).abs() < 5e-3);
}

#[test]
fn rate_targets() {
    assert_eq!(rate_to_sinr(1.0), 1.0);
    assert_eq!(rate_to_sinr(2.0), 3.0);
    assert_eq!(rate_to_sinr(0.0), 0.0);
}

#[test]
fn power_units() {
    assert!((dbm_to_w(30.0) - 1.0).abs() < 1e-15);
    assert!((dbm_to_w(-80.0) - 1e-11).abs() < 1e-24);
    for x in [-120.0, -80.0, 0.0, 23.5, 40.0] {
        assert!((w_to_dbm(dbm_to_w(x)) - x).abs() < 1e-9);
    }
    let noise = GeometryConfig::default().noise_power_w();
    assert!((w_to_dbm(noise) + 104.0).abs() < 1e-9);
}

#[test]
fn cascade_with_unit_reflections_is_f() {
    let f = random_w(1, 5, 3);
    let ones = CVec::from_element(5, c(1.0, 0.0));
    assert_eq!(cascade(&ones, &f).unwrap(), f);
}

#[test]
fn cascade_of_identity_is_conjugate_diagonal() {
    let g = random_vec(2, 4);
    let out = cascade(&g, &CMat::identity(4, 4)).unwrap();
    let expected = CMat::from_diagonal(&g.map(|z| z.conj()));
    assert_eq!(out, expected);
}

#[test]
fn cascade_matches_loop_oracle() {
    let (n, m_t) = (3, 2);
    let g = random_vec(3, n);
    let f = random_w(4, n, m_t);
    let out = cascade(&g, &f).unwrap();
    for i in 0..n {
        for j in 0..m_t {
            let mut acc = Complex64::new(0.0, 0.0);
            for p in 0..n {
                let d = if p == i { g[p].conj() } else { Complex64::new(0.0, 0.0) };
                acc += d * f[(p, j)];
            }
            assert!((out[(i, j)] - acc).norm() < 1e-15);
        }
    }
}

#[test]
fn cascade_rejects_mismatched_shapes() {
    let err = cascade(&random_vec(1, 3), &random_w(1, 4, 2)).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch(_)));
    let err = combine(&random_w(1, 3, 2), &random_vec(1, 3)).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch(_)));
}

#[test]
fn combine_stacks_conjugated_direct_row() {
    let g_r = random_w(5, 4, 3);
    let g_d = random_vec(6, 3);
    let g = combine(&g_r, &g_d).unwrap();
    assert_eq!(g.shape(), (5, 3));
    assert_eq!(g.rows(0, 4).into_owned(), g_r);
    for j in 0..3 {
        assert_eq!(g[(4, j)], g_d[j].conj());
    }
    let zero = combine(&g_r, &CVec::zeros(3)).unwrap();
    assert!(zero.row(4).iter().all(|z| *z == Complex64::new(0.0, 0.0)));
}

#[test]
fn combined_channel_chain_identity() {
    for seed in 0..20 {
        let (n, m_t, k) = (6, 4, 2);
        let f = random_w(100 + seed, n, m_t);
        let g_refl = random_vec(200 + seed, n);
        let g_d = random_vec(300 + seed, m_t);
        let w = random_w(400 + seed, m_t, k);
        let phi = unit_phases(500 + seed, n);
        let g_r = cascade(&g_refl, &f).unwrap();
        let lhs = extend_phase(&phi).adjoint() * combine(&g_r, &g_d).unwrap() * &w;
        // (g_dᴴ + φᴴ·diag(g_rᴴ)·F)·W written out as sums
        for j in 0..k {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..m_t {
                let mut col = g_d[m].conj();
                for i in 0..n {
                    col += phi[i].conj() * g_refl[i].conj() * f[(i, m)];
                }
                acc += col * w[(m, j)];
            }
            let wn = w.column(j).norm();
            assert!((lhs[j] - acc).norm() <= 1e-12 * wn * (1.0 + acc.norm()), "seed {seed}");
        }
    }
}

fn spec(c_eta: f64, delta_g: f64) -> CorrelationSpec {
    CorrelationSpec { c_eta, delta_g }
}

#[test]
fn uncorrelated_covariance_is_scaled_identity() {
    let fx = fixture(&reference(), 0);
    let s = &fx.scenario;
    let cov = build_covariances(s, &spec(0.0, 0.1), 0).unwrap();
    let gd2 = s.g_d[0].norm_squared();
    let gr2 = s.g_r[0].norm_squared();
    assert!(rel_err(cov.sigma2_gd, 0.01 * gd2) < 1e-12);
    assert!(rel_err(cov.sigma2_gr, 0.01 * gr2) < 1e-12);
    let eye_d = CMat::identity(4, 4) * c(0.01 * gd2, 0.0);
    assert!((&cov.cov_gd - eye_d).norm() <= 1e-12 * 0.01 * gd2);
    let eye_r = CMat::identity(24, 24) * c(0.01 * gr2, 0.0);
    assert!((&cov.cov_gr - eye_r).norm() <= 1e-12 * 0.01 * gr2);
}

#[test]
fn zero_uncertainty_gives_zero_covariance() {
    let fx = fixture(&reference(), 1);
    let cov = build_covariances(&fx.scenario, &spec(0.9, 0.0), 0).unwrap();
    assert!(cov.cov_gd.iter().all(|z| z.norm() == 0.0));
    assert!(cov.cov_gr.iter().all(|z| z.norm() == 0.0));
    let mut r = rng(9);
    let model = UncertaintyModel::Statistical(vec![StatisticalCsi { cov, beta: 0.05 }]);
    for _ in 0..50 {
        let (d, g) = sample_error(&model, 0, 4, 6, &mut r, false);
        assert_eq!(d.norm(), 0.0);
        assert_eq!(g.norm(), 0.0);
    }
}

#[test]
fn two_antenna_correlated_covariance() {
    let mut s = fixture(&reference(), 2).scenario;
    // shrink to M_t = 2 by hand; only g_d enters the direct block
    s.m_t = 2;
    s.g_d = vec![CVec::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.25)])];
    s.g_r = vec![CMat::from_element(s.n, 2, c(0.1, 0.0))];
    s.f = CMat::from_element(s.n, 2, c(1.0, 0.0));
    s.h_d = vec![CVec::from_element(2, c(1.0, 0.0)); s.k];
    let delta = 0.2;
    let cov = build_covariances(&s, &spec(0.9, delta), 0).unwrap();
    // C² = [[1.81, 1.8], [1.8, 1.81]]
    let c2_fro = (2.0 * 1.81f64.powi(2) + 2.0 * 1.8f64.powi(2)).sqrt();
    let gd2 = 1.0 + 4.0 + 0.25 + 0.0625;
    let sigma2 = delta * delta * gd2 * 2f64.sqrt() / c2_fro;
    assert!(rel_err(cov.sigma2_gd, sigma2) < 1e-12);
    let (vals, _) = eigh(&cov.cov_gd);
    assert!(rel_err(vals[0], sigma2 * 0.01) < 1e-9, "{vals:?}");
    assert!(rel_err(vals[1], sigma2 * 1.9 * 1.9) < 1e-12, "{vals:?}");
}

#[test]
fn covariances_are_hermitian_psd() {
    for idx in 0..5 {
        let fx = fixture(&reference(), idx);
        let cov = build_covariances(&fx.scenario, &spec(0.9, 0.05), 0).unwrap();
        for m in [&cov.cov_gd, &cov.cov_gr, &cov.combined()] {
            assert!((m - m.adjoint()).norm() <= 1e-14 * m.norm());
            let (vals, _) = eigh(m);
            assert!(vals[0] >= -1e-10 * vals[vals.len() - 1]);
        }
        // the sampling factor squares to the covariance
        let sq = &cov.sqrt_gr * cov.sqrt_gr.adjoint();
        assert!((sq - &cov.cov_gr).norm() <= 1e-12 * cov.cov_gr.norm());
    }
}

#[test]
fn covariance_spec_is_checked() {
    let fx = fixture(&reference(), 0);
    assert!(build_covariances(&fx.scenario, &spec(1.0, 0.1), 0).is_err());
    assert!(build_covariances(&fx.scenario, &spec(0.5, -0.1), 0).is_err());
    assert!(matches!(
        build_covariances(&fx.scenario, &spec(0.5, 0.1), 3),
        Err(Error::DimensionMismatch(_))
    ));
}

fn scalar_covariance(sigma2_gd: f64, sigma2_gr: f64, m_t: usize, dim_r: usize) -> CsiCovariance {
    let d = CMat::identity(m_t, m_t);
    let r = CMat::identity(dim_r, dim_r);
    CsiCovariance {
        sigma2_gd,
        sigma2_gr,
        sqrt_gd: &d * c(sigma2_gd.sqrt(), 0.0),
        sqrt_gr: &r * c(sigma2_gr.sqrt(), 0.0),
        cov_gd: d * c(sigma2_gd, 0.0),
        cov_gr: r * c(sigma2_gr, 0.0),
    }
}

#[test]
fn radii_vanish_at_full_outage() {
    let cov = scalar_covariance(2.0, 3.0, 4, 24);
    let r = calibrate_bounded_radii(&cov, 1.0).unwrap();
    assert_eq!(r.eps_d, 0.0);
    assert_eq!(r.eps_r, 0.0);
}

#[test]
fn single_antenna_radius_closed_form() {
    let cov = scalar_covariance(2.0, 2.0, 1, 1);
    let r = calibrate_bounded_radii(&cov, 0.05).unwrap();
    let expected = (-2.0 * 0.05f64.ln()).sqrt();
    assert!((r.eps_d - expected).abs() < 1e-9);
    assert!((r.eps_d - 2.4477).abs() < 1e-4);
}

#[test]
fn radii_grow_with_confidence() {
    let cov = scalar_covariance(1.5, 0.5, 4, 24);
    let mut prev = (0.0, 0.0);
    for beta in [1.0, 0.9, 0.5, 0.2, 0.1, 0.05, 0.01, 0.001] {
        let r = calibrate_bounded_radii(&cov, beta).unwrap();
        assert!(r.eps_d >= prev.0 && r.eps_r >= prev.1, "β = {beta}");
        prev = (r.eps_d, r.eps_r);
    }
}

#[test]
fn radii_reject_bad_beta() {
    let cov = scalar_covariance(1.0, 1.0, 2, 4);
    assert!(matches!(calibrate_bounded_radii(&cov, 1.5), Err(Error::InvalidBeta(_))));
    assert!(matches!(calibrate_bounded_radii(&cov, -0.1), Err(Error::InvalidBeta(_))));
    assert!(matches!(calibrate_bounded_radii(&cov, 0.0), Err(Error::Domain(_))));
}

#[test]
fn boundary_draws_lie_on_the_spheres() {
    let region = BoundedRegion { eps_d: 0.3, eps_r: 1.7 };
    let mut r = rng(11);
    for _ in 0..200 {
        let (d, g) = sample_bounded(&region, 4, 6, &mut r, true);
        assert!((d.norm() - 0.3).abs() < 1e-12);
        assert!((g.norm() - 1.7).abs() < 1e-12);
        let (d, g) = sample_bounded(&region, 4, 6, &mut r, false);
        assert!(d.norm() <= 0.3 + 1e-12 && g.norm() <= 1.7 + 1e-12);
    }
}

#[test]
fn interior_draws_fill_the_ball() {
    // radius^dim is uniform for a uniform draw in a ball of real dimension dim
    let region = BoundedRegion { eps_d: 1.0, eps_r: 1.0 };
    let mut r = rng(12);
    let draws = 20_000;
    let mut below_half = 0;
    for _ in 0..draws {
        let (d, _) = sample_bounded(&region, 2, 1, &mut r, false);
        if d.norm().powi(4) < 0.5 {
            below_half += 1;
        }
    }
    let frac = below_half as f64 / draws as f64;
    assert!((frac - 0.5).abs() < 4.0 * (0.25 / draws as f64).sqrt(), "{frac}");
}

#[test]
fn statistical_draws_match_covariance() {
    let mut s = fixture(&reference(), 3).scenario;
    s.m_t = 2;
    s.n = 1;
    s.g_d = vec![CVec::from_vec(vec![c(0.7, -0.2), c(0.1, 0.9)])];
    s.g_r = vec![CMat::from_vec(1, 2, vec![c(0.3, 0.3), c(-1.0, 0.4)])];
    let cov = build_covariances(&s, &spec(0.9, 0.3), 0).unwrap();
    let draws = 100_000;
    let mut r = rng(13);
    let mut acc_d = CMat::zeros(2, 2);
    let mut acc_r = CMat::zeros(2, 2);
    for _ in 0..draws {
        let (d, g) = sample_statistical(&cov, 2, 1, &mut r);
        acc_d += &d * d.adjoint();
        let v = CVec::from_column_slice(g.as_slice());
        acc_r += &v * v.adjoint();
    }
    for (acc, target) in [(acc_d, &cov.cov_gd), (acc_r, &cov.cov_gr)] {
        let est = acc / c(draws as f64, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                let se = (target[(i, i)].re * target[(j, j)].re / draws as f64).sqrt();
                let dev = (est[(i, j)] - target[(i, j)]).norm();
                assert!(dev <= 3.0 * se, "entry ({i},{j}): {dev:e} vs {se:e}");
            }
        }
    }
}

#[test]
fn scenarios_are_seed_deterministic() {
    let setup = reference();
    let a = setup.scenario(42).unwrap();
    let b = setup.scenario(42).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_ne!(a, setup.scenario(43).unwrap());
}

#[test]
fn pr_streams_are_nested_across_l() {
    let mut setup = reference();
    setup.geometry.pr_placement = PrPlacement::Disc;
    setup.base.l = 2;
    let two = setup.scenario(5).unwrap();
    setup.base.l = 4;
    let four = setup.scenario(5).unwrap();
    assert_eq!(two.g_d[..], four.g_d[..2]);
    assert_eq!(two.g_r[..], four.g_r[..2]);
    assert_eq!(two.h_d, four.h_d);
    for p in &four.pr_positions {
        assert!((p[0] * p[0] + p[1] * p[1]).sqrt() <= 200.0 + 1e-9);
    }
}

#[test]
fn generated_scenario_shapes_and_placement() {
    let s = fixture(&reference(), 4).scenario;
    s.validate().unwrap();
    assert_eq!(s.f.shape(), (6, 4));
    assert_eq!(s.pr_positions, vec![[0.0, 0.0]]);
    for p in &s.su_positions {
        assert!(((p[0] - 600.0).powi(2) + p[1].powi(2)).sqrt() <= 20.0 + 1e-9);
    }
    assert_eq!(s.gamma, vec![3.0, 3.0]);
    assert!((s.it_threshold[0] - 1e-11).abs() < 1e-24);
    // cascaded PR channel has the F factor
    let refl: Vec<Complex64> = (0..6).map(|i| (s.g_r[0][(i, 0)] / s.f[(i, 0)]).conj()).collect();
    let rebuilt = cascade(&CVec::from_vec(refl), &s.f).unwrap();
    assert!((rebuilt - &s.g_r[0]).norm() <= 1e-12 * s.g_r[0].norm());
}

#[test]
fn generator_rejects_bad_input() {
    let g = GeometryConfig::default();
    assert!(generate_scenario(&g, 0, 6, 2, 1, &[2.0, 2.0], &[1e-11], 0).is_err());
    assert!(generate_scenario(&g, 4, 6, 2, 1, &[2.0], &[1e-11], 0).is_err());
    assert!(generate_scenario(&g, 4, 6, 1, 1, &[-1.0], &[1e-11], 0).is_err());
    let mut same = g.clone();
    same.irs = same.st;
    assert!(matches!(
        generate_scenario(&same, 4, 6, 1, 1, &[2.0], &[1e-11], 0),
        Err(Error::InvalidGeometry(_))
    ));
}

#[test]
fn scenario_json_round_trip() {
    let s = fixture(&reference(), 6).scenario;
    let text = serde_json::to_string(&s).unwrap();
    let back: Scenario = serde_json::from_str(&text).unwrap();
    assert_eq!(s, back);
}

#[test]
fn correlation_matrix_entries() {
    let m = correlation_matrix(4, 0.5);
    let expected = DMatrix::from_fn(4, 4, |i: usize, j: usize| 0.5f64.powi((i as i32 - j as i32).abs()));
    assert_eq!(m, expected);
}

proptest! {
    #[test]
    fn path_loss_increases_with_distance(d in 1.0f64..1000.0, step in 1e-3f64..100.0, alpha in 1.5f64..4.0) {
        prop_assert!(path_loss_db(d + step, alpha, 30.0, 1.0) > path_loss_db(d, alpha, 30.0, 1.0));
    }

    #[test]
    fn child_seeds_are_distinct(master in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assume!(a != b);
        prop_assert_ne!(child_seed(master, a), child_seed(master, b));
    }
}
