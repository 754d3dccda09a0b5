use grushin_core::domain::{build_interval_grid, BoxRegion, Interval, SpaceGrid, TensorGrid};
use grushin_core::error::GrushinError;
use grushin_core::observability::*;
use grushin_core::operator::{assemble_mode_operator, CoefficientB};
use grushin_core::spectral::dirichlet_eigenpairs;
use proptest::prelude::*;
use std::f64::consts::PI;

fn line(n: usize) -> SpaceGrid {
    SpaceGrid::Line(build_interval_grid(-1.0, 1.0, n).unwrap())
}

fn mode_problem(n: usize, mu: f64, gamma: f64, omega: (f64, f64), t: f64, dt: f64) -> ObsProblem {
    let g = line(n);
    let b = CoefficientB::constant(&g, 1.0).unwrap();
    let op = assemble_mode_operator(&g, mu, gamma, &b).unwrap();
    let om = g.subdomain_indices(&BoxRegion::interval(omega.0, omega.1)).unwrap();
    ObsProblem::mode(&op, &om, t, dt).unwrap()
}

fn sine_modes(ns: impl Iterator<Item = usize>) -> Vec<(usize, f64)> {
    ns.map(|n| (n, (n as f64 * PI / 2.0).powi(2))).collect()
}

fn config(n: usize, omega: (f64, f64), gamma: f64, modes: Vec<(usize, f64)>, t: f64) -> ModeObsConfig {
    let g = line(n);
    ModeObsConfig {
        b: CoefficientB::constant(&g, 1.0).unwrap(),
        grid: g,
        gamma,
        modes,
        omega1: BoxRegion::interval(omega.0, omega.1),
        t,
        dt: 1e-3,
        strategy: "dense".into(),
        band: DEFAULT_BAND,
        tol: 1e-8,
    }
}

#[test]
fn both_routes_agree_on_a_coarse_grid() {
    // 60-digit evaluation of the full pencil (7 unknowns, no band restriction)
    let reference = 428.995_330_876_185_6;
    let p = mode_problem(9, PI * PI / 4.0, 0.5, (0.5, 0.8), 0.5, 1e-3);
    let d = empirical_obs_constant(&p, "dense", 1e-12).unwrap();
    let c = empirical_obs_constant(&p, "power-cg", 1e-12).unwrap();
    assert!((d.constant - reference).abs() < 1e-9 * reference);
    assert!((c.constant - reference).abs() < 1e-8 * reference);
    assert!(d.residual < 1e-8 && c.residual < 1e-8);
}

#[test]
fn band_limited_baseline() {
    // generalized symmetric eigensolve of the band-12 pencil, formed by dense stepping
    let reference = 100.448_376_6;
    let p = mode_problem(41, PI * PI / 4.0, 0.5, (0.5, 0.8), 0.5, 1e-3);
    let d = empirical_obs_constant(&p, "dense", 1e-12).unwrap();
    assert!((d.constant - reference).abs() < 1e-7 * reference, "{}", d.constant);
    assert!(d.constant >= d.constant * (1.0 - d.residual) - 1e-12);
    assert!(d.residual < 1e-8);
}

#[test]
fn full_observation_bound() {
    for (mu, t) in [(0.0, 0.5), (10.0, 0.25), (400.0, 1.0)] {
        let p = mode_problem(41, mu, 0.5, (-1.0, 1.0), t, 1e-3);
        for s in ["dense", "power-cg"] {
            let c = empirical_obs_constant(&p, s, 1e-10).unwrap().constant;
            assert!(c <= 1.0 / t * (1.0 + 1e-9), "{s}: {c} vs {}", 1.0 / t);
        }
    }
}

#[test]
fn longer_horizon_never_increases_constant() {
    let mut prev = f64::INFINITY;
    for t in [0.2, 0.4, 0.8] {
        let p = mode_problem(61, 5.0, 0.5, (0.5, 0.8), t, 1e-3);
        let c = empirical_obs_constant(&p, "dense", 1e-10).unwrap().constant;
        assert!(c <= prev);
        prev = c;
    }
}

#[test]
fn matrix_free_route_reports_ill_conditioned_gramian() {
    let p = mode_problem(41, PI * PI / 4.0, 0.5, (0.5, 0.8), 0.5, 5e-3);
    let err = empirical_obs_constant(&p, "power-cg", 1e-10).unwrap_err();
    assert!(matches!(err, GrushinError::Singular(_)), "{err}");
}

#[test]
fn unknown_strategy() {
    let p = mode_problem(9, 1.0, 0.5, (0.5, 0.8), 0.5, 1e-2);
    assert!(matches!(
        empirical_obs_constant(&p, "lobpcg", 1e-8),
        Err(GrushinError::UnknownStrategy { .. })
    ));
}

#[test]
fn uniformity_profile() {
    let cfg = config(101, (0.5, 0.8), 0.5, sine_modes(1..=20), 0.5);
    let u = uniformity_study(&cfg).unwrap();
    assert!(u.sup.is_finite());
    assert!(u.argmax_n <= 3);
    assert!(u.tail_nonincreasing);
    let long = uniformity_study(&ModeObsConfig { t: 1.0, ..cfg }).unwrap();
    for (a, b) in u.rows.iter().zip(&long.rows) {
        assert!(b.c <= a.c * (1.0 + 1e-9), "n={}", a.n);
    }
}

#[test]
fn full_x_observation_per_mode() {
    let cfg = config(61, (-1.0, 1.0), 0.5, sine_modes(1..=6), 0.5);
    for r in mode_constants(&cfg, 0.5).unwrap() {
        assert!(r.c <= 2.0 * (1.0 + 1e-9));
    }
}

#[test]
fn minimal_time_threshold() {
    let cfg = config(101, (0.7, 0.95), 1.0, sine_modes((8..=40).step_by(4)), 0.5);
    let rows = minimal_time_study(&cfg, &[0.1, 0.45], 1).unwrap();
    assert!(rows[0].slope > 0.0, "{}", rows[0].slope);
    assert!(rows[1].slope < 0.0, "{}", rows[1].slope);
    let br = threshold_bracket(&cfg, 0.1, 0.45, 0.2, 1).unwrap();
    assert!(br.hi - br.lo <= 0.2 * br.estimate);
    assert!(br.slope_lo > 0.0 && br.slope_hi <= 0.0);
}

#[test]
fn minimal_time_rejects_strip_through_origin() {
    let cfg = config(41, (-0.2, 0.3), 1.0, sine_modes(1..=4), 0.5);
    assert!(minimal_time_study(&cfg, &[0.2], 1).is_err());
}

fn tensor() -> (TensorGrid, CoefficientB, grushin_core::spectral::ModeBasis) {
    let x = line(41);
    let y = build_interval_grid(0.0, PI, 41).unwrap();
    let basis = dirichlet_eigenpairs(&y, 16).unwrap();
    let b = CoefficientB::constant(&x, 1.0).unwrap();
    (TensorGrid::new(x, y), b, basis)
}

fn obs_box(x: (f64, f64), y: (f64, f64)) -> BoxRegion {
    BoxRegion::new(vec![Interval::new(x.0, x.1), Interval::new(y.0, y.1)])
}

#[test]
fn full_system_checks() {
    let (g, b, basis) = tensor();
    let full = full_observability_check(&g, 0.5, &b, &basis, &obs_box((-1.0, 1.0), (0.0, PI)), 0.5, 1e-3, 4, "dense", DEFAULT_BAND)
        .unwrap();
    assert!(full.refined_constant <= 2.0 * (1.0 + 1e-9));
    let strip = full_observability_check(&g, 0.5, &b, &basis, &obs_box((0.5, 0.8), (0.0, PI)), 0.5, 1e-3, 4, "dense", DEFAULT_BAND)
        .unwrap();
    assert!(strip.relative_change < 0.05, "{strip:?}");
    let sub = full_observability_check(&g, 0.5, &b, &basis, &obs_box((0.5, 0.8), (0.5, 2.5)), 0.5, 1e-3, 4, "dense", DEFAULT_BAND)
        .unwrap();
    assert!(strip.refined_constant <= sub.refined_constant * (1.0 + 1e-9));
}

#[test]
fn uniform_bound_fit_is_finite() {
    let cfg = config(61, (0.5, 0.8), 0.5, sine_modes(1..=6), 0.5);
    let ts = [0.3, 0.4, 0.6, 0.8];
    let sups: Vec<f64> = ts
        .iter()
        .map(|&t| uniformity_study(&ModeObsConfig { t, ..cfg.clone() }).unwrap().sup)
        .collect();
    let (k, _, _) = fit_uniform_bound(&ts, &sups, 0.5).unwrap();
    assert!(k.is_finite() && k > 0.0, "{k}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pencil_is_symmetric(seed in 0u64..1000, mu in 0.0f64..50.0) {
        use rand::{Rng, SeedableRng};
        let p = mode_problem(21, mu, 0.5, (0.2, 0.6), 0.2, 1e-2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let st = grushin_core::evolution::Stepper::banded(p.generator(), p.dt(), grushin_core::evolution::Scheme::BackwardEuler).unwrap();
        let (mut bu, mut bv, mut au, mut av) = (vec![0.0; p.dim()], vec![0.0; p.dim()], vec![0.0; p.dim()], vec![0.0; p.dim()]);
        p.apply_b(&st, &u, &mut bu).unwrap();
        p.apply_b(&st, &v, &mut bv).unwrap();
        p.apply_a(&st, &u, &mut au).unwrap();
        p.apply_a(&st, &v, &mut av).unwrap();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let (l, r) = (dot(&bu, &v), dot(&u, &bv));
        prop_assert!((l - r).abs() <= 1e-12 * l.abs().max(r.abs()));
        let (l, r) = (dot(&au, &v), dot(&u, &av));
        prop_assert!((l - r).abs() <= 1e-12 * l.abs().max(r.abs()).max(1e-300));
    }

    #[test]
    fn quotient_is_scale_invariant(s in 1e-3f64..1e3, mu in 0.0f64..50.0) {
        let p = mode_problem(21, mu, 0.5, (0.2, 0.6), 0.2, 1e-2);
        let u: Vec<f64> = (0..p.dim()).map(|i| ((i + 1) as f64).sin()).collect();
        let us: Vec<f64> = u.iter().map(|x| x * s).collect();
        let (a, b) = (p.quotient(&u).unwrap(), p.quotient(&us).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }
}
