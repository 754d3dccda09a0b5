use grushin_core::carleman::*;
use grushin_core::domain::{build_interval_grid, BoxRegion, SpaceGrid};
use grushin_core::evolution::{solve_mode, Scheme, SourceTerm};
use grushin_core::operator::{assemble_mode_operator, CoefficientB};
use proptest::prelude::*;

fn unit_line(n: usize) -> SpaceGrid {
    SpaceGrid::Line(build_interval_grid(0.0, 1.0, n).unwrap())
}

fn parabola() -> PsiFunction {
    construct_psi_with(&unit_line(201), &BoxRegion::interval(0.4, 0.6), PsiShape::Centered).unwrap()
}

#[test]
fn parabola_bounds() {
    let psi = parabola();
    let grid = unit_line(201);
    for (i, x) in grid.axes()[0].nodes().iter().enumerate() {
        let v = psi.values()[i];
        assert!((v - x * (1.0 - x)).abs() < 1e-14);
    }
    assert!((psi.m_lower() - 0.2).abs() < 1e-12);
    assert!((psi.m_upper() - 2.0).abs() < 1e-12);
    assert!((psi.sup() - 0.25).abs() < 1e-14);
}

#[test]
fn centered_bump_rejects_offset_region() {
    let r = construct_psi_with(&unit_line(201), &BoxRegion::interval(0.6, 0.8), PsiShape::Centered);
    assert!(r.is_err());
}

#[test]
fn shifted_bump_has_critical_point_in_region() {
    let grid = unit_line(401);
    let psi = construct_psi(&grid, &BoxRegion::interval(0.6, 0.8)).unwrap();
    let (imax, _) = psi
        .values()
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let x = grid.node_point(imax)[0];
    assert!(x > 0.6 && x < 0.8, "max at {x}");
    assert!(psi.m_lower() > 0.0);
}

#[test]
fn closed_form_lambda_for_parabola() {
    assert!((closed_form_lambda(0.2, 2.0, 2.0) - 30000.0).abs() < 1e-8);
    let w = calibrate_weight(&parabola(), 2.0, "closed-form").unwrap();
    assert!((w.lambda - 30000.0).abs() < 1e-8);
    assert!(w.ln_c1.is_finite() && w.ln_c3.is_finite());
}

#[test]
fn search_lambda_is_feasible_and_below_closed_form() {
    let psi = parabola();
    let w = calibrate_weight(&psi, 2.0, "search").unwrap();
    assert!(w.lambda.ln() <= 30000f64.ln());
    let m = verify_weight_inequalities(&w).unwrap();
    assert!(m.all_nonnegative());
    let p = calibrate_weight(&psi, 2.0, "closed-form").unwrap();
    assert!(verify_weight_inequalities(&p).unwrap().all_nonnegative());
}

#[test]
fn boundary_margin_sign() {
    let w = calibrate_weight(&parabola(), 2.0, "search").unwrap();
    let m = weight_margins(&w);
    for (_, v) in &m.boundary {
        assert!(v.sign > 0);
    }
}

#[test]
fn margin_ii_degrades_as_a_approaches_one() {
    let psi = parabola();
    let lam = 100.0;
    let lo = CarlemanWeight::new(&psi, 1.0 + 1e-6, lam, 0.0, 0.0, "fixed").unwrap();
    let hi = CarlemanWeight::new(&psi, 2.0, lam, 0.0, 0.0, "fixed").unwrap();
    let min_ii = |w: &CarlemanWeight| {
        weight_margins(w)
            .form_ii
            .iter()
            .map(|(_, s)| *s)
            .min_by(signed_log_cmp)
            .unwrap()
    };
    assert!(min_ii(&lo).to_f64() < min_ii(&hi).to_f64());
}

#[test]
fn unknown_calibration_mode() {
    assert!(calibrate_weight(&parabola(), 2.0, "magic").is_err());
}

#[test]
fn m_branches() {
    assert_eq!(carleman_m(1.0, 16.0, 0.5, 1.0), 4.0);
    assert!((carleman_m(1.0, 1000.0, 0.4, 1.0) - 100.0).abs() < 1e-9);
    assert_eq!(carleman_m(1.0, 0.0, 0.75, 3.0), 6.0);
    assert_eq!(carleman_m(1.0, 0.0, 0.25, 3.0), 6.0);
    assert_eq!(epsilon_for_gamma(0.75), 1);
    assert_eq!(epsilon_for_gamma(0.25), 0);
    assert_eq!(epsilon_for_gamma(0.5), 1);
}

struct Setup {
    grid: SpaceGrid,
    weight: CarlemanWeight,
    omega1: grushin_core::domain::IndexSet,
}

fn setup(n: usize) -> Setup {
    let grid = SpaceGrid::Line(build_interval_grid(-1.0, 1.0, n).unwrap());
    let psi = construct_psi(&grid, &BoxRegion::interval(0.3, 0.7)).unwrap();
    let weight = calibrate_weight(&psi, 2.0, "search").unwrap();
    let omega1 = grid.subdomain_indices(&BoxRegion::interval(0.2, 0.8)).unwrap();
    Setup { grid, weight, omega1 }
}

#[test]
fn zero_field_is_null() {
    let s = setup(81);
    let b = CoefficientB::constant(&s.grid, 1.0).unwrap();
    let op = assemble_mode_operator(&s.grid, 4.0, 0.75, &b).unwrap();
    let u0 = vec![0.0; s.grid.dof_count()];
    let traj = solve_mode(&op, &u0, &SourceTerm::Zero, 1.0, 0.01, Scheme::CrankNicolson).unwrap();
    let p = CarlemanParams::new(0.0, 1.0, 4.0, 0.75, 1.0).unwrap();
    let r = carleman_ratio(&traj, &op, &SourceTerm::Zero, &s.weight, &p, &s.omega1, 1.0, OperatorEvaluation::Equation)
        .unwrap();
    assert!(r.ratio.is_none());
}

#[test]
fn endpoint_weights_vanish() {
    let s = setup(81);
    let p = CarlemanParams::new(0.0, 1.0, 100.0, 0.75, 1.0).unwrap();
    let dt = 1e-3;
    assert!(ln_weight_at(&s.weight, &p, dt) < (1e-30f64).ln());
    assert!(ln_weight_at(&s.weight, &p, 1.0 - dt) < (1e-30f64).ln());
    assert_eq!(ln_weight_at(&s.weight, &p, 0.0), f64::NEG_INFINITY);
}

fn suite(gamma: f64, grid: &SpaceGrid, samples: usize) -> Vec<RatioSample> {
    let cfg = RatioSuiteConfig {
        grid: grid.clone(),
        gamma,
        b: CoefficientB::constant(grid, 1.0).unwrap(),
        t: 1.0,
        dt: 1e-2,
        mus: vec![1.0, 16.0, 100.0],
        samples,
        seed: 7,
    };
    ratio_sample_suite(&cfg).unwrap()
}

#[test]
fn ratio_homogeneous_of_degree_zero() {
    let s = setup(81);
    let samples = suite(0.75, &s.grid, 2);
    let smp = &samples[0];
    let p = CarlemanParams::new(0.0, 1.0, smp.op.mu(), 0.75, 1.0).unwrap();
    let base = carleman_ratio(&smp.traj, &smp.op, &smp.g, &s.weight, &p, &s.omega1, 1.0, OperatorEvaluation::Differenced)
        .unwrap()
        .ratio
        .unwrap();
    let mut scaled = smp.traj.clone();
    for st in scaled.states.iter_mut() {
        st.iter_mut().for_each(|v| *v *= 37.5);
    }
    let r = carleman_ratio(&scaled, &smp.op, &smp.g, &s.weight, &p, &s.omega1, 1.0, OperatorEvaluation::Differenced)
        .unwrap()
        .ratio
        .unwrap();
    assert!((r - base).abs() <= 1e-12 * base.abs());
}

#[test]
fn calibrated_suite_passes() {
    let s = setup(81);
    for gamma in [0.75, 0.25] {
        let samples = suite(gamma, &s.grid, 12);
        let unit = evaluate_suite(&samples, &s.weight, &s.omega1, 1.0, 1.0, 1.0).unwrap();
        let c1 = calibrate_c1(&unit);
        let r = evaluate_suite(&samples, &s.weight, &s.omega1, c1, 1.0, 1.0).unwrap();
        let worst = r.iter().filter_map(|r| r.ratio).fold(0.0, f64::max);
        assert!(worst <= 1.0, "γ={gamma} c1={c1} worst={worst}");
    }
}

fn smooth_field(op_mu: f64, gamma: f64, n: usize, dt: f64) -> (grushin_core::operator::ModeOperator, grushin_core::evolution::Trajectory) {
    let grid = SpaceGrid::Line(build_interval_grid(-1.0, 1.0, n).unwrap());
    let b = CoefficientB::constant(&grid, 1.0).unwrap();
    let op = assemble_mode_operator(&grid, op_mu, gamma, &b).unwrap();
    let steps = (1.0 / dt).round() as usize;
    let mut traj = solve_mode(
        &op,
        &vec![0.0; grid.dof_count()],
        &SourceTerm::Zero,
        1.0,
        dt,
        Scheme::CrankNicolson,
    )
    .unwrap();
    for k in 0..=steps {
        let t = k as f64 * dt;
        for d in 0..grid.dof_count() {
            let x = grid.dof_point(d)[0];
            traj.states[k][d] = (std::f64::consts::PI * (x + 1.0) / 2.0).sin() * (1.0 + t * t) * (2.0 + x).ln();
        }
    }
    (op, traj)
}

fn mild_weight(grid_n: usize) -> CarlemanWeight {
    let grid = SpaceGrid::Line(build_interval_grid(-1.0, 1.0, grid_n).unwrap());
    let psi = construct_psi(&grid, &BoxRegion::interval(0.3, 0.7)).unwrap();
    CarlemanWeight::new(&psi, 2.0, 1.0, 0.0, 0.0, "fixed").unwrap()
}

#[test]
fn p123_identity_converges() {
    let mut res = Vec::new();
    for (n, dt) in [(41, 0.02), (81, 0.01), (161, 0.005)] {
        let (op, traj) = smooth_field(3.0, 0.75, n, dt);
        let w = mild_weight(n);
        let p = CarlemanParams::new(0.0, 1.0, 3.0, 0.75, 1.0).unwrap().with_m(0.5);
        res.push(decompose_p123(&traj, &op, &w, &p).unwrap().residual);
    }
    assert!(res[2] < res[1] && res[1] < res[0], "{res:?}");
    let order = (res[1] / res[2]).log2();
    assert!(order > 1.5, "{res:?}");
}

#[test]
fn p3_drops_potential_when_eps_is_one() {
    let (op, traj) = smooth_field(0.0, 0.75, 41, 0.02);
    let w = mild_weight(41);
    let p = CarlemanParams::new(0.0, 1.0, 0.0, 0.75, 1.0).unwrap().with_m(0.5);
    let d1 = decompose_p123(&traj, &op, &w, &p).unwrap();
    let (op, traj) = smooth_field(5.0, 0.75, 41, 0.02);
    let d2 = decompose_p123(&traj, &op, &w, &p.clone()).unwrap();
    for (a, b) in d1.p3.iter().zip(&d2.p3) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn beta_positive_in_log_space(lam in 0.5f64..1e5, lo in 0.15f64..0.45) {
        let psi = construct_psi(&unit_line(101), &BoxRegion::interval(lo, lo + 0.3)).unwrap();
        let w = CarlemanWeight::new(&psi, 2.0, lam, 0.0, 0.0, "fixed").unwrap();
        for node in 0..psi.values().len() {
            prop_assert!(w.ln_beta(node).is_finite());
            prop_assert!(w.ln_beta(node) >= w.ln_beta_floor() - 1e-9 * w.ln_beta_floor().abs());
        }
    }
}

