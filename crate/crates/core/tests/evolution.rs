use grushin_core::domain::{build_interval_grid, SpaceGrid, TensorGrid};
use grushin_core::evolution::*;
use grushin_core::linalg::norm2;
use grushin_core::operator::*;
use grushin_core::spectral::dirichlet_eigenpairs;
use proptest::prelude::*;

fn mode_op(mu: f64, gamma: f64, n: usize) -> ModeOperator {
    let g = SpaceGrid::Line(build_interval_grid(-1.0, 1.0, n).unwrap());
    let b = CoefficientB::constant(&g, 1.0).unwrap();
    assemble_mode_operator(&g, mu, gamma, &b).unwrap()
}

fn separated(r: impl Fn(f64, f64) -> f64, dr: impl Fn(f64, f64) -> f64, f: Vec<f64>, xs: &[f64], t: f64, dt: f64) -> SourceTerm {
    let steps = step_count(t, dt).unwrap();
    let h = t / steps as f64;
    let sample = |q: &dyn Fn(f64, f64) -> f64| -> Vec<Vec<f64>> {
        (0..=steps).map(|k| xs.iter().map(|&x| q(k as f64 * h, x)).collect()).collect()
    };
    SourceTerm::Separated {
        r: sample(&r),
        dr: Some(sample(&dr)),
        f,
        block: 1,
    }
}

fn xs(op: &ModeOperator) -> Vec<f64> {
    (0..op.dim()).map(|d| op.grid().dof_point(d)[0]).collect()
}

fn order(errs: &[f64]) -> f64 {
    errs.windows(2).map(|e| (e[0] / e[1]).log2()).fold(f64::INFINITY, f64::min)
}

/// Ground-mode coefficient of u' + λu = cos(t), c(0) = 1.
#[test]
fn duhamel_on_ground_mode() {
    let op = mode_op(30.0, 0.5, 81);
    let e = smallest_eigenvalue(&op, 1e-13).unwrap();
    let lam = e.value;
    let x = xs(&op);
    let t = 1.0;
    let exact = (-lam * t).exp() + (lam * t.cos() + t.sin() - lam * (-lam * t).exp()) / (lam * lam + 1.0);
    let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
        .iter()
        .map(|&dt| {
            let g = separated(|s, _| s.cos(), |s, _| -s.sin(), e.vector.clone(), &x, t, dt);
            let tr = solve_mode(&op, &e.vector, &g, t, dt, Scheme::CrankNicolson).unwrap();
            let d: Vec<f64> = tr.final_state().iter().zip(&e.vector).map(|(u, v)| u - exact * v).collect();
            norm2(&d)
        })
        .collect();
    assert!(order(&errs) >= 1.8, "{errs:?}");
    assert!(errs[2] < 1e-5);
}

#[test]
fn full_solve_matches_mode_solves() {
    let tg = TensorGrid::new(
        SpaceGrid::Line(build_interval_grid(-1.0, 1.0, 101).unwrap()),
        build_interval_grid(0.0, 1.0, 101).unwrap(),
    );
    let b = CoefficientB::constant(tg.x(), 1.0).unwrap();
    let basis = dirichlet_eigenpairs(tg.y(), 8).unwrap();
    let full = assemble_full_operator(&tg, 0.5, &b).unwrap();
    let nx = tg.x().dof_count();
    let x: Vec<f64> = (0..nx).map(|d| tg.x().dof_point(d)[0]).collect();
    let parts: Vec<(usize, Vec<f64>)> = vec![
        (0, x.iter().map(|p| 1.0 - p * p).collect()),
        (1, x.iter().map(|p| (std::f64::consts::PI * p).sin()).collect()),
        (4, x.iter().map(|p| p * (1.0 - p * p)).collect()),
    ];
    let u0 = basis.synthesize(&tg, parts.iter().map(|(k, v)| (*k, v.as_slice())));
    let (t, dt) = (0.1, 1e-3);
    let tr = solve_full(&full, &u0, &SourceTerm::Zero, t, dt, Scheme::CrankNicolson).unwrap();
    let wx = tg.x().cell_volume();
    let mut mode_sq = vec![0.0; tr.len()];
    for (k, v) in &parts {
        let op = assemble_mode_operator(tg.x(), basis.mu_discrete()[*k], 0.5, &b).unwrap();
        let m = solve_mode(&op, v, &SourceTerm::Zero, t, dt, Scheme::CrankNicolson).unwrap();
        let p = project_trajectory(&tr, &tg, &basis, *k);
        for (i, (a, c)) in p.states.iter().zip(&m.states).enumerate() {
            let diff: Vec<f64> = a.iter().zip(c).map(|(x, y)| x - y).collect();
            assert!(norm2(&diff) <= 1e-8 * norm2(c), "mode {k} step {i}");
            mode_sq[i] += wx * c.iter().map(|v| v * v).sum::<f64>();
        }
    }
    for (s, m) in tr.states.iter().zip(&mode_sq) {
        assert!((tg.norm_sq(s) / m - 1.0).abs() < 1e-8);
    }
}

#[test]
fn derivative_system_is_second_order() {
    let op = mode_op(20.0, 0.5, 101);
    let x = xs(&op);
    let u0: Vec<f64> = x.iter().map(|p| (0.5 * std::f64::consts::PI * p).cos()).collect();
    let f: Vec<f64> = x.iter().map(|p| (1.0 - p * p) * (1.0 + p)).collect();
    let w = op.grid().cell_volume();
    let errs: Vec<f64> = [2e-2, 1e-2, 5e-3]
        .iter()
        .map(|&dt| {
            let g = separated(|s, x| 1.0 + (3.0 * s).sin() * x * x, |s, x| 3.0 * (3.0 * s).cos() * x * x, f.clone(), &x, 1.0, dt);
            let tr = solve_mode(&op, &u0, &g, 1.0, dt, Scheme::CrankNicolson).unwrap();
            let v = time_derivative_trajectory(&tr, &g, op.matrix());
            assert!(initial_identity_defect(&v, &u0, &g, op.matrix()) < 1e-12);
            let r = derivative_system_residual(&tr, &g, op.matrix(), w).unwrap();
            r.residual / r.reference
        })
        .collect();
    assert!(order(&errs) >= 1.8, "{errs:?}");
}

#[test]
fn eigen_decay_gives_derivative_minus_lambda_u() {
    let op = mode_op(10.0, 0.5, 61);
    let e = smallest_eigenvalue(&op, 1e-13).unwrap();
    let tr = solve_mode(&op, &e.vector, &SourceTerm::Zero, 0.5, 5e-4, Scheme::CrankNicolson).unwrap();
    let v = time_derivative_trajectory(&tr, &SourceTerm::Zero, op.matrix());
    for (vs, us) in v.states.iter().zip(&tr.states) {
        let d: Vec<f64> = vs.iter().zip(us).map(|(a, b)| a + e.value * b).collect();
        assert!(norm2(&d) < 1e-6 * e.value * norm2(us).max(1e-300));
    }
}

#[test]
fn dissipation_inequality_on_random_data() {
    for gamma in [0.5, 1.0] {
        let op = mode_op(20.0, gamma, 81);
        let lam = smallest_eigenvalue(&op, 1e-12).unwrap().value;
        let trials = dissipation_trials(&op, lam, 50, 11, 1.0, 1e-2, Scheme::CrankNicolson).unwrap();
        assert_eq!(trials.len(), 50);
        let bad: Vec<_> = trials.iter().filter(|t| !t.holds()).collect();
        assert!(bad.is_empty(), "γ={gamma}: {bad:?}");
    }
}

#[test]
fn ground_eigenvector_has_positive_margin() {
    let op = mode_op(20.0, 0.5, 81);
    let e = smallest_eigenvalue(&op, 1e-12).unwrap();
    let tr = solve_mode(&op, &e.vector, &SourceTerm::Zero, 1.0, 1e-3, Scheme::CrankNicolson).unwrap();
    let m = dissipation_check(&tr, e.value, &SourceTerm::Zero, op.grid().cell_volume());
    assert!(m.margin > 0.0);
    let z = solve_mode(&op, &vec![0.0; op.dim()], &SourceTerm::Zero, 1.0, 1e-2, Scheme::BackwardEuler).unwrap();
    assert_eq!(dissipation_check(&z, e.value, &SourceTerm::Zero, 1.0).margin, 0.0);
}

#[test]
fn semigroup_restart() {
    let op = mode_op(5.0, 0.75, 61);
    let u0: Vec<f64> = xs(&op).iter().map(|p| (1.0 - p * p).powi(2)).collect();
    let one = solve_mode(&op, &u0, &SourceTerm::Zero, 0.5, 1e-3, Scheme::CrankNicolson).unwrap();
    let two = solve_mode(&op, one.final_state(), &SourceTerm::Zero, 0.5, 1e-3, Scheme::CrankNicolson).unwrap();
    let whole = solve_mode(&op, &u0, &SourceTerm::Zero, 1.0, 1e-3, Scheme::CrankNicolson).unwrap();
    let d: Vec<f64> = two.final_state().iter().zip(whole.final_state()).map(|(a, b)| a - b).collect();
    assert!(norm2(&d) < 1e-12 * norm2(whole.final_state()));
}

proptest! {
    #[test]
    fn solve_is_linear(alpha in -3.0f64..3.0, s in 0u64..1000) {
        let op = mode_op(8.0, 0.5, 41);
        let x = xs(&op);
        let u0: Vec<f64> = x.iter().map(|p| ((s as f64 + 1.0) * p).sin()).collect();
        let u1: Vec<f64> = x.iter().map(|p| 1.0 - p.abs()).collect();
        let f0: Vec<f64> = x.iter().map(|p| p * p).collect();
        let f1: Vec<f64> = x.iter().map(|p| (3.0 * p).cos()).collect();
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| alpha * x + y).collect() };
        let src = |f: Vec<f64>| separated(|t, _| 1.0 + t, |_, _| 1.0, f, &x, 0.3, 1e-2);
        let run = |u: &[f64], g: &SourceTerm| solve_mode(&op, u, g, 0.3, 1e-2, Scheme::CrankNicolson).unwrap();
        let a = run(&u0, &src(f0.clone()));
        let b = run(&u1, &src(f1.clone()));
        let c = run(&mix(&u0, &u1), &src(mix(&f0, &f1)));
        let expect = mix(a.final_state(), b.final_state());
        let d: Vec<f64> = c.final_state().iter().zip(&expect).map(|(p, q)| p - q).collect();
        prop_assert!(norm2(&d) <= 1e-12 * norm2(&expect).max(1.0));
    }

    #[test]
    fn backward_euler_never_grows(seed in 0u64..1000, mu in 0.0f64..200.0) {
        let op = mode_op(mu, 0.5, 41);
        let u0: Vec<f64> = (0..op.dim()).map(|i| (((i as u64 + 3) * (seed + 11)) % 23) as f64 - 11.0).collect();
        let tr = solve_mode(&op, &u0, &SourceTerm::Zero, 0.2, 1e-2, Scheme::BackwardEuler).unwrap();
        let n = tr.norms_sq(1.0);
        prop_assert!(n.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14)));
    }
}
