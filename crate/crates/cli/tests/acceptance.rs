//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines come out in order and uncaptured.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use grushin_core::carleman::*;
use grushin_core::control::{lr_null_control, ActiveFirst, ControlProblem, NullControlOptions};
use grushin_core::domain::{build_interval_grid, BoxRegion, Interval, SpaceGrid, TensorGrid};
use grushin_core::evolution::*;
use grushin_core::inverse_source::*;
use grushin_core::linalg::{norm2, CgOptions};
use grushin_core::lr_schedule::*;
use grushin_core::modal::ModalSystem;
use grushin_core::observability::*;
use grushin_core::operator::*;
use grushin_core::spectral::dirichlet_eigenpairs;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn line(a: f64, b: f64, n: usize) -> SpaceGrid {
    SpaceGrid::Line(build_interval_grid(a, b, n).unwrap())
}

fn boxed(x: (f64, f64), y: (f64, f64)) -> BoxRegion {
    BoxRegion::new(vec![Interval::new(x.0, x.1), Interval::new(y.0, y.1)])
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// μ_n of the Dirichlet Laplacian on (0,2).
fn sine_modes(ns: impl Iterator<Item = usize>) -> Vec<(usize, f64)> {
    ns.map(|n| (n, (n as f64 * PI / 2.0).powi(2))).collect()
}

fn ac1_scaling() -> Outcome {
    let g = line(-1.0, 1.0, 2001);
    let b = CoefficientB::constant(&g, 1.0).unwrap();
    let mus: Vec<f64> = (0..9).map(|k| 10f64.powf(2.0 + 0.5 * k as f64)).collect();
    let mut detail = Vec::new();
    for gamma in [0.25, 0.5, 1.0] {
        let pairs = scaling_sweep(&g, gamma, &b, &mus, 1e-10).map_err(|e| e.to_string())?;
        let fit = fit_scaling_law(&pairs, gamma).map_err(|e| e.to_string())?;
        let expected = 1.0 / (1.0 + gamma);
        ensure!(
            (fit.exponent - expected).abs() <= 0.05,
            "γ={gamma}: exponent {} vs {expected}",
            fit.exponent
        );
        detail.push(format!("γ={gamma}: {:.4}", fit.exponent));
    }
    let op = assemble_mode_operator(&g, 1e6, 1.0, &b).unwrap();
    let r = smallest_eigenvalue(&op, 1e-10).unwrap().value / 1e3;
    ensure!((0.9..=1.1).contains(&r), "λ/√μ = {r} at μ=1e6");
    Ok(format!("{}; λ/√μ={r:.4}", detail.join(", ")))
}

fn ac2_modes() -> Outcome {
    let tg = TensorGrid::new(line(-1.0, 1.0, 101), build_interval_grid(0.0, 1.0, 101).unwrap());
    let b = CoefficientB::constant(tg.x(), 1.0).unwrap();
    let basis = dirichlet_eigenpairs(tg.y(), 8).unwrap();
    let full = assemble_full_operator(&tg, 0.5, &b).unwrap();
    let x: Vec<f64> = (0..tg.x().dof_count()).map(|d| tg.x().dof_point(d)[0]).collect();
    let parts: Vec<(usize, Vec<f64>)> = vec![
        (0, x.iter().map(|p| 1.0 - p * p).collect()),
        (1, x.iter().map(|p| (PI * p).sin()).collect()),
        (4, x.iter().map(|p| p * (1.0 - p * p)).collect()),
    ];
    let u0 = basis.synthesize(&tg, parts.iter().map(|(k, v)| (*k, v.as_slice())));
    let (t, dt) = (0.1, 1e-3);
    let tr = solve_full(&full, &u0, &SourceTerm::Zero, t, dt, Scheme::CrankNicolson).unwrap();
    let mut worst: f64 = 0.0;
    for (k, v) in &parts {
        let op = assemble_mode_operator(tg.x(), basis.mu_discrete()[*k], 0.5, &b).unwrap();
        let m = solve_mode(&op, v, &SourceTerm::Zero, t, dt, Scheme::CrankNicolson).unwrap();
        let p = project_trajectory(&tr, &tg, &basis, *k);
        for (a, c) in p.states.iter().zip(&m.states) {
            let d: Vec<f64> = a.iter().zip(c).map(|(x, y)| x - y).collect();
            worst = worst.max(norm2(&d) / norm2(c));
        }
    }
    ensure!(worst <= 1e-8, "max relative deviation {worst:.3e}");
    Ok(format!("max relative deviation {worst:.2e} over {} steps", tr.len()))
}

fn ac3_derivative() -> Outcome {
    let g = line(-1.0, 1.0, 101);
    let b = CoefficientB::constant(&g, 1.0).unwrap();
    let op = assemble_mode_operator(&g, 20.0, 0.5, &b).unwrap();
    let xs: Vec<f64> = (0..op.dim()).map(|d| g.dof_point(d)[0]).collect();
    let u0: Vec<f64> = xs.iter().map(|p| (0.5 * PI * p).cos()).collect();
    let f: Vec<f64> = xs.iter().map(|p| (1.0 - p * p) * (1.0 + p)).collect();
    let mut errs = Vec::new();
    for dt in [2e-2, 1e-2, 5e-3] {
        let steps = step_count(1.0, dt).unwrap();
        let sample = |q: &dyn Fn(f64, f64) -> f64| -> Vec<Vec<f64>> {
            (0..=steps).map(|k| xs.iter().map(|&x| q(k as f64 * dt, x)).collect()).collect()
        };
        let src = SourceTerm::Separated {
            r: sample(&|s, x| 1.0 + (3.0 * s).sin() * x * x),
            dr: Some(sample(&|s, x| 3.0 * (3.0 * s).cos() * x * x)),
            f: f.clone(),
            block: 1,
        };
        let tr = solve_mode(&op, &u0, &src, 1.0, dt, Scheme::CrankNicolson).unwrap();
        let r = derivative_system_residual(&tr, &src, op.matrix(), g.cell_volume()).unwrap();
        errs.push(r.residual / r.reference);
    }
    let order = errs.windows(2).map(|e| (e[0] / e[1]).log2()).fold(f64::INFINITY, f64::min);
    ensure!(order >= 1.8, "observed order {order:.3} from {errs:?}");
    Ok(format!("observed order {order:.3}"))
}

fn ac4_dissipation() -> Outcome {
    let g = line(-1.0, 1.0, 81);
    let b = CoefficientB::constant(&g, 1.0).unwrap();
    let mut detail = Vec::new();
    for gamma in [0.5, 1.0] {
        let op = assemble_mode_operator(&g, 20.0, gamma, &b).unwrap();
        let lam = smallest_eigenvalue(&op, 1e-12).unwrap().value;
        let trials = dissipation_trials(&op, lam, 50, 11, 1.0, 1e-2, Scheme::CrankNicolson).unwrap();
        ensure!(trials.len() == 50, "γ={gamma}: {} trials", trials.len());
        let bad = trials.iter().filter(|t| !t.holds()).count();
        ensure!(bad == 0, "γ={gamma}: {bad} of 50 margins below −ε_disc");
        let min = trials.iter().map(|t| t.margin).fold(f64::INFINITY, f64::min);
        detail.push(format!("γ={gamma}: min margin {min:.3e}"));
    }
    Ok(detail.join(", "))
}

fn ac5_weight() -> Outcome {
    let psi = construct_psi_with(&line(0.0, 1.0, 201), &BoxRegion::interval(0.4, 0.6), PsiShape::Centered).unwrap();
    let closed = closed_form_lambda(psi.m_lower(), psi.m_upper(), 2.0);
    ensure!((closed - 30000.0).abs() < 1e-8, "closed-form λ {closed}");
    let w = calibrate_weight(&psi, 2.0, "search").unwrap();
    let m = verify_weight_inequalities(&w).unwrap();
    ensure!(m.all_nonnegative(), "negative margins at {:?}", m.offending());
    ensure!(w.lambda.ln() <= 30000f64.ln(), "λ_search {} above 30000", w.lambda);
    Ok(format!("λ_search {:.3} ≤ 30000, all margins ≥ 0", w.lambda))
}

/// Frozen 𝒞₁ baselines on the 81-node (−1,1) suite.
const C1_FROZEN: [(f64, f64); 2] = [(0.75, 1.0 / 16.0), (0.25, 0.5)];

fn ac6_carleman() -> Outcome {
    let grid = line(-1.0, 1.0, 81);
    let psi = construct_psi(&grid, &BoxRegion::interval(0.3, 0.7)).unwrap();
    let weight = calibrate_weight(&psi, 2.0, "search").unwrap();
    let omega1 = grid.subdomain_indices(&BoxRegion::interval(0.2, 0.8)).unwrap();
    let mut detail = Vec::new();
    for (gamma, c1) in C1_FROZEN {
        let samples = ratio_sample_suite(&RatioSuiteConfig {
            grid: grid.clone(),
            gamma,
            b: CoefficientB::constant(&grid, 1.0).unwrap(),
            t: 1.0,
            dt: 1e-2,
            mus: vec![1.0, 16.0, 100.0],
            samples: 50,
            seed: 7,
        })
        .unwrap();
        let unit = evaluate_suite(&samples, &weight, &omega1, 1.0, 1.0, 1.0).unwrap();
        let recal = calibrate_c1(&unit);
        ensure!(recal == c1, "γ={gamma}: recalibrated 𝒞₁ {recal} vs frozen {c1}");
        let r = evaluate_suite(&samples, &weight, &omega1, c1, 1.0, 1.0).unwrap();
        let worst = r.iter().filter_map(|r| r.ratio).fold(0.0, f64::max);
        ensure!(worst <= 1.0, "γ={gamma}: worst ratio {worst}");
        let mut homog: f64 = 0.0;
        for smp in samples.iter().take(10) {
            let p = CarlemanParams::new(0.0, 1.0, smp.op.mu(), gamma, 1.0).unwrap();
            let ratio = |traj: &Trajectory| {
                carleman_ratio(traj, &smp.op, &smp.g, &weight, &p, &omega1, c1, OperatorEvaluation::Differenced)
                    .unwrap()
                    .ratio
                    .unwrap()
            };
            let base = ratio(&smp.traj);
            for s in [1e-3, 37.5] {
                let mut scaled = smp.traj.clone();
                scaled.states.iter_mut().flatten().for_each(|v| *v *= s);
                homog = homog.max((ratio(&scaled) - base).abs() / base.abs());
            }
        }
        ensure!(homog <= 1e-12, "γ={gamma}: scaling defect {homog:.3e}");
        detail.push(format!("γ={gamma}: 𝒞₁={c1} worst {worst:.4} scaling {homog:.1e}"));
    }
    Ok(detail.join("; "))
}

fn ac7_schedule() -> Outcome {
    let d = LrDefaults::default();
    let s = build_schedule(d.t, d.gamma, d.rho_fraction, d.depth).unwrap();
    ensure!(s.admissible && 2.0 / (1.0 + s.gamma) - s.rho > 1.0, "default schedule not admissible");
    let defect = (s.truncation_defect() - s.analytic_defect()).abs();
    ensure!(defect <= 1e-12 * s.t, "partition defect {defect:.3e}");
    ensure!(build_schedule(1.0, 1.0, 0.25, 8).is_err(), "γ=1 accepted as admissible");

    let toy = LrSchedule::with_rho(1.0, 1.0, 0.25, 8).unwrap();
    ensure!(!toy.admissible, "toy schedule flagged admissible");
    let st = run_recursion(&toy, RecursionConstants::toy(), 2).unwrap();
    // closed form: 2τ₁ = 1 − 2^{−1/4}, λ(2) = 2 with every constant equal to one
    let b1 = (-(1.0 - 2f64.powf(-0.25))).exp();
    let got_b1 = st.ln_b[0].exp();
    ensure!((got_b1 - b1).abs() <= 1e-6, "B₁ {got_b1} vs {b1}");
    let delta2 = st.ln_delta[1].exp();
    ensure!((delta2 - 7.3022).abs() <= 1e-3, "δ₂ {delta2}");

    let full = run_recursion(&s, RecursionConstants::toy(), d.depth).unwrap();
    let c = assemble_constant(&full).map_err(|e| e.to_string())?;
    let b_tilde = full.ln_b_tilde.last().unwrap().exp();
    ensure!(b_tilde < 1e-6, "B̃_N = {b_tilde:.3e}");
    let a_tail = &full.ln_a[c.n1_a_const - 1..];
    ensure!(a_tail.windows(2).all(|w| w[1] == w[0]), "A_n not constant after N₁ = {}", c.n1_a_const);
    Ok(format!(
        "B₁={got_b1:.7} δ₂={delta2:.5} N₀={} N₁={} B̃_N={b_tilde:.2e}",
        c.n0_delta2, c.n1_a_const
    ))
}

fn obs_config(omega: (f64, f64), gamma: f64, modes: Vec<(usize, f64)>, t: f64) -> ModeObsConfig {
    let g = line(-1.0, 1.0, 101);
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

fn obs_problem(mu: f64, omega: (f64, f64), t: f64) -> ObsProblem {
    let g = line(-1.0, 1.0, 41);
    let b = CoefficientB::constant(&g, 1.0).unwrap();
    let op = assemble_mode_operator(&g, mu, 0.5, &b).unwrap();
    let om = g.subdomain_indices(&BoxRegion::interval(omega.0, omega.1)).unwrap();
    ObsProblem::mode(&op, &om, t, 1e-3).unwrap()
}

fn ac8_observability() -> Outcome {
    for (mu, t) in [(0.0, 0.5), (10.0, 0.25), (400.0, 1.0)] {
        let c = empirical_obs_constant(&obs_problem(mu, (-1.0, 1.0), t), "dense", 1e-10).unwrap().constant;
        ensure!(c <= (1.0 + 1e-9) / t, "ω=Ω, μ={mu}, T={t}: C={c} > 1/T");
    }
    let mut prev = f64::INFINITY;
    for t in [0.2, 0.4, 0.8] {
        let c = empirical_obs_constant(&obs_problem(5.0, (0.5, 0.8), t), "dense", 1e-10).unwrap().constant;
        ensure!(c <= prev, "C increased to {c} at T={t}");
        prev = c;
    }
    let u = uniformity_study(&obs_config((0.5, 0.8), 0.5, sine_modes(1..=20), 0.5)).unwrap();
    ensure!(u.sup.is_finite() && u.tail_nonincreasing, "γ=0.5: sup {} tail flat {}", u.sup, u.tail_nonincreasing);
    let cfg = obs_config((0.7, 0.95), 1.0, sine_modes((8..=40).step_by(4)), 0.5);
    let br = threshold_bracket(&cfg, 0.1, 0.45, 0.2, 1).map_err(|e| e.to_string())?;
    ensure!(br.hi - br.lo <= 0.2 * br.estimate, "bracket [{}, {}] too wide", br.lo, br.hi);
    ensure!(br.slope_lo > 0.0 && br.slope_hi <= 0.0, "slopes {} / {}", br.slope_lo, br.slope_hi);
    Ok(format!(
        "sup_(n≤20) C_n={:.4} at n={}; T̂* ∈ [{:.4}, {:.4}]",
        u.sup, u.argmax_n, br.lo, br.hi
    ))
}

/// Four y-modes of (−1,1)×(0,π) observed on `om`.
fn inverse_system(gamma: f64, om: &BoxRegion) -> (ModalSystem, SpaceGrid) {
    let x = line(-1.0, 1.0, 41);
    let y = build_interval_grid(0.0, PI, 21).unwrap();
    let basis = dirichlet_eigenpairs(&y, 4).unwrap();
    let b = CoefficientB::constant(&x, 1.0).unwrap();
    let g = TensorGrid::new(x.clone(), y);
    (ModalSystem::truncated(&g, gamma, &b, &basis, 4, om).unwrap(), x)
}

fn ratio_study(gamma: f64, om: (f64, f64), t1: f64) -> ModeRatioTable {
    let x = line(-1.0, 1.0, 101);
    uniform_mode_ratio_study(&ModeRatioConfig {
        grid: x.clone(),
        gamma,
        b: CoefficientB::constant(&x, 1.0).unwrap(),
        modes: sine_modes((2..=38).step_by(4)),
        omega1: BoxRegion::interval(om.0, om.1),
        spec: SourceSpec::constant(&x, 0.0, t1, 1e-3, 1.0).unwrap(),
        scheme: Scheme::CrankNicolson,
        estimator: "worst-u0".into(),
    })
    .unwrap()
}

fn ac9_inverse() -> Outcome {
    let (sys, x) = inverse_system(0.5, &boxed((0.5, 0.8), (0.0, PI)));
    let p = InverseProblem::new(sys, SourceSpec::constant(&x, 0.1, 0.5, 1e-2, 1.0).unwrap(), Scheme::CrankNicolson)
        .unwrap();
    let f: Vec<f64> = (0..p.dim())
        .map(|i| {
            let q = x.dof_point(i / 4)[0];
            (1.0 - q * q) * (1.0 + q) / (1.0 + (i % 4) as f64).powi(2)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u0 = random_vec(&mut rng, p.dim());
    let m = forward_measurement(&p, &f, &u0, Noise::None).unwrap();
    let cg = CgOptions {
        tol: 1e-12,
        max_iter: 2000,
    };
    let err = reconstruct_source(&p, &m, &u0, 1e-10, Some(&f), cg).unwrap().rel_error.unwrap();
    ensure!(err <= 1e-3, "inverse-crime error {err:.3e}");

    // chain inequality on every forward run, ratio invariance under f → s·f
    let (sys, x) = inverse_system(0.5, &boxed((0.5, 0.8), (0.5, 2.5)));
    let spec = SourceSpec::from_fn(&x, 0.05, 0.2, 1e-2, |t, q| 1.5 + t * q[0], None).unwrap();
    let p = InverseProblem::new(sys, spec, Scheme::CrankNicolson).unwrap();
    let z = vec![0.0; p.dim()];
    let mut homog: f64 = 0.0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_vec(&mut rng, p.dim());
        let u0 = random_vec(&mut rng, p.dim());
        for start in [&u0, &z] {
            let c = forward_measurement(&p, &f, start, Noise::None).unwrap().chain.unwrap();
            ensure!(c.lhs <= c.rhs * (1.0 + 1e-10), "seed {seed}: chain {} > {}", c.lhs, c.rhs);
        }
        let base = lipschitz_ratio(&p, &f, &forward_measurement(&p, &f, &z, Noise::None).unwrap()).unwrap().unwrap();
        for s in [0.01, 37.5] {
            let fs: Vec<f64> = f.iter().map(|v| v * s).collect();
            let ms = forward_measurement(&p, &fs, &z, Noise::None).unwrap();
            let r = lipschitz_ratio(&p, &fs, &ms).unwrap().unwrap();
            homog = homog.max((r - base).abs() / base);
        }
    }
    ensure!(homog <= 1e-12, "ratio scaling defect {homog:.3e}");

    let half = ratio_study(0.5, (0.5, 0.8), 0.5);
    ensure!(
        half.sup.is_finite() && half.tail_spread(6) < 1.05 && half.growth_slope <= 0.0,
        "γ=0.5 not flat: {:?}",
        half.rows
    );
    let short = ratio_study(1.0, (0.7, 0.95), 0.15);
    let tail: Vec<f64> = short.rows.iter().filter(|r| r.n >= 10).map(|r| r.ratio).collect();
    ensure!(
        short.growth_slope > 0.0 && tail.windows(2).all(|w| w[1] > w[0]),
        "γ=1 not growing: {:?}",
        short.rows
    );
    Ok(format!(
        "crime error {err:.2e}; scaling {homog:.1e}; γ=0.5 spread {:.4}; γ=1 slope {:.3}",
        half.tail_spread(6),
        short.growth_slope
    ))
}

fn ac10_control() -> Outcome {
    const NM: usize = 8;
    let x = line(-1.0, 1.0, 41);
    let y = build_interval_grid(0.0, 1.0, 31).unwrap();
    let basis = dirichlet_eigenpairs(&y, NM).unwrap();
    let b = CoefficientB::constant(&x, 1.0).unwrap();
    let g = TensorGrid::new(x.clone(), y);
    let sys = ModalSystem::truncated(&g, 0.5, &b, &basis, NM, &boxed((0.5, 0.8), (0.2, 0.8))).unwrap();
    let u0: Vec<f64> = (0..sys.dim())
        .map(|i| {
            let q = x.dof_point(i / NM)[0];
            (1.0 - q * q) / (1.0 + (i % NM) as f64)
        })
        .collect();
    let p = ControlProblem::new(sys, 2e-3, Scheme::BackwardEuler).unwrap();
    let sched = build_schedule(1.0, 0.5, 0.75, 5).unwrap();
    let (sig, _, rep) = lr_null_control(&p, &u0, 1.0, &sched, &ActiveFirst, NullControlOptions::default())
        .map_err(|e| e.to_string())?;
    ensure!(rep.final_norm_rel <= 1e-4, "‖u(T)‖/‖u0‖ = {:.3e}", rep.final_norm_rel);
    ensure!(rep.cost.is_finite(), "cost {}", rep.cost);
    let outside = sig.support_violations(p.system());
    ensure!(outside == 0, "{outside} control values outside ω");
    ensure!(
        rep.passive_ok(),
        "passive contraction fails: {:?}",
        rep.passive.iter().find(|c| !c.holds())
    );
    Ok(format!(
        "‖u(T)‖/‖u0‖={:.2e} cost={:.3e} passive checks {}",
        rep.final_norm_rel,
        rep.cost,
        rep.passive.len()
    ))
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn ac11_determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let run = || -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_grushin-lab"))
            .args(["full-suite", "--set", "evolve.trials=10"])
            .env("GRUSHIN_OUTPUT_ROOT", root.path())
            .env_remove("GRUSHIN_WORKERS")
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
        let dir = String::from_utf8(out.stdout).unwrap().lines().last().unwrap().to_string();
        let mut t = tree(Path::new(&dir));
        t.remove(Path::new("timings.json"));
        Ok(t)
    };
    let first = run()?;
    let second = run()?;
    ensure!(first.keys().eq(second.keys()), "file sets differ");
    let differing: Vec<_> = first.iter().filter(|(k, v)| second[*k] != **v).map(|(k, _)| k.display().to_string()).collect();
    ensure!(differing.is_empty(), "differing files: {differing:?}");
    Ok(format!("{} files identical across two full-suite runs", first.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("AC1 dissipation scaling", ac1_scaling),
        ("AC2 mode decomposition", ac2_modes),
        ("AC3 time-derivative system", ac3_derivative),
        ("AC4 dissipation inequality", ac4_dissipation),
        ("AC5 Carleman weight", ac5_weight),
        ("AC6 Carleman estimate", ac6_carleman),
        ("AC7 schedule and recursion", ac7_schedule),
        ("AC8 observability", ac8_observability),
        ("AC9 inverse source", ac9_inverse),
        ("AC10 null control", ac10_control),
        ("AC11 determinism", ac11_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panic: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {name} ({secs:.1}s): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {d}");
            }
        }
    }
    println!("acceptance: {} of 11 passed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
