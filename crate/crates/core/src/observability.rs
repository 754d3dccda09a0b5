//! Empirical observability constants: the largest generalized Rayleigh quotient
//! of ‖u(T)‖² against ∫₀ᵀ∫_ω|u|² for backward-Euler runs.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{BoxRegion, IndexSet, SpaceGrid, TensorGrid};
use crate::error::{invalid, GrushinError, Result};
use crate::evolution::{step_count, Scheme, Stepper};
use crate::linalg::{
    conjugate_gradient, dot, linear_fit, norm2, observation_factor, spmv, symmetry_defect, trapezoid_weights,
    CgOptions, SparseMatrix, StreamingQr,
};
use crate::lr_schedule::p_exponent;
use crate::modal::{block_band_basis, ModalSystem};
use crate::operator::{assemble_mode_operator, CoefficientB, ModeOperator};
use crate::registry::Registry;
use crate::spectral::ModeBasis;

/// Pencil data: generator, observation form and time grid.
#[derive(Debug, Clone)]
pub struct ObsProblem {
    generator: SparseMatrix,
    obs: SparseMatrix,
    state_weight: f64,
    t: f64,
    dt: f64,
    steps: usize,
    /// Number of interleaved diagonal blocks of the generator (dof = i·blocks + b).
    blocks: usize,
}

impl ObsProblem {
    /// `obs` must be symmetric PSD; ‖u‖² = state_weight·|u|².
    pub fn new(generator: SparseMatrix, obs: SparseMatrix, state_weight: f64, t: f64, dt: f64) -> Result<Self> {
        let n = generator.rows();
        if generator.cols() != n || obs.rows() != n || obs.cols() != n {
            return Err(invalid("obs", "generator and observation form must be square of equal size"));
        }
        if symmetry_defect(&generator) > 1e-12 || symmetry_defect(&obs) > 1e-12 {
            return Err(invalid("obs", "generator and observation form must be symmetric"));
        }
        let steps = step_count(t, dt)?;
        Ok(Self {
            generator,
            obs,
            state_weight,
            t,
            dt: t / steps as f64,
            steps,
            blocks: 1,
        })
    }

    /// Pencil of a modal system; the band of the dense route is taken per block.
    pub fn from_system(sys: &ModalSystem, t: f64, dt: f64) -> Result<Self> {
        let mut p = Self::new(sys.generator().clone(), sys.obs().clone(), sys.weight(), t, dt)?;
        p.blocks = sys.blocks();
        Ok(p)
    }

    /// Mode system observed on ω₁.
    pub fn mode(op: &ModeOperator, omega: &IndexSet, t: f64, dt: f64) -> Result<Self> {
        Self::from_system(&ModalSystem::mode(op, omega)?, t, dt)
    }

    /// Full system restricted to the first `n_modes` y-modes, in coordinates
    /// c[x·N + n]; the observation couples modes through ∫_{ω₂} φ_n φ_m.
    #[allow(clippy::too_many_arguments)]
    pub fn truncated_full(
        grid: &TensorGrid,
        gamma: f64,
        b: &CoefficientB,
        basis: &ModeBasis,
        n_modes: usize,
        omega: &BoxRegion,
        t: f64,
        dt: f64,
    ) -> Result<Self> {
        Self::from_system(&ModalSystem::truncated(grid, gamma, b, basis, n_modes, omega)?, t, dt)
    }

    pub fn dim(&self) -> usize {
        self.generator.rows()
    }
    pub fn horizon(&self) -> f64 {
        self.t
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn generator(&self) -> &SparseMatrix {
        &self.generator
    }

    fn stepper(&self) -> Result<Stepper> {
        Stepper::banded(&self.generator, self.dt, Scheme::BackwardEuler)
    }

    fn time_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.steps + 1, self.dt)
    }

    /// out = A u = w S^{2K} u.
    pub fn apply_a(&self, stepper: &Stepper, u: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(u);
        for _ in 0..2 * self.steps {
            stepper.propagate(out)?;
        }
        out.iter_mut().for_each(|v| *v *= self.state_weight);
        Ok(())
    }

    /// out = B u = Σ_k w_k S^k Q S^k u (Horner form on the way back).
    pub fn apply_b(&self, stepper: &Stepper, u: &[f64], out: &mut [f64]) -> Result<()> {
        let n = u.len();
        let tw = self.time_weights();
        let mut states = Vec::with_capacity(self.steps + 1);
        let mut cur = u.to_vec();
        states.push(cur.clone());
        for _ in 0..self.steps {
            stepper.propagate(&mut cur)?;
            states.push(cur.clone());
        }
        let mut q = vec![0.0; n];
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in (0..=self.steps).rev() {
            if k < self.steps {
                stepper.propagate(out)?;
            }
            spmv(&self.obs, &states[k], &mut q);
            for i in 0..n {
                out[i] += tw[k] * q[i];
            }
        }
        Ok(())
    }

    /// (A(u0), B(u0)) evaluated by stepping.
    pub fn forms(&self, u0: &[f64]) -> Result<(f64, f64)> {
        let stepper = self.stepper()?;
        let tw = self.time_weights();
        let mut u = u0.to_vec();
        let mut q = vec![0.0; u.len()];
        let mut b = 0.0;
        for (k, wk) in tw.iter().enumerate() {
            if k > 0 {
                stepper.propagate(&mut u)?;
            }
            spmv(&self.obs, &u, &mut q);
            b += wk * dot(&u, &q);
        }
        Ok((self.state_weight * dot(&u, &u), b))
    }

    pub fn quotient(&self, u0: &[f64]) -> Result<f64> {
        let (a, b) = self.forms(u0)?;
        if b <= 0.0 {
            return Err(GrushinError::ZeroDenominator("observability quotient"));
        }
        Ok(a / b)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ObsReport {
    pub constant: f64,
    pub iterations: usize,
    /// |C − A(u*)/B(u*)| / C with the quotient recomputed by stepping.
    pub residual: f64,
    #[serde(skip)]
    pub optimizer: Vec<f64>,
    pub strategy: &'static str,
}

pub trait ObsStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, problem: &ObsProblem, tol: f64) -> Result<ObsReport>;
}

/// Generalized power iteration u ← B⁻¹Au with an inner matrix-free CG.
pub struct PowerCg {
    pub max_iter: usize,
    pub seed: u64,
}

/// Band-limited constant: initial data restricted to the `band` lowest
/// eigenmodes of the generator, closed-form amplification and a streamed QR
/// of the stacked observation map (B is never formed).
pub struct DenseModal {
    pub band: usize,
}

impl ObsStrategy for PowerCg {
    fn name(&self) -> &'static str {
        "power-cg"
    }

    fn solve(&self, p: &ObsProblem, tol: f64) -> Result<ObsReport> {
        let stepper = p.stepper()?;
        let n = p.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut u: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let nrm = norm2(&u);
        u.iter_mut().for_each(|v| *v /= nrm);
        let mut au = vec![0.0; n];
        let mut bu = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut prev = f64::NAN;
        let mut rq;
        let mut change = f64::INFINITY;
        let tol = tol.max(1e-9);
        let cg = CgOptions {
            tol: 1e-11,
            max_iter: 20 * n.max(50),
        };
        for it in 1..=self.max_iter {
            p.apply_a(&stepper, &u, &mut au)?;
            // A spans hundreds of orders of magnitude across modes: solve with a unit rhs
            let na = norm2(&au);
            if na == 0.0 {
                return Err(GrushinError::Singular("A u vanished".into()));
            }
            au.iter_mut().for_each(|v| *v /= na);
            let err = std::cell::RefCell::new(None);
            conjugate_gradient(
                "observation Gramian",
                |v, out| {
                    if let Err(e) = p.apply_b(&stepper, v, out) {
                        err.borrow_mut().get_or_insert(e);
                    }
                },
                &au,
                &mut x,
                None,
                cg,
            )
            .map_err(|e| GrushinError::Singular(format!("discrete non-observability at this resolution: {e}")))?;
            if let Some(e) = err.into_inner() {
                return Err(e);
            }
            let nx = norm2(&x);
            if nx == 0.0 {
                return Err(GrushinError::Singular("B⁻¹A u vanished".into()));
            }
            for i in 0..n {
                u[i] = x[i] / nx;
            }
            p.apply_a(&stepper, &u, &mut au)?;
            p.apply_b(&stepper, &u, &mut bu)?;
            let bq = dot(&u, &bu);
            rq = dot(&u, &au) / bq;
            // next solve is B x = A u / |A u| ≈ u / bq near the top eigenvector
            for i in 0..n {
                x[i] = u[i] / bq;
            }
            change = (rq - prev).abs() / rq.abs();
            if change <= tol {
                let q = p.quotient(&u)?;
                return Ok(ObsReport {
                    constant: rq,
                    iterations: it,
                    residual: (rq - q).abs() / rq,
                    optimizer: u,
                    strategy: self.name(),
                });
            }
            prev = rq;
        }
        Err(GrushinError::NoConvergence {
            what: "observability power iteration",
            iterations: self.max_iter,
            residual: change,
        })
    }
}

fn band_basis(p: &ObsProblem, band: usize) -> (DMatrix<f64>, Vec<f64>) {
    block_band_basis(&p.generator, p.blocks, band)
}

impl ObsStrategy for DenseModal {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn solve(&self, p: &ObsProblem, _tol: f64) -> Result<ObsReport> {
        let (vs, lam) = band_basis(p, self.band.max(1));
        let m = lam.len();
        let r: Vec<f64> = lam.iter().map(|l| 1.0 / (1.0 + p.dt * l)).collect();
        if r.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) {
            return Err(GrushinError::Hypothesis("generator is not positive semidefinite".into()));
        }
        let k_steps = p.steps as f64;
        let ln_d: Vec<f64> = r.iter().map(|x| p.state_weight.ln() + 2.0 * k_steps * x.ln()).collect();
        let ln_max = ln_d.iter().cloned().fold(f64::MIN, f64::max);
        let g0 = observation_factor(&p.obs) * &vs;
        let mut qr = StreamingQr::new(m);
        let mut pow = vec![1.0; m];
        for (k, wk) in p.time_weights().iter().enumerate() {
            if k > 0 {
                pow.iter_mut().zip(&r).for_each(|(a, b)| *a *= b);
            }
            let mut blk = g0.clone();
            for j in 0..m {
                blk.column_mut(j).scale_mut(wk.sqrt() * pow[j]);
            }
            qr.push(blk);
        }
        let rf = qr.finish();
        let scale = rf.diagonal().iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if rf.diagonal().iter().any(|x| x.abs() <= 1e-13 * scale) {
            return Err(GrushinError::Singular(
                "observation form degenerate on the retained band at this resolution".into(),
            ));
        }
        let e = DMatrix::from_diagonal(&DVector::from_iterator(
            m,
            ln_d.iter().map(|l| (0.5 * (l - ln_max)).exp()),
        ));
        let y = rf
            .transpose()
            .solve_lower_triangular(&e)
            .ok_or_else(|| GrushinError::Singular("triangular solve failed".into()))?;
        let svd = y.svd(true, false);
        let (imax, smax) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc });
        let cmax = ln_max.exp() * smax * smax;
        let u1: DVector<f64> = svd.u.as_ref().unwrap().column(imax).into_owned();
        let c = rf
            .solve_upper_triangular(&u1)
            .ok_or_else(|| GrushinError::Singular("triangular solve failed".into()))?;
        let mut u0: Vec<f64> = (&vs * c).iter().cloned().collect();
        let nrm = norm2(&u0);
        u0.iter_mut().for_each(|x| *x /= nrm);
        let q = p.quotient(&u0)?;
        Ok(ObsReport {
            constant: cmax,
            iterations: m,
            residual: (cmax - q).abs() / cmax,
            optimizer: u0,
            strategy: self.name(),
        })
    }
}

/// Default retained band for the dense strategy.
pub const DEFAULT_BAND: usize = 12;

pub fn obs_strategy_registry() -> Registry<dyn ObsStrategy> {
    let mut r: Registry<dyn ObsStrategy> = Registry::new("observability strategy");
    r.register("power-cg", std::sync::Arc::new(PowerCg { max_iter: 500, seed: 11 }));
    r.register("dense", std::sync::Arc::new(DenseModal { band: DEFAULT_BAND }));
    r
}

/// C_obs for a problem with the named strategy.
pub fn empirical_obs_constant(problem: &ObsProblem, strategy: &str, tol: f64) -> Result<ObsReport> {
    obs_strategy_registry().get(strategy)?.solve(problem, tol)
}

/// Strategy lookup that honours a non-default band for "dense".
pub fn strategy_with_band(name: &str, band: usize) -> Result<std::sync::Arc<dyn ObsStrategy>> {
    if name == "dense" {
        return Ok(std::sync::Arc::new(DenseModal { band }));
    }
    obs_strategy_registry().get(name)
}

/// Mode-sweep configuration shared by the uniformity and minimal-time studies.
#[derive(Debug, Clone)]
pub struct ModeObsConfig {
    pub grid: SpaceGrid,
    pub gamma: f64,
    pub b: CoefficientB,
    /// (n, μ_n) pairs in sweep order.
    pub modes: Vec<(usize, f64)>,
    pub omega1: BoxRegion,
    pub t: f64,
    pub dt: f64,
    pub strategy: String,
    /// Retained band for the dense strategy.
    pub band: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModeConstant {
    pub n: usize,
    pub mu: f64,
    pub c: f64,
}

/// C_n for every configured mode, in parallel, ordered by n.
pub fn mode_constants(cfg: &ModeObsConfig, t: f64) -> Result<Vec<ModeConstant>> {
    let omega = cfg.grid.subdomain_indices(&cfg.omega1)?;
    let strategy = strategy_with_band(&cfg.strategy, cfg.band)?;
    cfg.modes
        .par_iter()
        .map(|&(n, mu)| {
            let op = assemble_mode_operator(&cfg.grid, mu, cfg.gamma, &cfg.b)?;
            let p = ObsProblem::mode(&op, &omega, t, cfg.dt)?;
            let rep = strategy.solve(&p, cfg.tol)?;
            Ok(ModeConstant {
                n,
                mu,
                c: rep.constant,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct UniformityReport {
    pub rows: Vec<ModeConstant>,
    pub sup: f64,
    pub argmax_n: usize,
    /// Whether C_n is nonincreasing over the last half of the sweep.
    pub tail_nonincreasing: bool,
}

pub fn uniformity_study(cfg: &ModeObsConfig) -> Result<UniformityReport> {
    if !(cfg.gamma > 0.0 && cfg.gamma < 1.0) {
        return Err(invalid("gamma", "uniformity study needs γ ∈ (0,1)"));
    }
    let rows = mode_constants(cfg, cfg.t)?;
    let (argmax_n, sup) = rows
        .iter()
        .fold((0, f64::MIN), |acc, r| if r.c > acc.1 { (r.n, r.c) } else { acc });
    let half = rows.len() / 2;
    let tail_nonincreasing = rows[half..].windows(2).all(|w| w[1].c <= w[0].c * (1.0 + 1e-9));
    Ok(UniformityReport {
        rows,
        sup,
        argmax_n,
        tail_nonincreasing,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeRow {
    pub t: f64,
    /// Fitted slope of ln C_n against √μ_n over the fitted modes.
    pub slope: f64,
    pub rows: Vec<ModeConstant>,
}

fn check_strip(cfg: &ModeObsConfig) -> Result<()> {
    if cfg.gamma != 1.0 {
        return Err(invalid("gamma", "minimal-time study is for γ = 1"));
    }
    if cfg.omega1.axes.iter().all(|iv| iv.lo < 0.0 && iv.hi > 0.0) {
        return Err(invalid("omega1", "the strip must not contain x = 0"));
    }
    Ok(())
}

/// ln C_n vs √μ_n slope at horizon t, fitted over modes n ≥ fit_from.
pub fn growth_slope(cfg: &ModeObsConfig, t: f64, fit_from: usize) -> Result<SlopeRow> {
    let rows = mode_constants(cfg, t)?;
    let used: Vec<&ModeConstant> = rows.iter().filter(|r| r.n >= fit_from).collect();
    if used.len() < 3 {
        return Err(invalid("fit_from", "need at least three modes in the fit"));
    }
    let x: Vec<f64> = used.iter().map(|r| r.mu.sqrt()).collect();
    let y: Vec<f64> = used.iter().map(|r| r.c.ln()).collect();
    let (slope, _, _) = linear_fit(&x, &y);
    Ok(SlopeRow { t, slope, rows })
}

pub fn minimal_time_study(cfg: &ModeObsConfig, ts: &[f64], fit_from: usize) -> Result<Vec<SlopeRow>> {
    check_strip(cfg)?;
    ts.iter().map(|&t| growth_slope(cfg, t, fit_from)).collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ThresholdBracket {
    pub lo: f64,
    pub hi: f64,
    pub estimate: f64,
    pub slope_lo: f64,
    pub slope_hi: f64,
}

/// Bisection on the sign of the growth slope until hi − lo ≤ rel_width·midpoint.
pub fn threshold_bracket(
    cfg: &ModeObsConfig,
    t_lo: f64,
    t_hi: f64,
    rel_width: f64,
    fit_from: usize,
) -> Result<ThresholdBracket> {
    check_strip(cfg)?;
    let mut lo = growth_slope(cfg, t_lo, fit_from)?;
    let mut hi = growth_slope(cfg, t_hi, fit_from)?;
    if !(lo.slope > 0.0 && hi.slope <= 0.0) {
        return Err(GrushinError::RegimeNotReached(format!(
            "slopes {} at T={t_lo} and {} at T={t_hi} do not bracket a sign change",
            lo.slope, hi.slope
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo.t + hi.t);
        if hi.t - lo.t <= rel_width * mid {
            break;
        }
        let m = growth_slope(cfg, mid, fit_from)?;
        if m.slope > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    Ok(ThresholdBracket {
        lo: lo.t,
        hi: hi.t,
        estimate: 0.5 * (lo.t + hi.t),
        slope_lo: lo.slope,
        slope_hi: hi.slope,
    })
}

/// Fit ln sup_n C_n(T) ≈ κ T^{−p(γ)} + c over a T-sweep; returns (κ, c, rms).
pub fn fit_uniform_bound(ts: &[f64], sups: &[f64], gamma: f64) -> Result<(f64, f64, f64)> {
    let p = p_exponent(gamma)?;
    if ts.len() < 3 || ts.len() != sups.len() {
        return Err(invalid("ts", "need at least three (T, sup C) pairs"));
    }
    let x: Vec<f64> = ts.iter().map(|t| t.powf(-p)).collect();
    let y: Vec<f64> = sups.iter().map(|s| s.ln()).collect();
    Ok(linear_fit(&x, &y))
}

#[derive(Debug, Clone, Serialize)]
pub struct FullObsReport {
    pub n_modes: usize,
    pub constant: f64,
    pub refined_constant: f64,
    /// |C(2N) − C(N)| / C(2N)
    pub relative_change: f64,
}

/// Observability constant of the tensor system truncated to N and 2N modes.
#[allow(clippy::too_many_arguments)]
pub fn full_observability_check(
    grid: &TensorGrid,
    gamma: f64,
    b: &CoefficientB,
    basis: &ModeBasis,
    omega: &BoxRegion,
    t: f64,
    dt: f64,
    n_modes: usize,
    strategy: &str,
    band: usize,
) -> Result<FullObsReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma", "full observability check needs γ ∈ (0,1)"));
    }
    let solve = |n: usize| -> Result<f64> {
        let p = ObsProblem::truncated_full(grid, gamma, b, basis, n, omega, t, dt)?;
        Ok(strategy_with_band(strategy, band)?.solve(&p, 1e-8)?.constant)
    };
    let c = solve(n_modes)?;
    let c2 = solve(2 * n_modes)?;
    Ok(FullObsReport {
        n_modes,
        constant: c,
        refined_constant: c2,
        relative_change: (c2 - c).abs() / c2,
    })
}
