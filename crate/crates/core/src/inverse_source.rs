//! Inverse source problem for g = R(t,x) f(x,y): forward measurement map,
//! its adjoint, Tikhonov reconstruction and Lipschitz-ratio studies.
//!
//! Measurements are ∂_t u on (T₀,T₁)×ω and G_γu(T₁) on the whole domain. On the
//! discrete level ∂_t u is taken from the semi-discrete identity v = −Au + g,
//! so v(T₁) + Au(T₁) = R(T₁)f holds exactly.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{BoxRegion, SpaceGrid};
use crate::error::{invalid, GrushinError, Result};
use crate::evolution::{step_count, Scheme, Stepper};
use crate::linalg::{
    conjugate_gradient, dot, linear_fit, observation_factor, spmv, trapezoid_weights, CgOptions, StreamingQr,
};
use crate::modal::ModalSystem;
use crate::operator::{assemble_mode_operator, CoefficientB};
use crate::registry::Registry;

pub const DEFAULT_ETA: f64 = 0.1;

/// Samples of R and ∂_tR at the time nodes 0..=K₁ on the x-dofs.
#[derive(Debug, Clone)]
pub struct SourceSpec {
    dt: f64,
    t0: f64,
    t1: f64,
    k0: usize,
    r: Vec<Vec<f64>>,
    dr: Vec<Vec<f64>>,
    pub eta: f64,
}

impl SourceSpec {
    /// `dr` defaults to second-order differences of the samples.
    pub fn from_fn(
        xgrid: &SpaceGrid,
        t0: f64,
        t1: f64,
        dt: f64,
        r: impl Fn(f64, [f64; 2]) -> f64,
        dr: Option<&dyn Fn(f64, [f64; 2]) -> f64>,
    ) -> Result<Self> {
        if !(t0 >= 0.0 && t1 > t0) {
            return Err(invalid("T0/T1", format!("need 0 ≤ T0 < T1, got {t0}, {t1}")));
        }
        let k1 = step_count(t1, dt)?;
        let dt = t1 / k1 as f64;
        let k0 = (t0 / dt).round() as usize;
        if k0 >= k1 {
            return Err(GrushinError::UnderResolved("measurement window shorter than one step".into()));
        }
        let pts: Vec<[f64; 2]> = (0..xgrid.dof_count()).map(|d| xgrid.dof_point(d)).collect();
        let sample = |g: &dyn Fn(f64, [f64; 2]) -> f64| -> Vec<Vec<f64>> {
            (0..=k1)
                .map(|k| pts.iter().map(|p| g(k as f64 * dt, *p)).collect())
                .collect()
        };
        let rs = sample(&r);
        let drs = match dr {
            Some(d) => sample(d),
            None => differences(&rs, dt),
        };
        if rs.iter().chain(&drs).flatten().any(|v| !v.is_finite()) {
            return Err(invalid("R", "samples must be finite"));
        }
        Ok(Self {
            dt,
            t0,
            t1,
            k0,
            r: rs,
            dr: drs,
            eta: DEFAULT_ETA,
        })
    }

    pub fn constant(xgrid: &SpaceGrid, t0: f64, t1: f64, dt: f64, value: f64) -> Result<Self> {
        Self::from_fn(xgrid, t0, t1, dt, |_, _| value, Some(&|_, _| 0.0))
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.r.iter_mut().flatten().for_each(|v| *v *= s);
        out.dr.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }

    /// Same window on a step `dt/factor`, R and ∂_tR linearly interpolated in time.
    pub fn refined(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        let lerp = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            let k1 = rows.len() - 1;
            (0..=k1 * factor)
                .map(|k| {
                    let (i, j) = (k / factor, k % factor);
                    if j == 0 {
                        return rows[i].clone();
                    }
                    let s = j as f64 / factor as f64;
                    rows[i].iter().zip(&rows[i + 1]).map(|(a, b)| (1.0 - s) * a + s * b).collect()
                })
                .collect()
        };
        Self {
            dt: self.dt / factor as f64,
            t0: self.t0,
            t1: self.t1,
            k0: self.k0 * factor,
            r: lerp(&self.r),
            dr: lerp(&self.dr),
            eta: self.eta,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn t1(&self) -> f64 {
        self.t1
    }
    pub fn k0(&self) -> usize {
        self.k0
    }
    pub fn k1(&self) -> usize {
        self.r.len() - 1
    }
    pub fn x_dofs(&self) -> usize {
        self.r[0].len()
    }
    pub fn r_at(&self, k: usize) -> &[f64] {
        &self.r[k]
    }
}

fn differences(r: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let n = r.len();
    (0..n)
        .map(|k| {
            (0..r[k].len())
                .map(|i| {
                    if n < 3 {
                        (r[n - 1][i] - r[0][i]) / (dt * (n - 1) as f64)
                    } else if k == 0 {
                        (-3.0 * r[0][i] + 4.0 * r[1][i] - r[2][i]) / (2.0 * dt)
                    } else if k + 1 == n {
                        (3.0 * r[k][i] - 4.0 * r[k - 1][i] + r[k - 2][i]) / (2.0 * dt)
                    } else {
                        (r[k + 1][i] - r[k - 1][i]) / (2.0 * dt)
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceCheck {
    pub r0: f64,
    pub variation: f64,
    pub relative_variation: f64,
    pub eta: f64,
    pub small_variation: bool,
}

/// R₀ = min_x R(T₁,x) > 0 is required; a large variation V/R₀ ≥ η only warns.
pub fn validate_source_spec(spec: &SourceSpec) -> Result<SourceCheck> {
    let r0 = spec.r[spec.k1()].iter().cloned().fold(f64::INFINITY, f64::min);
    if !(r0 > 0.0) {
        return Err(GrushinError::Hypothesis(format!("min_x R(T1, x) = {r0} must be positive")));
    }
    let sup2: Vec<f64> = spec.dr[spec.k0..]
        .iter()
        .map(|row| row.iter().map(|v| v * v).fold(0.0, f64::max))
        .collect();
    let w = trapezoid_weights(sup2.len(), spec.dt);
    let variation = dot(&w, &sup2).sqrt();
    let relative_variation = variation / r0;
    let small_variation = relative_variation < spec.eta;
    if !small_variation {
        log::warn!(
            "R has variation V/R0 = {relative_variation:.3e} ≥ η = {}; only the strip result applies",
            spec.eta
        );
    }
    Ok(SourceCheck {
        r0,
        variation,
        relative_variation,
        eta: spec.eta,
        small_variation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Noise {
    None,
    /// Gaussian, per-entry standard deviation `level`·rms of the clean entries.
    Additive { level: f64, seed: u64 },
}

/// ‖f‖² against (2/R₀²)(‖∂_tu(T₁)‖² + ‖G_γu(T₁)‖²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainCheck {
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct Measurement {
    /// ∂_t u at the window nodes K₀..=K₁, full state (only ω is ever read).
    pub window: Vec<Vec<f64>>,
    /// G_γ u(T₁).
    pub terminal: Vec<f64>,
    pub noise: Noise,
    pub chain: Option<ChainCheck>,
}

impl Measurement {
    pub fn zeros_like(&self) -> Self {
        Self {
            window: self.window.iter().map(|v| vec![0.0; v.len()]).collect(),
            terminal: vec![0.0; self.terminal.len()],
            noise: Noise::None,
            chain: None,
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &Measurement) {
        for (a, b) in self.window.iter_mut().zip(&other.window) {
            crate::linalg::axpy(alpha, b, a);
        }
        crate::linalg::axpy(alpha, &other.terminal, &mut self.terminal);
    }

    pub fn is_zero(&self) -> bool {
        self.window.iter().flatten().chain(&self.terminal).all(|v| *v == 0.0)
    }
}

/// Forward map of a fixed modal system and R.
pub struct InverseProblem {
    sys: ModalSystem,
    spec: SourceSpec,
    stepper: Stepper,
    tau: Vec<f64>,
}

impl InverseProblem {
    pub fn new(sys: ModalSystem, spec: SourceSpec, scheme: Scheme) -> Result<Self> {
        if spec.x_dofs() != sys.x_dofs() {
            return Err(invalid(
                "R",
                format!("R has {} x-dofs, system has {}", spec.x_dofs(), sys.x_dofs()),
            ));
        }
        let stepper = Stepper::banded(sys.generator(), spec.dt, scheme)?;
        let tau = trapezoid_weights(spec.k1() - spec.k0 + 1, spec.dt);
        Ok(Self {
            sys,
            spec,
            stepper,
            tau,
        })
    }

    pub fn system(&self) -> &ModalSystem {
        &self.sys
    }
    pub fn spec(&self) -> &SourceSpec {
        &self.spec
    }
    pub fn dim(&self) -> usize {
        self.sys.dim()
    }

    fn theta(&self) -> f64 {
        self.stepper.scheme().theta()
    }

    /// out = R(t_k) ∘ f on the modal layout.
    fn apply_r(&self, k: usize, f: &[f64], out: &mut [f64]) {
        let nb = self.sys.blocks();
        for (x, r) in self.spec.r[k].iter().enumerate() {
            for j in 0..nb {
                out[x * nb + j] = r * f[x * nb + j];
            }
        }
    }

    fn run(&self, f: &[f64], u0: &[f64]) -> Result<Measurement> {
        let n = self.dim();
        let th = self.theta();
        let k0 = self.spec.k0;
        let mut u = u0.to_vec();
        let mut g_prev = vec![0.0; n];
        let mut g = vec![0.0; n];
        let mut forcing = vec![0.0; n];
        let mut au = vec![0.0; n];
        self.apply_r(0, f, &mut g_prev);
        let mut window = Vec::with_capacity(self.tau.len());
        for k in 0..=self.spec.k1() {
            if k == 0 {
                g.copy_from_slice(&g_prev);
            } else {
                self.apply_r(k, f, &mut g);
                for i in 0..n {
                    forcing[i] = th * g[i] + (1.0 - th) * g_prev[i];
                }
                self.stepper.step(&mut u, Some(&forcing))?;
                g_prev.copy_from_slice(&g);
            }
            if k >= k0 {
                spmv(self.sys.generator(), &u, &mut au);
                window.push(g.iter().zip(&au).map(|(a, b)| a - b).collect());
            }
        }
        spmv(self.sys.generator(), &u, &mut au);
        Ok(Measurement {
            window,
            terminal: au,
            noise: Noise::None,
            chain: None,
        })
    }

    /// Linear part F f (u0 = 0).
    pub fn apply_forward(&self, f: &[f64]) -> Result<Measurement> {
        self.run(f, &vec![0.0; self.dim()])
    }

    /// F* m with respect to the L² inner products of source and data.
    pub fn apply_adjoint(&self, m: &Measurement) -> Result<Vec<f64>> {
        let n = self.dim();
        let th = self.theta();
        let dt = self.spec.dt;
        let k0 = self.spec.k0;
        let k1 = self.spec.k1();
        let a = self.sys.generator();
        let mut grad = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut ys = Vec::with_capacity(m.window.len());
        for (i, v) in m.window.iter().enumerate() {
            let mut y = vec![0.0; n];
            spmv(self.sys.obs(), v, &mut y);
            y.iter_mut().for_each(|x| *x *= self.tau[i]);
            self.apply_r(k0 + i, &y, &mut tmp);
            crate::linalg::axpy(1.0, &tmp, &mut grad);
            ys.push(y);
        }
        let yz: Vec<f64> = m.terminal.iter().map(|v| v * self.sys.weight()).collect();
        let mut q = vec![0.0; n];
        let mut e = vec![0.0; n];
        for j in (1..=k1).rev() {
            e.iter_mut().for_each(|v| *v = 0.0);
            if j >= k0 {
                spmv(a, &ys[j - k0], &mut tmp);
                crate::linalg::axpy(-1.0, &tmp, &mut e);
            }
            if j == k1 {
                spmv(a, &yz, &mut tmp);
                crate::linalg::axpy(1.0, &tmp, &mut e);
            }
            e.iter_mut().for_each(|v| *v /= dt);
            // q_j = L⁻¹(M q_{j+1} + e_j)
            self.stepper.step(&mut q, Some(&e))?;
            self.apply_r(j, &q, &mut tmp);
            crate::linalg::axpy(dt * th, &tmp, &mut grad);
            if th < 1.0 {
                self.apply_r(j - 1, &q, &mut tmp);
                crate::linalg::axpy(dt * (1.0 - th), &tmp, &mut grad);
            }
        }
        let w = self.sys.weight();
        grad.iter_mut().for_each(|v| *v /= w);
        Ok(grad)
    }

    /// ∫∫_{window×ω} a·b + ∫_Ω a_T·b_T.
    pub fn data_inner(&self, a: &Measurement, b: &Measurement) -> f64 {
        let n = self.dim();
        let mut qb = vec![0.0; n];
        let mut s = 0.0;
        for (i, (va, vb)) in a.window.iter().zip(&b.window).enumerate() {
            spmv(self.sys.obs(), vb, &mut qb);
            s += self.tau[i] * dot(va, &qb);
        }
        s + self.sys.weight() * dot(&a.terminal, &b.terminal)
    }

    pub fn data_norm_sq(&self, m: &Measurement) -> f64 {
        self.data_inner(m, m)
    }

    pub fn source_norm_sq(&self, f: &[f64]) -> f64 {
        self.sys.norm_sq(f)
    }
}

/// Solves with g = R f from u0, checks the chain inequality on the clean data,
/// then adds noise.
pub fn forward_measurement(p: &InverseProblem, f: &[f64], u0: &[f64], noise: Noise) -> Result<Measurement> {
    let n = p.dim();
    if f.len() != n || u0.len() != n {
        return Err(invalid("f/u0", format!("expected length {n}")));
    }
    let mut m = p.run(f, u0)?;
    let r0 = p.spec.r[p.spec.k1()].iter().cloned().fold(f64::INFINITY, f64::min);
    if r0 > 0.0 {
        let lhs = p.sys.norm_sq(f);
        let rhs = 2.0 / (r0 * r0) * (p.sys.norm_sq(m.window.last().unwrap()) + p.sys.norm_sq(&m.terminal));
        if lhs > rhs * (1.0 + 1e-10) {
            return Err(GrushinError::Verification(format!(
                "stability chain violated: ‖f‖² = {lhs:e} > {rhs:e}"
            )));
        }
        m.chain = Some(ChainCheck { lhs, rhs });
    }
    add_noise(&mut m, noise);
    Ok(m)
}

fn add_noise(m: &mut Measurement, noise: Noise) {
    if let Noise::Additive { level, seed } = noise {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rms = |v: &mut dyn Iterator<Item = f64>| {
            let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x * x, c + 1));
            (s / c.max(1) as f64).sqrt()
        };
        let sw = level * rms(&mut m.window.iter().flatten().copied());
        let sz = level * rms(&mut m.terminal.iter().copied());
        for v in m.window.iter_mut().flatten() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += sw * e;
        }
        for v in m.terminal.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += sz * e;
        }
        m.noise = noise;
    }
}

/// Data generated with the time step refined by `factor` and sampled back on
/// the nodes of `p`, so the inversion does not share the data discretization.
pub fn refined_measurement(
    p: &InverseProblem,
    f: &[f64],
    u0: &[f64],
    noise: Noise,
    factor: usize,
) -> Result<Measurement> {
    let factor = factor.max(1);
    let fine = InverseProblem::new(p.sys.clone(), p.spec.refined(factor), p.stepper.scheme())?;
    let mut m = forward_measurement(&fine, f, u0, Noise::None)?;
    m.window = m.window.into_iter().step_by(factor).collect();
    if let Noise::Additive { .. } = noise {
        add_noise(&mut m, noise);
    }
    Ok(m)
}

/// ‖f‖² / (∫∫_{window×ω}|∂_tu|² + ‖G_γu(T₁)‖²); `None` for f = 0.
pub fn lipschitz_ratio(p: &InverseProblem, f: &[f64], m: &Measurement) -> Result<Option<f64>> {
    let num = p.source_norm_sq(f);
    if num == 0.0 {
        return Ok(None);
    }
    let den = p.data_norm_sq(m);
    if den == 0.0 {
        return Err(GrushinError::ZeroDenominator("Lipschitz ratio (stability violation)"));
    }
    Ok(Some(num / den))
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionResult {
    #[serde(skip)]
    pub f_hat: Vec<f64>,
    pub rel_error: Option<f64>,
    pub lambda_reg: f64,
    pub iterations: usize,
    pub residual: f64,
    pub ratio: Option<f64>,
}

/// argmin ‖F f − (m − m₀)‖² + λ‖f‖², m₀ the response to u0 alone; CG on the
/// normal equations with the adjoint above.
pub fn reconstruct_source(
    p: &InverseProblem,
    m: &Measurement,
    u0: &[f64],
    lambda_reg: f64,
    truth: Option<&[f64]>,
    cg: CgOptions,
) -> Result<ReconstructionResult> {
    if !(lambda_reg >= 0.0) {
        return Err(invalid("lambda_reg", "must be nonnegative"));
    }
    let n = p.dim();
    let mut d = m.clone();
    d.axpy(-1.0, &p.run(&vec![0.0; n], u0)?);
    let rhs = p.apply_adjoint(&d)?;
    let err = std::cell::RefCell::new(None);
    let mut f = vec![0.0; n];
    let stats = conjugate_gradient(
        "source reconstruction",
        |x, out| {
            let r = p.apply_forward(x).and_then(|fx| p.apply_adjoint(&fx));
            match r {
                Ok(v) => {
                    for i in 0..n {
                        out[i] = v[i] + lambda_reg * x[i];
                    }
                }
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    out.iter_mut().for_each(|v| *v = 0.0);
                }
            }
        },
        &rhs,
        &mut f,
        None,
        cg,
    )?;
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    let rel_error = truth.map(|t| {
        let diff: Vec<f64> = f.iter().zip(t).map(|(a, b)| a - b).collect();
        (p.source_norm_sq(&diff) / p.source_norm_sq(t).max(f64::MIN_POSITIVE)).sqrt()
    });
    let ratio = if m.is_zero() { None } else { lipschitz_ratio(p, &f, m)? };
    Ok(ReconstructionResult {
        f_hat: f,
        rel_error,
        lambda_reg,
        iterations: stats.iterations,
        residual: stats.relative_residual,
        ratio,
    })
}

/// Estimates sup_f ‖f‖² / ‖measurement‖² for one problem.
pub trait ModeRatioEstimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn estimate(&self, p: &InverseProblem) -> Result<f64>;
}

/// Exact supremum over all f with u0 = 0: weight / σ_min(F)² in whitened data
/// coordinates.
pub struct ZeroInitial;

/// Supremum over f and u0 jointly, both restricted to the `band` lowest
/// generator eigenmodes of each block. The u0 response is closed-form in the
/// eigenbasis and is projected out of the f response.
pub struct WorstInitial {
    pub band: usize,
}

/// Largest ratio over random band-limited f with u0 = 0 (a lower bound for
/// `ZeroInitial`).
pub struct Sampled {
    pub samples: usize,
    pub band: usize,
    pub seed: u64,
}

pub fn mode_ratio_registry() -> Registry<dyn ModeRatioEstimator> {
    let mut r: Registry<dyn ModeRatioEstimator> = Registry::new("mode ratio estimator");
    r.register("zero-u0", std::sync::Arc::new(ZeroInitial));
    r.register("worst-u0", std::sync::Arc::new(WorstInitial { band: 12 }));
    r.register(
        "sampled",
        std::sync::Arc::new(Sampled {
            samples: 32,
            band: 12,
            seed: 7,
        }),
    );
    r
}

/// Feeds whitened rows of [U | F] into a QR: U holds closed-form u0 responses
/// (columns `u_modes` with eigenvalues `u_lam`), F the stepped responses to the
/// source columns `f_cols`.
fn stacked_factor(
    p: &InverseProblem,
    u_modes: Option<(&DMatrix<f64>, &[f64])>,
    f_cols: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = p.dim();
    let mf = f_cols.ncols();
    let mu = u_modes.map_or(0, |(v, _)| v.ncols());
    let l = observation_factor(p.sys.obs());
    let k0 = p.spec.k0;
    let k1 = p.spec.k1();
    let dt = p.spec.dt;
    let th = p.theta();
    let amp: Vec<f64> = u_modes.map_or(Vec::new(), |(_, lam)| {
        lam.iter()
            .map(|l| (1.0 - (1.0 - th) * dt * l) / (1.0 + th * dt * l))
            .collect()
    });
    let mut qr = StreamingQr::new(mu + mf);
    let mut state = DMatrix::<f64>::zeros(n, mf);
    let mut g_prev = DMatrix::<f64>::zeros(n, mf);
    let mut g = DMatrix::<f64>::zeros(n, mf);
    let mut col = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut forcing = vec![0.0; n];
    let a = p.sys.generator();
    let r_cols = |k: usize, out: &mut DMatrix<f64>| {
        for c in 0..mf {
            let fc: Vec<f64> = f_cols.column(c).iter().copied().collect();
            let mut o = vec![0.0; n];
            p.apply_r(k, &fc, &mut o);
            out.column_mut(c).copy_from_slice(&o);
        }
    };
    r_cols(0, &mut g_prev);
    for k in 0..=k1 {
        if k == 0 {
            g.copy_from(&g_prev);
        } else {
            r_cols(k, &mut g);
            for c in 0..mf {
                for i in 0..n {
                    forcing[i] = th * g[(i, c)] + (1.0 - th) * g_prev[(i, c)];
                    col[i] = state[(i, c)];
                }
                p.stepper.step(&mut col, Some(&forcing))?;
                state.column_mut(c).copy_from_slice(&col);
            }
            g_prev.copy_from(&g);
        }
        if k >= k0 {
            let s = p.tau[k - k0].sqrt();
            let mut v = DMatrix::<f64>::zeros(n, mu + mf);
            if let Some((vm, lam)) = u_modes {
                for c in 0..mu {
                    let f = -lam[c] * amp[c].powi((k - k0) as i32);
                    for i in 0..n {
                        v[(i, c)] = f * vm[(i, c)];
                    }
                }
            }
            for c in 0..mf {
                for i in 0..n {
                    col[i] = state[(i, c)];
                }
                spmv(a, &col, &mut tmp);
                for i in 0..n {
                    v[(i, mu + c)] = g[(i, c)] - tmp[i];
                }
            }
            qr.push(&l * v * s);
        }
    }
    let mut z = DMatrix::<f64>::zeros(n, mu + mf);
    if let Some((vm, lam)) = u_modes {
        for c in 0..mu {
            let f = lam[c] * amp[c].powi((k1 - k0) as i32);
            for i in 0..n {
                z[(i, c)] = f * vm[(i, c)];
            }
        }
    }
    for c in 0..mf {
        for i in 0..n {
            col[i] = state[(i, c)];
        }
        spmv(a, &col, &mut tmp);
        for i in 0..n {
            z[(i, mu + c)] = tmp[i];
        }
    }
    qr.push(z * p.sys.weight().sqrt());
    Ok(qr.finish())
}

fn ratio_from_sigma(p: &InverseProblem, r: DMatrix<f64>) -> Result<f64> {
    let sv = r.singular_values();
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smin > 0.0) {
        return Err(GrushinError::ZeroDenominator("mode Lipschitz ratio"));
    }
    Ok(p.sys.weight() / (smin * smin))
}

impl ModeRatioEstimator for ZeroInitial {
    fn name(&self) -> &'static str {
        "zero-u0"
    }
    fn estimate(&self, p: &InverseProblem) -> Result<f64> {
        let r = stacked_factor(p, None, &DMatrix::identity(p.dim(), p.dim()))?;
        ratio_from_sigma(p, r)
    }
}

impl ModeRatioEstimator for WorstInitial {
    fn name(&self) -> &'static str {
        "worst-u0"
    }
    fn estimate(&self, p: &InverseProblem) -> Result<f64> {
        let (v, lam) = p.sys.band_basis(self.band.max(1));
        let m = lam.len();
        let r = stacked_factor(p, Some((&v, &lam)), &v)?;
        ratio_from_sigma(p, r.view((m, m), (m, m)).into_owned())
    }
}

impl ModeRatioEstimator for Sampled {
    fn name(&self) -> &'static str {
        "sampled"
    }
    fn estimate(&self, p: &InverseProblem) -> Result<f64> {
        let (v, _) = p.sys.band_basis(self.band.max(1));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut best: f64 = 0.0;
        for _ in 0..self.samples.max(1) {
            let c: Vec<f64> = (0..v.ncols()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let f: Vec<f64> = (0..p.dim())
                .map(|i| (0..v.ncols()).map(|j| v[(i, j)] * c[j]).sum())
                .collect();
            let m = p.apply_forward(&f)?;
            if let Some(r) = lipschitz_ratio(p, &f, &m)? {
                best = best.max(r);
            }
        }
        Ok(best)
    }
}

#[derive(Debug, Clone)]
pub struct ModeRatioConfig {
    pub grid: SpaceGrid,
    pub gamma: f64,
    pub b: CoefficientB,
    /// (mode number, μ) pairs.
    pub modes: Vec<(usize, f64)>,
    pub omega1: BoxRegion,
    pub spec: SourceSpec,
    pub scheme: Scheme,
    pub estimator: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeRatioRow {
    pub n: usize,
    pub mu: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeRatioTable {
    pub estimator: String,
    pub window: f64,
    pub rows: Vec<ModeRatioRow>,
    pub sup: f64,
    pub argmax_n: usize,
    /// Least-squares slope of ln ratio against √μ over all rows.
    pub growth_slope: f64,
}

impl ModeRatioTable {
    /// max/min of the ratios with n ≥ `from`.
    pub fn tail_spread(&self, from: usize) -> f64 {
        let tail: Vec<f64> = self.rows.iter().filter(|r| r.n >= from).map(|r| r.ratio).collect();
        let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
        hi / lo
    }
}

pub fn uniform_mode_ratio_study(cfg: &ModeRatioConfig) -> Result<ModeRatioTable> {
    validate_source_spec(&cfg.spec)?;
    let est = mode_ratio_registry().get(&cfg.estimator)?;
    let om = cfg.grid.subdomain_indices(&cfg.omega1)?;
    let rows: Vec<ModeRatioRow> = cfg
        .modes
        .par_iter()
        .map(|&(n, mu)| -> Result<ModeRatioRow> {
            let op = assemble_mode_operator(&cfg.grid, mu, cfg.gamma, &cfg.b)?;
            let p = InverseProblem::new(ModalSystem::mode(&op, &om)?, cfg.spec.clone(), cfg.scheme)?;
            Ok(ModeRatioRow {
                n,
                mu,
                ratio: est.estimate(&p)?,
            })
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(invalid("modes", "need at least one mode"));
    }
    let (mut sup, mut argmax_n) = (0.0, rows[0].n);
    for r in &rows {
        if r.ratio > sup {
            sup = r.ratio;
            argmax_n = r.n;
        }
    }
    let growth_slope = if rows.len() >= 2 {
        let x: Vec<f64> = rows.iter().map(|r| r.mu.sqrt()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.ratio.ln()).collect();
        linear_fit(&x, &y).0
    } else {
        0.0
    };
    Ok(ModeRatioTable {
        estimator: est.name().to_string(),
        window: cfg.spec.t1 - cfg.spec.t0,
        rows,
        sup,
        argmax_n,
        growth_slope,
    })
}
