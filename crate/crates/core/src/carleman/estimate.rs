use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::weight::CarlemanWeight;
use crate::domain::{IndexSet, SpaceGrid};
use crate::error::{invalid, GrushinError, Result};
use crate::evolution::{solve_mode, Scheme, SourceTerm, Trajectory};
use crate::linalg::spmv;
use crate::operator::{assemble_mode_operator, CoefficientB, ModeOperator};

/// M = 𝒞₂ max{T+T², √μT²} for γ ≥ 1/2, 𝒞₂ max{T+T², μ^{2/3}T²} below.
pub fn carleman_m(t: f64, mu: f64, gamma: f64, c2: f64) -> f64 {
    let growth = if gamma >= 0.5 { mu.sqrt() } else { mu.powf(2.0 / 3.0) };
    c2 * (t + t * t).max(growth * t * t)
}

/// ε = 1 for γ ∈ [1/2, 1], 0 for γ ∈ (0, 1/2).
pub fn epsilon_for_gamma(gamma: f64) -> u8 {
    u8::from(gamma >= 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarlemanParams {
    pub t0: f64,
    pub t1: f64,
    pub mu: f64,
    pub gamma: f64,
    pub epsilon: u8,
    pub m: f64,
    pub c2: f64,
}

impl CarlemanParams {
    pub fn new(t0: f64, t1: f64, mu: f64, gamma: f64, c2: f64) -> Result<Self> {
        if !(t0 >= 0.0 && t1 > t0) {
            return Err(invalid("T0/T1", format!("need 0 ≤ T0 < T1, got {t0}, {t1}")));
        }
        if !(mu >= 0.0) || !(c2 > 0.0) {
            return Err(invalid("mu/C2", "μ ≥ 0 and 𝒞₂ > 0 required"));
        }
        Ok(Self {
            t0,
            t1,
            mu,
            gamma,
            epsilon: epsilon_for_gamma(gamma),
            m: carleman_m(t1 - t0, mu, gamma, c2),
            c2,
        })
    }

    /// Same parameters with M overridden.
    pub fn with_m(mut self, m: f64) -> Self {
        self.m = m;
        self
    }

    pub fn horizon(&self) -> f64 {
        self.t1 - self.t0
    }

    /// (t − T₀)(T₁ − t)
    pub fn s(&self, t: f64) -> f64 {
        (t - self.t0) * (self.t1 - t)
    }
}

/// How 𝒫_{μ,γ}u is evaluated inside the ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorEvaluation {
    /// u solves the mode equation, so 𝒫u equals the source samples.
    Equation,
    /// Centered time differences plus the assembled operator (arbitrary fields).
    Differenced,
}

#[derive(Debug, Clone, Copy)]
pub struct CarlemanRatio {
    /// LHS/RHS, `None` for the 0/0 case.
    pub ratio: Option<f64>,
    /// Both sides are reported divided by e^{−M·min α}.
    pub lhs: f64,
    pub rhs: f64,
    /// ln(M·min α) over the space-time nodes used.
    pub ln_m_alpha_min: f64,
}

fn interior_time_nodes(traj: &Trajectory, p: &CarlemanParams) -> Vec<usize> {
    let tol = 1e-12 * p.horizon();
    (0..traj.len())
        .filter(|&k| traj.times[k] > p.t0 + tol && traj.times[k] < p.t1 - tol)
        .collect()
}

fn operator_values(
    traj: &Trajectory,
    op: &ModeOperator,
    g: &SourceTerm,
    k: usize,
    eval: OperatorEvaluation,
) -> Vec<f64> {
    let n = traj.dim();
    match eval {
        OperatorEvaluation::Equation => g.at(k, n),
        OperatorEvaluation::Differenced => {
            let mut out = vec![0.0; n];
            op.apply(&traj.states[k], &mut out);
            let (a, b) = (&traj.states[k + 1], &traj.states[k - 1]);
            for i in 0..n {
                out[i] += (a[i] - b[i]) / (2.0 * traj.dt);
            }
            out
        }
    }
}

/// LHS/RHS of the weighted estimate for a mode trajectory on [T₀, T₁].
#[allow(clippy::too_many_arguments)]
pub fn carleman_ratio(
    traj: &Trajectory,
    op: &ModeOperator,
    g: &SourceTerm,
    weight: &CarlemanWeight,
    params: &CarlemanParams,
    omega1: &IndexSet,
    c1: f64,
    eval: OperatorEvaluation,
) -> Result<CarlemanRatio> {
    let grid = op.grid();
    let wx = grid.cell_volume();
    let mask = grid.dof_mask(omega1);
    let nd = grid.dof_count();
    let ks: Vec<usize> = interior_time_nodes(traj, params)
        .into_iter()
        .filter(|&k| eval == OperatorEvaluation::Equation || (k > 0 && k + 1 < traj.len()))
        .collect();
    if ks.is_empty() {
        return Err(invalid("trajectory", "no time node strictly inside (T0, T1)"));
    }
    let one_minus_eps: Vec<f64> = (0..nd)
        .map(|d| {
            let node = grid.dof_to_node(d);
            let psi = weight.psi();
            -(-weight.lambda * (2.0 * psi.sup() - psi.values()[node])).exp_m1()
        })
        .collect();
    let q = |k: usize, d: usize| one_minus_eps[d] / params.s(traj.times[k]);
    let mut qmin = f64::INFINITY;
    for &k in &ks {
        for d in 0..nd {
            qmin = qmin.min(q(k, d));
        }
    }
    let ln_scale = params.m.ln() + 2.0 * weight.lambda * weight.psi().sup();
    let m = params.m;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for &k in &ks {
        let s = params.s(traj.times[k]);
        let ms = m / s;
        let ms3 = ms * ms * ms;
        let u = &traj.states[k];
        let grad = grid.gradient(u);
        let pu = operator_values(traj, op, g, k, eval);
        for d in 0..nd {
            let dq = q(k, d) - qmin;
            let w = if dq <= 0.0 {
                1.0
            } else {
                (-(ln_scale + dq.ln()).exp()).exp()
            };
            if w == 0.0 {
                continue;
            }
            let g2 = grad[d][0] * grad[d][0] + grad[d][1] * grad[d][1];
            let u2 = u[d] * u[d];
            let cell = traj.dt * wx * w;
            lhs += cell * (ms * g2 + ms3 * u2);
            rhs += cell * (pu[d] * pu[d] + if mask[d] { ms3 * u2 } else { 0.0 });
        }
    }
    lhs *= c1;
    let ln_m_alpha_min = ln_scale + qmin.ln();
    if rhs == 0.0 {
        if lhs == 0.0 {
            return Ok(CarlemanRatio {
                ratio: None,
                lhs,
                rhs,
                ln_m_alpha_min,
            });
        }
        return Err(GrushinError::ZeroDenominator("Carleman ratio"));
    }
    Ok(CarlemanRatio {
        ratio: Some(lhs / rhs),
        lhs,
        rhs,
        ln_m_alpha_min,
    })
}

/// ln of max_x e^{−Mα(t, x)} at time t; −∞ when it underflows every format.
pub fn ln_weight_at(weight: &CarlemanWeight, params: &CarlemanParams, t: f64) -> f64 {
    let s = params.s(t);
    if s <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let psi = weight.psi();
    let ln_beta_min = 2.0 * weight.lambda * psi.sup() + (-(-weight.lambda * psi.sup()).exp_m1()).ln();
    -(params.m.ln() + ln_beta_min - s.ln()).exp()
}

/// The three operators of the conjugated splitting, plus e^{−Mα}𝒫u.
#[derive(Debug, Clone)]
pub struct P123 {
    pub times: Vec<f64>,
    pub p1: Vec<Vec<f64>>,
    pub p2: Vec<Vec<f64>>,
    pub p3: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
    /// ‖P₁z+P₂z+P₃z − e^{−Mα}𝒫u‖ / ‖e^{−Mα}𝒫u‖ over the interior space-time nodes.
    pub residual: f64,
}

/// Discrete P₁z, P₂z, P₃z for z = u e^{−Mα}; needs weights whose e^{Mα} fits in f64.
pub fn decompose_p123(
    traj: &Trajectory,
    op: &ModeOperator,
    weight: &CarlemanWeight,
    params: &CarlemanParams,
) -> Result<P123> {
    let grid = op.grid();
    let nd = grid.dof_count();
    let m = params.m;
    let a = weight.a;
    let eps = params.epsilon as f64;
    let derivs: Vec<(f64, [f64; 2], f64)> = (0..nd)
        .map(|d| weight.linear_derivatives(grid.dof_to_node(d)))
        .collect();
    if derivs.iter().any(|(b, g, l)| !b.is_finite() || !g[0].is_finite() || !l.is_finite()) {
        return Err(GrushinError::Unsupported(
            "weight too steep for linear-scale splitting; lower λ".into(),
        ));
    }
    let pot: Vec<f64> = op.potential().to_vec();
    let ks: Vec<usize> = interior_time_nodes(traj, params)
        .into_iter()
        .filter(|&k| k > 0 && k + 1 < traj.len())
        .collect();
    let z_at = |k: usize| -> Vec<f64> {
        let s = params.s(traj.times[k]);
        (0..nd)
            .map(|d| {
                if s <= 0.0 {
                    0.0
                } else {
                    traj.states[k][d] * (-m * derivs[d].0 / s).exp()
                }
            })
            .collect()
    };
    let mut out = P123 {
        times: Vec::new(),
        p1: Vec::new(),
        p2: Vec::new(),
        p3: Vec::new(),
        target: Vec::new(),
        residual: 0.0,
    };
    let mut num = 0.0;
    let mut den = 0.0;
    let dt = traj.dt;
    for &k in &ks {
        let t = traj.times[k];
        let s = params.s(t);
        let ds = params.t1 + params.t0 - 2.0 * t;
        let z = z_at(k);
        let (zp, zm) = (z_at(k + 1), z_at(k - 1));
        let gz = grid.gradient(&z);
        let mut lz = vec![0.0; nd];
        spmv(op.laplacian(), &z, &mut lz);
        let mut au = vec![0.0; nd];
        op.apply(&traj.states[k], &mut au);
        let (mut p1, mut p2, mut p3, mut tg) = (
            vec![0.0; nd],
            vec![0.0; nd],
            vec![0.0; nd],
            vec![0.0; nd],
        );
        for d in 0..nd {
            let (beta, gb, lb) = derivs[d];
            let alpha_t = -beta * ds / (s * s);
            let ga = [gb[0] / s, gb[1] / s];
            let la = lb / s;
            let ga2 = ga[0] * ga[0] + ga[1] * ga[1];
            p1[d] = lz[d] + (m * alpha_t - m * m * ga2) * z[d] + eps * pot[d] * z[d];
            p2[d] = (zp[d] - zm[d]) / (2.0 * dt)
                - 2.0 * m * (ga[0] * gz[d][0] + ga[1] * gz[d][1])
                - a * m * la * z[d];
            p3[d] = (a - 1.0) * m * la * z[d] + (1.0 - eps) * pot[d] * z[d];
            let ut = (traj.states[k + 1][d] - traj.states[k - 1][d]) / (2.0 * dt);
            tg[d] = (-m * beta / s).exp() * (ut + au[d]);
            num += (p1[d] + p2[d] + p3[d] - tg[d]).powi(2);
            den += tg[d] * tg[d];
        }
        out.times.push(t);
        out.p1.push(p1);
        out.p2.push(p2);
        out.p3.push(p3);
        out.target.push(tg);
    }
    out.residual = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    Ok(out)
}

/// Settings for the random regression suite of mode solutions.
#[derive(Debug, Clone)]
pub struct RatioSuiteConfig {
    pub grid: SpaceGrid,
    pub gamma: f64,
    pub b: CoefficientB,
    pub t: f64,
    pub dt: f64,
    pub mus: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

pub struct RatioSample {
    pub op: ModeOperator,
    pub traj: Trajectory,
    pub g: SourceTerm,
}

/// Random (u0, g) mode solutions: a few sine modes in x for u0 and for f,
/// g(t, x) = cos(ωt + φ)·f(x); μ cycles through `mus`.
pub fn ratio_sample_suite(cfg: &RatioSuiteConfig) -> Result<Vec<RatioSample>> {
    if cfg.mus.is_empty() {
        return Err(invalid("mus", "need at least one μ"));
    }
    let axes = cfg.grid.axes();
    let nd = cfg.grid.dof_count();
    let steps = crate::evolution::step_count(cfg.t, cfg.dt)?;
    let dt = cfg.t / steps as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut specs = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.samples {
        let mu = cfg.mus[i % cfg.mus.len()];
        let cu: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
        let cf: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
        let omega: f64 = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        let phase: f64 = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        specs.push((mu, cu, cf, omega, phase));
    }
    let profile = |c: &[f64], d: usize| -> f64 {
        let p = cfg.grid.dof_point(d);
        c.iter()
            .enumerate()
            .map(|(k, ck)| {
                let mut prod = 1.0;
                for (ax, g) in axes.iter().enumerate() {
                    let x = (p[ax] - g.a()) / g.length();
                    prod *= ((k + 1) as f64 * std::f64::consts::PI * x).sin();
                }
                ck * prod
            })
            .sum()
    };
    specs
        .par_iter()
        .map(|(mu, cu, cf, omega, phase)| {
            let op = assemble_mode_operator(&cfg.grid, *mu, cfg.gamma, &cfg.b)?;
            let u0: Vec<f64> = (0..nd).map(|d| profile(cu, d)).collect();
            let f: Vec<f64> = (0..nd).map(|d| profile(cf, d)).collect();
            let r: Vec<Vec<f64>> = (0..=steps)
                .map(|k| vec![(omega * k as f64 * dt + phase).cos(); nd])
                .collect();
            let dr: Vec<Vec<f64>> = (0..=steps)
                .map(|k| vec![-omega * (omega * k as f64 * dt + phase).sin(); nd])
                .collect();
            let g = SourceTerm::Separated {
                r,
                dr: Some(dr),
                f,
                block: 1,
            };
            let traj = solve_mode(&op, &u0, &g, cfg.t, dt, Scheme::CrankNicolson)?;
            Ok(RatioSample { op, traj, g })
        })
        .collect()
}

/// Ratios of every sample at the given constants, in sample order.
pub fn evaluate_suite(
    samples: &[RatioSample],
    weight: &CarlemanWeight,
    omega1: &IndexSet,
    c1: f64,
    c2: f64,
    m_scale: f64,
) -> Result<Vec<CarlemanRatio>> {
    samples
        .par_iter()
        .map(|s| {
            let t1 = *s.traj.times.last().unwrap();
            let p = CarlemanParams::new(0.0, t1, s.op.mu(), s.op.gamma(), c2)?;
            let p = p.with_m(p.m * m_scale);
            carleman_ratio(&s.traj, &s.op, &s.g, weight, &p, omega1, c1, OperatorEvaluation::Equation)
        })
        .collect()
}

/// Largest power of two 𝒞₁ ≤ 1 for which every ratio (computed at 𝒞₁ = 1) drops to ≤ 1.
pub fn calibrate_c1(unit_ratios: &[CarlemanRatio]) -> f64 {
    let worst = unit_ratios
        .iter()
        .filter_map(|r| r.ratio)
        .fold(0.0, f64::max);
    let mut c1 = 1.0;
    while c1 * worst > 1.0 {
        c1 *= 0.5;
    }
    c1
}
