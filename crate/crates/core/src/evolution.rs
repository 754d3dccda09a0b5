//! θ-scheme time stepping for u' + A u = g, ∂_t u extraction, and the
//! Duhamel dissipation inequality on single modes.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::TensorGrid;
use crate::error::{invalid, GrushinError, Result};
use crate::linalg::{shifted, spmv, LinearSolverKind, SparseMatrix, SpdSolver};
use crate::operator::{FullOperator, ModeOperator};
use crate::spectral::ModeBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    BackwardEuler,
    CrankNicolson,
}

impl Scheme {
    pub fn theta(self) -> f64 {
        match self {
            Scheme::BackwardEuler => 1.0,
            Scheme::CrankNicolson => 0.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::BackwardEuler => "backward-euler",
            Scheme::CrankNicolson => "crank-nicolson",
        }
    }

    /// Per-step amplification of an eigencomponent with eigenvalue `a`.
    pub fn amplification(self, a: f64, dt: f64) -> f64 {
        let th = self.theta();
        (1.0 - (1.0 - th) * dt * a) / (1.0 + th * dt * a)
    }
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme::CrankNicolson
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = GrushinError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "backward-euler" | "be" => Ok(Scheme::BackwardEuler),
            "crank-nicolson" | "cn" => Ok(Scheme::CrankNicolson),
            other => Err(invalid("scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

/// Source samples at the time nodes of a run.
#[derive(Debug, Clone)]
pub enum SourceTerm {
    Zero,
    /// g(t_k) for every node; optional exact ∂_t g samples.
    Sampled {
        values: Vec<Vec<f64>>,
        dt_values: Option<Vec<Vec<f64>>>,
    },
    /// g(t_k) = R(t_k, x)·f(x, y). `r[k]` lives on x-dofs, `f` on state dofs;
    /// `block` is the number of y-dofs per x-dof (1 for mode systems).
    Separated {
        r: Vec<Vec<f64>>,
        dr: Option<Vec<Vec<f64>>>,
        f: Vec<f64>,
        block: usize,
    },
}

impl SourceTerm {
    pub fn is_zero(&self) -> bool {
        matches!(self, SourceTerm::Zero)
    }

    pub fn time_nodes(&self) -> Option<usize> {
        match self {
            SourceTerm::Zero => None,
            SourceTerm::Sampled { values, .. } => Some(values.len()),
            SourceTerm::Separated { r, .. } => Some(r.len()),
        }
    }

    pub fn eval(&self, k: usize, out: &mut [f64]) {
        match self {
            SourceTerm::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            SourceTerm::Sampled { values, .. } => out.copy_from_slice(&values[k]),
            SourceTerm::Separated { r, f, block, .. } => {
                separated(&r[k], f, *block, out);
            }
        }
    }

    /// ∂_t g at node k: exact samples if present, otherwise second-order differences.
    pub fn eval_dt(&self, k: usize, dt: f64, out: &mut [f64]) {
        match self {
            SourceTerm::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            SourceTerm::Sampled {
                dt_values: Some(d), ..
            } => out.copy_from_slice(&d[k]),
            SourceTerm::Separated {
                dr: Some(d), f, block, ..
            } => separated(&d[k], f, *block, out),
            _ => {
                let n = self.time_nodes().unwrap_or(0);
                let mut a = vec![0.0; out.len()];
                let mut b = vec![0.0; out.len()];
                let mut c = vec![0.0; out.len()];
                if n < 3 {
                    out.iter_mut().for_each(|v| *v = 0.0);
                } else if k == 0 {
                    self.eval(0, &mut a);
                    self.eval(1, &mut b);
                    self.eval(2, &mut c);
                    for i in 0..out.len() {
                        out[i] = (-3.0 * a[i] + 4.0 * b[i] - c[i]) / (2.0 * dt);
                    }
                } else if k + 1 == n {
                    self.eval(k, &mut a);
                    self.eval(k - 1, &mut b);
                    self.eval(k - 2, &mut c);
                    for i in 0..out.len() {
                        out[i] = (3.0 * a[i] - 4.0 * b[i] + c[i]) / (2.0 * dt);
                    }
                } else {
                    self.eval(k + 1, &mut a);
                    self.eval(k - 1, &mut b);
                    for i in 0..out.len() {
                        out[i] = (a[i] - b[i]) / (2.0 * dt);
                    }
                }
            }
        }
    }

    /// Samples g(t_k) into a fresh vector.
    pub fn at(&self, k: usize, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        self.eval(k, &mut v);
        v
    }
}

fn separated(r: &[f64], f: &[f64], block: usize, out: &mut [f64]) {
    for (d, rd) in r.iter().enumerate() {
        for j in 0..block {
            out[d * block + j] = rd * f[d * block + j];
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub dt: f64,
    pub scheme: Scheme,
    pub label: String,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one state")
    }
    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }
    /// Weighted squared norms ‖u(t_k)‖² with a uniform dof weight.
    pub fn norms_sq(&self, weight: f64) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| weight * s.iter().map(|v| v * v).sum::<f64>())
            .collect()
    }
    pub fn is_finite(&self) -> bool {
        self.states.iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Implicit θ-step for a fixed generator A: `(I + θdtA) u' = (I − (1−θ)dtA) u + dt·f`.
pub struct Stepper {
    a: SparseMatrix,
    dt: f64,
    scheme: Scheme,
    lhs: Box<dyn SpdSolver>,
}

impl Stepper {
    pub fn new(a: &SparseMatrix, dt: f64, scheme: Scheme, kind: &dyn LinearSolverKind) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("{dt} must be positive")));
        }
        let lhs = kind.prepare(&shifted(a, 1.0, scheme.theta() * dt))?;
        Ok(Self {
            a: a.clone(),
            dt,
            scheme,
            lhs,
        })
    }

    /// Stepper backed by a banded Cholesky factorization.
    pub fn banded(a: &SparseMatrix, dt: f64, scheme: Scheme) -> Result<Self> {
        let reg = crate::linalg::linear_solver_registry();
        Self::new(a, dt, scheme, reg.get("banded-cholesky")?.as_ref())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }
    pub fn dim(&self) -> usize {
        self.a.rows()
    }
    pub fn generator(&self) -> &SparseMatrix {
        &self.a
    }

    /// One step; `forcing` is θ g_{k+1} + (1−θ) g_k (or a step-constant control).
    pub fn step(&self, u: &mut [f64], forcing: Option<&[f64]>) -> Result<()> {
        let n = u.len();
        let mut rhs = vec![0.0; n];
        let c = (1.0 - self.scheme.theta()) * self.dt;
        if c != 0.0 {
            spmv(&self.a, u, &mut rhs);
            for i in 0..n {
                rhs[i] = u[i] - c * rhs[i];
            }
        } else {
            rhs.copy_from_slice(u);
        }
        if let Some(f) = forcing {
            for i in 0..n {
                rhs[i] += self.dt * f[i];
            }
        }
        self.lhs.solve(&rhs, u)
    }

    /// Free step u ← M u. M is symmetric, so this is also its own adjoint.
    pub fn propagate(&self, u: &mut [f64]) -> Result<()> {
        self.step(u, None)
    }

    /// x ← (I + θdtA)⁻¹ x.
    pub fn solve_lhs(&self, x: &mut [f64]) -> Result<()> {
        let rhs = x.to_vec();
        self.lhs.solve(&rhs, x)
    }
}

/// Number of steps for horizon `t` at nominal step `dt`.
pub fn step_count(t: f64, dt: f64) -> Result<usize> {
    if !(t > 0.0) || !(dt > 0.0) {
        return Err(invalid("T/dt", format!("need T > 0 and dt > 0, got {t}, {dt}")));
    }
    Ok(((t / dt).round() as usize).max(1))
}

/// Runs the θ-scheme from `u0` over `steps` steps with the given stepper.
pub fn integrate(stepper: &Stepper, u0: &[f64], g: &SourceTerm, steps: usize, label: &str) -> Result<Trajectory> {
    let n = u0.len();
    if let Some(m) = g.time_nodes() {
        if m != steps + 1 {
            return Err(invalid(
                "g",
                format!("source has {m} time nodes, run has {}", steps + 1),
            ));
        }
    }
    let dt = stepper.dt();
    let th = stepper.scheme().theta();
    let mut u = u0.to_vec();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(u.clone());
    let mut g_prev = vec![0.0; n];
    let mut g_next = vec![0.0; n];
    let mut forcing = vec![0.0; n];
    if !g.is_zero() {
        g.eval(0, &mut g_prev);
    }
    for k in 0..steps {
        if g.is_zero() {
            stepper.step(&mut u, None)?;
        } else {
            g.eval(k + 1, &mut g_next);
            for i in 0..n {
                forcing[i] = th * g_next[i] + (1.0 - th) * g_prev[i];
            }
            stepper.step(&mut u, Some(&forcing))?;
            std::mem::swap(&mut g_prev, &mut g_next);
        }
        times.push((k + 1) as f64 * dt);
        states.push(u.clone());
    }
    let traj = Trajectory {
        times,
        states,
        dt,
        scheme: stepper.scheme(),
        label: label.to_string(),
    };
    if !traj.is_finite() {
        return Err(GrushinError::Verification(format!("non-finite state in `{label}`")));
    }
    Ok(traj)
}

/// Generic solve of u' + A u = g on (0, T).
pub fn solve_generator(
    a: &SparseMatrix,
    u0: &[f64],
    g: &SourceTerm,
    t: f64,
    dt: f64,
    scheme: Scheme,
    label: &str,
) -> Result<Trajectory> {
    if u0.len() != a.rows() {
        return Err(invalid("u0", format!("length {} vs operator {}", u0.len(), a.rows())));
    }
    let steps = step_count(t, dt)?;
    let stepper = Stepper::banded(a, t / steps as f64, scheme)?;
    integrate(&stepper, u0, g, steps, label)
}

pub fn solve_mode(
    op: &ModeOperator,
    u0: &[f64],
    g: &SourceTerm,
    t: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<Trajectory> {
    solve_generator(op.matrix(), u0, g, t, dt, scheme, &format!("mode mu={}", op.mu()))
}

pub fn solve_full(
    op: &FullOperator,
    u0: &[f64],
    g: &SourceTerm,
    t: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<Trajectory> {
    solve_generator(op.matrix(), u0, g, t, dt, scheme, "full")
}

/// Solves several independent mode systems in parallel, results in input order.
pub fn solve_modes_parallel(
    ops: &[ModeOperator],
    data: &[(Vec<f64>, SourceTerm)],
    t: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<Vec<Trajectory>> {
    ops.par_iter()
        .zip(data.par_iter())
        .map(|(op, (u0, g))| solve_mode(op, u0, g, t, dt, scheme))
        .collect()
}

/// y-projection of a full trajectory onto mode `idx` (0-based).
pub fn project_trajectory(traj: &Trajectory, grid: &TensorGrid, basis: &ModeBasis, idx: usize) -> Trajectory {
    let states = traj
        .states
        .iter()
        .map(|s| basis.decompose_one(grid, s, idx))
        .collect();
    Trajectory {
        times: traj.times.clone(),
        states,
        dt: traj.dt,
        scheme: traj.scheme,
        label: format!("{} / mode {}", traj.label, idx + 1),
    }
}

/// v = ∂_t u = −A u + g at every node of `traj`.
pub fn time_derivative_trajectory(traj: &Trajectory, g: &SourceTerm, a: &SparseMatrix) -> Trajectory {
    let n = traj.dim();
    let states = traj
        .states
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let mut v = vec![0.0; n];
            spmv(a, u, &mut v);
            let gk = g.at(k, n);
            v.iter_mut().zip(&gk).for_each(|(x, gi)| *x = gi - *x);
            v
        })
        .collect();
    Trajectory {
        times: traj.times.clone(),
        states,
        dt: traj.dt,
        scheme: traj.scheme,
        label: format!("d/dt {}", traj.label),
    }
}

/// max |v(0) + A u0 − g(0)|.
pub fn initial_identity_defect(v: &Trajectory, u0: &[f64], g: &SourceTerm, a: &SparseMatrix) -> f64 {
    let n = u0.len();
    let mut au = vec![0.0; n];
    spmv(a, u0, &mut au);
    let g0 = g.at(0, n);
    (0..n)
        .map(|i| (v.states[0][i] + au[i] - g0[i]).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
pub struct DerivativeResidual {
    /// Discrete L²(0,T; ℓ²_w) distance between −Au+g and the re-solved v.
    pub residual: f64,
    pub reference: f64,
}

/// Re-solves v' + A v = ∂_t g, v(0) = −A u0 + g(0), and compares with −A u + g.
pub fn derivative_system_residual(
    traj: &Trajectory,
    g: &SourceTerm,
    a: &SparseMatrix,
    weight: f64,
) -> Result<DerivativeResidual> {
    let v = time_derivative_trajectory(traj, g, a);
    let n = traj.dim();
    let steps = traj.len() - 1;
    let dt = traj.dt;
    let dg: Vec<Vec<f64>> = (0..=steps)
        .map(|k| {
            let mut o = vec![0.0; n];
            g.eval_dt(k, dt, &mut o);
            o
        })
        .collect();
    let src = SourceTerm::Sampled {
        values: dg,
        dt_values: None,
    };
    let stepper = Stepper::banded(a, dt, traj.scheme)?;
    let w = integrate(&stepper, &v.states[0], &src, steps, "v-system")?;
    let tw = crate::linalg::trapezoid_weights(steps + 1, dt);
    let mut res = 0.0;
    let mut refn = 0.0;
    for k in 0..=steps {
        let d: f64 = v.states[k]
            .iter()
            .zip(&w.states[k])
            .map(|(x, y)| (x - y).powi(2))
            .sum();
        let r: f64 = v.states[k].iter().map(|x| x * x).sum();
        res += tw[k] * weight * d;
        refn += tw[k] * weight * r;
    }
    Ok(DerivativeResidual {
        residual: res.sqrt(),
        reference: refn.sqrt(),
    })
}

/// ∫_a^b of the piecewise-linear interpolant of `values` on `times`.
pub fn integrate_window(times: &[f64], values: &[f64], a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..times.len().saturating_sub(1) {
        let (t0, t1) = (times[k], times[k + 1]);
        let lo = t0.max(a);
        let hi = t1.min(b);
        if hi <= lo {
            continue;
        }
        let at = |t: f64| values[k] + (values[k + 1] - values[k]) * (t - t0) / (t1 - t0);
        total += 0.5 * (hi - lo) * (at(lo) + at(hi));
    }
    total
}

#[derive(Debug, Clone, Copy)]
pub struct DissipationMargin {
    pub lhs: f64,
    pub rhs: f64,
    /// rhs − lhs; nonnegative when the inequality holds.
    pub margin: f64,
}

/// ‖u_n(T)‖² ≤ (6/T)e^{−2λT/3}∫_{T/3}^{2T/3}‖u_n‖² + (1/λ)‖g_n‖²_{L²((0,T)×Ω₁)}.
pub fn dissipation_check(traj: &Trajectory, lambda: f64, g: &SourceTerm, weight: f64) -> DissipationMargin {
    let t = *traj.times.last().unwrap();
    let norms = traj.norms_sq(weight);
    let lhs = *norms.last().unwrap();
    let window = integrate_window(&traj.times, &norms, t / 3.0, 2.0 * t / 3.0);
    let g_sq = if g.is_zero() {
        0.0
    } else {
        let n = traj.dim();
        let gn: Vec<f64> = (0..traj.len())
            .map(|k| weight * g.at(k, n).iter().map(|v| v * v).sum::<f64>())
            .collect();
        integrate_window(&traj.times, &gn, 0.0, t)
    };
    let rhs = 6.0 / t * (-2.0 * lambda * t / 3.0).exp() * window + g_sq / lambda;
    DissipationMargin {
        lhs,
        rhs,
        margin: rhs - lhs,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DissipationTrial {
    pub margin: f64,
    /// |margin(dt) − margin(dt/2)|·4/3, a Richardson estimate of the stepping error.
    pub eps_disc: f64,
}

impl DissipationTrial {
    pub fn holds(&self) -> bool {
        self.margin >= -self.eps_disc
    }
}

/// Random (u0, g) trials of `dissipation_check` on one mode operator. g is
/// c₁(x) + sin(2πt/T)c₂(x) with Gaussian c₁, c₂; trials run in parallel.
pub fn dissipation_trials(
    op: &ModeOperator,
    lambda: f64,
    trials: usize,
    seed: u64,
    t: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<Vec<DissipationTrial>> {
    let n = op.dim();
    let w = op.grid().cell_volume();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |k: usize| -> Vec<f64> { (0..k).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let data: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..trials).map(|_| (gauss(n), gauss(n), gauss(n))).collect();
    let margin = |u0: &[f64], c1: &[f64], c2: &[f64], step: f64| -> Result<f64> {
        let steps = step_count(t, step)?;
        let h = t / steps as f64;
        let values = (0..=steps)
            .map(|k| {
                let s = (2.0 * std::f64::consts::PI * k as f64 * h / t).sin();
                c1.iter().zip(c2).map(|(a, b)| a + s * b).collect()
            })
            .collect();
        let g = SourceTerm::Sampled {
            values,
            dt_values: None,
        };
        let traj = solve_mode(op, u0, &g, t, h, scheme)?;
        Ok(dissipation_check(&traj, lambda, &g, w).margin)
    };
    data.par_iter()
        .map(|(u0, c1, c2)| {
            let coarse = margin(u0, c1, c2, dt)?;
            let fine = margin(u0, c1, c2, 0.5 * dt)?;
            Ok(DissipationTrial {
                margin: coarse,
                eps_disc: (coarse - fine).abs() * 4.0 / 3.0,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Grid1D, SpaceGrid};
    use crate::operator::{assemble_mode_operator, smallest_eigenvalue, CoefficientB};

    fn mode_op(mu: f64) -> ModeOperator {
        let g = SpaceGrid::Line(Grid1D::new(-1.0, 1.0, 51).unwrap());
        let b = CoefficientB::constant(&g, 1.0).unwrap();
        assemble_mode_operator(&g, mu, 0.5, &b).unwrap()
    }

    #[test]
    fn eigenvector_decays_exponentially() {
        let op = mode_op(30.0);
        let e = smallest_eigenvalue(&op, 1e-12).unwrap();
        let tr = solve_mode(&op, &e.vector, &SourceTerm::Zero, 1.0, 1e-3, Scheme::CrankNicolson).unwrap();
        let ratio = crate::linalg::norm2(tr.final_state());
        assert!((ratio / (-e.value).exp() - 1.0).abs() < 1e-2);
    }

    #[test]
    fn zero_data_gives_zero_trajectory() {
        let op = mode_op(5.0);
        let tr = solve_mode(&op, &vec![0.0; op.dim()], &SourceTerm::Zero, 0.5, 1e-2, Scheme::BackwardEuler).unwrap();
        assert!(tr.states.iter().all(|s| s.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn window_integral_of_linear_function() {
        let t: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|x| 2.0 * x).collect();
        let i = integrate_window(&t, &v, 1.0 / 3.0, 2.0 / 3.0);
        assert!((i - (4.0 / 9.0 - 1.0 / 9.0)).abs() < 1e-14);
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("cn".parse::<Scheme>().unwrap(), Scheme::CrankNicolson);
        assert!("rk4".parse::<Scheme>().is_err());
        assert!((Scheme::BackwardEuler.amplification(2.0, 0.5) - 0.5).abs() < 1e-15);
    }
}
