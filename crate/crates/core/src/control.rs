//! Constructive null control: penalized minimal-norm controls of the low
//! y-mode blocks on active intervals, free decay on passive intervals.
//!
//! Controls are constant on each time step. In modal coordinates a control h
//! acts through B = Q/w, i.e. the physical source is 1_ω·Σ h_n(x)φ_n(y) and its
//! cost is Σ_k dt·hₖᵀQhₖ = ‖g‖²_{L²((0,T)×ω)}.

use std::cell::RefCell;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::SymmetricEigen;
use serde::Serialize;

use crate::error::{invalid, GrushinError, Result};
use crate::evolution::{step_count, Scheme, Stepper, Trajectory};
use crate::linalg::{conjugate_gradient, dot, norm2, spmv, to_dense, CgOptions};
use crate::lr_schedule::LrSchedule;
use crate::modal::ModalSystem;
use crate::registry::Registry;
use crate::spectral::block_cutoff;

/// Where the active part of a block window sits.
pub trait ControlLayout: Send + Sync {
    fn name(&self) -> &'static str;
    /// (active, passive) step ranges of the window `start..end`.
    fn split(&self, start: usize, end: usize) -> (Range<usize>, Range<usize>);
}

pub struct ActiveFirst;
pub struct ActiveLast;

impl ControlLayout for ActiveFirst {
    fn name(&self) -> &'static str {
        "active-first"
    }
    fn split(&self, start: usize, end: usize) -> (Range<usize>, Range<usize>) {
        let mid = start + (end - start) / 2;
        (start..mid, mid..end)
    }
}

impl ControlLayout for ActiveLast {
    fn name(&self) -> &'static str {
        "active-last"
    }
    fn split(&self, start: usize, end: usize) -> (Range<usize>, Range<usize>) {
        let mid = start + (end - start).div_ceil(2);
        (mid..end, start..mid)
    }
}

pub fn layout_registry() -> Registry<dyn ControlLayout> {
    let mut r: Registry<dyn ControlLayout> = Registry::new("control layout");
    r.register("active-first", Arc::new(ActiveFirst));
    r.register("active-last", Arc::new(ActiveLast));
    r
}

pub struct ControlProblem {
    sys: ModalSystem,
    stepper: Stepper,
    /// Eigenvalues of every block generator, ascending.
    spectra: Vec<Vec<f64>>,
}

impl ControlProblem {
    pub fn new(sys: ModalSystem, dt: f64, scheme: Scheme) -> Result<Self> {
        let stepper = Stepper::banded(sys.generator(), dt, scheme)?;
        let dense = to_dense(sys.generator());
        let nb = sys.blocks();
        let spectra = (0..nb)
            .map(|b| {
                let idx: Vec<usize> = (b..sys.dim()).step_by(nb).collect();
                let sub = nalgebra::DMatrix::from_fn(idx.len(), idx.len(), |i, j| dense[(idx[i], idx[j])]);
                let mut ev: Vec<f64> = SymmetricEigen::new(sub).eigenvalues.iter().copied().collect();
                ev.sort_by(f64::total_cmp);
                ev
            })
            .collect();
        Ok(Self { sys, stepper, spectra })
    }

    pub fn system(&self) -> &ModalSystem {
        &self.sys
    }
    pub fn dt(&self) -> f64 {
        self.stepper.dt()
    }
    pub fn scheme(&self) -> Scheme {
        self.stepper.scheme()
    }
    /// λ_{n,γ} of block n (0-based).
    pub fn dissipation_rate(&self, n: usize) -> f64 {
        self.spectra[n][0]
    }

    /// Blocks with μ_n ≤ 2^{2j}.
    pub fn members(&self, j: u32) -> Vec<usize> {
        let cut = block_cutoff(j);
        (0..self.sys.blocks()).filter(|&n| self.sys.mus()[n] <= cut).collect()
    }

    fn project(&self, members: &[usize], u: &mut [f64]) {
        let nb = self.sys.blocks();
        let mut keep = vec![false; nb];
        members.iter().for_each(|&n| keep[n] = true);
        for (i, v) in u.iter_mut().enumerate() {
            if !keep[i % nb] {
                *v = 0.0;
            }
        }
    }

    /// B h = (Q/w) h.
    fn apply_b(&self, h: &[f64], out: &mut [f64]) {
        spmv(self.sys.obs(), h, out);
        let w = self.sys.weight();
        out.iter_mut().for_each(|v| *v /= w);
    }

    fn cost_of(&self, h: &[f64]) -> f64 {
        self.sys.obs_sq(h) * self.dt()
    }

    /// Adjoint controls hₖ = (L⁻¹M)^{K−1−k} L⁻¹ Π ψ, k = 0..K.
    fn adjoint_controls(&self, members: &[usize], psi: &[f64], steps: usize) -> Result<Vec<Vec<f64>>> {
        let mut z = psi.to_vec();
        self.project(members, &mut z);
        self.stepper.solve_lhs(&mut z)?;
        let mut out = vec![Vec::new(); steps];
        for k in (0..steps).rev() {
            out[k] = z.clone();
            if k > 0 {
                self.stepper.propagate(&mut z)?;
            }
        }
        Ok(out)
    }

    /// State after `steps` controlled steps from `u`.
    fn run_controlled(&self, u: &[f64], controls: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut s = u.to_vec();
        let mut g = vec![0.0; s.len()];
        for h in controls {
            self.apply_b(h, &mut g);
            self.stepper.step(&mut s, Some(&g))?;
        }
        Ok(s)
    }

    fn free(&self, u: &mut [f64], steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.stepper.propagate(u)?;
        }
        Ok(())
    }

    /// Λψ = Π u_K for the controls generated by ψ from a zero state.
    fn gramian(&self, members: &[usize], psi: &[f64], steps: usize) -> Result<Vec<f64>> {
        let controls = self.adjoint_controls(members, psi, steps)?;
        let mut out = self.run_controlled(&vec![0.0; psi.len()], &controls)?;
        self.project(members, &mut out);
        Ok(out)
    }

    /// Largest eigenvalue of the block controllability Gramian (power iteration).
    pub fn gramian_lambda_max(&self, members: &[usize], steps: usize, iters: usize) -> Result<f64> {
        let mut v = vec![1.0; self.sys.dim()];
        self.project(members, &mut v);
        let nv = norm2(&v);
        if nv == 0.0 {
            return Ok(0.0);
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let mut lam = 0.0;
        for _ in 0..iters.max(1) {
            let gv = self.gramian(members, &v, steps)?;
            lam = dot(&v, &gv);
            let n = norm2(&gv);
            if n == 0.0 {
                return Ok(0.0);
            }
            v = gv.into_iter().map(|x| x / n).collect();
        }
        Ok(lam)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockControl {
    #[serde(skip)]
    pub controls: Vec<Vec<f64>>,
    #[serde(skip)]
    pub terminal: Vec<f64>,
    /// ‖Π_j u(interval end)‖.
    pub residual: f64,
    /// ‖Π_j u_free(interval end)‖, the uncontrolled value.
    pub free_residual: f64,
    /// ‖Π_j(u_free − u)(interval end)‖², the state change bought by the control.
    pub gap_sq: f64,
    pub cost: f64,
    pub penalty: f64,
    pub iterations: usize,
}

/// Minimizes ‖g‖² + (1/ε)‖Π_j u(end)‖² over step-constant controls on `steps`
/// steps from `state`, via CG on (ε + ΠΛΠ)φ = Π u_free(end).
pub fn block_control(
    p: &ControlProblem,
    state: &[f64],
    members: &[usize],
    steps: usize,
    eps: f64,
    cg: CgOptions,
) -> Result<BlockControl> {
    let n = p.sys.dim();
    if state.len() != n {
        return Err(invalid("state", format!("expected length {n}")));
    }
    if steps == 0 || members.is_empty() {
        return Err(invalid("block", "need a nonempty block and a positive interval"));
    }
    if !(eps > 0.0) {
        return Err(invalid("eps_pen", "must be positive"));
    }
    let mut free = state.to_vec();
    p.free(&mut free, steps)?;
    let mut a = free.clone();
    p.project(members, &mut a);
    let w = p.sys.weight();
    let free_residual = (w * dot(&a, &a)).sqrt();
    let err = RefCell::new(None);
    let mut phi = vec![0.0; n];
    let stats = conjugate_gradient(
        "penalized control Gramian",
        |x, out| match p.gramian(members, x, steps) {
            Ok(g) => {
                for i in 0..n {
                    out[i] = eps * x[i] + g[i];
                }
            }
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                out.iter_mut().for_each(|v| *v = 0.0);
            }
        },
        &a,
        &mut phi,
        None,
        cg,
    )
    .map_err(|e| match e {
        GrushinError::NoConvergence { iterations, residual, .. } => GrushinError::NoConvergence {
            what: "penalized control Gramian (ill-conditioned: raise eps_pen or shrink the block)",
            iterations,
            residual,
        },
        other => other,
    })?;
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    let controls: Vec<Vec<f64>> = p
        .adjoint_controls(members, &phi, steps)?
        .into_iter()
        .map(|h| h.into_iter().map(|v| -v).collect())
        .collect();
    let terminal = p.run_controlled(state, &controls)?;
    let mut pt = terminal.clone();
    p.project(members, &mut pt);
    let residual = (w * dot(&pt, &pt)).sqrt();
    let gap: Vec<f64> = a.iter().zip(&pt).map(|(x, y)| x - y).collect();
    let cost = controls.iter().map(|h| p.cost_of(h)).sum();
    Ok(BlockControl {
        controls,
        terminal,
        residual,
        free_residual,
        gap_sq: w * dot(&gap, &gap),
        cost,
        penalty: eps,
        iterations: stats.iterations,
    })
}

/// Step-constant control over the whole horizon.
#[derive(Debug, Clone)]
pub struct ControlSignal {
    pub dt: f64,
    /// Modal control per step (zero vector on passive steps).
    pub steps: Vec<Vec<f64>>,
    /// Block index j of the active interval containing each step.
    pub active_block: Vec<Option<u32>>,
    pub cost: f64,
}

impl ControlSignal {
    /// Physical samples 1_ω·h per step (layout of `ModalSystem::localized_field`).
    pub fn physical(&self, sys: &ModalSystem) -> Vec<Vec<f64>> {
        self.steps.iter().map(|h| sys.localized_field(h)).collect()
    }

    /// Number of physical samples that are nonzero outside ω or outside an active interval.
    pub fn support_violations(&self, sys: &ModalSystem) -> usize {
        let inside = sys.omega_indicator();
        self.physical(sys)
            .iter()
            .zip(&self.active_block)
            .map(|(g, blk)| {
                g.iter()
                    .zip(&inside)
                    .filter(|(v, m)| **v != 0.0 && (blk.is_none() || !**m))
                    .count()
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassiveCheck {
    pub j: u32,
    pub n: usize,
    pub length: f64,
    pub contraction: f64,
    /// max(e^{−λL}, max_i |r(λ_i)|^K): the continuous rate or the exact
    /// discrete amplification, whichever is weaker.
    pub bound: f64,
}

impl PassiveCheck {
    pub fn holds(&self) -> bool {
        self.contraction <= self.bound * (1.0 + 1e-9) + 1e-300
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    pub j: u32,
    pub members: Vec<usize>,
    pub window: (f64, f64),
    pub active_steps: usize,
    pub passive_steps: usize,
    pub penalty: f64,
    /// ‖Π_j u‖ at the end of the window.
    pub residual: f64,
    pub cost: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ControlReport {
    pub initial_norm: f64,
    pub final_norm: f64,
    pub final_norm_rel: f64,
    pub cost: f64,
    pub layout: String,
    pub blocks: Vec<BlockReport>,
    pub passive: Vec<PassiveCheck>,
    pub schedule_rho: f64,
    pub schedule_tau: Vec<f64>,
}

impl ControlReport {
    pub fn passive_ok(&self) -> bool {
        self.passive.iter().all(PassiveCheck::holds)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NullControlOptions {
    /// ε_pen,j = eps0·4^{−j}.
    pub eps0: f64,
    pub cg: CgOptions,
}

impl Default for NullControlOptions {
    fn default() -> Self {
        Self {
            eps0: 1e-6,
            cg: CgOptions {
                tol: 1e-8,
                max_iter: 2000,
            },
        }
    }
}

/// Walks the windows [α_{j−1}, α_j] forward; the remainder (α_J, T) is free.
pub fn lr_null_control(
    p: &ControlProblem,
    u0: &[f64],
    horizon: f64,
    schedule: &LrSchedule,
    layout: &dyn ControlLayout,
    opts: NullControlOptions,
) -> Result<(ControlSignal, Trajectory, ControlReport)> {
    let n = p.sys.dim();
    if u0.len() != n {
        return Err(invalid("u0", format!("expected length {n}")));
    }
    if (schedule.t - horizon).abs() > 1e-12 * horizon {
        return Err(invalid("schedule", "schedule horizon differs from T"));
    }
    let dt = p.dt();
    let total = step_count(horizon, dt)?;
    if ((total as f64) * dt - horizon).abs() > 1e-9 * horizon {
        return Err(invalid("dt", "T must be a multiple of dt"));
    }
    let w = p.sys.weight();
    let nb = p.sys.blocks();
    let mut u = u0.to_vec();
    let mut states = vec![u.clone()];
    let mut signal = ControlSignal {
        dt,
        steps: vec![vec![0.0; n]; total],
        active_block: vec![None; total],
        cost: 0.0,
    };
    let mut blocks = Vec::new();
    let mut passive = Vec::new();
    let bound_at = |b: usize, k: usize| -> f64 {
        let l = k as f64 * dt;
        let cont = (-p.spectra[b][0] * l).exp();
        let disc = p.spectra[b]
            .iter()
            .map(|lam| p.scheme().amplification(*lam, dt).abs().powi(k as i32))
            .fold(0.0, f64::max);
        cont.max(disc)
    };
    let mut run_passive = |u: &mut Vec<f64>, states: &mut Vec<Vec<f64>>, j: u32, outside: &[usize], k: usize| -> Result<()> {
        if k == 0 {
            return Ok(());
        }
        let before: Vec<f64> = (0..nb).map(|b| norm2(&p.sys.block(u, b))).collect();
        for _ in 0..k {
            p.stepper.propagate(u)?;
            states.push(u.clone());
        }
        for &b in outside {
            if before[b] > 0.0 {
                passive.push(PassiveCheck {
                    j,
                    n: b + 1,
                    length: k as f64 * dt,
                    contraction: norm2(&p.sys.block(u, b)) / before[b],
                    bound: bound_at(b, k),
                });
            }
        }
        Ok(())
    };
    let mut end_prev = 0usize;
    for j in 1..=schedule.depth() as u32 {
        let start = end_prev;
        let end = ((schedule.alpha[j as usize] / dt).round() as usize).min(total);
        end_prev = end;
        let members = p.members(j);
        let outside: Vec<usize> = (0..nb).filter(|b| !members.contains(b)).collect();
        let mut report = BlockReport {
            j,
            members: members.iter().map(|b| b + 1).collect(),
            window: (start as f64 * dt, end as f64 * dt),
            active_steps: 0,
            passive_steps: end - start,
            penalty: 0.0,
            residual: 0.0,
            cost: 0.0,
            iterations: 0,
        };
        if members.is_empty() || end <= start + 1 {
            run_passive(&mut u, &mut states, j, &outside, end - start)?;
        } else {
            let (active, pass) = layout.split(start, end);
            let eps = opts.eps0 * 4f64.powi(-(j as i32));
            let control_first = active.start <= pass.start;
            if !control_first {
                run_passive(&mut u, &mut states, j, &outside, pass.len())?;
            }
            let bc = block_control(p, &u, &members, active.len(), eps, opts.cg)?;
            let mut s = u.clone();
            let mut g = vec![0.0; n];
            for (k, h) in active.clone().zip(&bc.controls) {
                p.apply_b(h, &mut g);
                p.stepper.step(&mut s, Some(&g))?;
                states.push(s.clone());
                signal.steps[k] = h.clone();
                signal.active_block[k] = Some(j);
            }
            u = s;
            if control_first {
                run_passive(&mut u, &mut states, j, &outside, pass.len())?;
            }
            report.active_steps = active.len();
            report.passive_steps = pass.len();
            report.penalty = eps;
            report.cost = bc.cost;
            report.iterations = bc.iterations;
            signal.cost += bc.cost;
        }
        let mut pu = u.clone();
        p.project(&members, &mut pu);
        report.residual = (w * dot(&pu, &pu)).sqrt();
        blocks.push(report);
    }
    let tail = total - end_prev;
    run_passive(&mut u, &mut states, schedule.depth() as u32 + 1, &[], tail)?;
    let initial_norm = (w * dot(u0, u0)).sqrt();
    let final_norm = (w * dot(&u, &u)).sqrt();
    let times = (0..states.len()).map(|k| k as f64 * dt).collect();
    let traj = Trajectory {
        times,
        states,
        dt,
        scheme: p.scheme(),
        label: "null control".into(),
    };
    let report = ControlReport {
        initial_norm,
        final_norm,
        final_norm_rel: if initial_norm > 0.0 { final_norm / initial_norm } else { 0.0 },
        cost: signal.cost,
        layout: layout.name().to_string(),
        blocks,
        passive,
        schedule_rho: schedule.rho,
        schedule_tau: schedule.tau.clone(),
    };
    Ok((signal, traj, report))
}
