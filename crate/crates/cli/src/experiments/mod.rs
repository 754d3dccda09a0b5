use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use grushin_core::domain::{build_interval_grid, BoxRegion, Grid1D, Interval, SpaceGrid, TensorGrid};
use grushin_core::evolution::Scheme;
use grushin_core::modal::ModalSystem;
use grushin_core::operator::CoefficientB;
use grushin_core::registry::Registry;
use grushin_core::spectral::{basis_registry, ModeBasis};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::io::{csv_bytes, TrajectoryBlock};

mod carleman;
mod control;
mod evolve;
mod invert;
mod lr;
mod observability;
mod scaling;
mod spectrum;
mod suite;

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Files and checks of one run, kept in memory until the run finishes.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: BTreeMap<String, Vec<u8>>,
    pub checks: Vec<Check>,
}

impl Artifacts {
    pub fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) {
        self.files.insert(name.into(), csv_bytes(header, &rows));
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) {
        let mut b = serde_json::to_vec_pretty(value).expect("artifact serializes");
        b.push(b'\n');
        self.files.insert(name.into(), b);
    }

    pub fn binary(&mut self, name: &str, block: &TrajectoryBlock) -> Result<(), CliError> {
        self.files.insert(name.into(), block.to_bytes()?);
        Ok(())
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    /// Moves everything from `other` under `prefix/`.
    pub fn absorb(&mut self, prefix: &str, other: Artifacts) {
        for (k, v) in other.files {
            self.files.insert(format!("{prefix}/{k}"), v);
        }
        for c in other.checks {
            self.checks.push(Check {
                name: format!("{prefix}/{}", c.name),
                ..c
            });
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError>;
}

/// Every experiment kind except the suite.
pub fn single_experiments() -> Vec<Arc<dyn Experiment>> {
    vec![
        Arc::new(spectrum::Spectrum),
        Arc::new(scaling::Scaling),
        Arc::new(evolve::Evolve),
        Arc::new(carleman::CarlemanVerify),
        Arc::new(lr::LrScheduleRun),
        Arc::new(observability::Observability),
        Arc::new(invert::Invert),
        Arc::new(control::Control),
    ]
}

pub fn experiment_registry() -> Registry<dyn Experiment> {
    let mut reg = Registry::new("experiment");
    for e in single_experiments() {
        reg.register(e.name(), e);
    }
    reg.register("full-suite", Arc::new(suite::FullSuite));
    reg
}

pub(crate) fn f(v: f64) -> String {
    crate::io::fmt_f64(v)
}

pub(crate) fn axis(iv: [f64; 2], n: usize) -> Result<Grid1D, CliError> {
    Ok(build_interval_grid(iv[0], iv[1], n)?)
}

pub(crate) fn x_grid_with(cfg: &ExperimentConfig, nx: usize) -> Result<SpaceGrid, CliError> {
    let d = &cfg.domain;
    Ok(match d.x2 {
        None => SpaceGrid::Line(axis(d.x, nx)?),
        Some(x2) => SpaceGrid::Rect(axis(d.x, nx)?, axis(x2, d.nx2)?),
    })
}

pub(crate) fn x_grid(cfg: &ExperimentConfig) -> Result<SpaceGrid, CliError> {
    x_grid_with(cfg, cfg.domain.nx)
}

pub(crate) fn tensor_grid(cfg: &ExperimentConfig) -> Result<TensorGrid, CliError> {
    Ok(TensorGrid::new(x_grid(cfg)?, axis(cfg.domain.y, cfg.domain.ny)?))
}

pub(crate) fn coefficient(cfg: &ExperimentConfig, grid: &SpaceGrid) -> Result<CoefficientB, CliError> {
    let t = match &cfg.physics.b_table {
        Some(t) => t,
        None => return Ok(CoefficientB::constant(grid, cfg.physics.b_constant)?),
    };
    // a 1D table given on the domain grid is resampled linearly onto finer line grids
    if let (SpaceGrid::Line(g), false) = (grid, t.len() == grid.node_count()) {
        if t.len() >= 2 {
            let (a, len) = (g.a(), g.length());
            let m = (t.len() - 1) as f64;
            let nodes = g
                .nodes()
                .iter()
                .map(|x| {
                    let s = ((x - a) / len * m).clamp(0.0, m);
                    let i = (s.floor() as usize).min(t.len() - 2);
                    let w = s - i as f64;
                    (1.0 - w) * t[i] + w * t[i + 1]
                })
                .collect();
            return Ok(CoefficientB::from_samples(grid, nodes)?);
        }
    }
    Ok(CoefficientB::from_samples(grid, t.clone())?)
}

pub(crate) fn basis(cfg: &ExperimentConfig, y: &Grid1D, count: usize) -> Result<ModeBasis, CliError> {
    let builder = basis_registry().get(&cfg.domain.basis)?;
    Ok(ModeBasis::build(y, count, builder.as_ref())?)
}

pub(crate) fn scheme(name: &str) -> Result<Scheme, CliError> {
    name.parse::<Scheme>().map_err(CliError::Core)
}

/// ω₁ as a box over the x axes.
pub(crate) fn omega_x(cfg: &ExperimentConfig) -> BoxRegion {
    let mut axes = vec![Interval::new(cfg.omega.x[0], cfg.omega.x[1])];
    if let Some(x2) = cfg.omega.x2 {
        axes.push(Interval::new(x2[0], x2[1]));
    }
    BoxRegion::new(axes)
}

/// ω₁ × ω₂, x axes first.
pub(crate) fn omega_box(cfg: &ExperimentConfig) -> BoxRegion {
    let mut b = omega_x(cfg);
    b.axes.push(Interval::new(cfg.omega.y[0], cfg.omega.y[1]));
    b
}

/// μ_n = (nπ/|Ω₂|)² for n = 1..=count.
pub(crate) fn analytic_mus(cfg: &ExperimentConfig, ns: impl Iterator<Item = usize>) -> Vec<(usize, f64)> {
    let len = cfg.domain.y[1] - cfg.domain.y[0];
    ns.map(|n| (n, (n as f64 * PI / len).powi(2))).collect()
}

pub(crate) fn modal_system(
    cfg: &ExperimentConfig,
    tg: &TensorGrid,
    n_modes: usize,
) -> Result<ModalSystem, CliError> {
    let b = coefficient(cfg, tg.x())?;
    let basis = basis(cfg, tg.y(), n_modes)?;
    Ok(ModalSystem::truncated(tg, cfg.physics.gamma, &b, &basis, n_modes, &omega_box(cfg))?)
}

/// Smooth bump vanishing on ∂Ω₁, tilted so it is not even in x.
pub(crate) fn bump(grid: &SpaceGrid, dof: usize) -> f64 {
    let p = grid.dof_point(dof);
    grid.axes()
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let s = (p[k] - g.a()) / g.length();
            4.0 * s * (1.0 - s) * (0.5 + s)
        })
        .product()
}

/// Modal vector (x-major, mode-minor) with block n scaled by `weight(n)`.
pub(crate) fn modal_profile(grid: &SpaceGrid, blocks: usize, weight: impl Fn(usize) -> f64) -> Vec<f64> {
    (0..grid.dof_count() * blocks)
        .map(|i| bump(grid, i / blocks) * weight(i % blocks))
        .collect()
}
