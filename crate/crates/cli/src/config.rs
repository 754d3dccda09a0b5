//! Experiment configuration: one TOML key tree, overridden by `--set key=value`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: String,
    pub seed: u64,
    /// Worker threads; 0 lets rayon decide.
    pub workers: usize,
    pub output_root: String,
    pub domain: DomainConfig,
    pub physics: PhysicsConfig,
    pub omega: OmegaConfig,
    pub time: TimeConfig,
    pub spectrum: SpectrumConfig,
    pub scaling: ScalingConfig,
    pub evolve: EvolveConfig,
    pub carleman: CarlemanConfig,
    pub lr: LrConfig,
    pub observability: ObservabilityConfig,
    pub invert: InvertConfig,
    pub control: ControlConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: "full-suite".into(),
            seed: 7,
            workers: 0,
            output_root: "runs".into(),
            domain: DomainConfig::default(),
            physics: PhysicsConfig::default(),
            omega: OmegaConfig::default(),
            time: TimeConfig::default(),
            spectrum: SpectrumConfig::default(),
            scaling: ScalingConfig::default(),
            evolve: EvolveConfig::default(),
            carleman: CarlemanConfig::default(),
            lr: LrConfig::default(),
            observability: ObservabilityConfig::default(),
            invert: InvertConfig::default(),
            control: ControlConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub x: [f64; 2],
    pub nx: usize,
    /// Second x-axis; Ω₁ becomes a rectangle when set.
    pub x2: Option<[f64; 2]>,
    pub nx2: usize,
    pub y: [f64; 2],
    pub ny: usize,
    pub modes: usize,
    pub basis: String,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            x: [-1.0, 1.0],
            nx: 41,
            x2: None,
            nx2: 21,
            y: [0.0, 1.0],
            ny: 31,
            modes: 8,
            basis: "analytic-sine".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub gamma: f64,
    /// b ≡ constant unless `b_table` (samples on every x-node) is given.
    pub b_constant: f64,
    pub b_table: Option<Vec<f64>>,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            b_constant: 1.0,
            b_table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmegaConfig {
    pub x: [f64; 2],
    pub x2: Option<[f64; 2]>,
    pub y: [f64; 2],
}

impl Default for OmegaConfig {
    fn default() -> Self {
        Self {
            x: [0.5, 0.8],
            x2: None,
            y: [0.2, 0.8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub t: f64,
    pub dt: f64,
    pub t0: f64,
    pub t1: f64,
    pub scheme: String,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t: 1.0,
            dt: 2e-3,
            t0: 0.1,
            t1: 0.5,
            scheme: "crank-nicolson".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Cutoffs for the spectral-inequality constant on ω₂.
    pub mus: Vec<f64>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            mus: vec![10.0, 50.0, 100.0, 200.0, 400.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub nx: usize,
    pub mu_min: f64,
    pub mu_max: f64,
    pub count: usize,
    pub tol: f64,
    /// Allowed |exponent − 1/(1+γ)|.
    pub exponent_tol: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            nx: 2001,
            mu_min: 1e2,
            mu_max: 1e6,
            count: 9,
            tol: 1e-10,
            exponent_tol: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub snapshot_every: usize,
    pub trials: usize,
    pub trial_mu: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            snapshot_every: 25,
            trials: 50,
            trial_mu: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarlemanConfig {
    pub nx: usize,
    pub omega_tilde: [f64; 2],
    /// Observation interval for the weighted estimate; must contain ω̃.
    pub omega1: [f64; 2],
    pub shape: String,
    pub a: f64,
    pub calibration: String,
    pub samples: usize,
    pub mus: Vec<f64>,
    pub t: f64,
    pub dt: f64,
    /// Fixed 𝒞₁; calibrated on the suite when absent.
    pub c1: Option<f64>,
    pub c2: f64,
}

impl Default for CarlemanConfig {
    fn default() -> Self {
        Self {
            nx: 81,
            omega_tilde: [0.3, 0.7],
            omega1: [0.2, 0.8],
            shape: "shifted".into(),
            a: 2.0,
            calibration: "search".into(),
            samples: 50,
            mus: vec![1.0, 16.0, 100.0],
            t: 1.0,
            dt: 1e-2,
            c1: None,
            c2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrConfig {
    pub t: f64,
    pub rho_fraction: f64,
    /// Explicit ρ, bypassing the admissibility check.
    pub rho: Option<f64>,
    pub depth: usize,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c_star: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            t: 10.0,
            rho_fraction: 0.75,
            rho: None,
            depth: 24,
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            c_star: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservabilityConfig {
    pub strategy: String,
    pub band: usize,
    pub ts: Vec<f64>,
    /// Mode numbers n (μ_n = (nπ/|Ω₂|)²).
    pub ns: Vec<usize>,
    pub dt: f64,
    pub tol: f64,
    pub rel_width: f64,
    /// [T_lo, T_hi] for the minimal-time bracket (γ = 1 only).
    pub bracket: Option<[f64; 2]>,
    pub fit_from: usize,
}

impl Default for ObservabilityConfig {
    fn default() -> Self {
        Self {
            strategy: "dense".into(),
            band: 12,
            ts: vec![0.25, 0.5, 1.0],
            ns: (1..=8).collect(),
            dt: 2e-3,
            tol: 1e-8,
            rel_width: 0.2,
            bracket: None,
            fit_from: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvertConfig {
    pub modes: usize,
    pub dt: f64,
    pub lambda_reg: f64,
    pub noise: f64,
    pub noise_seed: u64,
    /// CSV or binary measurement file; synthesized from the smooth test source when absent.
    pub measurement: Option<String>,
    /// "zero" or "random".
    pub u0: String,
    pub r0: f64,
    pub r_slope: f64,
    pub eta: f64,
    /// Time refinement of synthesized data (1 = same grid).
    pub refine: usize,
    pub cg_tol: f64,
    pub max_iter: usize,
    /// Required relative error for noiseless same-grid data.
    pub target: f64,
    /// Modes for the per-mode ratio table; empty skips it.
    pub ratio_modes: Vec<usize>,
    pub estimator: String,
}

impl Default for InvertConfig {
    fn default() -> Self {
        Self {
            modes: 4,
            dt: 1e-2,
            lambda_reg: 1e-10,
            noise: 0.0,
            noise_seed: 1,
            measurement: None,
            u0: "random".into(),
            r0: 1.0,
            r_slope: 0.0,
            eta: grushin_core::inverse_source::DEFAULT_ETA,
            refine: 1,
            cg_tol: 1e-12,
            max_iter: 2000,
            target: 1e-3,
            ratio_modes: vec![2, 6, 10, 14, 18],
            estimator: "worst-u0".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub eps0: f64,
    pub layout: String,
    pub depth: usize,
    pub rho_fraction: f64,
    pub cg_tol: f64,
    pub max_iter: usize,
    pub scheme: String,
    pub target: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            eps0: 1e-6,
            layout: "active-first".into(),
            depth: 5,
            rho_fraction: 0.75,
            cg_tol: 1e-8,
            max_iter: 2000,
            scheme: "backward-euler".into(),
            target: 1e-4,
        }
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, falling back to a bare string.
pub fn apply_set(table: &mut Table, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("bad key path `{path}`")));
    }
    let value = match toml::from_str::<Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").unwrap_or(Value::String(raw.trim().into())),
        Err(_) => Value::String(raw.trim().into()),
    };
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let slot = cur
            .entry(k.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = slot
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{k}` in `{path}` is not a table")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// sha256 of the config with execution-only fields (workers, output root) cleared.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.workers = 0;
        c.output_root = String::new();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn run_dir_name(&self) -> String {
        format!("{}-{}", self.kind, &self.content_hash()[..12])
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let interval = |name: &str, iv: [f64; 2]| -> Result<(), CliError> {
            if iv[0].is_finite() && iv[1].is_finite() && iv[0] < iv[1] {
                Ok(())
            } else {
                Err(CliError::Config(format!("{name}: need lo < hi, got {iv:?}")))
            }
        };
        let inside = |name: &str, iv: [f64; 2], dom: [f64; 2]| -> Result<(), CliError> {
            interval(name, iv)?;
            if iv[0] < dom[0] || iv[1] > dom[1] {
                return Err(CliError::Config(format!("{name} {iv:?} leaves the domain {dom:?}")));
            }
            Ok(())
        };
        let d = &self.domain;
        interval("domain.x", d.x)?;
        interval("domain.y", d.y)?;
        if d.nx < 3 || d.ny < 3 || (d.x2.is_some() && d.nx2 < 3) {
            return bad("grids need at least 3 nodes per axis".into());
        }
        inside("omega.x", self.omega.x, d.x)?;
        inside("omega.y", self.omega.y, d.y)?;
        match (d.x2, self.omega.x2) {
            (Some(dom), Some(iv)) => inside("omega.x2", iv, dom)?,
            (None, None) => {}
            _ => return bad("omega.x2 must be given exactly when domain.x2 is".into()),
        }
        inside("carleman.omega1", self.carleman.omega1, d.x)?;
        inside("carleman.omega_tilde", self.carleman.omega_tilde, self.carleman.omega1)?;
        let g = self.physics.gamma;
        if !(g > 0.0 && g <= 1.0) {
            return bad(format!("physics.gamma must lie in (0,1], got {g}"));
        }
        if !(self.physics.b_constant > 0.0) {
            return bad("physics.b_constant must be positive".into());
        }
        let t = &self.time;
        if !(t.t > 0.0 && t.dt > 0.0 && t.dt <= t.t) {
            return bad(format!("time: need 0 < dt ≤ T, got T={} dt={}", t.t, t.dt));
        }
        if !(t.t0 >= 0.0 && t.t0 < t.t1 && t.t1 <= t.t) {
            return bad(format!("time: need 0 ≤ T0 < T1 ≤ T, got {} {} {}", t.t0, t.t1, t.t));
        }
        for (name, v) in [
            ("invert.dt", self.invert.dt),
            ("observability.dt", self.observability.dt),
            ("carleman.dt", self.carleman.dt),
            ("control.eps0", self.control.eps0),
        ] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.observability.ts.iter().any(|t| !(*t > 0.0)) {
            return bad("observability.ts must be positive".into());
        }
        if self.observability.ns.contains(&0) || self.invert.ratio_modes.contains(&0) {
            return bad("mode numbers start at 1".into());
        }
        if !(self.invert.noise >= 0.0) || !(self.invert.lambda_reg >= 0.0) {
            return bad("invert.noise and invert.lambda_reg must be nonnegative".into());
        }
        if !matches!(self.invert.u0.as_str(), "zero" | "random") {
            return bad(format!("invert.u0 must be `zero` or `random`, got `{}`", self.invert.u0));
        }
        if self.invert.refine == 0 || self.evolve.snapshot_every == 0 {
            return bad("invert.refine and evolve.snapshot_every must be ≥ 1".into());
        }
        Ok(())
    }
}
