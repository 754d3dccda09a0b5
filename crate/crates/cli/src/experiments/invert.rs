use std::path::Path;

use grushin_core::inverse_source::{
    forward_measurement, reconstruct_source, refined_measurement, uniform_mode_ratio_study, validate_source_spec,
    InverseProblem, Measurement, ModeRatioConfig, Noise, SourceSpec,
};
use grushin_core::linalg::CgOptions;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{analytic_mus, coefficient, f, modal_profile, modal_system, omega_x, scheme, tensor_grid, Artifacts, Experiment};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::io::{read_csv, TrajectoryBlock, MAGIC};

pub struct Invert;

#[derive(Serialize)]
struct ResultOut {
    rel_error: Option<f64>,
    lambda_reg: f64,
    iterations: usize,
    cg_residual: f64,
    lipschitz_ratio: Option<f64>,
    data_source: String,
    chain_lhs: Option<f64>,
    chain_rhs: Option<f64>,
    r0: f64,
    r_variation: f64,
    small_variation: bool,
}

#[derive(Serialize)]
struct RatioSummary {
    estimator: String,
    sup: f64,
    argmax_n: usize,
    growth_slope: f64,
}

fn truth(p: &InverseProblem) -> Vec<f64> {
    let blocks = p.system().blocks();
    modal_profile(p.system().xgrid(), blocks, |n| 1.0 / (1.0 + n as f64).powi(2))
}

fn initial(cfg: &ExperimentConfig, dim: usize) -> Vec<f64> {
    match cfg.invert.u0.as_str() {
        "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
        }
        _ => vec![0.0; dim],
    }
}

/// Rows: window nodes K₀..=K₁, then the terminal G_γu(T₁).
fn measurement_rows(m: &Measurement) -> Vec<Vec<f64>> {
    m.window.iter().chain(std::iter::once(&m.terminal)).cloned().collect()
}

fn read_measurement(path: &Path, p: &InverseProblem) -> Result<Measurement, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let rows = if bytes.starts_with(MAGIC) {
        TrajectoryBlock::from_bytes(&bytes)?.rows
    } else {
        let text = String::from_utf8(bytes).map_err(|_| CliError::Format("measurement CSV is not UTF-8".into()))?;
        let t = read_csv(&text, true)?;
        let term = t.labels.iter().filter(|l| *l == "terminal").count();
        if term != 1 || t.labels.last().map(String::as_str) != Some("terminal") {
            return Err(CliError::Format("measurement CSV needs exactly one final `terminal` row".into()));
        }
        // drop the time column
        t.values.into_iter().map(|r| r.into_iter().skip(1).collect()).collect()
    };
    let spec = p.spec();
    let nwin = spec.k1() - spec.k0() + 1;
    if rows.len() != nwin + 1 || rows.iter().any(|r| r.len() != p.dim()) {
        return Err(CliError::Format(format!(
            "measurement must have {} rows of {} values, found {} rows",
            nwin + 1,
            p.dim(),
            rows.len()
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::Format("measurement contains non-finite values".into()));
    }
    let mut rows = rows;
    let terminal = rows.pop().unwrap();
    Ok(Measurement {
        window: rows,
        terminal,
        noise: Noise::None,
        chain: None,
    })
}

impl Experiment for Invert {
    fn name(&self) -> &'static str {
        "invert"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
        let c = &cfg.invert;
        let tg = tensor_grid(cfg)?;
        let sys = modal_system(cfg, &tg, c.modes)?;
        let x = tg.x().clone();
        let (r0, slope, t1) = (c.r0, c.r_slope, cfg.time.t1);
        let mut spec = SourceSpec::from_fn(
            &x,
            cfg.time.t0,
            t1,
            c.dt,
            move |t, p| r0 + slope * t * p[0],
            Some(&move |_, p| slope * p[0]),
        )?;
        spec.eta = c.eta;
        let check = validate_source_spec(&spec)?;
        let sch = scheme(&cfg.time.scheme)?;
        let p = InverseProblem::new(sys, spec.clone(), sch)?;
        let u0 = initial(cfg, p.dim());
        let noise = if c.noise > 0.0 {
            Noise::Additive {
                level: c.noise,
                seed: c.noise_seed,
            }
        } else {
            Noise::None
        };
        let f_true = truth(&p);
        let (m, source) = match &c.measurement {
            Some(path) => (read_measurement(Path::new(path), &p)?, format!("file:{path}")),
            None if c.refine > 1 => (
                refined_measurement(&p, &f_true, &u0, noise, c.refine)?,
                format!("synthetic, time refined ×{}", c.refine),
            ),
            None => (forward_measurement(&p, &f_true, &u0, noise)?, "synthetic".into()),
        };
        let dt = spec.dt();
        let times: Vec<f64> = (spec.k0()..=spec.k1()).map(|k| k as f64 * dt).collect();
        let rows = measurement_rows(&m);
        let csv_rows: Vec<Vec<String>> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let (kind, t) = if i < times.len() { ("window", times[i]) } else { ("terminal", t1) };
                let mut v = vec![kind.to_string(), f(t)];
                v.extend(r.iter().map(|x| f(*x)));
                v
            })
            .collect();
        let mut header = vec!["kind".to_string(), "t".to_string()];
        header.extend((0..p.dim()).map(|i| format!("c{i}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        out.csv("measurement.csv", &header, csv_rows);
        out.binary(
            "measurement.bin",
            &TrajectoryBlock {
                dt,
                t0: spec.k0() as f64 * dt,
                rows,
            },
        )?;

        let synthetic = c.measurement.is_none();
        let cg = CgOptions {
            tol: c.cg_tol,
            max_iter: c.max_iter,
        };
        let r = reconstruct_source(&p, &m, &u0, c.lambda_reg, synthetic.then_some(f_true.as_slice()), cg)?;
        let blocks = p.system().blocks();
        let rows = r
            .f_hat
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let pt = x.dof_point(i / blocks);
                let mut row: Vec<String> = pt[..x.dim()].iter().map(|q| f(*q)).collect();
                row.push((i % blocks + 1).to_string());
                row.push(f(*v));
                row.push(if synthetic { f(f_true[i]) } else { String::new() });
                row
            })
            .collect();
        let mut header: Vec<&str> = if x.dim() == 2 { vec!["x1", "x2"] } else { vec!["x"] };
        header.extend(["mode", "f_hat", "f_true"]);
        out.csv("f_hat.csv", &header, rows);
        out.json(
            "result.json",
            &ResultOut {
                rel_error: r.rel_error,
                lambda_reg: r.lambda_reg,
                iterations: r.iterations,
                cg_residual: r.residual,
                lipschitz_ratio: r.ratio,
                data_source: source,
                chain_lhs: m.chain.map(|c| c.lhs),
                chain_rhs: m.chain.map(|c| c.rhs),
                r0: check.r0,
                r_variation: check.variation,
                small_variation: check.small_variation,
            },
        );
        if let Some(ch) = m.chain {
            out.check(
                "stability_chain",
                ch.lhs <= ch.rhs * (1.0 + 1e-10),
                format!("{:e} ≤ {:e}", ch.lhs, ch.rhs),
            );
        }
        if synthetic && c.noise == 0.0 && c.refine == 1 {
            let e = r.rel_error.unwrap_or(f64::INFINITY);
            out.check("inverse_crime", e <= c.target, format!("relative error {e:e}"));
        }

        if !c.ratio_modes.is_empty() {
            let xl = x.clone();
            let study = uniform_mode_ratio_study(&ModeRatioConfig {
                b: coefficient(cfg, &xl)?,
                grid: xl.clone(),
                gamma: cfg.physics.gamma,
                modes: analytic_mus(cfg, c.ratio_modes.iter().copied()),
                omega1: omega_x(cfg),
                spec: SourceSpec::constant(&xl, 0.0, t1, c.dt, 1.0)?,
                scheme: sch,
                estimator: c.estimator.clone(),
            })?;
            let rows = study
                .rows
                .iter()
                .map(|r| vec![r.n.to_string(), f(r.mu), f(r.ratio)])
                .collect();
            out.csv("mode_ratios.csv", &["n", "mu", "ratio"], rows);
            out.json(
                "mode_ratios.json",
                &RatioSummary {
                    estimator: study.estimator.clone(),
                    sup: study.sup,
                    argmax_n: study.argmax_n,
                    growth_slope: study.growth_slope,
                },
            );
            out.check("mode_ratio_finite", study.sup.is_finite(), format!("sup {}", study.sup));
        }
        Ok(())
    }
}
