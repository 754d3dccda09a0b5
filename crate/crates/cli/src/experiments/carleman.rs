use grushin_core::carleman::{
    calibrate_c1, calibrate_weight, carleman_ratio, construct_psi_with, evaluate_suite, ratio_sample_suite,
    weight_margins, CarlemanParams, OperatorEvaluation, PsiShape, RatioSuiteConfig,
};
use grushin_core::domain::{BoxRegion, SpaceGrid};
use serde::Serialize;

use super::{axis, coefficient, f, Artifacts, Experiment};
use crate::config::ExperimentConfig;
use crate::error::CliError;

pub struct CarlemanVerify;

#[derive(Serialize)]
struct Margins {
    a: f64,
    lambda: f64,
    ln_lambda: f64,
    calibration: &'static str,
    ln_c1: f64,
    ln_c3: f64,
    min_margin_sign: i8,
    min_margin_ln_abs: f64,
    offending: usize,
}

#[derive(Serialize)]
struct SuiteSummary {
    gamma: f64,
    c1: f64,
    c1_calibrated: bool,
    c2: f64,
    worst_ratio: f64,
    null_samples: usize,
    homogeneity_defect: f64,
}

fn shape(name: &str) -> Result<PsiShape, CliError> {
    match name {
        "shifted" => Ok(PsiShape::Shifted),
        "centered" => Ok(PsiShape::Centered),
        other => Err(CliError::Config(format!(
            "carleman.shape must be `shifted` or `centered`, got `{other}`"
        ))),
    }
}

impl Experiment for CarlemanVerify {
    fn name(&self) -> &'static str {
        "carleman-verify"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
        let c = &cfg.carleman;
        // the weighted estimate is evaluated on the first x axis
        let grid = SpaceGrid::Line(axis(cfg.domain.x, c.nx)?);
        let tilde = BoxRegion::interval(c.omega_tilde[0], c.omega_tilde[1]);
        let psi = construct_psi_with(&grid, &tilde, shape(&c.shape)?)?;
        let weight = calibrate_weight(&psi, c.a, &c.calibration)?;
        let m = weight_margins(&weight);
        let min = m.min_margin();
        let offending = m.offending();
        let mut rows = Vec::new();
        for (fam, list) in [("boundary", &m.boundary), ("ii", &m.form_ii), ("iii", &m.form_iii)] {
            for (node, v) in list {
                rows.push(vec![fam.to_string(), node.to_string(), v.sign.to_string(), f(v.ln_abs)]);
            }
        }
        out.csv("margins.csv", &["family", "node", "sign", "ln_abs"], rows);
        out.json(
            "margins.json",
            &Margins {
                a: weight.a,
                lambda: weight.lambda,
                ln_lambda: weight.lambda.ln(),
                calibration: weight.mode,
                ln_c1: weight.ln_c1,
                ln_c3: weight.ln_c3,
                min_margin_sign: min.sign,
                min_margin_ln_abs: min.ln_abs,
                offending: offending.len(),
            },
        );
        out.check(
            "weight_margins",
            offending.is_empty(),
            format!("{} negative margins, λ = {:e}", offending.len(), weight.lambda),
        );

        if c.samples == 0 {
            return Ok(());
        }
        let gamma = cfg.physics.gamma;
        let samples = ratio_sample_suite(&RatioSuiteConfig {
            grid: grid.clone(),
            gamma,
            b: coefficient(cfg, &grid)?,
            t: c.t,
            dt: c.dt,
            mus: c.mus.clone(),
            samples: c.samples,
            seed: cfg.seed,
        })?;
        let omega1 = grid.subdomain_indices(&BoxRegion::interval(c.omega1[0], c.omega1[1]))?;
        let c1 = match c.c1 {
            Some(v) => v,
            None => calibrate_c1(&evaluate_suite(&samples, &weight, &omega1, 1.0, c.c2, 1.0)?),
        };
        let ratios = evaluate_suite(&samples, &weight, &omega1, c1, c.c2, 1.0)?;
        let rows = samples
            .iter()
            .zip(&ratios)
            .enumerate()
            .map(|(i, (s, r))| {
                vec![
                    i.to_string(),
                    f(s.op.mu()),
                    r.ratio.map(f).unwrap_or_default(),
                    f(r.lhs),
                    f(r.rhs),
                ]
            })
            .collect();
        out.csv("ratios.csv", &["sample", "mu", "ratio", "lhs", "rhs"], rows);
        let worst = ratios.iter().filter_map(|r| r.ratio).fold(0.0, f64::max);

        // the ratio is homogeneous of degree zero in the state
        let s0 = &samples[0];
        let p = CarlemanParams::new(0.0, c.t, s0.op.mu(), gamma, c.c2)?;
        let eval = |tr: &grushin_core::evolution::Trajectory| {
            carleman_ratio(tr, &s0.op, &s0.g, &weight, &p, &omega1, c1, OperatorEvaluation::Differenced)
        };
        let base = eval(&s0.traj)?.ratio;
        let mut scaled = s0.traj.clone();
        scaled.states.iter_mut().flatten().for_each(|v| *v *= 37.5);
        let homog = match (base, eval(&scaled)?.ratio) {
            (Some(a), Some(b)) => (a - b).abs() / a.abs().max(f64::MIN_POSITIVE),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        };
        out.json(
            "suite.json",
            &SuiteSummary {
                gamma,
                c1,
                c1_calibrated: c.c1.is_none(),
                c2: c.c2,
                worst_ratio: worst,
                null_samples: ratios.iter().filter(|r| r.ratio.is_none()).count(),
                homogeneity_defect: homog,
            },
        );
        out.check("ratio_at_most_one", worst <= 1.0, format!("worst {worst} at 𝒞₁ = {c1}"));
        out.check("ratio_homogeneity", homog <= 1e-12, format!("{homog:e}"));
        Ok(())
    }
}
