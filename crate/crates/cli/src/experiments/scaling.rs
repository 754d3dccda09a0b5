use grushin_core::operator::{fit_scaling_law, scaling_sweep};
use serde::Serialize;

use super::{coefficient, f, x_grid_with, Artifacts, Experiment};
use crate::config::ExperimentConfig;
use crate::error::CliError;

pub struct Scaling;

#[derive(Serialize)]
struct FitOut {
    gamma: f64,
    exponent: f64,
    expected: f64,
    c_star: f64,
    c_star_upper: f64,
    residual: f64,
}

impl Experiment for Scaling {
    fn name(&self) -> &'static str {
        "scaling"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
        let s = &cfg.scaling;
        if !(s.mu_min > 0.0 && s.mu_max > s.mu_min) || s.count < 2 {
            return Err(CliError::Config("scaling: need 0 < mu_min < mu_max and count ≥ 2".into()));
        }
        let grid = x_grid_with(cfg, s.nx)?;
        let b = coefficient(cfg, &grid)?;
        let gamma = cfg.physics.gamma;
        let step = (s.mu_max / s.mu_min).ln() / (s.count - 1) as f64;
        let mus: Vec<f64> = (0..s.count).map(|k| s.mu_min * (step * k as f64).exp()).collect();
        let pairs = scaling_sweep(&grid, gamma, &b, &mus, s.tol)?;
        let p = 1.0 / (1.0 + gamma);
        let rows = pairs
            .iter()
            .map(|&(mu, lam)| vec![f(mu), f(lam), f(lam / mu.powf(p))])
            .collect();
        out.csv("scaling.csv", &["mu", "lambda", "lambda_over_mu_pow"], rows);
        let fit = fit_scaling_law(&pairs, gamma)?;
        let expected = fit.expected_exponent();
        out.json(
            "fit.json",
            &FitOut {
                gamma,
                exponent: fit.exponent,
                expected,
                c_star: fit.c_star,
                c_star_upper: fit.c_star_upper,
                residual: fit.residual,
            },
        );
        let dev = (fit.exponent - expected).abs();
        out.check(
            "exponent",
            dev <= s.exponent_tol,
            format!("fitted {:.4}, expected {:.4}", fit.exponent, expected),
        );
        out.check(
            "lambda_monotone",
            pairs.windows(2).all(|w| w[1].1 >= w[0].1),
            String::new(),
        );
        out.check(
            "c_star_bracket",
            fit.c_star <= fit.c_star_upper,
            format!("{} ≤ {}", fit.c_star, fit.c_star_upper),
        );
        Ok(())
    }
}
