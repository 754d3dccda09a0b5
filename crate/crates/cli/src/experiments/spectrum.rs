use grushin_core::spectral::{block_j_min, fit_spectral_growth, spectral_inequality_constant};
use serde::Serialize;

use super::{axis, basis, f, Artifacts, Experiment};
use crate::config::ExperimentConfig;
use crate::error::CliError;

pub struct Spectrum;

#[derive(Serialize)]
struct Growth {
    slope: f64,
    intercept: f64,
    residual: f64,
}

impl Experiment for Spectrum {
    fn name(&self) -> &'static str {
        "spectrum"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
        let y = axis(cfg.domain.y, cfg.domain.ny)?;
        let mu_top = cfg.spectrum.mus.iter().cloned().fold(0.0, f64::max);
        // enough modes to cover the largest cutoff, capped by the grid
        let needed = (mu_top.sqrt() * y.length() / std::f64::consts::PI).floor() as usize + 1;
        let count = cfg.domain.modes.max(needed).min(y.interior_count());
        let b = basis(cfg, &y, count)?;
        let rows = (0..b.len())
            .map(|i| {
                vec![
                    (i + 1).to_string(),
                    f(b.mu()[i]),
                    f(b.mu_discrete()[i]),
                    block_j_min(b.mu()[i]).to_string(),
                ]
            })
            .collect();
        out.csv("spectrum.csv", &["n", "mu", "mu_discrete", "block_j_min"], rows);
        let ascending = b.mu().windows(2).all(|w| w[1] > w[0]);
        out.check("eigenvalues_ascending", ascending, format!("{} modes", b.len()));
        out.check(
            "basis_defect",
            b.defect() < 1e-8,
            format!("max residual {:e}", b.defect()),
        );

        if cfg.spectrum.mus.is_empty() {
            return Ok(());
        }
        let w2 = y.subdomain_indices(&grushin_core::domain::BoxRegion::interval(cfg.omega.y[0], cfg.omega.y[1]))?;
        let pts = cfg
            .spectrum
            .mus
            .iter()
            .map(|&mu| spectral_inequality_constant(&b, &w2, mu))
            .collect::<Result<Vec<_>, _>>()?;
        let rows = pts
            .iter()
            .map(|p| {
                vec![
                    f(p.mu),
                    p.modes.to_string(),
                    f(p.constant),
                    f(p.log_constant_over_sqrt_mu),
                    f(p.condition),
                ]
            })
            .collect();
        out.csv(
            "spectral.csv",
            &["mu", "modes", "constant", "log_constant_over_sqrt_mu", "condition"],
            rows,
        );
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.mu.total_cmp(&b.mu));
        let mono = sorted.windows(2).all(|p| p[1].constant >= p[0].constant * (1.0 - 1e-12));
        out.check("constant_nondecreasing_in_mu", mono, String::new());
        if let Ok(g) = fit_spectral_growth(&pts) {
            out.json(
                "growth.json",
                &Growth {
                    slope: g.slope,
                    intercept: g.intercept,
                    residual: g.residual,
                },
            );
        }
        Ok(())
    }
}
