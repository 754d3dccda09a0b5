use grushin_core::observability::{mode_constants, threshold_bracket, uniformity_study, ModeObsConfig};

use super::{analytic_mus, coefficient, f, omega_x, x_grid, Artifacts, Experiment};
use crate::config::ExperimentConfig;
use crate::error::CliError;

pub struct Observability;

impl Experiment for Observability {
    fn name(&self) -> &'static str {
        "observability"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
        let o = &cfg.observability;
        if o.ts.is_empty() || o.ns.is_empty() {
            return Err(CliError::Config("observability: ts and ns must be nonempty".into()));
        }
        let grid = x_grid(cfg)?;
        let gamma = cfg.physics.gamma;
        let mcfg = ModeObsConfig {
            b: coefficient(cfg, &grid)?,
            grid: grid.clone(),
            gamma,
            modes: analytic_mus(cfg, o.ns.iter().copied()),
            omega1: omega_x(cfg),
            t: o.ts.iter().cloned().fold(0.0, f64::max),
            dt: o.dt,
            strategy: o.strategy.clone(),
            band: o.band,
            tol: o.tol,
        };
        let mut ts = o.ts.clone();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let tables = ts
            .iter()
            .map(|&t| mode_constants(&mcfg, t))
            .collect::<Result<Vec<_>, _>>()?;
        let rows = ts
            .iter()
            .zip(&tables)
            .flat_map(|(t, rows)| rows.iter().map(move |r| vec![f(*t), r.n.to_string(), f(r.mu), f(r.c)]))
            .collect();
        out.csv("constants.csv", &["t", "n", "mu", "c"], rows);

        let mut mono = true;
        for w in tables.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                mono &= b.c <= a.c * (1.0 + 1e-9);
            }
        }
        out.check("nonincreasing_in_t", mono, format!("{} horizons", ts.len()));

        // ω₁ = Ω₁ gives C ≤ 1/T for every mode
        let full = grid
            .axes()
            .iter()
            .zip(&mcfg.omega1.axes)
            .all(|(g, iv)| iv.lo <= g.a() && iv.hi >= g.b());
        if full {
            let ok = ts
                .iter()
                .zip(&tables)
                .all(|(t, rows)| rows.iter().all(|r| r.c <= (1.0 / t) * (1.0 + 1e-9)));
            out.check("full_observation_bound", ok, "C_n ≤ 1/T");
        }

        if gamma < 1.0 {
            let u = uniformity_study(&mcfg)?;
            out.json("uniformity.json", &u);
            out.check(
                "uniform_in_n",
                u.sup.is_finite() && u.tail_nonincreasing,
                format!("sup {} at n = {}", u.sup, u.argmax_n),
            );
        } else if let Some([lo, hi]) = o.bracket {
            let br = threshold_bracket(&mcfg, lo, hi, o.rel_width, o.fit_from)?;
            out.json("bracket.json", &br);
            out.check(
                "threshold_bracket",
                br.hi - br.lo <= o.rel_width * br.estimate,
                format!("T̂ ∈ [{}, {}]", br.lo, br.hi),
            );
        }
        Ok(())
    }
}
