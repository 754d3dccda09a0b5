use grushin_core::evolution::{dissipation_trials, project_trajectory, solve_full, solve_mode, SourceTerm};
use grushin_core::linalg::norm2;
use grushin_core::operator::{assemble_full_operator, assemble_mode_operator, smallest_eigenvalue};

use super::{basis, bump, coefficient, f, scheme, tensor_grid, Artifacts, Experiment};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::io::TrajectoryBlock;

pub struct Evolve;

/// Modes seeded in the initial datum.
const SEEDED: usize = 3;

impl Experiment for Evolve {
    fn name(&self) -> &'static str {
        "evolve"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
        let tg = tensor_grid(cfg)?;
        let gamma = cfg.physics.gamma;
        let b = coefficient(cfg, tg.x())?;
        let sch = scheme(&cfg.time.scheme)?;
        let (t, dt) = (cfg.time.t, cfg.time.dt);
        let nm = cfg.domain.modes.max(SEEDED);
        let basis = basis(cfg, tg.y(), nm)?;
        let nx = tg.x().dof_count();
        let parts: Vec<(usize, Vec<f64>)> = (0..SEEDED)
            .map(|k| (k, (0..nx).map(|d| bump(tg.x(), d) / (1.0 + k as f64)).collect()))
            .collect();
        let u0 = basis.synthesize(&tg, parts.iter().map(|(k, v)| (*k, v.as_slice())));
        let full = assemble_full_operator(&tg, gamma, &b)?;
        let tr = solve_full(&full, &u0, &SourceTerm::Zero, t, dt, sch)?;

        let every = cfg.evolve.snapshot_every;
        let snaps: Vec<Vec<f64>> = tr.states.iter().step_by(every).cloned().collect();
        out.binary(
            "trajectory.bin",
            &TrajectoryBlock {
                dt: tr.dt * every as f64,
                t0: 0.0,
                rows: snaps,
            },
        )?;
        let norms = tr
            .times
            .iter()
            .zip(&tr.states)
            .map(|(s, u)| vec![f(*s), f(tg.norm_sq(u))])
            .collect();
        out.csv("norms.csv", &["t", "norm_sq"], norms);

        // the full solve projected on each seeded mode against the 1D mode solve
        let mut worst: f64 = 0.0;
        let mut mode_sq = vec![0.0; tr.len()];
        let wx = tg.x().cell_volume();
        for (k, v) in &parts {
            let op = assemble_mode_operator(tg.x(), basis.mu_discrete()[*k], gamma, &b)?;
            let m = solve_mode(&op, v, &SourceTerm::Zero, t, dt, sch)?;
            let p = project_trajectory(&tr, &tg, &basis, *k);
            for (i, (a, c)) in p.states.iter().zip(&m.states).enumerate() {
                let d: Vec<f64> = a.iter().zip(c).map(|(x, y)| x - y).collect();
                worst = worst.max(norm2(&d) / norm2(c).max(f64::MIN_POSITIVE));
                mode_sq[i] += wx * c.iter().map(|v| v * v).sum::<f64>();
            }
        }
        out.check("mode_consistency", worst <= 1e-8, format!("max relative deviation {worst:e}"));
        let parseval = tr
            .states
            .iter()
            .zip(&mode_sq)
            .map(|(s, m)| (tg.norm_sq(s) / m - 1.0).abs())
            .fold(0.0, f64::max);
        out.check("parseval", parseval <= 1e-8, format!("max defect {parseval:e}"));

        if cfg.evolve.trials > 0 {
            let op = assemble_mode_operator(tg.x(), cfg.evolve.trial_mu, gamma, &b)?;
            let lam = smallest_eigenvalue(&op, 1e-12)?.value;
            let trials = dissipation_trials(&op, lam, cfg.evolve.trials, cfg.seed, t, dt, sch)?;
            let rows = trials
                .iter()
                .enumerate()
                .map(|(i, r)| vec![i.to_string(), f(r.margin), f(r.eps_disc), r.holds().to_string()])
                .collect();
            out.csv("dissipation.csv", &["trial", "margin", "eps_disc", "holds"], rows);
            let bad = trials.iter().filter(|r| !r.holds()).count();
            out.check(
                "dissipation",
                bad == 0,
                format!("{bad} of {} trials violate the inequality", trials.len()),
            );
        }
        Ok(())
    }
}
