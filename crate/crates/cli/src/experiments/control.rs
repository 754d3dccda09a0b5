use grushin_core::control::{layout_registry, lr_null_control, ControlProblem, NullControlOptions};
use grushin_core::linalg::CgOptions;
use grushin_core::lr_schedule::build_schedule;
use serde::Serialize;

use super::{f, modal_profile, modal_system, scheme, tensor_grid, Artifacts, Experiment};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::io::TrajectoryBlock;

pub struct Control;

#[derive(Serialize)]
struct Out<'a> {
    #[serde(flatten)]
    report: &'a grushin_core::control::ControlReport,
    support_violations: usize,
    passive_ok: bool,
}

impl Experiment for Control {
    fn name(&self) -> &'static str {
        "control"
    }

    fn run(&self, cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
        let c = &cfg.control;
        let tg = tensor_grid(cfg)?;
        let nm = cfg.domain.modes;
        let sys = modal_system(cfg, &tg, nm)?;
        let u0 = modal_profile(tg.x(), nm, |n| 1.0 / (1.0 + n as f64));
        let t = cfg.time.t;
        let p = ControlProblem::new(sys, cfg.time.dt, scheme(&c.scheme)?)?;
        let sched = build_schedule(t, cfg.physics.gamma, c.rho_fraction, c.depth)?;
        let layout = layout_registry().get(&c.layout)?;
        let opts = NullControlOptions {
            eps0: c.eps0,
            cg: CgOptions {
                tol: c.cg_tol,
                max_iter: c.max_iter,
            },
        };
        let (signal, traj, report) = lr_null_control(&p, &u0, t, &sched, layout.as_ref(), opts)?;
        out.binary(
            "control.bin",
            &TrajectoryBlock {
                dt: signal.dt,
                t0: 0.0,
                rows: signal.physical(p.system()),
            },
        )?;
        let norms = traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(s, u)| vec![f(*s), f(p.system().norm_sq(u).sqrt())])
            .collect();
        out.csv("norms.csv", &["t", "norm"], norms);
        let support = signal.support_violations(p.system());
        out.json(
            "report.json",
            &Out {
                report: &report,
                support_violations: support,
                passive_ok: report.passive_ok(),
            },
        );
        out.check(
            "terminal_norm",
            report.final_norm_rel <= c.target,
            format!("‖u(T)‖/‖u0‖ = {:e}", report.final_norm_rel),
        );
        out.check("support", support == 0, format!("{support} samples outside ω or active steps"));
        out.check("passive_decay", report.passive_ok(), String::new());
        Ok(())
    }
}
