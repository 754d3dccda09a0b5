use super::{single_experiments, Artifacts, Experiment};
use crate::config::ExperimentConfig;
use crate::error::CliError;

pub struct FullSuite;

impl Experiment for FullSuite {
    fn name(&self) -> &'static str {
        "full-suite"
    }

    /// Runs every experiment on the same config; each lands in its own subdirectory.
    fn run(&self, cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
        for e in single_experiments() {
            log::info!("full-suite: {}", e.name());
            let mut sub = Artifacts::default();
            e.run(cfg, &mut sub)?;
            out.absorb(e.name(), sub);
        }
        Ok(())
    }
}
