//! Configuration-driven experiments on top of `grushin-core`.
//!
//! Every experiment kind implements [`experiments::Experiment`] and is looked
//! up by name in [`experiments::experiment_registry`]. A run writes its
//! artifacts, `config.toml`, `checks.json`, `manifest.json` and `timings.json`
//! to `<output_root>/<kind>-<config hash>/`.

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod run;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use run::{execute, RunOutcome};

/// Environment variables that may override config values.
pub const ENV_WORKERS: &str = "GRUSHIN_WORKERS";
pub const ENV_OUTPUT_ROOT: &str = "GRUSHIN_OUTPUT_ROOT";

/// Defaults < config file < environment < `--set` overrides; `kind` comes last.
pub fn resolve_config(
    kind: &str,
    file_text: Option<&str>,
    env_workers: Option<&str>,
    env_output_root: Option<&str>,
    sets: &[String],
) -> Result<ExperimentConfig, CliError> {
    let mut table: toml::Table = match file_text {
        Some(t) => toml::from_str(t).map_err(|e| CliError::Config(e.to_string()))?,
        None => toml::Table::new(),
    };
    if let Some(w) = env_workers {
        let n: i64 = w
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{ENV_WORKERS}=`{w}` is not an integer")))?;
        table.insert("workers".into(), toml::Value::Integer(n));
    }
    if let Some(r) = env_output_root {
        table.insert("output_root".into(), toml::Value::String(r.into()));
    }
    for s in sets {
        config::apply_set(&mut table, s)?;
    }
    if let Some(toml::Value::String(k)) = table.get("kind") {
        if k != kind {
            log::warn!("config kind `{k}` replaced by subcommand `{kind}`");
        }
    }
    table.insert("kind".into(), toml::Value::String(kind.into()));
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
}
