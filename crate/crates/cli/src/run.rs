use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, EXIT_CHECK_FAILED};
use crate::experiments::{experiment_registry, Artifacts, Check};

#[derive(Serialize)]
struct FileEntry {
    name: String,
    bytes: usize,
    sha256: String,
}

/// Deterministic record of a run: identical for identical configs.
#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    kind: &'a str,
    config_hash: String,
    config: &'a ExperimentConfig,
    checks_passed: bool,
    error: Option<String>,
    files: Vec<FileEntry>,
}

#[derive(Serialize)]
struct Timings {
    wall_seconds: f64,
    workers: usize,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub checks: Vec<Check>,
    /// The experiment's own failure, if any; artifacts written so far are kept.
    pub error: Option<CliError>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        match &self.error {
            Some(e) => e.exit_code(),
            None if self.checks.iter().all(|c| c.passed) => 0,
            None => EXIT_CHECK_FAILED,
        }
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn pretty(value: &impl Serialize) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(value).expect("serializable");
    b.push(b'\n');
    b
}

/// Validates, runs the experiment on a pool of `cfg.workers` threads and writes
/// `<output_root>/<kind>-<hash>/`. Input and I/O errors are returned as `Err`
/// without touching the output root; numerical failures come back inside the
/// outcome together with the artifacts produced before them.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let exp = experiment_registry().get(&cfg.kind)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let dir = Path::new(&cfg.output_root).join(cfg.run_dir_name());
    // only ever replace an earlier run of the same config
    if dir.exists() && !dir.join("manifest.json").is_file() {
        return Err(CliError::Config(format!("{} exists and is not a run directory", dir.display())));
    }
    log::info!("running {} into {}", cfg.kind, dir.display());

    let start = Instant::now();
    let mut art = Artifacts::default();
    let result = pool.install(|| exp.run(cfg, &mut art));
    let wall = start.elapsed().as_secs_f64();
    let error = match result {
        Ok(()) => None,
        Err(e @ CliError::Core(_)) if e.exit_code() == EXIT_CHECK_FAILED => Some(e),
        Err(e) => return Err(e),
    };

    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    }
    let mut files = Vec::new();
    for (name, bytes) in &art.files {
        write(&dir.join(name), bytes)?;
        files.push(FileEntry {
            name: name.clone(),
            bytes: bytes.len(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }
    write(&dir.join("config.toml"), cfg.to_toml().as_bytes())?;
    write(&dir.join("checks.json"), &pretty(&art.checks))?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        kind: &cfg.kind,
        config_hash: cfg.content_hash(),
        config: cfg,
        checks_passed: art.all_passed(),
        error: error.as_ref().map(|e| e.to_string()),
        files,
    };
    write(&dir.join("manifest.json"), &pretty(&manifest))?;
    write(
        &dir.join("timings.json"),
        &pretty(&Timings {
            wall_seconds: wall,
            workers: pool.current_num_threads(),
        }),
    )?;
    Ok(RunOutcome {
        dir,
        checks: art.checks,
        error,
    })
}
