use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{io_error, CliError};
use crate::Context;

pub const VERSION: &str = env!("RINGFIT_VERSION");

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub threads: usize,
    pub deterministic: bool,
    /// Seconds since the Unix epoch at start.
    pub started_at: u64,
    /// Seconds spent per phase.
    pub timings: BTreeMap<String, f64>,
    pub wall_seconds: f64,
    #[serde(skip)]
    clock: Option<Instant>,
}

impl RunManifest {
    pub fn start(command: &'static str, ctx: &Context) -> Self {
        RunManifest {
            command,
            version: VERSION,
            seed: None,
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            threads: ctx.threads,
            deterministic: ctx.deterministic,
            started_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            timings: BTreeMap::new(),
            wall_seconds: 0.0,
            clock: Some(Instant::now()),
        }
    }

    pub fn config(&mut self, config: &impl Serialize) -> Result<(), CliError> {
        self.config = serde_json::to_value(config).map_err(ringfit::Error::from)?;
        Ok(())
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Runs `f` and records its duration under `phase`.
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.timings.entry(phase.to_string()).or_default() += start.elapsed().as_secs_f64();
        out
    }

    pub fn finish(mut self, path: &Path) -> Result<(), CliError> {
        if let Some(c) = self.clock {
            self.wall_seconds = c.elapsed().as_secs_f64();
        }
        let text = serde_json::to_string_pretty(&self).map_err(ringfit::Error::from)?;
        std::fs::write(path, text + "\n").map_err(|e| io_error(path, e))
    }
}

/// `<path>.manifest.json`, for commands whose output is a single file.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}
