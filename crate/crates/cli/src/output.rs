use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

/// Inner-dynamics exponents used for the ergodization and error-control
/// bookkeeping (`a` for the window scale, `c` for the inner error interval).
pub const INNER_EXPONENT_A: f64 = 0.125;
pub const INNER_EXPONENT_C: f64 = -0.25;

pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn config_hash(cfg: &RunConfig) -> String {
    Sha256::digest(cfg.emit().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Artifact sink for one command run.
pub struct Output {
    dir: PathBuf,
    command: &'static str,
    files: Vec<String>,
}

impl Output {
    pub fn new(dir: &Path, command: &'static str) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            command,
            files: Vec::new(),
        })
    }

    /// Writes a CSV; `header` entries carry their unit, e.g. `t[time]`.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e))?;
        w.write_record(header).map_err(|e| CliError::io(&path, e))?;
        for r in rows {
            w.write_record(r).map_err(|e| CliError::io(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes `<command>.json` with the run metadata and `summary`.
    pub fn finish(self, cfg: &RunConfig, summary: Value) -> Result<PathBuf, CliError> {
        let it = &cfg.integrator;
        let meta = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": config_hash(cfg),
            "seed": cfg.run.seed,
            "tolerances": {
                "abs_tol": it.abs_tol,
                "rel_tol": it.rel_tol,
                "h_init": it.h_init,
                "h_min": it.h_min,
                "h_max": it.h_max,
                "max_steps": it.max_steps,
            },
            "inner_exponents": { "a": INNER_EXPONENT_A, "c": INNER_EXPONENT_C },
            "artifacts": self.files,
            "summary": summary,
        });
        let path = self.dir.join(format!("{}.json", self.command));
        let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
