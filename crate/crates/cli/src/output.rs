use std::fs;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentKind;
use crate::error::{io_err, CliError};

/// Resolved run-wide settings.
#[derive(Debug, Clone, Serialize)]
pub struct Common {
    pub seed: u64,
    pub runs: Option<usize>,
    pub alpha: Option<f64>,
    pub output_dir: PathBuf,
}

/// One experiment directory. Everything is written with stable formatting and
/// no timestamps, so identical inputs give identical files.
pub struct Output {
    dir: PathBuf,
    kind: ExperimentKind,
    common: Common,
}

impl Output {
    pub fn create(kind: ExperimentKind, common: Common) -> Result<Self, CliError> {
        fs::create_dir_all(&common.output_dir).map_err(io_err)?;
        Ok(Output { dir: common.output_dir.clone(), kind, common })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn envelope(&self, resolved: &Value) -> Value {
        json!({
            "experiment": self.kind,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.common.seed,
            "runs": self.common.runs,
            "alpha": self.common.alpha,
            "output_dir": self.common.output_dir,
            "parameters": resolved,
        })
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(io_err)?;
        text.push('\n');
        fs::write(self.path(name), text).map_err(io_err)
    }

    /// Writes `config.json` and `results.json`, both carrying the resolved config.
    pub fn finish(&self, resolved: &impl Serialize, results: Value) -> Result<(), CliError> {
        let resolved = serde_json::to_value(resolved).map_err(io_err)?;
        let config = self.envelope(&resolved);
        self.write_json("config.json", &config)?;
        let mut out = config;
        out["results"] = results;
        self.write_json("results.json", &out)?;
        log::info!("wrote {}", self.dir.display());
        Ok(())
    }

    pub fn write_csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.path(name)).map_err(io_err)?;
        w.write_record(header).map_err(io_err)?;
        for row in rows {
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }
}

/// Shortest round-trip form; exponent notation for very small or large magnitudes.
pub fn f(v: f64) -> String {
    format!("{v:?}")
}
