//! Experiment runner: resolves a config, runs it, and writes CSV plus a JSON
//! summary that echoes the resolved config.

pub mod config;
pub mod run;

use config::{ConfigError, ExperimentConfig};
use run::RunOutput;
use serde_json::json;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Paths of the files one run produced.
pub struct Written {
    pub csv: PathBuf,
    pub json: PathBuf,
}

pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, out: &RunOutput) -> std::io::Result<Written> {
    std::fs::create_dir_all(dir)?;
    let stem = cfg.kind().label();
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(&out.table.header)?;
    for row in &out.table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    let doc = json!({
        "experiment": stem,
        "config": serde_json::to_value(cfg).ok().and_then(|v| v.get("config").cloned()),
        "summary": out.summary,
        "numerical_failures": out.numerical,
        "undefined_points": out.undefined,
    });
    let json_path = dir.join(format!("{stem}.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(&doc).unwrap() + "\n")?;
    Ok(Written {
        csv: csv_path,
        json: json_path,
    })
}

pub fn read_config(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}
