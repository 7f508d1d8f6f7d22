//! Machine-readable run output: `report.json` (config echo, per-epoch
//! metrics, summary), `config.toml` and CSV tables.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use semcom::split_protocol::EpochMetrics;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// JSON has no infinities; they become the strings `"inf"` / `"-inf"`.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

pub fn opt_num(v: Option<f64>) -> Value {
    v.map_or(Value::Null, num)
}

/// CSV cell: empty for missing values, `inf` for the infinite PSNR.
pub fn cell(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) if x == f64::NEG_INFINITY => "-inf".into(),
        Some(x) => format!("{x}"),
    }
}

pub struct Report {
    command: String,
    config: RunConfig,
    epochs: Vec<Value>,
    summary: Map<String, Value>,
}

impl Report {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.into(),
            config: config.clone(),
            epochs: Vec::new(),
            summary: Map::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: Value) -> &mut Self {
        self.summary.insert(key.into(), value);
        self
    }

    pub fn push_epoch(&mut self, row: Value) {
        self.epochs.push(row);
    }

    pub fn dir(&self) -> &Path {
        &self.config.output.dir
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.config.output.dir.join(file)
    }

    fn ensure_dir(&self) -> CliResult<()> {
        fs::create_dir_all(self.dir()).map_err(|e| CliError::output(format!("{}: {e}", self.dir().display())))
    }

    pub fn write_file(&self, file: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        self.ensure_dir()?;
        let p = self.path(file);
        fs::write(&p, bytes).map_err(|e| CliError::output(format!("{}: {e}", p.display())))?;
        Ok(p)
    }

    pub fn write_csv(&self, file: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<PathBuf> {
        let mut text = header.join(",");
        text.push('\n');
        for r in rows {
            text.push_str(&r.join(","));
            text.push('\n');
        }
        self.write_file(file, text.as_bytes())
    }

    pub fn to_json(&self) -> CliResult<Value> {
        Ok(json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": serde_json::to_value(&self.config).map_err(CliError::output)?,
            "epochs": self.epochs,
            "summary": self.summary,
        }))
    }

    /// Writes `report.json` and the resolved `config.toml`.
    pub fn finish(&self) -> CliResult<PathBuf> {
        let text = serde_json::to_string_pretty(&self.to_json()?).map_err(CliError::output)?;
        self.write_file("config.toml", self.config.to_toml()?.as_bytes())?;
        let p = self.write_file("report.json", text.as_bytes())?;
        log::info!("report written to {}", p.display());
        Ok(p)
    }
}

pub fn epoch_json(m: &EpochMetrics) -> Value {
    json!({
        "epoch": m.epoch,
        "loss": num(m.train_esd),
        "d_ob": num(m.train_d_ob),
        "d_pr": opt_num(m.train_d_pr),
        "accuracy": opt_num(m.test_accuracy),
        "psnr": opt_num(m.test_psnr),
        "iou": opt_num(m.test_iou),
    })
}

pub const METRICS_HEADER: [&str; 5] = ["epoch", "loss", "acc", "psnr", "iou"];

pub fn epoch_row(m: &EpochMetrics) -> Vec<String> {
    vec![
        m.epoch.to_string(),
        cell(Some(m.train_esd)),
        cell(m.test_accuracy),
        cell(m.test_psnr),
        cell(m.test_iou),
    ]
}
