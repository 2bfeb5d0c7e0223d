use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub stage: String,
    pub unix_millis: u128,
    pub data: serde_json::Value,
}

/// Append-only record of a run: the config snapshot, the code version and
/// one entry per stage event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub code_version: String,
    pub config: serde_json::Value,
    entries: Vec<LogEntry>,
}

impl RunLog {
    pub fn new(config: &impl Serialize) -> Self {
        Self {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            entries: Vec::new(),
        }
    }

    pub fn record(&mut self, stage: &str, data: impl Serialize) {
        let unix_millis = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        let data = serde_json::to_value(data).unwrap_or(serde_json::Value::Null);
        self.entries.push(LogEntry { stage: stage.to_string(), unix_millis, data });
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    /// One JSON header line with version and config, then one line per entry.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::json!({"code_version": self.code_version, "config": self.config}).to_string();
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).unwrap_or_default());
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        let mut f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| HarnessError::io(path, e))
    }
}
