//! Line-delimited metrics logs.
//!
//! A log file starts with a header line naming the schema and version and
//! carrying the full config, followed by one JSON record per round. The
//! summary lives next to it in `<stem>.summary.json`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::sim::{MetricsLog, RoundRecord, Summary};

pub const SCHEMA: &str = "fedbox-metrics";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
    config: ExperimentConfig,
}

/// A log read back from disk, with any recoverable problems noted.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedLog {
    pub log: MetricsLog,
    pub warnings: Vec<String>,
}

pub fn summary_path(log_path: &Path) -> PathBuf {
    let stem = log_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    log_path.with_file_name(format!("{stem}.summary.json"))
}

/// Serialises the log body. Equal logs give equal bytes.
pub fn render_log(log: &MetricsLog) -> String {
    let header = Header {
        schema: SCHEMA.to_string(),
        version: SCHEMA_VERSION,
        config: log.config.clone(),
    };
    let mut out = serde_json::to_string(&header).expect("header serialises");
    out.push('\n');
    for record in &log.rounds {
        out.push_str(&serde_json::to_string(record).expect("record serialises"));
        out.push('\n');
    }
    out
}

pub fn write_log(log: &MetricsLog, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut file = fs::File::create(path)?;
    file.write_all(render_log(log).as_bytes())?;
    if let Some(summary) = &log.summary {
        let text = serde_json::to_string_pretty(summary).expect("summary serialises");
        fs::write(summary_path(path), text + "\n")?;
    }
    Ok(())
}

pub fn parse_log(text: &str) -> Result<LoadedLog> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    let (_, first) = lines.next().ok_or(Error::NoHeader)?;
    let header: Header = serde_json::from_str(first).map_err(|e| {
        if first.contains(SCHEMA) {
            Error::SchemaMismatch(format!("unreadable header: {e}"))
        } else {
            Error::NoHeader
        }
    })?;
    if header.schema != SCHEMA || header.version != SCHEMA_VERSION {
        return Err(Error::SchemaMismatch(format!(
            "expected {SCHEMA} v{SCHEMA_VERSION}, found {} v{}",
            header.schema, header.version
        )));
    }
    let mut rounds = Vec::new();
    let mut warnings = Vec::new();
    while let Some((number, line)) = lines.next() {
        match serde_json::from_str::<RoundRecord>(line) {
            Ok(record) => rounds.push(record),
            Err(e) if lines.peek().is_none() => {
                warnings.push(format!("line {}: truncated final record ignored ({e})", number + 1));
            }
            Err(e) => {
                return Err(Error::MalformedRecord {
                    line: number + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(LoadedLog {
        log: MetricsLog {
            config: header.config,
            rounds,
            summary: None,
        },
        warnings,
    })
}

/// Reads a log and, when present, its summary document.
pub fn read_log(path: &Path) -> Result<LoadedLog> {
    let text = fs::read_to_string(path)?;
    let mut loaded = parse_log(&text)?;
    let summary_file = summary_path(path);
    if summary_file.exists() {
        let text = fs::read_to_string(&summary_file)?;
        match serde_json::from_str::<Summary>(&text) {
            Ok(summary) => loaded.log.summary = Some(summary),
            Err(e) => loaded.warnings.push(format!("{}: {e}", summary_file.display())),
        }
    } else {
        loaded.warnings.push(format!("{} not found", summary_file.display()));
    }
    for w in &loaded.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(loaded)
}
