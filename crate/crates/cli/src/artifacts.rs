use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Provenance stamped into every artifact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Meta {
    pub tool_version: &'static str,
    pub core_version: &'static str,
    pub config_sha256: String,
    pub seed: u64,
}

impl Meta {
    pub fn for_config(cfg: &ExperimentConfig) -> CliResult<Self> {
        let canonical = serde_json::to_vec(cfg)?;
        Ok(Self::with_hash(hex(&Sha256::digest(&canonical)), cfg.seed))
    }

    /// For artifacts produced without a config file, hash the invocation text instead.
    pub fn for_invocation(text: &str, seed: u64) -> Self {
        Self::with_hash(hex(&Sha256::digest(text.as_bytes())), seed)
    }

    pub fn with_hash(config_sha256: String, seed: u64) -> Self {
        Self { tool_version: env!("CARGO_PKG_VERSION"), core_version: hrode::VERSION, config_sha256, seed }
    }

    fn comment(&self) -> String {
        format!(
            "# hrode-cli {} hrode-core {} config_sha256={} seed={}",
            self.tool_version, self.core_version, self.config_sha256, self.seed
        )
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Floats as 17 significant digits; non-finite values spelled out.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// RFC 4180 body preceded by a single `#` provenance line.
pub fn write_csv(path: &Path, meta: &Meta, table: &Table) -> CliResult<PathBuf> {
    let mut buf = Vec::new();
    writeln!(buf, "{}", meta.comment()).expect("writing to memory");
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(&mut buf);
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, body: &T) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(&Stamped { meta, body })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}
