//! Timestamped output directories and their manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Config, SCHEMA_VERSION};
use crate::error::CliError;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Versions {
    pub qmetro: &'static str,
    pub qmetro_cli: &'static str,
    pub config_schema: u32,
    pub report_schema: u32,
}

impl Versions {
    fn current() -> Self {
        Self {
            qmetro: qmetro::VERSION,
            qmetro_cli: env!("CARGO_PKG_VERSION"),
            config_schema: SCHEMA_VERSION,
            report_schema: REPORT_SCHEMA_VERSION,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seed: u64,
    pub workers: usize,
    pub config_sha256: String,
    pub versions: Versions,
    pub started: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished: Option<String>,
    pub files: Vec<String>,
    pub config: Config,
}

pub struct RunDir {
    pub path: PathBuf,
    manifest: Manifest,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunDir {
    /// Creates `<base>/<name>-<timestamp>` and points `<base>/latest` at it.
    pub fn create(base: &Path, command: &str, cfg: &Config, workers: usize) -> Result<Self, CliError> {
        fs::create_dir_all(base).map_err(|e| CliError::Io(format!("{}: {e}", base.display())))?;
        let stamp = Utc::now().format("%Y%m%dT%H%M%S%3fZ").to_string();
        let stem = format!("{}-{command}-{stamp}", sanitize(&cfg.name));
        let mut path = base.join(&stem);
        let mut n = 1;
        while path.exists() {
            path = base.join(format!("{stem}-{n}"));
            n += 1;
        }
        fs::create_dir_all(path.join("traces"))?;
        let toml = cfg.to_toml();
        let mut run = RunDir {
            manifest: Manifest {
                schema_version: REPORT_SCHEMA_VERSION,
                command: command.to_string(),
                status: "running".into(),
                error: None,
                seed: cfg.seed,
                workers,
                config_sha256: hex(&Sha256::digest(toml.as_bytes())),
                versions: Versions::current(),
                started: now(),
                finished: None,
                files: Vec::new(),
                config: cfg.clone(),
            },
            path,
        };
        run.write_text("config.toml", &toml)?;
        run.write_manifest()?;
        link_latest(base, &run.path)?;
        Ok(run)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    fn record(&mut self, name: &str) {
        if !self.manifest.files.iter().any(|f| f == name) {
            self.manifest.files.push(name.to_string());
        }
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        fs::write(self.file(name), text)?;
        self.record(name);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// `report.json`: the versioned envelope around a command's results.
    pub fn write_report<T: Serialize>(&mut self, command: &str, body: &T) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Envelope<'a, T> {
            schema_version: u32,
            command: &'a str,
            #[serde(flatten)]
            body: &'a T,
        }
        self.write_json("report.json", &Envelope { schema_version: REPORT_SCHEMA_VERSION, command, body })
    }

    /// Opens `name` for writing and records it; `f` fills it.
    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
    {
        let mut out = std::io::BufWriter::new(fs::File::create(self.file(name))?);
        f(&mut out)?;
        out.flush()?;
        self.record(name);
        Ok(())
    }

    fn write_manifest(&self) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(self.file("manifest.json"), text + "\n")?;
        Ok(())
    }

    /// Final manifest. Called on success and on failure alike.
    pub fn finish(mut self, outcome: &Result<(), CliError>) -> Result<PathBuf, CliError> {
        self.manifest.finished = Some(now());
        match outcome {
            Ok(()) => self.manifest.status = "completed".into(),
            Err(e) => {
                self.manifest.status = "failed".into();
                self.manifest.error = Some(e.to_string());
            }
        }
        self.write_manifest()?;
        Ok(self.path)
    }
}

fn sanitize(name: &str) -> String {
    let s: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    if s.is_empty() { "run".into() } else { s }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(unix)]
fn link_latest(base: &Path, target: &Path) -> Result<(), CliError> {
    let link = base.join("latest");
    if link.symlink_metadata().is_ok() {
        fs::remove_file(&link)?;
    }
    let rel = target.file_name().expect("run dirs have a name");
    std::os::unix::fs::symlink(rel, &link)?;
    Ok(())
}

#[cfg(not(unix))]
fn link_latest(base: &Path, target: &Path) -> Result<(), CliError> {
    let rel = target.file_name().expect("run dirs have a name");
    fs::write(base.join("latest"), rel.to_string_lossy().as_bytes())?;
    Ok(())
}
