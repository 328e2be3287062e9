// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// SPDX-License-Identifier: Apache-2.0

//! Instance contextualization.
//!
//! The contextualizer reads the instance metadata (a JSON object mapping
//! application names to version keys), resolves it against the catalog and
//! then, for each plan step in order, downloads the archive and runs the
//! installer script. Execution stops at the first failing step.
//!
//! Everything happens below a sandbox root:
//!
//! ```text
//! <root>/downloads/<url-hash>/<file>   downloaded archives (cache)
//! <root>/apps/<name>/<version>         INSTALL_PREFIX handed to the installer
//! ```
//!
//! Installers run with the root as working directory and receive `APP_NAME`,
//! `APP_VERSION`, `APP_ARCHIVE` and `INSTALL_PREFIX` in their environment.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::{Catalog, ResolvedApp};
use crate::resolver::{resolve, InstallRequest, ResolveError};

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("cannot fetch metadata from {location}: {message}")]
    Fetch { location: String, message: String },
    #[error("metadata must be a JSON object of application name to version key: {0}")]
    Format(String),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error("sandbox root {path}: {message}")]
    Root { path: PathBuf, message: String },
    #[error("image registry: {0}")]
    Registry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    FixedUrl,
    LocalFile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataSource {
    pub kind: SourceKind,
    pub location: String,
}

impl MetadataSource {
    pub fn url(location: impl Into<String>) -> Self {
        MetadataSource {
            kind: SourceKind::FixedUrl,
            location: location.into(),
        }
    }

    pub fn file(location: impl Into<String>) -> Self {
        MetadataSource {
            kind: SourceKind::LocalFile,
            location: location.into(),
        }
    }

    /// `http://` and `https://` locations are URLs, anything else a path.
    pub fn detect(location: &str) -> Self {
        if location.starts_with("http://") || location.starts_with("https://") {
            Self::url(location)
        } else {
            Self::file(location)
        }
    }
}

/// Parses the metadata payload. It must be exactly a JSON object whose values
/// are version-key strings.
pub fn parse_metadata(text: &str) -> Result<InstallRequest, ContextError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ContextError::Format(e.to_string()))?;
    let serde_json::Value::Object(map) = value else {
        return Err(ContextError::Format(format!("got {}", json_kind(&value))));
    };
    map.into_iter()
        .map(|(name, v)| match v {
            serde_json::Value::String(version) => Ok((name, version)),
            other => Err(ContextError::Format(format!(
                "value for `{name}` is {}, not a string",
                json_kind(&other)
            ))),
        })
        .collect()
}

fn json_kind(v: &serde_json::Value) -> &'static str {
    match v {
        serde_json::Value::Null => "null",
        serde_json::Value::Bool(_) => "a boolean",
        serde_json::Value::Number(_) => "a number",
        serde_json::Value::String(_) => "a string",
        serde_json::Value::Array(_) => "an array",
        serde_json::Value::Object(_) => "an object",
    }
}

pub fn fetch_metadata(source: &MetadataSource) -> Result<InstallRequest, ContextError> {
    let fetch_err = |message: String| ContextError::Fetch {
        location: source.location.clone(),
        message,
    };
    if source.location.is_empty() {
        return Err(fetch_err("empty location".into()));
    }
    let text = match source.kind {
        SourceKind::LocalFile => fs::read_to_string(&source.location).map_err(|e| fetch_err(e.to_string()))?,
        SourceKind::FixedUrl => ureq::get(&source.location)
            .call()
            .map_err(|e| fetch_err(e.to_string()))?
            .into_string()
            .map_err(|e| fetch_err(e.to_string()))?,
    };
    parse_metadata(&text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    #[serde(default)]
    pub properties: BTreeMap<String, String>,
}

pub const READY_PROPERTY: &str = "feynapps";

/// Images flagged as ready for contextualization (`feynapps` = `"true"`,
/// compared exactly), in input order.
pub fn filter_ready_images(images: &[ImageRecord]) -> Vec<ImageRecord> {
    images
        .iter()
        .filter(|image| image.properties.get(READY_PROPERTY).map(String::as_str) == Some("true"))
        .cloned()
        .collect()
}

pub fn parse_registry(text: &str) -> Result<Vec<ImageRecord>, ContextError> {
    let images: Vec<ImageRecord> =
        serde_json::from_str(text).map_err(|e| ContextError::Registry(e.to_string()))?;
    if let Some(pos) = images.iter().position(|i| i.id.is_empty()) {
        return Err(ContextError::Registry(format!("image at position {pos} has an empty id")));
    }
    Ok(images)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    DryRun,
    Execute,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DownloadOutcome {
    /// Dry run: this URL would be fetched.
    Planned,
    /// No base URL in the catalog; nothing to fetch.
    NotRequired,
    Fetched { path: PathBuf, bytes: u64 },
    Cached { path: PathBuf, bytes: u64 },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub app: String,
    pub version_key: String,
    pub installer: String,
    pub download_url: Option<String>,
    pub download: DownloadOutcome,
    /// Installer exit code; `None` when it was not run or died from a signal.
    pub exit_status: Option<i32>,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Overall {
    Success,
    /// 1-based index of the failed step, which is the last step reported.
    FailedAt { step: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub mode: Mode,
    pub steps: Vec<StepReport>,
    pub overall: Overall,
}

impl ExecutionReport {
    pub fn succeeded(&self) -> bool {
        self.overall == Overall::Success
    }

    /// Plain-text table for terminals.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<4} {:<20} {:<12} {:<10} {:>6} {:>9}  URL\n",
            "#", "APP", "VERSION", "DOWNLOAD", "EXIT", "SECONDS"
        );
        for (i, step) in self.steps.iter().enumerate() {
            let download = match &step.download {
                DownloadOutcome::Planned => "planned",
                DownloadOutcome::NotRequired => "-",
                DownloadOutcome::Fetched { .. } => "fetched",
                DownloadOutcome::Cached { .. } => "cached",
                DownloadOutcome::Failed { .. } => "FAILED",
            };
            let exit = step.exit_status.map_or_else(|| "-".to_string(), |c| c.to_string());
            out.push_str(&format!(
                "{:<4} {:<20} {:<12} {:<10} {:>6} {:>9.3}  {}\n",
                i + 1,
                step.app,
                step.version_key,
                download,
                exit,
                step.duration_s,
                step.download_url.as_deref().unwrap_or("-")
            ));
        }
        match self.overall {
            Overall::Success => out.push_str("result: success\n"),
            Overall::FailedAt { step } => out.push_str(&format!("result: failed at step {step}\n")),
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ContextOptions {
    pub mode: Mode,
    pub root: PathBuf,
    pub scripts_dir: PathBuf,
    /// Run installers under this uid/gid (requires privilege). By default they
    /// run as the invoking user.
    pub run_as: Option<(u32, u32)>,
}

/// Fetches metadata from `source` and contextualizes it.
pub fn contextualize(
    catalog: &Catalog,
    source: &MetadataSource,
    options: &ContextOptions,
) -> Result<ExecutionReport, ContextError> {
    let request = fetch_metadata(source)?;
    contextualize_request(catalog, &request, options)
}

pub fn contextualize_request(
    catalog: &Catalog,
    request: &InstallRequest,
    options: &ContextOptions,
) -> Result<ExecutionReport, ContextError> {
    let plan = resolve(catalog, request)?;
    match options.mode {
        Mode::DryRun => Ok(ExecutionReport {
            mode: Mode::DryRun,
            steps: plan.steps.iter().map(planned_step).collect(),
            overall: Overall::Success,
        }),
        Mode::Execute => execute(&plan.steps, options),
    }
}

fn planned_step(app: &ResolvedApp) -> StepReport {
    StepReport {
        app: app.name.clone(),
        version_key: app.version_key.clone(),
        installer: app.effective.installer.clone(),
        download_url: app.download_url.clone(),
        download: if app.download_url.is_some() {
            DownloadOutcome::Planned
        } else {
            DownloadOutcome::NotRequired
        },
        exit_status: None,
        duration_s: 0.0,
        output: None,
    }
}

fn execute(steps: &[ResolvedApp], options: &ContextOptions) -> Result<ExecutionReport, ContextError> {
    let root_err = |message: String| ContextError::Root {
        path: options.root.clone(),
        message,
    };
    let meta = fs::metadata(&options.root).map_err(|e| root_err(e.to_string()))?;
    if !meta.is_dir() {
        return Err(root_err("not a directory".into()));
    }

    let mut reports = Vec::with_capacity(steps.len());
    for (i, app) in steps.iter().enumerate() {
        let started = Instant::now();
        let mut report = planned_step(app);
        report.download = match &app.download_url {
            Some(url) => download(url, app, &options.root),
            None => DownloadOutcome::NotRequired,
        };
        let archive = match &report.download {
            DownloadOutcome::Failed { .. } => {
                report.duration_s = started.elapsed().as_secs_f64();
                reports.push(report);
                return Ok(failed(reports, i + 1));
            }
            DownloadOutcome::Fetched { path, .. } | DownloadOutcome::Cached { path, .. } => Some(path.clone()),
            _ => None,
        };

        let (status, output) = run_installer(app, archive.as_deref(), options);
        report.exit_status = status;
        report.output = Some(output);
        report.duration_s = started.elapsed().as_secs_f64();
        let ok = status == Some(0);
        reports.push(report);
        if !ok {
            return Ok(failed(reports, i + 1));
        }
    }
    Ok(ExecutionReport {
        mode: Mode::Execute,
        steps: reports,
        overall: Overall::Success,
    })
}

fn failed(steps: Vec<StepReport>, step: usize) -> ExecutionReport {
    ExecutionReport {
        mode: Mode::Execute,
        steps,
        overall: Overall::FailedAt { step },
    }
}

pub fn install_prefix(root: &Path, app: &str, version: &str) -> PathBuf {
    root.join("apps").join(app).join(version)
}

/// Cache location for a URL: one directory per URL, named by its hash.
pub fn archive_path(root: &Path, url: &str, file: Option<&str>) -> PathBuf {
    let digest = Sha256::digest(url.as_bytes());
    let dir: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    let name = file
        .and_then(|f| Path::new(f).file_name().map(|n| n.to_string_lossy().into_owned()))
        .or_else(|| {
            url.trim_end_matches('/')
                .rsplit('/')
                .next()
                .filter(|s| !s.is_empty() && !s.contains(':'))
                .map(str::to_string)
        })
        .unwrap_or_else(|| "archive".to_string());
    root.join("downloads").join(dir).join(name)
}

fn download(url: &str, app: &ResolvedApp, root: &Path) -> DownloadOutcome {
    let path = archive_path(root, url, app.effective.file.as_deref());
    match fetch_to(url, &path) {
        Ok(outcome) => outcome,
        Err(error) => DownloadOutcome::Failed { error },
    }
}

/// Returns the remote size when the source can tell us cheaply.
fn remote_size(url: &str) -> Option<u64> {
    if let Some(path) = url.strip_prefix("file://") {
        return fs::metadata(path).ok().map(|m| m.len());
    }
    ureq::head(url)
        .call()
        .ok()?
        .header("Content-Length")?
        .parse()
        .ok()
}

fn fetch_to(url: &str, path: &Path) -> Result<DownloadOutcome, String> {
    if let (Ok(meta), Some(size)) = (fs::metadata(path), remote_size(url)) {
        if meta.is_file() && meta.len() == size {
            log::info!("cached {url}");
            return Ok(DownloadOutcome::Cached {
                path: path.to_path_buf(),
                bytes: size,
            });
        }
    }
    let dir = path.parent().expect("archive path has a parent");
    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let mut reader: Box<dyn Read> = if let Some(local) = url.strip_prefix("file://") {
        Box::new(fs::File::open(local).map_err(|e| format!("{local}: {e}"))?)
    } else {
        Box::new(ureq::get(url).call().map_err(|e| e.to_string())?.into_reader())
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| e.to_string())?;
    let bytes = io::copy(&mut reader, &mut tmp).map_err(|e| e.to_string())?;
    tmp.persist(path).map_err(|e| e.error.to_string())?;
    log::info!("fetched {url} ({bytes} bytes)");
    Ok(DownloadOutcome::Fetched {
        path: path.to_path_buf(),
        bytes,
    })
}

fn run_installer(app: &ResolvedApp, archive: Option<&Path>, options: &ContextOptions) -> (Option<i32>, String) {
    let script = options.scripts_dir.join(&app.effective.installer);
    if !script.is_file() {
        return (None, format!("installer {} not found", script.display()));
    }
    let prefix = install_prefix(&options.root, &app.name, &app.version_key);
    if let Err(e) = fs::create_dir_all(&prefix) {
        return (None, format!("cannot create {}: {e}", prefix.display()));
    }

    let mut command = if is_executable(&script) {
        Command::new(&script)
    } else {
        let mut sh = Command::new("sh");
        sh.arg(&script);
        sh
    };
    command
        .current_dir(&options.root)
        .env("APP_NAME", &app.name)
        .env("APP_VERSION", &app.version_key)
        .env("APP_ARCHIVE", archive.map(Path::as_os_str).unwrap_or_default())
        .env("INSTALL_PREFIX", &prefix)
        .stdin(Stdio::null());
    #[cfg(unix)]
    if let Some((uid, gid)) = options.run_as {
        use std::os::unix::process::CommandExt;
        command.uid(uid).gid(gid);
    }

    match command.output() {
        Ok(out) => {
            let mut text = String::from_utf8_lossy(&out.stdout).into_owned();
            text.push_str(&String::from_utf8_lossy(&out.stderr));
            (out.status.code(), text)
        }
        Err(e) => (None, format!("cannot run {}: {e}", script.display())),
    }
}

#[cfg(unix)]
fn is_executable(path: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    fs::metadata(path).map(|m| m.permissions().mode() & 0o111 != 0).unwrap_or(false)
}

#[cfg(not(unix))]
fn is_executable(_path: &Path) -> bool {
    false
}
