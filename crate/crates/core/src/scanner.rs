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

//! Statically partitioned two-dimensional parameter scan.
//!
//! A coordinator writes the scan description once (the job file), starts one
//! worker process per share of the grid and waits for all of them. Every worker
//! evaluates a contiguous range of the linearized grid and writes
//! `<out>.part<w>`. Once every worker has exited successfully the coordinator
//! concatenates the parts in worker order behind a header and removes them.
//! Workers never talk to each other, and there is no dynamic scheduling: per
//! point cost is close to constant, so equal shares are balanced shares.
//!
//! Because the shares are contiguous and merged in order, the merged file is
//! byte-identical to a serial run whatever the worker count.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RESULT_HEADER: &str = "# MA TANB STATUS";

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("invalid scan grid: {0}")]
    InvalidGrid(String),
    #[error("worker count must be at least 1")]
    NoWorkers,
    #[error("invalid kernel specification `{0}` (expected `builtin` or `cmd:<command>`)")]
    InvalidKernel(String),
    #[error("worker {worker} failed: {reason}")]
    WorkerFailed { worker: usize, reason: String },
    #[error("kernel exceeded the per-point timeout of {timeout_s}s at point {index}")]
    Timeout { index: usize, timeout_s: f64 },
    #[error("kernel output error: {0}")]
    KernelOutput(String),
    #[error("malformed result line `{0}`")]
    MalformedLine(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("job file {path}: {source}")]
    Job {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> ScanError {
    let context = context.into();
    move |source| ScanError::Io { context, source }
}

/// Scan ranges for the `M_A` (GeV) and `tan β` axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub ma_min: f64,
    pub ma_max: f64,
    pub tb_min: f64,
    pub tb_max: f64,
    pub steps_per_axis: usize,
}

impl ScanGrid {
    /// `M_A` from 90 to 500 GeV and `tan β` from 1.1 to 60, 120 values each.
    pub fn mhmax_default() -> Self {
        ScanGrid {
            ma_min: 90.0,
            ma_max: 500.0,
            tb_min: 1.1,
            tb_max: 60.0,
            steps_per_axis: 120,
        }
    }

    pub fn validate(&self) -> Result<(), ScanError> {
        if self.steps_per_axis == 0 {
            return Err(ScanError::InvalidGrid("steps_per_axis must be at least 1".into()));
        }
        let finite = [self.ma_min, self.ma_max, self.tb_min, self.tb_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(ScanError::InvalidGrid("bounds must be finite".into()));
        }
        if self.ma_min >= self.ma_max {
            return Err(ScanError::InvalidGrid(format!(
                "ma_min ({}) must be below ma_max ({})",
                self.ma_min, self.ma_max
            )));
        }
        if self.tb_min >= self.tb_max {
            return Err(ScanError::InvalidGrid(format!(
                "tb_min ({}) must be below tb_max ({})",
                self.tb_min, self.tb_max
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.steps_per_axis * self.steps_per_axis
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point at a linearized index `i_ma * steps + i_tb`.
    pub fn point(&self, index: usize) -> (f64, f64) {
        let steps = self.steps_per_axis;
        (
            axis_value(self.ma_min, self.ma_max, steps, index / steps),
            axis_value(self.tb_min, self.tb_max, steps, index % steps),
        )
    }
}

/// Inclusive-endpoint linear spacing; a single step sits on the lower bound.
pub fn axis_value(min: f64, max: f64, steps: usize, k: usize) -> f64 {
    if steps <= 1 {
        min
    } else {
        min + k as f64 * (max - min) / (steps - 1) as f64
    }
}

pub fn build_grid(grid: &ScanGrid) -> Result<Vec<(f64, f64)>, ScanError> {
    grid.validate()?;
    Ok((0..grid.len()).map(|i| grid.point(i)).collect())
}

/// One worker's share of the linearized grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub worker_index: usize,
    pub point_indices: Range<usize>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }
}

/// Splits `n` points into `workers` contiguous shares. The first `n % workers`
/// shares get one extra point.
pub fn partition(n: usize, workers: usize) -> Result<Vec<Partition>, ScanError> {
    if workers == 0 {
        return Err(ScanError::NoWorkers);
    }
    let base = n / workers;
    let extra = n % workers;
    Ok((0..workers)
        .map(|w| {
            let lo = w * base + w.min(extra);
            let hi = lo + base + usize::from(w < extra);
            Partition {
                worker_index: w,
                point_indices: lo..hi,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanStatus {
    Allowed,
    ExcludedLhc,
    ExcludedLep,
}

impl ScanStatus {
    pub fn as_token(self) -> &'static str {
        match self {
            ScanStatus::Allowed => "ALLOWED",
            ScanStatus::ExcludedLhc => "EXC_LHC",
            ScanStatus::ExcludedLep => "EXC_LEP",
        }
    }
}

impl fmt::Display for ScanStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_token())
    }
}

impl FromStr for ScanStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ALLOWED" => Ok(ScanStatus::Allowed),
            "EXC_LHC" => Ok(ScanStatus::ExcludedLhc),
            "EXC_LEP" => Ok(ScanStatus::ExcludedLep),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

/// A fixed floating-point loop of exactly `work_units` iterations.
#[inline(never)]
pub fn burn(work_units: u64) -> f64 {
    let mut acc = 1.0_f64;
    for _ in 0..work_units {
        acc = std::hint::black_box(acc.mul_add(0.999_999_9, 1.0e-7));
    }
    acc
}

/// Synthetic stand-in for a Higgs-exclusion calculation: near-constant cost per
/// point, deterministic classification.
pub fn builtin_kernel(ma: f64, tanb: f64, work_units: u64) -> ScanStatus {
    std::hint::black_box(burn(work_units));
    if tanb < 4.0 && ma < 200.0 {
        ScanStatus::ExcludedLep
    } else if tanb > 40.0 {
        ScanStatus::ExcludedLhc
    } else {
        ScanStatus::Allowed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Builtin { work_units: u64 },
    /// Run through `sh -c`. Receives `MA TANB` lines on stdin and must answer
    /// `MA TANB STATUS` per line, in input order.
    Command { command: String },
}

impl KernelSpec {
    /// Parses the command-line form: `builtin` or `cmd:<command>`.
    pub fn parse(spec: &str, work_units: u64) -> Result<Self, ScanError> {
        if spec == "builtin" {
            Ok(KernelSpec::Builtin { work_units })
        } else if let Some(command) = spec.strip_prefix("cmd:") {
            if command.trim().is_empty() {
                return Err(ScanError::InvalidKernel(spec.to_string()));
            }
            Ok(KernelSpec::Command {
                command: command.to_string(),
            })
        } else {
            Err(ScanError::InvalidKernel(spec.to_string()))
        }
    }
}

/// Formats with six significant digits in positional notation, e.g.
/// `90.0000`, `1.10000`, `0.500000`.
pub fn format_sig6(value: f64) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{:.5}", value.abs());
    }
    // Let the exponent formatter do the rounding so that 99.99995 -> 100.000.
    let sci = format!("{value:.5e}");
    let exponent: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .expect("exponent format");
    let decimals = (5 - exponent).max(0) as usize;
    format!("{value:.decimals$}")
}

pub fn format_result_line(ma: f64, tanb: f64, status: ScanStatus) -> String {
    format!("{} {} {}", format_sig6(ma), format_sig6(tanb), status)
}

/// Parses `MA TANB STATUS`.
pub fn parse_result_line(line: &str) -> Result<(f64, f64, ScanStatus), ScanError> {
    let bad = || ScanError::MalformedLine(line.to_string());
    let mut fields = line.split_whitespace();
    let ma = fields.next().and_then(|f| f.parse().ok()).ok_or_else(bad)?;
    let tanb = fields.next().and_then(|f| f.parse().ok()).ok_or_else(bad)?;
    let status = fields.next().and_then(|f| f.parse().ok()).ok_or_else(bad)?;
    if fields.next().is_some() {
        return Err(bad());
    }
    Ok((ma, tanb, status))
}

/// Everything a worker needs, written once by the coordinator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanJob {
    pub grid: ScanGrid,
    pub workers: usize,
    pub kernel: KernelSpec,
    /// Per-point limit; `None` disables it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_timeout_s: Option<f64>,
    pub out: PathBuf,
}

impl ScanJob {
    pub fn job_path(&self) -> PathBuf {
        suffixed(&self.out, ".job.json")
    }

    pub fn part_path(&self, worker: usize) -> PathBuf {
        part_path(&self.out, worker)
    }

    pub fn validate(&self) -> Result<(), ScanError> {
        self.grid.validate()?;
        if self.workers == 0 {
            return Err(ScanError::NoWorkers);
        }
        if let Some(t) = self.point_timeout_s {
            if !(t.is_finite() && t > 0.0) {
                return Err(ScanError::InvalidGrid("point timeout must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ScanError> {
        let text = fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
        serde_json::from_str(&text).map_err(|source| ScanError::Job {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(suffix);
    PathBuf::from(os)
}

pub fn part_path(out: &Path, worker: usize) -> PathBuf {
    suffixed(out, &format!(".part{worker}"))
}

/// Evaluates `indices` of `grid` with `kernel`, in index order.
pub fn evaluate_range(
    grid: &ScanGrid,
    kernel: &KernelSpec,
    indices: Range<usize>,
    point_timeout: Option<Duration>,
) -> Result<Vec<(f64, f64, ScanStatus)>, ScanError> {
    match kernel {
        KernelSpec::Builtin { work_units } => indices
            .map(|index| {
                let (ma, tanb) = grid.point(index);
                let started = Instant::now();
                let status = builtin_kernel(ma, tanb, *work_units);
                match point_timeout {
                    Some(limit) if started.elapsed() > limit => Err(ScanError::Timeout {
                        index,
                        timeout_s: limit.as_secs_f64(),
                    }),
                    _ => Ok((ma, tanb, status)),
                }
            })
            .collect(),
        KernelSpec::Command { command } => run_command_kernel(grid, command, indices, point_timeout),
    }
}

fn run_command_kernel(
    grid: &ScanGrid,
    command: &str,
    indices: Range<usize>,
    point_timeout: Option<Duration>,
) -> Result<Vec<(f64, f64, ScanStatus)>, ScanError> {
    if indices.is_empty() {
        return Ok(Vec::new());
    }
    let points: Vec<(usize, f64, f64)> = indices
        .map(|i| {
            let (ma, tanb) = grid.point(i);
            (i, ma, tanb)
        })
        .collect();

    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(io_err(format!("spawning kernel `{command}`")))?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let input: String = points.iter().map(|(_, ma, tanb)| format!("{ma} {tanb}\n")).collect();
    let feeder = thread::spawn(move || {
        // A kernel may exit before reading everything; that is reported via
        // its output, not here.
        let _ = stdin.write_all(input.as_bytes());
    });

    let stdout = child.stdout.take().expect("piped stdout");
    let (tx, rx) = mpsc::channel();
    let reader = thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            if tx.send(line).is_err() {
                break;
            }
        }
    });

    let mut results = Vec::with_capacity(points.len());
    let mut failure = None;
    for &(index, ma, tanb) in &points {
        let next = match point_timeout {
            Some(limit) => match rx.recv_timeout(limit) {
                Ok(line) => Some(line),
                Err(mpsc::RecvTimeoutError::Timeout) => {
                    failure = Some(ScanError::Timeout {
                        index,
                        timeout_s: limit.as_secs_f64(),
                    });
                    break;
                }
                Err(mpsc::RecvTimeoutError::Disconnected) => None,
            },
            None => rx.recv().ok(),
        };
        let line = match next {
            Some(Ok(line)) => line,
            Some(Err(e)) => {
                failure = Some(ScanError::KernelOutput(e.to_string()));
                break;
            }
            None => {
                failure = Some(ScanError::KernelOutput(format!(
                    "kernel output ended before point {index}"
                )));
                break;
            }
        };
        match parse_result_line(&line) {
            Ok((out_ma, out_tanb, status)) if same_point(out_ma, ma) && same_point(out_tanb, tanb) => {
                results.push((ma, tanb, status));
            }
            Ok(_) => {
                failure = Some(ScanError::KernelOutput(format!(
                    "point {index}: expected `{ma} {tanb}`, kernel answered `{line}`"
                )));
                break;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }

    if failure.is_some() {
        let _ = child.kill();
    }
    let status = child.wait().map_err(io_err("waiting for kernel"))?;
    let _ = feeder.join();
    drop(rx);
    let _ = reader.join();
    if let Some(err) = failure {
        return Err(err);
    }
    if !status.success() {
        return Err(ScanError::KernelOutput(format!("kernel exited with {status}")));
    }
    Ok(results)
}

fn same_point(answered: f64, expected: f64) -> bool {
    (answered - expected).abs() <= 1e-6 * expected.abs().max(1.0)
}

/// Worker entry point: evaluate this worker's share and write its part file.
pub fn run_worker(job: &ScanJob, worker: usize) -> Result<PathBuf, ScanError> {
    job.validate()?;
    let shares = partition(job.grid.len(), job.workers)?;
    let share = shares.get(worker).ok_or_else(|| ScanError::WorkerFailed {
        worker,
        reason: format!("index out of range for {} workers", job.workers),
    })?;
    let timeout = job.point_timeout_s.map(Duration::from_secs_f64);
    let results = evaluate_range(&job.grid, &job.kernel, share.point_indices.clone(), timeout)?;

    let path = job.part_path(worker);
    let file = File::create(&path).map_err(io_err(format!("creating {}", path.display())))?;
    let mut out = BufWriter::new(file);
    for (ma, tanb, status) in results {
        writeln!(out, "{}", format_result_line(ma, tanb, status))
            .map_err(io_err(format!("writing {}", path.display())))?;
    }
    out.flush().map_err(io_err(format!("writing {}", path.display())))?;
    Ok(path)
}

/// How the coordinator starts a worker. The worker receives
/// `--job <path> --index <w>` after `args`.
#[derive(Debug, Clone)]
pub struct WorkerLauncher {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl WorkerLauncher {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        WorkerLauncher {
            program: program.into(),
            args: Vec::new(),
        }
    }

    pub fn arg(mut self, arg: impl Into<String>) -> Self {
        self.args.push(arg.into());
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanSummary {
    pub out: PathBuf,
    pub points: usize,
    pub workers: usize,
    pub wall_s: f64,
}

/// Coordinator: broadcast the job, run every worker as its own process, then
/// merge. Part files are kept when any worker fails.
pub fn run_scan(job: &ScanJob, launcher: &WorkerLauncher) -> Result<ScanSummary, ScanError> {
    job.validate()?;
    let started = Instant::now();
    let job_path = job.job_path();
    let text = serde_json::to_string_pretty(job).map_err(|source| ScanError::Job {
        path: job_path.clone(),
        source,
    })?;
    fs::write(&job_path, text).map_err(io_err(format!("writing {}", job_path.display())))?;

    let mut children = Vec::with_capacity(job.workers);
    for worker in 0..job.workers {
        let child = Command::new(&launcher.program)
            .args(&launcher.args)
            .arg("--job")
            .arg(&job_path)
            .arg("--index")
            .arg(worker.to_string())
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(io_err(format!("spawning worker {worker}")))?;
        children.push(child);
    }

    let mut first_failure = None;
    for (worker, child) in children.into_iter().enumerate() {
        let output = child
            .wait_with_output()
            .map_err(io_err(format!("waiting for worker {worker}")))?;
        if !output.status.success() && first_failure.is_none() {
            first_failure = Some(ScanError::WorkerFailed {
                worker,
                reason: format!(
                    "{}: {}",
                    output.status,
                    String::from_utf8_lossy(&output.stderr).trim()
                ),
            });
        }
    }
    if let Some(err) = first_failure {
        log::error!("scan failed; part files kept next to {}", job.out.display());
        return Err(err);
    }

    merge_parts(&job.out, job.workers)?;
    let _ = fs::remove_file(&job_path);
    Ok(ScanSummary {
        out: job.out.clone(),
        points: job.grid.len(),
        workers: job.workers,
        wall_s: started.elapsed().as_secs_f64(),
    })
}

/// Writes the header and the parts, in worker order, to `out`, then removes
/// the parts.
pub fn merge_parts(out: &Path, workers: usize) -> Result<(), ScanError> {
    let dir = out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err("creating merge file"))?;
    {
        let mut writer = BufWriter::new(tmp.as_file());
        writeln!(writer, "{RESULT_HEADER}").map_err(io_err("writing merge file"))?;
        for worker in 0..workers {
            let path = part_path(out, worker);
            let mut part = File::open(&path).map_err(io_err(format!("opening {}", path.display())))?;
            io::copy(&mut part, &mut writer).map_err(io_err(format!("merging {}", path.display())))?;
        }
        writer.flush().map_err(io_err("writing merge file"))?;
    }
    tmp.persist(out)
        .map_err(|e| ScanError::Io {
            context: format!("replacing {}", out.display()),
            source: e.error,
        })?;
    for worker in 0..workers {
        let _ = fs::remove_file(part_path(out, worker));
    }
    Ok(())
}

/// Reads a merged result file back.
pub fn read_results(path: &Path) -> Result<Vec<(f64, f64, ScanStatus)>, ScanError> {
    let file = File::open(path).map_err(io_err(format!("opening {}", path.display())))?;
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(format!("reading {}", path.display())))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        rows.push(parse_result_line(&line)?);
    }
    Ok(rows)
}

/// Writes the two-file form: LHC-excluded points and LEP-excluded points,
/// each as `MA TANB` lines.
pub fn split_results(merged: &Path, lhc_out: &Path, lep_out: &Path) -> Result<(usize, usize), ScanError> {
    let rows = read_results(merged)?;
    let mut lhc = String::new();
    let mut lep = String::new();
    let (mut n_lhc, mut n_lep) = (0, 0);
    for (ma, tanb, status) in rows {
        let line = format!("{} {}\n", format_sig6(ma), format_sig6(tanb));
        match status {
            ScanStatus::ExcludedLhc => {
                lhc.push_str(&line);
                n_lhc += 1;
            }
            ScanStatus::ExcludedLep => {
                lep.push_str(&line);
                n_lep += 1;
            }
            ScanStatus::Allowed => {}
        }
    }
    fs::write(lhc_out, lhc).map_err(io_err(format!("writing {}", lhc_out.display())))?;
    fs::write(lep_out, lep).map_err(io_err(format!("writing {}", lep_out.display())))?;
    Ok((n_lhc, n_lep))
}
