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

//! Concurrent-process benchmarking and overhead analysis.
//!
//! [`harness`] starts P copies of a workload behind a common release barrier
//! and records real/user/sys time per process from the kernel's child
//! accounting. [`analysis`] turns runs into the numbers used to compare
//! machines: slowest/fastest process, system-time share, degradation against a
//! baseline and speedup curves. [`fixtures`] carries reference timings
//! measured on 4/8-core Xeon hosts, virtualized and bare metal.

pub mod analysis;
pub mod fixtures;
pub mod harness;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{
    analyze, degradation_pct, fastest, slowest, speedup_curve, sys_pct, BenchReport, RunSummary,
    SpeedupCurve,
};
pub use harness::{run_concurrent, Workload};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("process count must be at least 1")]
    NoProcesses,
    #[error("run has no timing records")]
    EmptyRun,
    #[error("system time is unavailable for this record")]
    SysUnavailable,
    #[error("real time must be positive (got {0})")]
    NonPositiveTime(f64),
    #[error("speedup curve has no P=1 baseline")]
    MissingBaseline,
    #[error("speedup curve has more than one entry for P={0}")]
    AmbiguousBaseline(u32),
    #[error("invalid machine label `{0}`")]
    InvalidLabel(String),
    #[error("invalid workload `{0}` (expected `builtin` or `cmd:<command>`)")]
    InvalidWorkload(String),
    #[error("bench run file {path}: {message}")]
    File { path: String, message: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizeClass {
    S,
    M,
    L,
    XL,
    /// Bare-metal reference host.
    R,
}

impl SizeClass {
    /// RAM that goes with a size class: 2, 4, 7 and 14 GB for the virtual
    /// machines, 16 GB for the bare-metal reference host.
    pub fn ram_gb(self) -> f64 {
        match self {
            SizeClass::S => 2.0,
            SizeClass::M => 4.0,
            SizeClass::L => 7.0,
            SizeClass::XL => 14.0,
            SizeClass::R => 16.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SizeClass::S => "S",
            SizeClass::M => "M",
            SizeClass::L => "L",
            SizeClass::XL => "XL",
            SizeClass::R => "R",
        }
    }
}

impl FromStr for SizeClass {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "S" => SizeClass::S,
            "M" => SizeClass::M,
            "L" => SizeClass::L,
            "XL" => SizeClass::XL,
            "R" => SizeClass::R,
            _ => return Err(BenchError::InvalidLabel(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineLabel {
    pub size_class: SizeClass,
    pub cores: u32,
    pub hyperthreading: bool,
    pub ram_gb: f64,
}

impl MachineLabel {
    pub fn new(size_class: SizeClass, cores: u32, hyperthreading: bool) -> Self {
        MachineLabel {
            size_class,
            cores,
            hyperthreading,
            ram_gb: size_class.ram_gb(),
        }
    }

    /// The machine running this process, labelled as a reference host.
    pub fn host() -> Self {
        let logical = num_cpus::get() as u32;
        let physical = num_cpus::get_physical() as u32;
        let mut label = MachineLabel::new(SizeClass::R, logical, logical > physical);
        if let Some(gb) = physical_ram_gb() {
            label.ram_gb = gb;
        }
        label
    }

    /// Parses `XL_HT(8)` or `XL_HT(8/6)`; the second number, when present,
    /// is the process count.
    pub fn parse(notation: &str) -> Result<(Self, Option<u32>), BenchError> {
        static PATTERN: OnceLock<Regex> = OnceLock::new();
        let re = PATTERN.get_or_init(|| {
            Regex::new(r"^(S|M|L|XL|R)_(HT|nHT)\((\d+)(?:/(\d+))?\)$").expect("valid label regex")
        });
        let invalid = || BenchError::InvalidLabel(notation.to_string());
        let caps = re.captures(notation.trim()).ok_or_else(invalid)?;
        let class: SizeClass = caps[1].parse()?;
        let cores: u32 = caps[3].parse().map_err(|_| invalid())?;
        let processes = match caps.get(4) {
            Some(p) => Some(p.as_str().parse().map_err(|_| invalid())?),
            None => None,
        };
        Ok((MachineLabel::new(class, cores, &caps[2] == "HT"), processes))
    }

    pub fn notation(&self, processes: Option<u32>) -> String {
        let ht = if self.hyperthreading { "HT" } else { "nHT" };
        match processes {
            Some(p) => format!("{}_{ht}({}/{p})", self.size_class.as_str(), self.cores),
            None => format!("{}_{ht}({})", self.size_class.as_str(), self.cores),
        }
    }
}

impl fmt::Display for MachineLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.notation(None))
    }
}

/// Seconds of wall-clock, user and system time for one process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub real_s: f64,
    /// `None` when the platform cannot account child CPU time.
    pub user_s: Option<f64>,
    pub sys_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rss_kb: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
    /// `max`/`min` for summarized reference rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

impl TimingRecord {
    pub fn new(real_s: f64, user_s: f64, sys_s: f64) -> Self {
        TimingRecord {
            real_s,
            user_s: Some(user_s),
            sys_s: Some(sys_s),
            max_rss_kb: None,
            exit_code: None,
            role: None,
        }
    }

    pub fn cpu_s(&self) -> Option<f64> {
        Some(self.user_s? + self.sys_s?)
    }
}

/// P simultaneous processes of the same workload on one machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub machine: MachineLabel,
    pub processes: u32,
    pub phase: String,
    pub records: Vec<TimingRecord>,
    /// Only the slowest and fastest processes were kept, so `records` holds
    /// fewer than `processes` entries.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub summarized: bool,
    /// The workload uses several threads, so user+sys may exceed real.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub multithreaded: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
}

impl BenchRun {
    pub fn display_label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| self.machine.notation(Some(self.processes)))
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.processes == 0 {
            return Err(BenchError::NoProcesses);
        }
        if self.records.is_empty() {
            return Err(BenchError::EmptyRun);
        }
        if !self.summarized && !self.failed && self.records.len() != self.processes as usize {
            return Err(BenchError::File {
                path: self.display_label(),
                message: format!(
                    "{} records for {} processes",
                    self.records.len(),
                    self.processes
                ),
            });
        }
        if let Some(bad) = self.records.iter().find(|r| !positive(r.real_s)) {
            return Err(BenchError::NonPositiveTime(bad.real_s));
        }
        Ok(())
    }
}

/// A run file holds either a single run or a list of runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RunFile {
    One(BenchRun),
    Many(Vec<BenchRun>),
}

#[cfg(unix)]
fn physical_ram_gb() -> Option<f64> {
    // SAFETY: sysconf has no preconditions.
    let (pages, page_size) = unsafe { (libc::sysconf(libc::_SC_PHYS_PAGES), libc::sysconf(libc::_SC_PAGESIZE)) };
    (pages > 0 && page_size > 0).then(|| (pages as f64 * page_size as f64 / (1u64 << 30) as f64 * 10.0).round() / 10.0)
}

#[cfg(not(unix))]
fn physical_ram_gb() -> Option<f64> {
    None
}

/// `x > 0`, and false for NaN.
pub(crate) fn positive(x: f64) -> bool {
    x > 0.0
}

pub fn parse_runs(text: &str) -> Result<Vec<BenchRun>, serde_json::Error> {
    Ok(match serde_json::from_str(text)? {
        RunFile::One(run) => vec![run],
        RunFile::Many(runs) => runs,
    })
}

pub fn load_runs(path: &Path) -> Result<Vec<BenchRun>, BenchError> {
    let file_err = |message: String| BenchError::File {
        path: path.display().to_string(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
    let runs = parse_runs(&text).map_err(|e| file_err(e.to_string()))?;
    for run in &runs {
        run.validate().map_err(|e| file_err(e.to_string()))?;
    }
    Ok(runs)
}
