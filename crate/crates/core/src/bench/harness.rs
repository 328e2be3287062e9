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

//! Launch P processes together and time each of them.
//!
//! Every process starts as `sh -c 'read _; exec "$0" "$@"' <program> <args>`
//! blocked on its stdin. Once all P are spawned the harness writes one newline
//! to each of them back to back, which is the common start. Real time runs from
//! that release to the moment the harness reaps the process; user and system
//! time come from `wait4`, the same accounting GNU time reports. The waiting
//! shell adds a small constant to user/sys.

use std::io::Write;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use super::{BenchError, BenchRun, MachineLabel, TimingRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub program: String,
    pub args: Vec<String>,
}

impl Workload {
    pub fn new(program: impl Into<String>) -> Self {
        Workload {
            program: program.into(),
            args: Vec::new(),
        }
    }

    pub fn arg(mut self, arg: impl Into<String>) -> Self {
        self.args.push(arg.into());
        self
    }

    /// A shell command line run through `sh -c`.
    pub fn shell(command: impl Into<String>) -> Self {
        Workload::new("sh").arg("-c").arg(command)
    }
}

const RELEASE_SCRIPT: &str = r#"read _release; exec "$0" "$@""#;

fn spawn_blocked(workload: &Workload) -> Result<Child, BenchError> {
    Command::new("sh")
        .arg("-c")
        .arg(RELEASE_SCRIPT)
        .arg(&workload.program)
        .args(&workload.args)
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|source| BenchError::Io {
            context: format!("spawning {}", workload.program),
            source,
        })
}

/// Runs `processes` copies of `workload` simultaneously. A nonzero exit marks
/// the run as failed; the records of every process are kept either way.
pub fn run_concurrent(
    workload: &Workload,
    processes: u32,
    machine: MachineLabel,
    phase: &str,
) -> Result<BenchRun, BenchError> {
    if processes == 0 {
        return Err(BenchError::NoProcesses);
    }
    let mut children = Vec::with_capacity(processes as usize);
    for _ in 0..processes {
        match spawn_blocked(workload) {
            Ok(child) => children.push(child),
            Err(e) => {
                for mut child in children {
                    let _ = child.kill();
                    let _ = child.wait();
                }
                return Err(e);
            }
        }
    }

    let mut started = Vec::with_capacity(children.len());
    for child in &mut children {
        let mut stdin = child.stdin.take().expect("piped stdin");
        started.push(Instant::now());
        // A process that already died shows up as a failed exit below.
        let _ = stdin.write_all(b"\n");
    }

    let records = reap(&mut children, &started)?;
    let failed = records.iter().any(|r| r.exit_code != Some(0));
    Ok(BenchRun {
        label: None,
        machine,
        processes,
        phase: phase.to_string(),
        records,
        summarized: false,
        multithreaded: false,
        failed,
    })
}

#[cfg(unix)]
fn reap(children: &mut [Child], started: &[Instant]) -> Result<Vec<TimingRecord>, BenchError> {
    let mut records: Vec<Option<TimingRecord>> = vec![None; children.len()];
    let mut pending: Vec<usize> = (0..children.len()).collect();
    while !pending.is_empty() {
        let mut error = None;
        pending.retain(|&i| {
            let pid = children[i].id() as libc::pid_t;
            let mut status: libc::c_int = 0;
            // SAFETY: rusage is plain data; wait4 fills it in.
            let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
            let rc = unsafe { libc::wait4(pid, &mut status, libc::WNOHANG, &mut usage) };
            if rc == 0 {
                return true;
            }
            if rc < 0 {
                let err = std::io::Error::last_os_error();
                if err.kind() == std::io::ErrorKind::Interrupted {
                    return true;
                }
                error = Some(BenchError::Io {
                    context: format!("waiting for pid {pid}"),
                    source: err,
                });
                return false;
            }
            let real_s = started[i].elapsed().as_secs_f64();
            let exit_code = libc::WIFEXITED(status).then(|| libc::WEXITSTATUS(status));
            records[i] = Some(TimingRecord {
                real_s,
                user_s: Some(timeval_s(usage.ru_utime)),
                sys_s: Some(timeval_s(usage.ru_stime)),
                // Linux reports kilobytes.
                max_rss_kb: u64::try_from(usage.ru_maxrss).ok(),
                exit_code,
                role: None,
            });
            false
        });
        if let Some(e) = error {
            return Err(e);
        }
        if !pending.is_empty() {
            std::thread::sleep(Duration::from_micros(500));
        }
    }
    Ok(records.into_iter().map(|r| r.expect("every child reaped")).collect())
}

#[cfg(unix)]
fn timeval_s(tv: libc::timeval) -> f64 {
    tv.tv_sec as f64 + tv.tv_usec as f64 * 1e-6
}

/// Without per-child accounting only wall time is recorded; user and system
/// time stay unavailable.
#[cfg(not(unix))]
fn reap(children: &mut [Child], started: &[Instant]) -> Result<Vec<TimingRecord>, BenchError> {
    children
        .iter_mut()
        .zip(started)
        .map(|(child, start)| {
            let status = child.wait().map_err(|source| BenchError::Io {
                context: "waiting for workload".into(),
                source,
            })?;
            Ok(TimingRecord {
                real_s: start.elapsed().as_secs_f64(),
                user_s: None,
                sys_s: None,
                max_rss_kb: None,
                exit_code: status.code(),
                role: None,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::SizeClass;

    fn host() -> MachineLabel {
        MachineLabel::new(SizeClass::R, 1, false)
    }

    #[test]
    fn sleeping_process_uses_no_cpu() {
        let run = run_concurrent(&Workload::new("sleep").arg("1"), 1, host(), "sleep").unwrap();
        assert!(!run.failed);
        let rec = &run.records[0];
        assert!(rec.real_s > 0.95 && rec.real_s < 1.5, "real {}", rec.real_s);
        assert!(rec.cpu_s().unwrap() < 0.1 * rec.real_s, "cpu {:?}", rec.cpu_s());
    }

    #[test]
    fn zero_processes_is_an_error() {
        assert!(matches!(
            run_concurrent(&Workload::new("true"), 0, host(), "x"),
            Err(BenchError::NoProcesses)
        ));
    }

    #[test]
    fn failing_process_marks_run_failed_and_keeps_records() {
        let run = run_concurrent(&Workload::shell("exit 3"), 2, host(), "x").unwrap();
        assert!(run.failed);
        assert_eq!(run.records.len(), 2);
        assert!(run.records.iter().all(|r| r.exit_code == Some(3)));
    }

    #[test]
    fn processes_start_together() {
        // Each process prints its start time; all must fall in a narrow window.
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("starts");
        let cmd = format!("date +%s%N >> {}", out.display());
        let run = run_concurrent(&Workload::shell(cmd), 4, host(), "x").unwrap();
        assert!(!run.failed);
        let starts: Vec<u128> = std::fs::read_to_string(&out)
            .unwrap()
            .lines()
            .map(|l| l.trim().parse().unwrap())
            .collect();
        assert_eq!(starts.len(), 4);
        let spread_ms = (starts.iter().max().unwrap() - starts.iter().min().unwrap()) as f64 / 1e6;
        assert!(spread_ms < 50.0, "start spread {spread_ms} ms");
    }

    #[test]
    fn missing_program_fails_the_run() {
        let run = run_concurrent(&Workload::new("/nonexistent/prog"), 1, host(), "x").unwrap();
        assert!(run.failed);
    }
}
