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

//! Pure analysis over recorded runs.
//!
//! A run is represented by its slowest process: that is how long a user waits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{positive, BenchError, BenchRun, TimingRecord};

/// Record with the greatest real time; the first one wins ties.
pub fn slowest(run: &BenchRun) -> Result<&TimingRecord, BenchError> {
    run.records
        .iter()
        .reduce(|best, r| if r.real_s > best.real_s { r } else { best })
        .ok_or(BenchError::EmptyRun)
}

/// Record with the smallest real time; the first one wins ties.
pub fn fastest(run: &BenchRun) -> Result<&TimingRecord, BenchError> {
    run.records
        .iter()
        .reduce(|best, r| if r.real_s < best.real_s { r } else { best })
        .ok_or(BenchError::EmptyRun)
}

/// System time as a percentage of real time.
pub fn sys_pct(record: &TimingRecord) -> Result<f64, BenchError> {
    if !positive(record.real_s) {
        return Err(BenchError::NonPositiveTime(record.real_s));
    }
    let sys = record.sys_s.ok_or(BenchError::SysUnavailable)?;
    Ok(100.0 * sys / record.real_s)
}

/// Relative slowdown of `candidate` against `baseline`, in percent. Negative
/// means the candidate was faster.
pub fn degradation_pct(candidate: &TimingRecord, baseline: &TimingRecord) -> Result<f64, BenchError> {
    if !positive(baseline.real_s) {
        return Err(BenchError::NonPositiveTime(baseline.real_s));
    }
    Ok(100.0 * (candidate.real_s - baseline.real_s) / baseline.real_s)
}

/// `t(1) / t(P)` for every P, sorted by P.
pub fn speedup_curve(points: &[(u32, f64)]) -> Result<Vec<(u32, f64)>, BenchError> {
    let mut by_p: BTreeMap<u32, f64> = BTreeMap::new();
    for &(p, t) in points {
        if !positive(t) {
            return Err(BenchError::NonPositiveTime(t));
        }
        if by_p.insert(p, t).is_some() {
            return Err(BenchError::AmbiguousBaseline(p));
        }
    }
    let base = *by_p.get(&1).ok_or(BenchError::MissingBaseline)?;
    Ok(by_p.into_iter().map(|(p, t)| (p, base / t)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub phase: String,
    pub processes: u32,
    pub slowest: TimingRecord,
    pub fastest: TimingRecord,
    pub spread_s: f64,
    /// System-time share of the slowest process.
    pub sys_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degradation_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupCurve {
    pub machine: String,
    pub phase: String,
    pub points: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub runs: Vec<RunSummary>,
    pub speedup: Vec<SpeedupCurve>,
}

/// Picks the baseline for `run`: same phase and process count, or else the
/// only baseline run with the same phase.
fn matching_baseline<'a>(run: &BenchRun, baselines: &'a [BenchRun]) -> Option<&'a BenchRun> {
    let same_phase: Vec<&BenchRun> = baselines.iter().filter(|b| b.phase == run.phase).collect();
    let same_p: Vec<&BenchRun> = same_phase
        .iter()
        .copied()
        .filter(|b| b.processes == run.processes)
        .collect();
    match (same_p.as_slice(), same_phase.as_slice()) {
        ([only], _) => Some(only),
        ([], [only]) => Some(only),
        _ => None,
    }
}

pub fn summarize(run: &BenchRun, baselines: &[BenchRun]) -> Result<RunSummary, BenchError> {
    let slow = slowest(run)?;
    let fast = fastest(run)?;
    let baseline = matching_baseline(run, baselines);
    let degradation = match baseline {
        Some(b) => Some(degradation_pct(slow, slowest(b)?)?),
        None => None,
    };
    Ok(RunSummary {
        label: run.display_label(),
        phase: run.phase.clone(),
        processes: run.processes,
        slowest: slow.clone(),
        fastest: fast.clone(),
        spread_s: slow.real_s - fast.real_s,
        sys_pct: sys_pct(slow).ok(),
        baseline: baseline.map(BenchRun::display_label),
        degradation_pct: degradation,
    })
}

/// Summaries for every run plus a speedup curve per (machine, phase) group
/// that has a single-process run.
pub fn analyze(runs: &[BenchRun], baselines: &[BenchRun]) -> Result<BenchReport, BenchError> {
    let summaries = runs
        .iter()
        .map(|r| summarize(r, baselines))
        .collect::<Result<Vec<_>, _>>()?;

    let mut groups: BTreeMap<(String, String), Vec<(u32, f64)>> = BTreeMap::new();
    for run in runs {
        groups
            .entry((run.machine.notation(None), run.phase.clone()))
            .or_default()
            .push((run.processes, slowest(run)?.real_s));
    }
    let speedup = groups
        .into_iter()
        .filter_map(|((machine, phase), points)| {
            speedup_curve(&points).ok().filter(|c| c.len() > 1).map(|points| SpeedupCurve {
                machine,
                phase,
                points,
            })
        })
        .collect();
    Ok(BenchReport {
        runs: summaries,
        speedup,
    })
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<14} {:<8} {:>3} {:>10} {:>10} {:>9} {:>7} {:>9}  {}\n",
            "RUN", "PHASE", "P", "MAX_REAL", "MIN_REAL", "SPREAD", "SYS%", "DEGR%", "BASELINE"
        );
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        for s in &self.runs {
            out.push_str(&format!(
                "{:<14} {:<8} {:>3} {:>10.2} {:>10.2} {:>9.2} {:>7} {:>9}  {}\n",
                s.label,
                s.phase,
                s.processes,
                s.slowest.real_s,
                s.fastest.real_s,
                s.spread_s,
                opt(s.sys_pct),
                opt(s.degradation_pct),
                s.baseline.as_deref().unwrap_or("-")
            ));
        }
        for curve in &self.speedup {
            let points: Vec<String> = curve.points.iter().map(|(p, s)| format!("{p}:{s:.2}")).collect();
            out.push_str(&format!("speedup {} {}: {}\n", curve.machine, curve.phase, points.join(" ")));
        }
        out
    }
}
