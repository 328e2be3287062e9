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

use std::path::PathBuf;

use anyhow::Context as _;
use clap::{Subcommand, ValueEnum};
use pheno_core::bench::{analyze, fixtures, load_runs, run_concurrent, BenchRun, MachineLabel, Workload};
use pheno_core::scanner::burn;
use serde_json::json;

use crate::error::usage;
use crate::{Context, Output};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Report {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Start P copies of a workload together and record their times.
    Run {
        #[arg(long)]
        processes: u32,
        /// `builtin` (the scan kernel's busy loop) or `cmd:<shell command>`.
        #[arg(long)]
        workload: String,
        /// Busy-loop iterations for the builtin workload.
        #[arg(long, default_value_t = 200_000_000)]
        work_units: u64,
        /// Machine label such as `XL_HT(8)`; defaults to this host.
        #[arg(long)]
        machine: Option<String>,
        #[arg(long, default_value = "run")]
        phase: String,
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize recorded runs: slowest/fastest, system share, degradation
    /// against baselines and speedup curves.
    Analyze {
        /// Run files (one run or an array of runs each).
        runs: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        baseline: Vec<PathBuf>,
        /// Add the bundled reference timings to the analyzed runs.
        #[arg(long)]
        fixtures: bool,
        #[arg(long, value_enum, default_value_t = Report::Json)]
        report: Report,
    },
    /// Burn CPU for the builtin workload.
    #[command(hide = true)]
    Spin {
        #[arg(long)]
        work_units: u64,
    },
}

fn load_all(paths: &[PathBuf]) -> anyhow::Result<Vec<BenchRun>> {
    let mut runs = Vec::new();
    for path in paths {
        runs.extend(load_runs(path)?);
    }
    Ok(runs)
}

pub fn run(cmd: Command, _ctx: &Context) -> anyhow::Result<Output> {
    match cmd {
        Command::Run {
            processes,
            workload,
            work_units,
            machine,
            phase,
            label,
            out,
        } => {
            let workload = if workload == "builtin" {
                let exe = std::env::current_exe().context("locating the pheno executable")?;
                Workload::new(exe.to_string_lossy())
                    .arg("bench")
                    .arg("spin")
                    .arg("--work-units")
                    .arg(work_units.to_string())
            } else if let Some(command) = workload.strip_prefix("cmd:") {
                Workload::shell(command)
            } else {
                return Err(usage(format!("--workload must be builtin or cmd:..., got `{workload}`")));
            };
            let machine = match machine {
                Some(notation) => MachineLabel::parse(&notation).map_err(|e| usage(e.to_string()))?.0,
                None => MachineLabel::host(),
            };
            let mut run = run_concurrent(&workload, processes, machine, &phase)?;
            run.label = label;
            let text = serde_json::to_string_pretty(&run)?;
            std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
            let table = run
                .records
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
                    format!("{:<3} real {:.3} user {} sys {}\n", i + 1, r.real_s, opt(r.user_s), opt(r.sys_s))
                })
                .collect();
            let failed = run.failed;
            Ok(Output::json(&run)?.with_table(table).failed(failed))
        }
        Command::Analyze {
            runs,
            baseline,
            fixtures: with_fixtures,
            report,
        } => {
            let mut all = load_all(&runs)?;
            if with_fixtures {
                all.extend(fixtures::all_runs());
            }
            if all.is_empty() {
                return Err(usage("no runs to analyze; give run files or --fixtures"));
            }
            let baselines = load_all(&baseline)?;
            let analysis = analyze(&all, &baselines)?;
            let table = analysis.to_table();
            let out = Output::json(&analysis)?.with_table(table);
            Ok(if report == Report::Table { out.table_by_default() } else { out })
        }
        Command::Spin { work_units } => {
            let value = burn(work_units);
            Ok(Output::json(&json!({"work_units": work_units, "value": value}))?)
        }
    }
}
