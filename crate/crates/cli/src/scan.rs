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
use clap::Subcommand;
use pheno_core::scanner::{run_scan, run_worker, split_results, KernelSpec, ScanGrid, ScanJob, WorkerLauncher};
use serde_json::json;

use crate::error::usage;
use crate::{Context, Output};

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan a (MA, tan beta) grid with W worker processes and merge the results.
    Run {
        /// Points per axis.
        #[arg(long, default_value_t = 120)]
        steps: usize,
        /// MA range as MIN:MAX.
        #[arg(long, default_value = "90:500")]
        ma: String,
        /// tan beta range as MIN:MAX.
        #[arg(long, default_value = "1.1:60")]
        tb: String,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// `builtin` or `cmd:<shell command>`.
        #[arg(long, default_value = "builtin")]
        kernel: String,
        /// Busy-loop iterations per point for the builtin kernel.
        #[arg(long, default_value_t = 0)]
        work_units: u64,
        /// Per-point time limit in seconds.
        #[arg(long)]
        point_timeout: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate one worker's share of a job file.
    #[command(hide = true)]
    Worker {
        #[arg(long)]
        job: PathBuf,
        #[arg(long)]
        index: usize,
    },
    /// Write the LHC- and LEP-excluded points of a merged file to two files.
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        lhc: PathBuf,
        #[arg(long)]
        lep: PathBuf,
    },
}

fn parse_range(text: &str, what: &str) -> anyhow::Result<(f64, f64)> {
    let bad = || usage(format!("{what} must look like MIN:MAX, got `{text}`"));
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
}

pub fn run(cmd: Command, _ctx: &Context) -> anyhow::Result<Output> {
    match cmd {
        Command::Run {
            steps,
            ma,
            tb,
            workers,
            kernel,
            work_units,
            point_timeout,
            out,
        } => {
            let (ma_min, ma_max) = parse_range(&ma, "--ma")?;
            let (tb_min, tb_max) = parse_range(&tb, "--tb")?;
            let kernel = KernelSpec::parse(&kernel, work_units).map_err(|e| usage(e.to_string()))?;
            let job = ScanJob {
                grid: ScanGrid {
                    ma_min,
                    ma_max,
                    tb_min,
                    tb_max,
                    steps_per_axis: steps,
                },
                workers,
                kernel,
                point_timeout_s: point_timeout,
                out,
            };
            job.validate().map_err(|e| usage(e.to_string()))?;
            let exe = std::env::current_exe().context("locating the pheno executable")?;
            let launcher = WorkerLauncher::new(exe).arg("scan").arg("worker");
            let summary = run_scan(&job, &launcher)?;
            let table = format!(
                "{} points, {} workers, {:.3} s -> {}\n",
                summary.points,
                summary.workers,
                summary.wall_s,
                summary.out.display()
            );
            Ok(Output::json(&summary)?.with_table(table))
        }
        Command::Worker { job, index } => {
            let job = ScanJob::load(&job)?;
            let part = run_worker(&job, index)?;
            Ok(Output::json(&json!({"worker": index, "part": part}))?)
        }
        Command::Split { input, lhc, lep } => {
            let (n_lhc, n_lep) = split_results(&input, &lhc, &lep)?;
            Ok(Output::json(&json!({"lhc": {"path": lhc, "points": n_lhc}, "lep": {"path": lep, "points": n_lep}}))?)
        }
    }
}
