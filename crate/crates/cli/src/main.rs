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

//! `pheno`: contextualization, identity mapping, parameter scans and
//! benchmarks from one binary.
//!
//! Data goes to stdout as JSON, errors to stderr as JSON. Exit status is 0 on
//! success, 1 on a domain error and 2 on a usage error.

mod auth;
mod bench;
mod config;
mod ctx;
mod error;
mod scan;

use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use serde::Serialize;

use config::GlobalConfig;
use error::{EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "pheno", version, about, arg_required_else_help = true)]
struct Cli {
    /// More log output on stderr (repeat for more).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    /// Human-readable output instead of JSON where a table exists.
    #[arg(long, global = true)]
    pretty: bool,

    #[command(subcommand)]
    command: Group,
}

#[derive(Debug, Subcommand)]
enum Group {
    /// Install applications from a catalog according to instance metadata.
    #[command(subcommand)]
    Ctx(ctx::Command),
    /// Map identities to tenants and handle tokens.
    #[command(subcommand)]
    Auth(auth::Command),
    /// Run a parameter scan over worker processes.
    #[command(subcommand)]
    Scan(scan::Command),
    /// Time simultaneous processes and analyze the results.
    #[command(subcommand)]
    Bench(bench::Command),
}

/// What a subcommand hands back for printing.
pub struct Output {
    json: serde_json::Value,
    table: Option<String>,
    /// Print the table even without `--pretty`.
    table_first: bool,
    /// Exit with the domain error code after printing, e.g. a failed install.
    failed: bool,
}

impl Output {
    pub fn json(value: &impl Serialize) -> anyhow::Result<Self> {
        Ok(Output {
            json: serde_json::to_value(value)?,
            table: None,
            table_first: false,
            failed: false,
        })
    }

    pub fn with_table(mut self, table: String) -> Self {
        self.table = Some(table);
        self
    }

    pub fn table_by_default(mut self) -> Self {
        self.table_first = true;
        self
    }

    pub fn failed(mut self, failed: bool) -> Self {
        self.failed = failed;
        self
    }
}

pub struct Context {
    pub config: GlobalConfig,
}

fn run(cli: Cli, ctx: Context) -> anyhow::Result<Output> {
    match cli.command {
        Group::Ctx(cmd) => ctx::run(cmd, &ctx),
        Group::Auth(cmd) => auth::run(cmd, &ctx),
        Group::Scan(cmd) => scan::run(cmd, &ctx),
        Group::Bench(cmd) => bench::run(cmd, &ctx),
    }
}

fn print_error(doc: &serde_json::Value) {
    eprintln!("{doc}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let config = match GlobalConfig::from_env() {
        Ok(c) => c,
        Err(e) => {
            let (_, doc) = error::report(&e);
            print_error(&doc);
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };

    let level = match cli.verbose.max(config.verbosity.unwrap_or(0)) {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("PHENO_LOG")
        .target(env_logger::Target::Stderr)
        .init();

    let pretty = cli.pretty;
    match run(cli, Context { config }) {
        Ok(out) => {
            match (&out.table, pretty || out.table_first) {
                (Some(table), true) => print!("{table}"),
                (None, true) if pretty => println!("{}", serde_json::to_string_pretty(&out.json).expect("JSON value")),
                _ => println!("{}", out.json),
            }
            ExitCode::from(if out.failed { error::EXIT_DOMAIN as u8 } else { 0 })
        }
        Err(e) => {
            let (code, doc) = error::report(&e);
            print_error(&doc);
            ExitCode::from(code as u8)
        }
    }
}
