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

use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::Subcommand;
use pheno_core::catalog::{parse_catalog, Catalog, CatalogError};
use pheno_core::contextualizer::{
    contextualize, fetch_metadata, filter_ready_images, parse_registry, ContextError, ContextOptions,
    MetadataSource, Mode,
};
use pheno_core::resolver::{check_cycles, resolve, ResolveError};
use serde_json::json;

use crate::config::require;
use crate::error::failure;
use crate::{Context, Output};

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resolve the metadata request into an ordered install plan.
    Plan {
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// File path or http(s) URL holding `{"App": "version", ...}`.
        #[arg(long)]
        metadata: String,
    },
    /// Download and install the planned applications under a root directory.
    Run {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        metadata: String,
        #[arg(long)]
        root: Option<PathBuf>,
        /// Directory holding the installer scripts named in the catalog.
        #[arg(long)]
        scripts: Option<PathBuf>,
        #[arg(long)]
        dry_run: bool,
    },
    /// List images flagged as ready for contextualization.
    Images {
        /// JSON list of `{"id": ..., "properties": {...}}`.
        #[arg(long)]
        registry: PathBuf,
    },
    /// Validate a catalog and list every dependency cycle in it.
    Check {
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
}

fn load_catalog(flag: Option<PathBuf>, ctx: &Context) -> anyhow::Result<Catalog> {
    let path = require(flag, &ctx.config.catalog, "--catalog")?;
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    parse_catalog(&text).map_err(|e| catalog_failure(&path, e))
}

fn catalog_failure(path: &Path, e: CatalogError) -> anyhow::Error {
    failure("invalid-catalog", format!("{}: {e}", path.display()), json!({}))
}

fn resolve_failure(e: ResolveError) -> anyhow::Error {
    match e {
        ResolveError::Cycle(cycle) => failure(
            "dependency-cycle",
            format!("dependency cycle: {cycle}"),
            json!({"cycle": cycle.closed_path()}),
        ),
        other => failure("unresolvable", other.to_string(), json!({})),
    }
}

fn context_failure(e: ContextError) -> anyhow::Error {
    match e {
        ContextError::Resolve(e) => resolve_failure(e),
        ContextError::Fetch { .. } => failure("metadata-unavailable", e.to_string(), json!({})),
        ContextError::Format(_) => failure("invalid-metadata", e.to_string(), json!({})),
        other => failure("contextualization", other.to_string(), json!({})),
    }
}

pub fn run(cmd: Command, ctx: &Context) -> anyhow::Result<Output> {
    match cmd {
        Command::Plan { catalog, metadata } => {
            let catalog = load_catalog(catalog, ctx)?;
            let request = fetch_metadata(&MetadataSource::detect(&metadata)).map_err(context_failure)?;
            let plan = resolve(&catalog, &request).map_err(resolve_failure)?;
            let mut table = String::new();
            for (i, step) in plan.steps.iter().enumerate() {
                table.push_str(&format!(
                    "{:<3} {:<20} {:<12} {}\n",
                    i + 1,
                    step.name,
                    step.version_key,
                    step.download_url.as_deref().unwrap_or("-")
                ));
            }
            Ok(Output::json(&plan)?.with_table(table))
        }
        Command::Run {
            catalog,
            metadata,
            root,
            scripts,
            dry_run,
        } => {
            let catalog = load_catalog(catalog, ctx)?;
            let root = require(root, &ctx.config.root, "--root")?;
            let scripts_dir = match scripts.or_else(|| ctx.config.scripts_dir.clone()) {
                Some(dir) => dir,
                None if dry_run => PathBuf::from("."),
                None => return Err(crate::error::usage("--scripts is required (flag or PHENO_CONFIG)")),
            };
            let options = ContextOptions {
                mode: if dry_run { Mode::DryRun } else { Mode::Execute },
                root,
                scripts_dir,
                run_as: None,
            };
            let report =
                contextualize(&catalog, &MetadataSource::detect(&metadata), &options).map_err(context_failure)?;
            let failed = !report.succeeded();
            Ok(Output::json(&report)?.with_table(report.to_table()).failed(failed))
        }
        Command::Images { registry } => {
            let text = std::fs::read_to_string(&registry).with_context(|| format!("reading {}", registry.display()))?;
            let images = parse_registry(&text).map_err(context_failure)?;
            let ready = filter_ready_images(&images);
            let table = ready.iter().map(|i| format!("{}\n", i.id)).collect();
            Ok(Output::json(&ready)?.with_table(table))
        }
        Command::Check { catalog } => {
            let path = require(catalog, &ctx.config.catalog, "--catalog")?;
            let catalog = load_catalog(Some(path.clone()), ctx)?;
            catalog.validate().map_err(|e| catalog_failure(&path, e))?;
            let cycles = check_cycles(&catalog);
            if !cycles.is_empty() {
                let paths: Vec<Vec<&str>> = cycles.iter().map(|c| c.closed_path()).collect();
                let listed: Vec<String> = cycles.iter().map(|c| c.to_string()).collect();
                return Err(failure(
                    "dependency-cycle",
                    format!("{} cycle(s): {}", cycles.len(), listed.join("; ")),
                    json!({"cycles": paths}),
                ));
            }
            Ok(Output::json(&json!({"applications": catalog.len(), "cycles": []}))?)
        }
    }
}
