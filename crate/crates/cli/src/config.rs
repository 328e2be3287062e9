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

//! Settings shared by all subcommands, read from the JSON file named by
//! `PHENO_CONFIG`. Command-line flags take precedence.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

use crate::error::usage;

pub const CONFIG_ENV: &str = "PHENO_CONFIG";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub catalog: Option<PathBuf>,
    pub scripts_dir: Option<PathBuf>,
    pub root: Option<PathBuf>,
    pub identity_config: Option<PathBuf>,
    pub principal_store: Option<PathBuf>,
    /// `env:NAME` or `file:PATH`.
    pub signing_key: Option<String>,
    pub verbosity: Option<u8>,
}

impl GlobalConfig {
    pub fn from_env() -> anyhow::Result<Self> {
        match std::env::var_os(CONFIG_ENV) {
            Some(path) if !path.is_empty() => Self::load(Path::new(&path)),
            _ => Ok(Self::default()),
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {CONFIG_ENV} file {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Picks the flag, then the configured value, and fails as a usage error
/// naming both when neither is set.
pub fn require<T: Clone>(flag: Option<T>, configured: &Option<T>, what: &str) -> anyhow::Result<T> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| usage(format!("{what} is required (flag or {CONFIG_ENV})")))
}

/// Reads signing key material from `env:NAME` or `file:PATH`.
pub fn read_key(source: &str) -> anyhow::Result<Vec<u8>> {
    let key = if let Some(var) = source.strip_prefix("env:") {
        std::env::var(var)
            .with_context(|| format!("signing key variable {var} is not set"))?
            .into_bytes()
    } else if let Some(path) = source.strip_prefix("file:") {
        let mut bytes = std::fs::read(path).with_context(|| format!("reading signing key {path}"))?;
        while bytes.last().is_some_and(|b| b.is_ascii_whitespace()) {
            bytes.pop();
        }
        bytes
    } else {
        return Err(usage(format!("signing key source `{source}` must be env:NAME or file:PATH")));
    };
    if key.is_empty() {
        anyhow::bail!("signing key from {source} is empty");
    }
    Ok(key)
}
