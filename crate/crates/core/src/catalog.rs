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

//! Application catalog.
//!
//! The catalog is a JSON dictionary keyed by application name. Every entry
//! carries application-wide defaults and a `versions` dictionary; each version
//! may override any of the default fields. Only `installer` and `versions` are
//! mandatory.
//!
//! ```json
//! "FormCalc": {
//!   "app_name": "FormCalc",
//!   "dependencies": ["FeynHiggs"],
//!   "installer": "feyntools.sh",
//!   "base_url": "http://www.feynarts.de/formcalc/",
//!   "versions": {
//!     "7.0.2": { "base_url": "https://devel.ifca.es/~enol/feynapps/", "app_version": "7.0.2" },
//!     "7.4": { "app_version": "7.4" }
//!   }
//! }
//! ```
//!
//! Unknown fields are kept (so a parsed catalog can be written back) but
//! otherwise ignored. Keys are case-sensitive.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub const FIELD_APP_NAME: &str = "app_name";
pub const FIELD_BASE_URL: &str = "base_url";
pub const FIELD_FILE: &str = "file";
pub const FIELD_DEPENDENCIES: &str = "dependencies";
pub const FIELD_INSTALLER: &str = "installer";
pub const FIELD_VERSIONS: &str = "versions";
pub const FIELD_VERSION_NAME: &str = "version_name";
/// Alias for `version_name` found in catalogs in the wild.
pub const FIELD_APP_VERSION: &str = "app_version";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CatalogError {
    #[error("malformed catalog JSON at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("catalog must be a JSON object at the top level")]
    NotAnObject,
    #[error("catalog entry `{entry}`: field `{field}` {reason}")]
    Invalid {
        entry: String,
        field: String,
        reason: String,
    },
    #[error("application `{0}` is not in the catalog")]
    UnknownApplication(String),
    #[error("application `{name}` has no version `{version}`")]
    UnknownVersion { name: String, version: String },
    #[error("application `{entry}` depends on `{dependency}`, which is not in the catalog")]
    DanglingDependency { entry: String, dependency: String },
}

impl CatalogError {
    fn invalid(entry: &str, field: &str, reason: impl Into<String>) -> Self {
        CatalogError::Invalid {
            entry: entry.to_string(),
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

/// The subset of application fields a version may override.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub app_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dependencies: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub installer: Option<String>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        *self == Overrides::default()
    }

    /// Field-wise merge: a present override replaces the default, an absent one
    /// leaves it untouched.
    pub fn apply(&self, defaults: &EffectiveFields) -> EffectiveFields {
        EffectiveFields {
            app_name: self.app_name.clone().or_else(|| defaults.app_name.clone()),
            base_url: self.base_url.clone().or_else(|| defaults.base_url.clone()),
            file: self.file.clone().or_else(|| defaults.file.clone()),
            dependencies: self
                .dependencies
                .clone()
                .unwrap_or_else(|| defaults.dependencies.clone()),
            installer: self
                .installer
                .clone()
                .unwrap_or_else(|| defaults.installer.clone()),
        }
    }
}

/// A fully merged application description for one version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveFields {
    pub app_name: Option<String>,
    pub base_url: Option<String>,
    pub file: Option<String>,
    pub dependencies: Vec<String>,
    pub installer: String,
}

impl EffectiveFields {
    /// Joins `base_url` and `file` with exactly one `/`. Without a file the
    /// base URL is returned unchanged; without a base URL there is nothing to
    /// download.
    pub fn download_url(&self) -> Option<String> {
        let base = self.base_url.as_deref()?;
        Some(match self.file.as_deref() {
            Some(file) => join_url(base, file),
            None => base.to_string(),
        })
    }
}

pub fn join_url(base: &str, file: &str) -> String {
    format!(
        "{}/{}",
        base.trim_end_matches('/'),
        file.trim_start_matches('/')
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct VersionSpec {
    pub version_key: String,
    pub version_name: String,
    pub overrides: Overrides,
    /// Fields we do not interpret, kept for round-tripping.
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApplicationEntry {
    pub name: String,
    pub app_name: Option<String>,
    pub base_url: Option<String>,
    pub file: Option<String>,
    pub dependencies: Vec<String>,
    pub installer: String,
    pub versions: BTreeMap<String, VersionSpec>,
    pub extra: Map<String, Value>,
}

impl ApplicationEntry {
    /// Minimal entry with a single version and no defaults beyond the installer.
    pub fn new(name: impl Into<String>, installer: impl Into<String>) -> Self {
        ApplicationEntry {
            name: name.into(),
            app_name: None,
            base_url: None,
            file: None,
            dependencies: Vec::new(),
            installer: installer.into(),
            versions: BTreeMap::new(),
            extra: Map::new(),
        }
    }

    pub fn with_dependencies<I, S>(mut self, deps: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.dependencies = deps.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_version(mut self, key: impl Into<String>, overrides: Overrides) -> Self {
        let key = key.into();
        self.versions.insert(
            key.clone(),
            VersionSpec {
                version_name: key.clone(),
                version_key: key,
                overrides,
                extra: Map::new(),
            },
        );
        self
    }

    pub fn defaults(&self) -> EffectiveFields {
        EffectiveFields {
            app_name: self.app_name.clone(),
            base_url: self.base_url.clone(),
            file: self.file.clone(),
            dependencies: self.dependencies.clone(),
            installer: self.installer.clone(),
        }
    }

    /// Greatest version key in plain string order.
    pub fn latest_version(&self) -> Option<&str> {
        self.versions.keys().next_back().map(String::as_str)
    }

    /// Every dependency any version of this entry may pull in.
    pub fn all_dependencies(&self) -> impl Iterator<Item = &str> {
        self.dependencies.iter().map(String::as_str).chain(
            self.versions
                .values()
                .filter_map(|v| v.overrides.dependencies.as_ref())
                .flatten()
                .map(String::as_str),
        )
    }
}

/// An application at a specific version with overrides applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedApp {
    pub name: String,
    pub version_key: String,
    pub version_name: String,
    pub effective: EffectiveFields,
    pub download_url: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    entries: BTreeMap<String, ApplicationEntry>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries<I: IntoIterator<Item = ApplicationEntry>>(entries: I) -> Self {
        Catalog {
            entries: entries.into_iter().map(|e| (e.name.clone(), e)).collect(),
        }
    }

    pub fn insert(&mut self, entry: ApplicationEntry) -> Option<ApplicationEntry> {
        self.entries.insert(entry.name.clone(), entry)
    }

    pub fn get(&self, name: &str) -> Option<&ApplicationEntry> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = &ApplicationEntry> {
        self.entries.values()
    }

    /// Checks the mandatory fields and that every dependency (application-wide
    /// or per-version) names an entry of this catalog.
    pub fn validate(&self) -> Result<(), CatalogError> {
        for entry in self.entries.values() {
            if entry.installer.is_empty() {
                return Err(CatalogError::invalid(
                    &entry.name,
                    FIELD_INSTALLER,
                    "must be a non-empty string",
                ));
            }
            if entry.versions.is_empty() {
                return Err(CatalogError::invalid(
                    &entry.name,
                    FIELD_VERSIONS,
                    "must contain at least one version",
                ));
            }
            for dep in entry.all_dependencies() {
                if !self.entries.contains_key(dep) {
                    return Err(CatalogError::DanglingDependency {
                        entry: entry.name.clone(),
                        dependency: dep.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn effective_version(&self, name: &str, version_key: &str) -> Result<ResolvedApp, CatalogError> {
        let entry = self
            .get(name)
            .ok_or_else(|| CatalogError::UnknownApplication(name.to_string()))?;
        let version = entry
            .versions
            .get(version_key)
            .ok_or_else(|| CatalogError::UnknownVersion {
                name: name.to_string(),
                version: version_key.to_string(),
            })?;
        let effective = version.overrides.apply(&entry.defaults());
        Ok(ResolvedApp {
            name: name.to_string(),
            version_key: version_key.to_string(),
            version_name: version.version_name.clone(),
            download_url: effective.download_url(),
            effective,
        })
    }

    pub fn to_json(&self) -> Value {
        Value::Object(
            self.entries
                .iter()
                .map(|(name, entry)| (name.clone(), entry_to_json(entry)))
                .collect(),
        )
    }

    pub fn to_json_string_pretty(&self) -> String {
        // Serializing a `Value` cannot fail.
        serde_json::to_string_pretty(&self.to_json()).expect("catalog serializes")
    }
}

/// Parses a catalog document. Mandatory fields are checked here; dangling
/// dependencies are left to [`Catalog::validate`].
pub fn parse_catalog(text: &str) -> Result<Catalog, CatalogError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CatalogError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let Value::Object(top) = value else {
        return Err(CatalogError::NotAnObject);
    };
    let mut entries = BTreeMap::new();
    for (name, raw) in top {
        let entry = parse_entry(&name, raw)?;
        entries.insert(name, entry);
    }
    Ok(Catalog { entries })
}

fn take_string(
    obj: &mut Map<String, Value>,
    entry: &str,
    field: &str,
) -> Result<Option<String>, CatalogError> {
    match obj.remove(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(CatalogError::invalid(entry, field, "must be a string")),
    }
}

fn take_string_list(
    obj: &mut Map<String, Value>,
    entry: &str,
    field: &str,
) -> Result<Option<Vec<String>>, CatalogError> {
    match obj.remove(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Array(items)) => items
            .into_iter()
            .map(|item| match item {
                Value::String(s) => Ok(s),
                _ => Err(CatalogError::invalid(entry, field, "must be a list of strings")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some),
        Some(_) => Err(CatalogError::invalid(entry, field, "must be a list of strings")),
    }
}

fn take_overrides(obj: &mut Map<String, Value>, entry: &str) -> Result<Overrides, CatalogError> {
    Ok(Overrides {
        app_name: take_string(obj, entry, FIELD_APP_NAME)?,
        base_url: take_string(obj, entry, FIELD_BASE_URL)?,
        file: take_string(obj, entry, FIELD_FILE)?,
        dependencies: take_string_list(obj, entry, FIELD_DEPENDENCIES)?,
        installer: take_string(obj, entry, FIELD_INSTALLER)?,
    })
}

fn parse_entry(name: &str, raw: Value) -> Result<ApplicationEntry, CatalogError> {
    let Value::Object(mut obj) = raw else {
        return Err(CatalogError::invalid(name, "<entry>", "must be a JSON object"));
    };
    let defaults = take_overrides(&mut obj, name)?;
    let installer = match defaults.installer {
        Some(s) if !s.is_empty() => s,
        Some(_) => {
            return Err(CatalogError::invalid(name, FIELD_INSTALLER, "must be a non-empty string"))
        }
        None => return Err(CatalogError::invalid(name, FIELD_INSTALLER, "is missing")),
    };
    let versions = match obj.remove(FIELD_VERSIONS) {
        None | Some(Value::Null) => {
            return Err(CatalogError::invalid(name, FIELD_VERSIONS, "is missing"))
        }
        Some(Value::Object(v)) if v.is_empty() => {
            return Err(CatalogError::invalid(
                name,
                FIELD_VERSIONS,
                "must contain at least one version",
            ))
        }
        Some(Value::Object(v)) => v,
        Some(_) => {
            return Err(CatalogError::invalid(name, FIELD_VERSIONS, "must be a JSON object"))
        }
    };

    let mut parsed_versions = BTreeMap::new();
    for (key, raw_version) in versions {
        let context = format!("{name}@{key}");
        if key.is_empty() {
            return Err(CatalogError::invalid(name, FIELD_VERSIONS, "has an empty version key"));
        }
        let Value::Object(mut vobj) = raw_version else {
            return Err(CatalogError::invalid(&context, "<version>", "must be a JSON object"));
        };
        let overrides = take_overrides(&mut vobj, &context)?;
        let version_name = take_string(&mut vobj, &context, FIELD_VERSION_NAME)?;
        let app_version = take_string(&mut vobj, &context, FIELD_APP_VERSION)?;
        let version_name = version_name
            .filter(|s| !s.is_empty())
            .or(app_version.filter(|s| !s.is_empty()))
            .unwrap_or_else(|| key.clone());
        parsed_versions.insert(
            key.clone(),
            VersionSpec {
                version_key: key,
                version_name,
                overrides,
                extra: vobj,
            },
        );
    }

    Ok(ApplicationEntry {
        name: name.to_string(),
        app_name: defaults.app_name,
        base_url: defaults.base_url,
        file: defaults.file,
        dependencies: defaults.dependencies.unwrap_or_default(),
        installer,
        versions: parsed_versions,
        extra: obj,
    })
}

fn overrides_into(obj: &mut Map<String, Value>, o: &Overrides) {
    if let Some(v) = &o.app_name {
        obj.insert(FIELD_APP_NAME.into(), Value::String(v.clone()));
    }
    if let Some(v) = &o.base_url {
        obj.insert(FIELD_BASE_URL.into(), Value::String(v.clone()));
    }
    if let Some(v) = &o.file {
        obj.insert(FIELD_FILE.into(), Value::String(v.clone()));
    }
    if let Some(v) = &o.dependencies {
        obj.insert(
            FIELD_DEPENDENCIES.into(),
            Value::Array(v.iter().cloned().map(Value::String).collect()),
        );
    }
    if let Some(v) = &o.installer {
        obj.insert(FIELD_INSTALLER.into(), Value::String(v.clone()));
    }
}

fn entry_to_json(entry: &ApplicationEntry) -> Value {
    let mut obj = entry.extra.clone();
    let defaults = Overrides {
        app_name: entry.app_name.clone(),
        base_url: entry.base_url.clone(),
        file: entry.file.clone(),
        dependencies: (!entry.dependencies.is_empty()).then(|| entry.dependencies.clone()),
        installer: Some(entry.installer.clone()),
    };
    overrides_into(&mut obj, &defaults);
    let versions = entry
        .versions
        .iter()
        .map(|(key, v)| {
            let mut vobj = v.extra.clone();
            overrides_into(&mut vobj, &v.overrides);
            vobj.insert(FIELD_VERSION_NAME.into(), Value::String(v.version_name.clone()));
            (key.clone(), Value::Object(vobj))
        })
        .collect();
    obj.insert(FIELD_VERSIONS.into(), Value::Object(versions));
    Value::Object(obj)
}
