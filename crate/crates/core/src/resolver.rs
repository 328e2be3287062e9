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

//! Install-order resolution.
//!
//! Dependencies are named without a version. A dependency that is not pinned
//! by the request is installed at its greatest version key (plain string
//! order). Among the applications whose dependencies are already planned, the
//! one with the smallest name goes first, so a plan never depends on the order
//! in which the request was written.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError, ResolvedApp};

/// Applications to install, keyed by name, valued by version key.
///
/// On the wire this is exactly `{"<AppName>": "<version_key>", ...}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstallRequest {
    pub entries: BTreeMap<String, String>,
}

impl InstallRequest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, version: impl Into<String>) -> Self {
        self.entries.insert(name.into(), version.into());
        self
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for InstallRequest {
    fn from_iter<T: IntoIterator<Item = (K, V)>>(iter: T) -> Self {
        InstallRequest {
            entries: iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstallPlan {
    pub steps: Vec<ResolvedApp>,
}

impl InstallPlan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.name.as_str()).collect()
    }
}

/// A closed dependency path. Members are stored once; the first member is
/// repeated when displayed (`A -> B -> A`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DependencyCycle(pub Vec<String>);

impl DependencyCycle {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The path with the starting node repeated at the end.
    pub fn closed_path(&self) -> Vec<&str> {
        let mut path: Vec<&str> = self.0.iter().map(String::as_str).collect();
        if let Some(first) = self.0.first() {
            path.push(first);
        }
        path
    }

    /// Rotates the cycle so it starts at its smallest member.
    fn canonical(mut members: Vec<String>) -> Self {
        if let Some(pos) = members
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.cmp(b.1))
            .map(|(i, _)| i)
        {
            members.rotate_left(pos);
        }
        DependencyCycle(members)
    }
}

impl fmt::Display for DependencyCycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.closed_path().join(" -> "))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResolveError {
    #[error("application `{0}` is not in the catalog")]
    UnknownApplication(String),
    #[error("application `{name}` has no version `{version}`")]
    UnknownVersion { name: String, version: String },
    #[error("application `{entry}` depends on `{dependency}`, which is not in the catalog")]
    DanglingDependency { entry: String, dependency: String },
    #[error("dependency cycle: {0}")]
    Cycle(DependencyCycle),
}

impl From<CatalogError> for ResolveError {
    fn from(err: CatalogError) -> Self {
        match err {
            CatalogError::UnknownVersion { name, version } => ResolveError::UnknownVersion { name, version },
            CatalogError::DanglingDependency { entry, dependency } => {
                ResolveError::DanglingDependency { entry, dependency }
            }
            CatalogError::UnknownApplication(name) => ResolveError::UnknownApplication(name),
            other => ResolveError::UnknownApplication(other.to_string()),
        }
    }
}

/// Builds the install plan for `request`: the transitive dependency closure,
/// each application once, every dependency before its dependents.
pub fn resolve(catalog: &Catalog, request: &InstallRequest) -> Result<InstallPlan, ResolveError> {
    for (name, version) in &request.entries {
        let entry = catalog
            .get(name)
            .ok_or_else(|| ResolveError::UnknownApplication(name.clone()))?;
        if !entry.versions.contains_key(version) {
            return Err(ResolveError::UnknownVersion {
                name: name.clone(),
                version: version.clone(),
            });
        }
    }

    // Pick a version for every application in the closure, walking
    // breadth-first from the request.
    let mut selected: BTreeMap<String, ResolvedApp> = BTreeMap::new();
    let mut queue: Vec<String> = request.entries.keys().cloned().collect();
    while let Some(name) = queue.pop() {
        if selected.contains_key(&name) {
            continue;
        }
        let entry = catalog
            .get(&name)
            .ok_or_else(|| ResolveError::UnknownApplication(name.clone()))?;
        let version = match request.entries.get(&name) {
            Some(v) => v.as_str(),
            None => entry
                .latest_version()
                .ok_or_else(|| ResolveError::UnknownVersion {
                    name: name.clone(),
                    version: "<any>".into(),
                })?,
        };
        let resolved = catalog.effective_version(&name, version)?;
        for dep in &resolved.effective.dependencies {
            if !catalog.contains(dep) {
                return Err(ResolveError::DanglingDependency {
                    entry: name.clone(),
                    dependency: dep.clone(),
                });
            }
            if !selected.contains_key(dep) {
                queue.push(dep.clone());
            }
        }
        selected.insert(name, resolved);
    }

    if let Some(cycle) = first_cycle(&selected, request.entries.keys()) {
        return Err(ResolveError::Cycle(cycle));
    }

    // Kahn's algorithm with an ordered ready set.
    let mut pending: BTreeMap<&str, usize> = BTreeMap::new();
    let mut dependents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (name, app) in &selected {
        let deps: BTreeSet<&str> = app.effective.dependencies.iter().map(String::as_str).collect();
        pending.insert(name, deps.len());
        for dep in deps {
            dependents.entry(dep).or_default().push(name);
        }
    }
    let mut ready: BTreeSet<&str> = pending
        .iter()
        .filter(|(_, n)| **n == 0)
        .map(|(name, _)| *name)
        .collect();
    let mut order = Vec::with_capacity(selected.len());
    while let Some(name) = ready.pop_first() {
        order.push(name.to_string());
        for dependent in dependents.get(name).into_iter().flatten() {
            let count = pending.get_mut(dependent).expect("dependent is selected");
            *count -= 1;
            if *count == 0 {
                ready.insert(dependent);
            }
        }
    }
    debug_assert_eq!(order.len(), selected.len(), "cycle check missed a cycle");

    let steps = order
        .into_iter()
        .map(|name| selected.remove(&name).expect("ordered name is selected"))
        .collect();
    Ok(InstallPlan { steps })
}

/// Depth-first search from the requested roots; reports the first back edge
/// found as a cycle.
fn first_cycle<'a>(
    selected: &BTreeMap<String, ResolvedApp>,
    roots: impl Iterator<Item = &'a String>,
) -> Option<DependencyCycle> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }

    fn visit(
        name: &str,
        selected: &BTreeMap<String, ResolvedApp>,
        marks: &mut BTreeMap<String, Mark>,
        stack: &mut Vec<String>,
    ) -> Option<Vec<String>> {
        match marks.get(name) {
            Some(Mark::Done) => return None,
            Some(Mark::Active) => {
                let start = stack.iter().position(|n| n == name).expect("active node is on the stack");
                return Some(stack[start..].to_vec());
            }
            None => {}
        }
        marks.insert(name.to_string(), Mark::Active);
        stack.push(name.to_string());
        if let Some(app) = selected.get(name) {
            for dep in &app.effective.dependencies {
                if let Some(cycle) = visit(dep, selected, marks, stack) {
                    return Some(cycle);
                }
            }
        }
        stack.pop();
        marks.insert(name.to_string(), Mark::Done);
        None
    }

    let mut marks = BTreeMap::new();
    let mut stack = Vec::new();
    for root in roots {
        if let Some(members) = visit(root, selected, &mut marks, &mut stack) {
            return Some(DependencyCycle(members));
        }
    }
    None
}

/// Lists every elementary cycle of the whole catalog's dependency graph.
///
/// An edge `A -> B` exists when `B` is an application-wide dependency of `A`
/// or a dependency of any of `A`'s versions. Dependencies on names that are not
/// in the catalog are ignored here. Each cycle is reported once, rotated to
/// start at its smallest member; the list is sorted.
pub fn check_cycles(catalog: &Catalog) -> Vec<DependencyCycle> {
    let names: Vec<&str> = catalog.names().collect();
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let edges: Vec<Vec<usize>> = catalog
        .entries()
        .map(|entry| {
            entry
                .all_dependencies()
                .filter_map(|d| index.get(d).copied())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        })
        .collect();

    // For each start node s, enumerate simple paths through nodes > s that
    // return to s. Catalogs are small; this is exhaustive and simple.
    let mut cycles = Vec::new();
    let mut on_path = vec![false; names.len()];
    let mut path = Vec::new();
    for start in 0..names.len() {
        path.push(start);
        on_path[start] = true;
        extend_paths(start, start, &edges, &mut on_path, &mut path, &mut |p| {
            cycles.push(DependencyCycle::canonical(
                p.iter().map(|&i| names[i].to_string()).collect(),
            ))
        });
        on_path[start] = false;
        path.pop();
    }
    cycles.sort();
    cycles
}

fn extend_paths(
    start: usize,
    node: usize,
    edges: &[Vec<usize>],
    on_path: &mut [bool],
    path: &mut Vec<usize>,
    emit: &mut impl FnMut(&[usize]),
) {
    for &next in &edges[node] {
        if next == start {
            emit(path);
        } else if next > start && !on_path[next] {
            on_path[next] = true;
            path.push(next);
            extend_paths(start, next, edges, on_path, path, emit);
            path.pop();
            on_path[next] = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{parse_catalog, ApplicationEntry, Overrides};

    fn app(name: &str, deps: &[&str]) -> ApplicationEntry {
        ApplicationEntry::new(name, format!("{name}.sh"))
            .with_dependencies(deps.iter().copied())
            .with_version("1", Overrides::default())
    }

    #[test]
    fn formcalc_installs_feynhiggs_first() {
        let catalog = parse_catalog(
            r#"{
            "FeynHiggs": {"installer": "feyntools.sh", "versions": {"2.9.4": {}}},
            "FormCalc": {"installer": "feyntools.sh", "dependencies": ["FeynHiggs"],
                         "versions": {"7.4": {}}}
        }"#,
        )
        .unwrap();
        let plan = resolve(&catalog, &InstallRequest::new().with("FormCalc", "7.4")).unwrap();
        assert_eq!(plan.names(), vec!["FeynHiggs", "FormCalc"]);
    }

    #[test]
    fn empty_request_gives_empty_plan() {
        let catalog = Catalog::from_entries([app("A", &[])]);
        assert!(resolve(&catalog, &InstallRequest::new()).unwrap().is_empty());
    }

    #[test]
    fn two_cycle_is_reported_in_full() {
        let catalog = Catalog::from_entries([app("A", &["B"]), app("B", &["A"])]);
        let err = resolve(&catalog, &InstallRequest::new().with("A", "1")).unwrap_err();
        let ResolveError::Cycle(cycle) = err else { panic!("expected cycle, got {err:?}") };
        assert_eq!(cycle.closed_path(), vec!["A", "B", "A"]);
        assert_eq!(cycle.to_string(), "A -> B -> A");
    }

    #[test]
    fn self_dependency_is_a_cycle() {
        let catalog = Catalog::from_entries([app("A", &["A"])]);
        let err = resolve(&catalog, &InstallRequest::new().with("A", "1")).unwrap_err();
        assert_eq!(err, ResolveError::Cycle(DependencyCycle(vec!["A".into()])));
        assert_eq!(check_cycles(&catalog).len(), 1);
    }

    #[test]
    fn unknown_names_and_versions() {
        let catalog = Catalog::from_entries([app("A", &["Z"])]);
        assert_eq!(
            resolve(&catalog, &InstallRequest::new().with("Q", "1")).unwrap_err(),
            ResolveError::UnknownApplication("Q".into())
        );
        assert!(matches!(
            resolve(&catalog, &InstallRequest::new().with("A", "9")).unwrap_err(),
            ResolveError::UnknownVersion { .. }
        ));
        assert_eq!(
            resolve(&catalog, &InstallRequest::new().with("A", "1")).unwrap_err(),
            ResolveError::DanglingDependency {
                entry: "A".into(),
                dependency: "Z".into()
            }
        );
    }

    #[test]
    fn dependency_defaults_to_greatest_version_key() {
        let b = ApplicationEntry::new("B", "b.sh")
            .with_version("1.0", Overrides::default())
            .with_version("2.0", Overrides::default())
            .with_version("10.0", Overrides::default());
        let catalog = Catalog::from_entries([app("A", &["B"]), b]);
        let plan = resolve(&catalog, &InstallRequest::new().with("A", "1")).unwrap();
        // Plain string order: "2.0" > "10.0".
        assert_eq!(plan.steps[0].version_key, "2.0");

        let pinned = InstallRequest::new().with("A", "1").with("B", "1.0");
        let plan = resolve(&catalog, &pinned).unwrap();
        assert_eq!(plan.steps[0].version_key, "1.0");
        assert_eq!(plan.len(), 2);
    }

    #[test]
    fn version_override_can_change_dependencies() {
        let a = ApplicationEntry::new("A", "a.sh")
            .with_dependencies(["B"])
            .with_version("1", Overrides::default())
            .with_version(
                "2",
                Overrides {
                    dependencies: Some(vec!["C".into()]),
                    ..Overrides::default()
                },
            );
        let catalog = Catalog::from_entries([a, app("B", &[]), app("C", &[])]);
        let plan = resolve(&catalog, &InstallRequest::new().with("A", "2")).unwrap();
        assert_eq!(plan.names(), vec!["C", "A"]);
        let plan = resolve(&catalog, &InstallRequest::new().with("A", "1")).unwrap();
        assert_eq!(plan.names(), vec!["B", "A"]);
    }

    #[test]
    fn check_cycles_examples() {
        let acyclic = Catalog::from_entries([app("FeynHiggs", &[]), app("FormCalc", &["FeynHiggs"])]);
        assert!(check_cycles(&acyclic).is_empty());

        let triangle = Catalog::from_entries([app("A", &["B"]), app("B", &["C"]), app("C", &["A"])]);
        let cycles = check_cycles(&triangle);
        assert_eq!(cycles, vec![DependencyCycle(vec!["A".into(), "B".into(), "C".into()])]);

        let pairs = Catalog::from_entries([
            app("A", &["B"]),
            app("B", &["A"]),
            app("C", &["D"]),
            app("D", &["C"]),
        ]);
        assert_eq!(check_cycles(&pairs).len(), 2);
    }
}
