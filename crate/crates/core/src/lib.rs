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

//! Core library for provisioning phenomenology workstations in the cloud.
//!
//! The crate is split along the lines of the workflow it supports:
//!
//! * [`catalog`] parses the JSON application catalog and merges per-version
//!   overrides into an effective application description.
//! * [`resolver`] turns a request for applications into an ordered,
//!   duplicate-free, cycle-free install plan.
//! * [`contextualizer`] fetches instance metadata, downloads archives and runs
//!   installer scripts inside a sandbox root.
//! * [`identity`] maps VO assertions and usernames to tenants, provisions
//!   principals and issues signed tokens.
//! * [`scanner`] runs a statically partitioned two-dimensional parameter scan
//!   across worker processes and merges the partial results.
//! * [`bench`] launches concurrent workloads, captures real/user/sys times and
//!   computes the overhead metrics used to compare machines.

pub mod bench;
pub mod catalog;
pub mod contextualizer;
pub mod identity;
pub mod resolver;
pub mod scanner;

pub use catalog::{ApplicationEntry, Catalog, CatalogError, ResolvedApp, VersionSpec};
pub use contextualizer::{ExecutionReport, ImageRecord, MetadataSource, Mode};
pub use identity::{Assertion, Decision, DenyReason, MappingConfig, Principal, Token};
pub use resolver::{InstallPlan, InstallRequest, ResolveError};
pub use scanner::{Partition, ScanGrid, ScanStatus};
pub use bench::{BenchRun, MachineLabel, TimingRecord};
