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

//! Inputs for the benchmarks under `benches/`.

use pheno_core::catalog::{ApplicationEntry, Catalog, Overrides};
use pheno_core::resolver::InstallRequest;

/// `n` applications where app `i` depends on every app before it, plus a
/// request for the last one. The densest acyclic catalog of that size.
pub fn layered_catalog(n: usize) -> (Catalog, InstallRequest) {
    let name = |i: usize| format!("app{i:04}");
    let catalog = Catalog::from_entries((0..n).map(|i| {
        ApplicationEntry::new(name(i), "install.sh")
            .with_dependencies((0..i).map(name))
            .with_version("1.0", Overrides::default())
    }));
    let request = if n == 0 {
        InstallRequest::new()
    } else {
        InstallRequest::new().with(name(n - 1), "1.0")
    };
    (catalog, request)
}
