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

//! Reference timings for a two-phase phenomenology workload (a Mathematica
//! part and a Fortran part), measured on Xen virtual machines of sizes S to XL
//! and on the bare-metal host R. Multi-process runs keep only the slowest and
//! fastest process.
//!
//! The same files ship under `fixtures/timings/` in this crate.

use super::{parse_runs, BenchRun};

/// One process per machine, virtual machines with hyperthreading.
pub const SINGLE_VM_HT: &str = include_str!("../../fixtures/timings/single_vm_ht.json");
/// One process per machine, virtual machines without hyperthreading.
pub const SINGLE_VM_NHT: &str = include_str!("../../fixtures/timings/single_vm_nht.json");
/// One process on the bare-metal host.
pub const SINGLE_PHYSICAL: &str = include_str!("../../fixtures/timings/single_physical.json");
/// 1..c simultaneous processes on M, L and XL virtual machines.
pub const MULTI_VM_HT: &str = include_str!("../../fixtures/timings/multi_vm_ht.json");
/// 1..8 simultaneous processes on the bare-metal host.
pub const MULTI_PHYSICAL: &str = include_str!("../../fixtures/timings/multi_physical.json");

pub const ALL: [(&str, &str); 5] = [
    ("single_vm_ht", SINGLE_VM_HT),
    ("single_vm_nht", SINGLE_VM_NHT),
    ("single_physical", SINGLE_PHYSICAL),
    ("multi_vm_ht", MULTI_VM_HT),
    ("multi_physical", MULTI_PHYSICAL),
];

pub fn load(text: &str) -> Vec<BenchRun> {
    parse_runs(text).expect("bundled timing fixtures parse")
}

pub fn all_runs() -> Vec<BenchRun> {
    ALL.iter().flat_map(|(_, text)| load(text)).collect()
}

/// Looks a run up by its label (`XL_HT(8/6)`) and phase.
pub fn find<'a>(runs: &'a [BenchRun], label: &str, phase: &str) -> Option<&'a BenchRun> {
    runs.iter()
        .find(|r| r.label.as_deref() == Some(label) && r.phase == phase)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_parse_and_validate() {
        let runs = all_runs();
        assert_eq!(runs.len(), 12 + 4 + 2 + 20 + 10);
        for run in &runs {
            run.validate().unwrap();
            let (machine, p) = crate::bench::MachineLabel::parse(run.label.as_deref().unwrap()).unwrap();
            assert_eq!(machine, run.machine);
            assert_eq!(p.unwrap_or(1), run.processes);
        }
    }

    #[test]
    fn labels_are_unique_per_phase() {
        let runs = all_runs();
        for run in &runs {
            let n = runs
                .iter()
                .filter(|r| r.label == run.label && r.phase == run.phase)
                .count();
            assert_eq!(n, 1, "{:?} {}", run.label, run.phase);
        }
    }
}
