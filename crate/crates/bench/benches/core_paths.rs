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

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use pheno_bench::layered_catalog;
use pheno_core::bench::{analyze, fixtures};
use pheno_core::identity::{issue_token, verify_token};
use pheno_core::resolver::{check_cycles, resolve};
use pheno_core::scanner::{builtin_kernel, format_result_line, partition, ScanGrid};

fn resolver(c: &mut Criterion) {
    let mut group = c.benchmark_group("resolver");
    for n in [6usize, 50, 200] {
        let (catalog, request) = layered_catalog(n);
        group.bench_with_input(BenchmarkId::new("resolve", n), &n, |b, _| {
            b.iter(|| resolve(black_box(&catalog), black_box(&request)).unwrap())
        });
    }
    let (catalog, _) = layered_catalog(12);
    group.bench_function("check_cycles/12", |b| b.iter(|| check_cycles(black_box(&catalog))));
    group.finish();
}

fn scanner(c: &mut Criterion) {
    let mut group = c.benchmark_group("scanner");
    group.bench_function("partition/14400x8", |b| b.iter(|| partition(black_box(14400), black_box(8)).unwrap()));
    for units in [1_000u64, 100_000] {
        group.throughput(Throughput::Elements(units));
        group.bench_with_input(BenchmarkId::new("builtin_kernel", units), &units, |b, &units| {
            b.iter(|| builtin_kernel(black_box(250.0), black_box(12.0), units))
        });
    }
    let grid = ScanGrid::mhmax_default();
    group.throughput(Throughput::Elements(grid.len() as u64));
    group.bench_function("format_lines/14400", |b| {
        b.iter(|| {
            (0..grid.len())
                .map(|i| {
                    let (ma, tb) = grid.point(i);
                    format_result_line(ma, tb, builtin_kernel(ma, tb, 0)).len()
                })
                .sum::<usize>()
        })
    });
    group.finish();
}

fn identity(c: &mut Criterion) {
    let key = b"bench-signing-key";
    let token = issue_token(key, "/DC=es/DC=irisgrid/CN=alice", "pheno", 1_000, 3_600)
        .unwrap()
        .encode();
    let mut group = c.benchmark_group("token");
    group.bench_function("issue", |b| {
        b.iter(|| issue_token(key, black_box("/DC=es/CN=alice"), "pheno", 1_000, 3_600).unwrap().encode())
    });
    group.bench_function("verify", |b| b.iter(|| verify_token(key, black_box(&token), 2_000)));
    group.finish();
}

fn analyzer(c: &mut Criterion) {
    let runs = fixtures::all_runs();
    let baselines = fixtures::load(fixtures::SINGLE_PHYSICAL);
    c.bench_function("analyze/fixtures", |b| b.iter(|| analyze(black_box(&runs), black_box(&baselines)).unwrap()));
}

criterion_group!(benches, resolver, scanner, identity, analyzer);
criterion_main!(benches);
