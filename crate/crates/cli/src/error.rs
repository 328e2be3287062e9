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

//! Exit codes and the JSON error document written to stderr.

use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Bad or missing arguments that clap could not catch.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

/// A domain failure with a machine-readable kind and optional details, e.g. a
/// denial and its reason.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
    pub detail: Value,
}

pub fn failure(kind: &'static str, message: impl Into<String>, detail: Value) -> anyhow::Error {
    Failure {
        kind,
        message: message.into(),
        detail,
    }
    .into()
}

/// Exit code and stderr document for an error.
pub fn report(err: &anyhow::Error) -> (i32, Value) {
    if let Some(UsageError(message)) = err.downcast_ref() {
        return (EXIT_USAGE, json!({"error": "usage", "message": message}));
    }
    if let Some(f) = err.downcast_ref::<Failure>() {
        let mut doc = json!({"error": f.kind, "message": f.message});
        if let (Value::Object(doc), Value::Object(detail)) = (&mut doc, &f.detail) {
            doc.extend(detail.clone());
        }
        return (EXIT_DOMAIN, doc);
    }
    (EXIT_DOMAIN, json!({"error": "failed", "message": format!("{err:#}")}))
}
