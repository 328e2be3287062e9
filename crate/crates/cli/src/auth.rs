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

use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context as _;
use clap::{Args, Subcommand};
use pheno_core::identity::{
    issue_token, map_assertion, map_username, verify_token, Assertion, CompiledMapping, Decision,
    JsonFileStore, MappingConfig, MemoryStore, PrincipalStore, Timestamp, Verification,
};
use serde_json::json;

use crate::config::{read_key, require};
use crate::error::{failure, usage};
use crate::{Context, Output};

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Map a VO assertion to a tenant.
    MapVo {
        #[command(flatten)]
        mapping: MappingArgs,
        /// Assertion JSON file. Alternatively give --dn and --vo.
        #[arg(long, conflicts_with_all = ["dn", "vo"])]
        assertion: Option<PathBuf>,
        /// Subject distinguished name.
        #[arg(long, requires = "vo")]
        dn: Option<String>,
        #[arg(long, requires = "dn")]
        vo: Option<String>,
        /// Validity of an assertion built from --dn/--vo, starting now.
        #[arg(long, default_value_t = 3600)]
        valid_for: i64,
        #[arg(long)]
        now: Option<Timestamp>,
    },
    /// Map an authenticated username to a tenant.
    MapUser {
        #[command(flatten)]
        mapping: MappingArgs,
        #[arg(long)]
        username: String,
    },
    #[command(subcommand)]
    Token(TokenCommand),
}

#[derive(Debug, Args)]
pub struct MappingArgs {
    /// Mapping rules (`{"vo_rules": [...], "user_rules": [...]}`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Principal store file. Without one, principals live only for this call.
    #[arg(long)]
    store: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum TokenCommand {
    Issue {
        #[command(flatten)]
        key: KeyArgs,
        #[arg(long)]
        subject: String,
        #[arg(long)]
        tenant: String,
        #[arg(long, default_value_t = 3600)]
        lifetime: i64,
        #[arg(long)]
        now: Option<Timestamp>,
    },
    Verify {
        #[command(flatten)]
        key: KeyArgs,
        #[arg(long)]
        token: String,
        #[arg(long)]
        now: Option<Timestamp>,
    },
}

#[derive(Debug, Args)]
pub struct KeyArgs {
    /// `env:NAME` or `file:PATH`.
    #[arg(long)]
    key: Option<String>,
}

fn now_or(now: Option<Timestamp>) -> Timestamp {
    now.unwrap_or_else(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs() as Timestamp)
            .unwrap_or(0)
    })
}

fn load_mapping(args: &MappingArgs, ctx: &Context) -> anyhow::Result<(CompiledMapping, Box<dyn PrincipalStore>)> {
    let path = require(args.config.clone(), &ctx.config.identity_config, "--config")?;
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mapping = MappingConfig::from_json(&text)?.compile()?;
    let store: Box<dyn PrincipalStore> = match args.store.clone().or_else(|| ctx.config.principal_store.clone()) {
        Some(path) => Box::new(JsonFileStore::new(path)),
        None => Box::new(MemoryStore::new()),
    };
    Ok((mapping, store))
}

fn decision_output(decision: Decision) -> anyhow::Result<Output> {
    match decision {
        Decision::Deny { reason } => Err(failure(
            "denied",
            format!("access denied: {reason}"),
            json!({"reason": reason}),
        )),
        allow => Output::json(&allow),
    }
}

pub fn run(cmd: Command, ctx: &Context) -> anyhow::Result<Output> {
    match cmd {
        Command::MapVo {
            mapping,
            assertion,
            dn,
            vo,
            valid_for,
            now,
        } => {
            let now = now_or(now);
            let assertion = match (assertion, dn, vo) {
                (Some(path), _, _) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                (None, Some(dn), vo) => Assertion {
                    subject_dn: dn,
                    vo,
                    groups: vec![],
                    roles: vec![],
                    not_before: now,
                    not_after: now.saturating_add(valid_for),
                },
                _ => return Err(usage("give --assertion or --dn with --vo")),
            };
            let (mapping, store) = load_mapping(&mapping, ctx)?;
            decision_output(map_assertion(&mapping, store.as_ref(), &assertion, now)?)
        }
        Command::MapUser { mapping, username } => {
            let (mapping, store) = load_mapping(&mapping, ctx)?;
            decision_output(map_username(&mapping, store.as_ref(), &username)?)
        }
        Command::Token(TokenCommand::Issue {
            key,
            subject,
            tenant,
            lifetime,
            now,
        }) => {
            let key = read_key(&require(key.key, &ctx.config.signing_key, "--key")?)?;
            let token = issue_token(&key, &subject, &tenant, now_or(now), lifetime)?;
            let encoded = token.encode();
            Ok(Output::json(&json!({
                "token": encoded,
                "subject": token.subject,
                "tenant": token.tenant,
                "issued_at": token.issued_at,
                "expires_at": token.expires_at,
            }))?
            .with_table(format!("{encoded}\n")))
        }
        Command::Token(TokenCommand::Verify { key, token, now }) => {
            let key = read_key(&require(key.key, &ctx.config.signing_key, "--key")?)?;
            match verify_token(&key, &token, now_or(now)) {
                Verification::Valid(t) => Ok(Output::json(&json!({
                    "valid": true,
                    "subject": t.subject,
                    "tenant": t.tenant,
                    "issued_at": t.issued_at,
                    "expires_at": t.expires_at,
                }))?),
                Verification::Invalid(reason) => Err(failure(
                    "invalid-token",
                    format!("token rejected: {reason:?}").to_lowercase(),
                    json!({"reason": reason}),
                )),
            }
        }
    }
}
