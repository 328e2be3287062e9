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

//! Federated identity mapping.
//!
//! Two entry points mirror the two ways a user reaches the cloud:
//!
//! * [`map_assertion`] takes a VO assertion (already validated by the TLS
//!   layer), uses the subject DN verbatim as username and maps the VO to a
//!   tenant.
//! * [`map_username`] takes a username the web server has already
//!   authenticated and maps it to a tenant with regular expressions.
//!
//! Rules are evaluated in list order and the first match wins. When a rule
//! matches but the principal does not exist yet, it is created only if the rule
//! allows auto-creation. Denials never touch the store.
//!
//! Tokens are `v1.<payload>.<mac>` with both parts base64url encoded and the
//! MAC an HMAC-SHA256 over the version tag and the canonical payload.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use hmac::{Hmac, Mac};
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

/// Seconds since the Unix epoch.
pub type Timestamp = i64;

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("invalid mapping configuration: {0}")]
    Config(String),
    #[error("invalid assertion: {0}")]
    Assertion(String),
    #[error("token lifetime must be positive")]
    Lifetime,
    #[error("principal store {path}: {message}")]
    Store { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assertion {
    pub subject_dn: String,
    #[serde(default)]
    pub vo: Option<String>,
    #[serde(default)]
    pub groups: Vec<String>,
    #[serde(default)]
    pub roles: Vec<String>,
    pub not_before: Timestamp,
    pub not_after: Timestamp,
}

impl Assertion {
    pub fn validate(&self) -> Result<(), IdentityError> {
        if self.subject_dn.is_empty() {
            return Err(IdentityError::Assertion("subject_dn is empty".into()));
        }
        if self.not_before >= self.not_after {
            return Err(IdentityError::Assertion(
                "not_before must be earlier than not_after".into(),
            ));
        }
        Ok(())
    }

    pub fn is_valid_at(&self, now: Timestamp) -> bool {
        self.not_before <= now && now < self.not_after
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoRule {
    pub vo: String,
    pub tenant: String,
    #[serde(default)]
    pub auto_create: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRule {
    pub pattern: String,
    pub tenant: String,
    #[serde(default)]
    pub auto_create: bool,
}

/// On-disk mapping configuration. Use [`MappingConfig::compile`] before
/// mapping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingConfig {
    #[serde(default)]
    pub vo_rules: Vec<VoRule>,
    #[serde(default)]
    pub user_rules: Vec<UserRule>,
}

impl MappingConfig {
    pub fn from_json(text: &str) -> Result<Self, IdentityError> {
        serde_json::from_str(text).map_err(|e| IdentityError::Config(e.to_string()))
    }

    pub fn compile(&self) -> Result<CompiledMapping, IdentityError> {
        for rule in &self.vo_rules {
            if rule.tenant.is_empty() {
                return Err(IdentityError::Config(format!("vo rule `{}` has an empty tenant", rule.vo)));
            }
        }
        let user_rules = self
            .user_rules
            .iter()
            .map(|rule| {
                if rule.tenant.is_empty() {
                    return Err(IdentityError::Config(format!(
                        "user rule `{}` has an empty tenant",
                        rule.pattern
                    )));
                }
                // Rules match the whole username.
                let regex = Regex::new(&format!("^(?:{})$", rule.pattern)).map_err(|e| {
                    IdentityError::Config(format!("user rule `{}`: {e}", rule.pattern))
                })?;
                Ok((regex, rule.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(CompiledMapping {
            vo_rules: self.vo_rules.clone(),
            user_rules,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CompiledMapping {
    vo_rules: Vec<VoRule>,
    user_rules: Vec<(Regex, UserRule)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreatedBy {
    Manual,
    Auto,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    pub username: String,
    pub tenant: String,
    pub enabled: bool,
    pub created_by: CreatedBy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenyReason {
    VoNotAllowed,
    UserNotAllowed,
    UnknownPrincipal,
    PrincipalDisabled,
    Expired,
}

impl DenyReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DenyReason::VoNotAllowed => "vo-not-allowed",
            DenyReason::UserNotAllowed => "user-not-allowed",
            DenyReason::UnknownPrincipal => "unknown-principal",
            DenyReason::PrincipalDisabled => "principal-disabled",
            DenyReason::Expired => "expired",
        }
    }
}

impl std::fmt::Display for DenyReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Allow {
        username: String,
        tenant: String,
        /// The principal was created by this call.
        created: bool,
    },
    Deny {
        reason: DenyReason,
    },
}

impl Decision {
    pub fn is_allowed(&self) -> bool {
        matches!(self, Decision::Allow { .. })
    }

    pub fn tenant(&self) -> Option<&str> {
        match self {
            Decision::Allow { tenant, .. } => Some(tenant),
            Decision::Deny { .. } => None,
        }
    }

    fn deny(reason: DenyReason) -> Self {
        Decision::Deny { reason }
    }
}

/// Persistence for principals. `get_or_create` must be atomic: concurrent
/// identical calls leave exactly one principal behind.
pub trait PrincipalStore {
    fn get(&self, username: &str, tenant: &str) -> Result<Option<Principal>, IdentityError>;

    /// Returns the stored principal and whether it was created by this call.
    fn get_or_create(&self, principal: Principal) -> Result<(Principal, bool), IdentityError>;

    fn list(&self) -> Result<Vec<Principal>, IdentityError>;
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    principals: Mutex<Vec<Principal>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_principals(principals: Vec<Principal>) -> Self {
        MemoryStore {
            principals: Mutex::new(principals),
        }
    }
}

impl PrincipalStore for MemoryStore {
    fn get(&self, username: &str, tenant: &str) -> Result<Option<Principal>, IdentityError> {
        let guard = self.principals.lock().expect("store lock poisoned");
        Ok(guard
            .iter()
            .find(|p| p.username == username && p.tenant == tenant)
            .cloned())
    }

    fn get_or_create(&self, principal: Principal) -> Result<(Principal, bool), IdentityError> {
        let mut guard = self.principals.lock().expect("store lock poisoned");
        if let Some(existing) = guard
            .iter()
            .find(|p| p.username == principal.username && p.tenant == principal.tenant)
        {
            return Ok((existing.clone(), false));
        }
        guard.push(principal.clone());
        Ok((principal, true))
    }

    fn list(&self) -> Result<Vec<Principal>, IdentityError> {
        Ok(self.principals.lock().expect("store lock poisoned").clone())
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct StoreDocument {
    #[serde(default)]
    principals: Vec<Principal>,
}

/// A JSON file `{"principals": [...]}`. Writes go to a temporary file that
/// replaces the store atomically; a sibling `.lock` file serializes writers
/// across processes.
#[derive(Debug, Clone)]
pub struct JsonFileStore {
    path: PathBuf,
}

impl JsonFileStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        JsonFileStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn err(&self, message: impl ToString) -> IdentityError {
        IdentityError::Store {
            path: self.path.clone(),
            message: message.to_string(),
        }
    }

    fn read(&self) -> Result<StoreDocument, IdentityError> {
        match fs::read_to_string(&self.path) {
            Ok(text) if text.trim().is_empty() => Ok(StoreDocument::default()),
            Ok(text) => serde_json::from_str(&text).map_err(|e| self.err(e)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(StoreDocument::default()),
            Err(e) => Err(self.err(e)),
        }
    }

    fn write(&self, doc: &StoreDocument) -> Result<(), IdentityError> {
        let dir = self
            .path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| self.err(e))?;
        let text = serde_json::to_string_pretty(doc).map_err(|e| self.err(e))?;
        tmp.write_all(text.as_bytes()).map_err(|e| self.err(e))?;
        tmp.as_file().sync_all().map_err(|e| self.err(e))?;
        tmp.persist(&self.path).map_err(|e| self.err(e.error))?;
        Ok(())
    }

    fn lock(&self) -> Result<File, IdentityError> {
        let mut lock_path = self.path.as_os_str().to_owned();
        lock_path.push(".lock");
        let file = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(PathBuf::from(lock_path))
            .map_err(|e| self.err(e))?;
        file.lock().map_err(|e| self.err(e))?;
        Ok(file)
    }
}

impl PrincipalStore for JsonFileStore {
    fn get(&self, username: &str, tenant: &str) -> Result<Option<Principal>, IdentityError> {
        Ok(self
            .read()?
            .principals
            .into_iter()
            .find(|p| p.username == username && p.tenant == tenant))
    }

    fn get_or_create(&self, principal: Principal) -> Result<(Principal, bool), IdentityError> {
        let _guard = self.lock()?;
        let mut doc = self.read()?;
        if let Some(existing) = doc
            .principals
            .iter()
            .find(|p| p.username == principal.username && p.tenant == principal.tenant)
        {
            return Ok((existing.clone(), false));
        }
        doc.principals.push(principal.clone());
        self.write(&doc)?;
        Ok((principal, true))
    }

    fn list(&self) -> Result<Vec<Principal>, IdentityError> {
        Ok(self.read()?.principals)
    }
}

fn grant(
    store: &dyn PrincipalStore,
    username: &str,
    tenant: &str,
    auto_create: bool,
) -> Result<Decision, IdentityError> {
    let (principal, created) = match store.get(username, tenant)? {
        Some(existing) => (existing, false),
        None if auto_create => store.get_or_create(Principal {
            username: username.to_string(),
            tenant: tenant.to_string(),
            enabled: true,
            created_by: CreatedBy::Auto,
        })?,
        None => return Ok(Decision::deny(DenyReason::UnknownPrincipal)),
    };
    if !principal.enabled {
        return Ok(Decision::deny(DenyReason::PrincipalDisabled));
    }
    Ok(Decision::Allow {
        username: principal.username,
        tenant: principal.tenant,
        created,
    })
}

/// Maps a VO assertion to a tenant. The subject DN is the username.
pub fn map_assertion(
    mapping: &CompiledMapping,
    store: &dyn PrincipalStore,
    assertion: &Assertion,
    now: Timestamp,
) -> Result<Decision, IdentityError> {
    assertion.validate()?;
    if !assertion.is_valid_at(now) {
        return Ok(Decision::deny(DenyReason::Expired));
    }
    let Some(vo) = assertion.vo.as_deref() else {
        return Ok(Decision::deny(DenyReason::VoNotAllowed));
    };
    let Some(rule) = mapping.vo_rules.iter().find(|r| r.vo == vo) else {
        return Ok(Decision::deny(DenyReason::VoNotAllowed));
    };
    grant(store, &assertion.subject_dn, &rule.tenant, rule.auto_create)
}

/// Maps an already authenticated username to a tenant. A rule must match the
/// whole username.
pub fn map_username(
    mapping: &CompiledMapping,
    store: &dyn PrincipalStore,
    username: &str,
) -> Result<Decision, IdentityError> {
    let Some((_, rule)) = mapping.user_rules.iter().find(|(re, _)| re.is_match(username)) else {
        return Ok(Decision::deny(DenyReason::UserNotAllowed));
    };
    grant(store, username, &rule.tenant, rule.auto_create)
}

const TOKEN_VERSION: &str = "v1";

type HmacSha256 = Hmac<Sha256>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub subject: String,
    pub tenant: String,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
    pub signature: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    Malformed,
    Signature,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verification {
    Valid(Token),
    Invalid(InvalidReason),
}

impl Verification {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verification::Valid(_))
    }
}

/// Length-prefixed canonical form of the signed fields.
fn canonical_payload(subject: &str, tenant: &str, issued_at: Timestamp, expires_at: Timestamp) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + subject.len() + tenant.len());
    out.extend_from_slice(&(subject.len() as u32).to_be_bytes());
    out.extend_from_slice(subject.as_bytes());
    out.extend_from_slice(&(tenant.len() as u32).to_be_bytes());
    out.extend_from_slice(tenant.as_bytes());
    out.extend_from_slice(&issued_at.to_be_bytes());
    out.extend_from_slice(&expires_at.to_be_bytes());
    out
}

fn parse_payload(bytes: &[u8]) -> Option<(String, String, Timestamp, Timestamp)> {
    fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Option<&'a [u8]> {
        if bytes.len() < n {
            return None;
        }
        let (head, tail) = bytes.split_at(n);
        *bytes = tail;
        Some(head)
    }
    fn string(bytes: &mut &[u8]) -> Option<String> {
        let len = u32::from_be_bytes(take(bytes, 4)?.try_into().ok()?) as usize;
        String::from_utf8(take(bytes, len)?.to_vec()).ok()
    }
    let mut rest = bytes;
    let subject = string(&mut rest)?;
    let tenant = string(&mut rest)?;
    let issued = i64::from_be_bytes(take(&mut rest, 8)?.try_into().ok()?);
    let expires = i64::from_be_bytes(take(&mut rest, 8)?.try_into().ok()?);
    rest.is_empty().then_some((subject, tenant, issued, expires))
}

fn mac(key: &[u8], payload: &[u8]) -> HmacSha256 {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(TOKEN_VERSION.as_bytes());
    mac.update(b".");
    mac.update(payload);
    mac
}

impl Token {
    pub fn encode(&self) -> String {
        let payload = canonical_payload(&self.subject, &self.tenant, self.issued_at, self.expires_at);
        format!(
            "{TOKEN_VERSION}.{}.{}",
            URL_SAFE_NO_PAD.encode(payload),
            URL_SAFE_NO_PAD.encode(&self.signature)
        )
    }

    pub fn decode(text: &str) -> Option<Token> {
        let mut parts = text.split('.');
        let (version, payload, signature) = (parts.next()?, parts.next()?, parts.next()?);
        if version != TOKEN_VERSION || parts.next().is_some() {
            return None;
        }
        let payload = URL_SAFE_NO_PAD.decode(payload).ok()?;
        let signature = URL_SAFE_NO_PAD.decode(signature).ok()?;
        let (subject, tenant, issued_at, expires_at) = parse_payload(&payload)?;
        Some(Token {
            subject,
            tenant,
            issued_at,
            expires_at,
            signature,
        })
    }
}

pub fn issue_token(
    key: &[u8],
    subject: &str,
    tenant: &str,
    issued_at: Timestamp,
    lifetime_s: i64,
) -> Result<Token, IdentityError> {
    if lifetime_s <= 0 {
        return Err(IdentityError::Lifetime);
    }
    let expires_at = issued_at.checked_add(lifetime_s).ok_or(IdentityError::Lifetime)?;
    let payload = canonical_payload(subject, tenant, issued_at, expires_at);
    Ok(Token {
        subject: subject.to_string(),
        tenant: tenant.to_string(),
        issued_at,
        expires_at,
        signature: mac(key, &payload).finalize().into_bytes().to_vec(),
    })
}

/// Checks the encoding, then the signature, then expiry.
pub fn verify_token(key: &[u8], encoded: &str, now: Timestamp) -> Verification {
    let Some(token) = Token::decode(encoded) else {
        return Verification::Invalid(InvalidReason::Malformed);
    };
    let payload = canonical_payload(&token.subject, &token.tenant, token.issued_at, token.expires_at);
    if mac(key, &payload).verify_slice(&token.signature).is_err() {
        return Verification::Invalid(InvalidReason::Signature);
    }
    if now >= token.expires_at {
        return Verification::Invalid(InvalidReason::Expired);
    }
    Verification::Valid(token)
}
