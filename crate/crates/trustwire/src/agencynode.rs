//! An agency's runtime state: information store, duplicate snapshots, pending
//! exchanges, user accounts, and the inbound-request agent.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::digest::{md5_digest, Digest};
use crate::handshake::{
    build_source_request, build_target_response, validate_source_request,
    validate_target_response, HandshakeError, PendingState, QueryKind, QueryPayload,
    SharedInfo, SourceRequest, TargetResponse,
};
use crate::keyfabric::{pk_recover, AgencyId, KeyPair, KeyRegistry};
use crate::trustplane::{trust_filter, TrustPlane, TrustRecord};
use crate::wirecodec::{decode_fields, FieldTag};

/// Trust tier applied to general users when a node does not configure one.
pub const DEFAULT_USER_TIER: f64 = 0.2;

/// Pseudo-agency id that seeds the disclosure order for general-user queries.
pub const PUBLIC_TIER_ID: &str = "PUBLIC";

const PASSWORD_LEN: usize = 12;
const PASSWORD_ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgencyError {
    #[error("user {0:?} already registered")]
    DuplicateUser(String),
    #[error("bad user id: {0}")]
    BadUserId(String),
    #[error("credentials rejected")]
    Auth,
    #[error("info record for {0:?} needs at least one item")]
    EmptyRecord(String),
    #[error("info record for {0:?} already present")]
    DuplicateRecord(String),
}

/// What an agency has filed under one subject code.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InfoRecord {
    pub items: Vec<String>,
    pub activities: Vec<String>,
}

impl InfoRecord {
    pub fn list_for(&self, kind: QueryKind) -> &[String] {
        match kind {
            QueryKind::InfoItems => &self.items,
            QueryKind::Activities => &self.activities,
        }
    }
}

/// The master information store: subject code to record, codes unique.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InfoStore {
    records: BTreeMap<String, InfoRecord>,
}

impl InfoStore {
    pub fn new() -> InfoStore {
        InfoStore::default()
    }

    pub fn insert(&mut self, code: &str, record: InfoRecord) -> Result<(), AgencyError> {
        if record.items.is_empty() {
            return Err(AgencyError::EmptyRecord(code.into()));
        }
        if self.records.contains_key(code) {
            return Err(AgencyError::DuplicateRecord(code.into()));
        }
        self.records.insert(code.into(), record);
        Ok(())
    }

    pub fn get(&self, code: &str) -> Option<&InfoRecord> {
        self.records.get(code)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &InfoRecord)> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Deterministic serialization of the whole store, for change detection.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let push_str = |out: &mut Vec<u8>, text: &str| {
            out.extend_from_slice(&(text.len() as u32).to_be_bytes());
            out.extend_from_slice(text.as_bytes());
        };
        let push_list = |out: &mut Vec<u8>, list: &[String]| {
            out.extend_from_slice(&(list.len() as u32).to_be_bytes());
            for entry in list {
                push_str(out, entry);
            }
        };
        out.extend_from_slice(&(self.records.len() as u32).to_be_bytes());
        for (code, record) in &self.records {
            push_str(&mut out, code);
            push_list(&mut out, &record.items);
            push_list(&mut out, &record.activities);
        }
        out
    }

    pub fn digest(&self) -> Digest {
        md5_digest(&self.canonical_bytes())
    }
}

/// Pre-filtered per-peer snapshots of the master store.
///
/// The response path recomputes the same filtered lists deterministically; the
/// snapshots exist so an operator can inspect in advance exactly what each peer
/// may receive, and so tests can pin the served-subset invariant.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DuplicateStore {
    snapshots: BTreeMap<(AgencyId, String), InfoRecord>,
}

impl DuplicateStore {
    pub fn new() -> DuplicateStore {
        DuplicateStore::default()
    }

    /// Recompute every snapshot from the master store and the trust records
    /// naming `owner` as target.
    pub fn rebuild(&mut self, owner: &AgencyId, master: &InfoStore, plane: &TrustPlane) {
        self.snapshots.clear();
        for record in plane.iter().filter(|r| &r.target == owner) {
            for (code, info) in master.iter() {
                let level = record.level_for(code);
                let filtered = InfoRecord {
                    items: trust_filter(&info.items, level, &record.source, owner, code).items,
                    activities: trust_filter(&info.activities, level, &record.source, owner, code)
                        .items,
                };
                self.snapshots.insert((record.source.clone(), code.clone()), filtered);
            }
        }
    }

    pub fn get(&self, peer: &AgencyId, code: &str) -> Option<&InfoRecord> {
        self.snapshots.get(&(peer.clone(), code.to_string()))
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Every snapshot entry must trace back to the master store.
    pub fn is_consistent_with(&self, master: &InfoStore) -> bool {
        self.snapshots.iter().all(|((_, code), filtered)| {
            master.get(code).is_some_and(|info| {
                filtered.items.iter().all(|i| info.items.contains(i))
                    && filtered.activities.iter().all(|a| info.activities.contains(a))
            })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccountStatus {
    Pending,
    Active,
}

/// A registered general user. Only the salted digest of the password is kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserAccount {
    pub user_id: String,
    salt: [u8; 16],
    credential: Digest,
    pub status: AccountStatus,
}

impl UserAccount {
    fn credential_digest(salt: &[u8; 16], password: &str) -> Digest {
        let mut preimage = salt.to_vec();
        preimage.extend_from_slice(password.as_bytes());
        md5_digest(&preimage)
    }

    fn matches(&self, password: &str) -> bool {
        self.status == AccountStatus::Active
            && UserAccount::credential_digest(&self.salt, password) == self.credential
    }
}

/// One agency: keys, trust records, stores, accounts, and the exchange agent.
pub struct AgencyNode {
    id: AgencyId,
    keys: KeyPair,
    registry: Arc<KeyRegistry>,
    plane: TrustPlane,
    store: InfoStore,
    duplicates: DuplicateStore,
    users: BTreeMap<String, UserAccount>,
    pending: BTreeMap<Digest, PendingState>,
    audit: Vec<String>,
    rng: ChaCha8Rng,
    clock: u64,
    user_tier: f64,
}

impl AgencyNode {
    pub fn new(id: AgencyId, keys: KeyPair, registry: Arc<KeyRegistry>, rng_seed: u64) -> AgencyNode {
        AgencyNode {
            id,
            keys,
            registry,
            plane: TrustPlane::new(),
            store: InfoStore::new(),
            duplicates: DuplicateStore::new(),
            users: BTreeMap::new(),
            pending: BTreeMap::new(),
            audit: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            clock: 0,
            user_tier: DEFAULT_USER_TIER,
        }
    }

    pub fn id(&self) -> &AgencyId {
        &self.id
    }

    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }

    pub fn registry(&self) -> &KeyRegistry {
        &self.registry
    }

    pub fn plane(&self) -> &TrustPlane {
        &self.plane
    }

    pub fn store(&self) -> &InfoStore {
        &self.store
    }

    pub fn duplicates(&self) -> &DuplicateStore {
        &self.duplicates
    }

    pub fn audit_log(&self) -> &[String] {
        &self.audit
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn user_tier(&self) -> f64 {
        self.user_tier
    }

    pub fn set_user_tier(&mut self, tier: f64) {
        self.user_tier = tier;
    }

    pub fn add_trust(&mut self, record: TrustRecord) -> Result<(), HandshakeError> {
        self.plane.insert(record)?;
        Ok(())
    }

    pub fn add_info(&mut self, code: &str, record: InfoRecord) -> Result<(), AgencyError> {
        self.store.insert(code, record)
    }

    /// Refresh the per-peer duplicate snapshots after store or trust changes.
    pub fn rebuild_duplicates(&mut self) {
        self.duplicates.rebuild(&self.id, &self.store, &self.plane);
    }

    /// Open a new exchange toward `target`. The random-set length follows the
    /// pair's mapping arity. Returns the wire request and the digest that later
    /// correlates the response.
    pub fn begin_exchange(
        &mut self,
        target: &AgencyId,
        payload: QueryPayload,
        seed: u64,
    ) -> Result<(SourceRequest, Digest), HandshakeError> {
        let arity = self.plane.mapping_for(&self.id, target)?.arity();
        let target_public = self
            .registry
            .lookup(target)
            .map_err(|_| HandshakeError::UnknownAgency(target.to_string()))?;
        let (request, pending) = build_source_request(
            &self.id,
            target,
            payload,
            &self.keys,
            target_public,
            arity,
            seed,
        )?;
        let digest = request.digest();
        self.pending.insert(digest, pending);
        Ok((request, digest))
    }

    /// The inbound agent: validate a request and answer it from the local store.
    /// Failures produce one audit line and no wire reply.
    pub fn handle_incoming(&mut self, request_bytes: &[u8]) -> Result<TargetResponse, HandshakeError> {
        self.clock += 1;
        let request = SourceRequest::from_bytes(request_bytes.to_vec());
        let digest = request.digest();
        let validated = match validate_source_request(&request, &self.keys, &self.registry) {
            Ok(validated) => validated,
            Err(err) => {
                let peer = self.peek_peer(request.as_bytes());
                self.record_audit(&peer, err.error_class(), &digest);
                return Err(err);
            }
        };
        let items = self
            .store
            .get(validated.payload.subject_code())
            .map(|record| record.list_for(validated.payload.kind));
        match build_target_response(&validated, &self.id, &self.plane, items, &self.registry) {
            Ok(response) => Ok(response),
            Err(err) => {
                let peer = validated.source.to_string();
                self.record_audit(&peer, err.error_class(), &digest);
                Err(err)
            }
        }
    }

    /// Check a response against the pending request it should answer. The
    /// pending entry is consumed only on success.
    pub fn complete_exchange(
        &mut self,
        request_digest: &Digest,
        response: &TargetResponse,
    ) -> Result<SharedInfo, HandshakeError> {
        self.clock += 1;
        let pending = match self.pending.get(request_digest) {
            Some(pending) => pending.clone(),
            None => {
                self.record_audit("?", "request-correlation", request_digest);
                return Err(HandshakeError::RequestCorrelation);
            }
        };
        let mapping = self.plane.mapping_for(&self.id, &pending.target)?.clone();
        match validate_target_response(response, &pending, &self.keys, &mapping) {
            Ok(shared) => {
                self.pending.remove(request_digest);
                Ok(shared)
            }
            Err(err) => {
                let peer = pending.target.to_string();
                self.record_audit(&peer, err.error_class(), request_digest);
                Err(err)
            }
        }
    }

    /// Register a general user and hand back the one-time password.
    pub fn register_user(&mut self, user_id: &str) -> Result<String, AgencyError> {
        if user_id.is_empty()
            || user_id.len() > 64
            || !user_id.bytes().all(|b| b.is_ascii_graphic())
        {
            return Err(AgencyError::BadUserId(format!(
                "{user_id:?} must be 1..=64 printable ASCII bytes without spaces"
            )));
        }
        if self.users.contains_key(user_id) {
            return Err(AgencyError::DuplicateUser(user_id.into()));
        }
        let password: String = (0..PASSWORD_LEN)
            .map(|_| PASSWORD_ALPHABET[self.rng.gen_range(0..PASSWORD_ALPHABET.len())] as char)
            .collect();
        let mut salt = [0u8; 16];
        self.rng.fill(&mut salt);
        let mut account = UserAccount {
            user_id: user_id.into(),
            salt,
            credential: UserAccount::credential_digest(&salt, &password),
            status: AccountStatus::Pending,
        };
        account.status = AccountStatus::Active;
        self.users.insert(user_id.into(), account);
        Ok(password)
    }

    /// Constant shape for unknown users and wrong passwords alike.
    pub fn verify_password(&self, user_id: &str, password: &str) -> bool {
        self.users.get(user_id).is_some_and(|account| account.matches(password))
    }

    /// Read-only general-user query at the configured public tier.
    pub fn user_query(
        &self,
        user_id: &str,
        password: &str,
        code: &str,
        kind: QueryKind,
    ) -> Result<Vec<String>, AgencyError> {
        if !self.verify_password(user_id, password) {
            return Err(AgencyError::Auth);
        }
        let Some(record) = self.store.get(code) else {
            return Ok(Vec::new());
        };
        let public = AgencyId::new(PUBLIC_TIER_ID).expect("constant id is valid");
        Ok(trust_filter(record.list_for(kind), self.user_tier, &public, &self.id, code).items)
    }

    fn record_audit(&mut self, peer: &str, class: &str, digest: &Digest) {
        self.audit.push(format!("{} | {} | {} | {}", self.clock, peer, class, digest.to_hex()));
    }

    /// Best-effort sender extraction for audit lines on failed requests.
    fn peek_peer(&self, request_bytes: &[u8]) -> String {
        let Ok(envelope) = pk_recover(&self.keys.private, request_bytes) else {
            return "?".into();
        };
        let Ok(fields) = decode_fields(&envelope) else {
            return "?".into();
        };
        fields
            .iter()
            .find(|(tag, _)| *tag == FieldTag::AgencyId)
            .and_then(|(_, bytes)| std::str::from_utf8(bytes).ok())
            .map(str::to_string)
            .unwrap_or_else(|| "?".into())
    }
}
