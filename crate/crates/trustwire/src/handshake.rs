//! The three-phase exchange: source request, target validation and response,
//! source-side response validation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::digest::{md5_digest, Digest};
use crate::keyfabric::{pk_recover, pk_transform, AgencyId, KeyPair, KeyRegistry, PublicKey};
use crate::trustplane::{eval_mapping, trust_filter, MappingFunction, TrustError, TrustPlane};
pub use crate::trustplane::SharedInfo;
use crate::wirecodec::{decode_fields, encode_fields, FieldTag, MappingValue, RandomSet};

/// Upper bound on generated random-set operands. Operands this small stay exact
/// in binary64 through every operator mix the scenario generator emits, so a
/// single flipped operand bit always moves the fold to a different bit pattern.
pub const RANDOM_SET_VALUE_MAX: u64 = 1023;

/// Longest accepted subject code, in bytes.
pub const SUBJECT_CODE_MAX_LEN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HandshakeError {
    #[error("exchange bytes malformed: {0}")]
    Decode(String),
    #[error("agency {0:?} not registered")]
    UnknownAgency(String),
    #[error("sender authentication failed: {0}")]
    Authentication(String),
    #[error("integrity digest mismatch")]
    Integrity,
    #[error("mapping value mismatch, peer does not hold the pair secret")]
    AgencyVerification,
    #[error("response does not correlate with the outstanding request")]
    RequestCorrelation,
    #[error("no trust record for source {requester} at target {holder}")]
    NoTrustRecord { requester: String, holder: String },
    #[error("mapping function wants {expected} operands, random set holds {got}")]
    Arity { expected: usize, got: usize },
    #[error("bad subject code: {0}")]
    SubjectCode(String),
}

impl HandshakeError {
    /// Stable machine-readable class name, for audit lines and fault checks.
    pub fn error_class(&self) -> &'static str {
        match self {
            HandshakeError::Decode(_) => "decode",
            HandshakeError::UnknownAgency(_) => "unknown-agency",
            HandshakeError::Authentication(_) => "authentication",
            HandshakeError::Integrity => "integrity",
            HandshakeError::AgencyVerification => "agency-verification",
            HandshakeError::RequestCorrelation => "request-correlation",
            HandshakeError::NoTrustRecord { .. } => "no-trust-record",
            HandshakeError::Arity { .. } => "arity",
            HandshakeError::SubjectCode(_) => "subject-code",
        }
    }
}

impl From<TrustError> for HandshakeError {
    fn from(err: TrustError) -> HandshakeError {
        match err {
            TrustError::Arity { expected, got } => HandshakeError::Arity { expected, got },
            TrustError::NoTrustRecord { requester, holder } => HandshakeError::NoTrustRecord {
                requester: requester.to_string(),
                holder: holder.to_string(),
            },
            other => HandshakeError::Decode(other.to_string()),
        }
    }
}

/// What the requester wants about a subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryKind {
    InfoItems,
    Activities,
}

impl QueryKind {
    fn to_byte(self) -> u8 {
        match self {
            QueryKind::InfoItems => 0x01,
            QueryKind::Activities => 0x02,
        }
    }

    fn from_byte(byte: u8) -> Option<QueryKind> {
        match byte {
            0x01 => Some(QueryKind::InfoItems),
            0x02 => Some(QueryKind::Activities),
            _ => None,
        }
    }
}

/// The question inside a request: a subject code plus the kind of material wanted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryPayload {
    subject_code: String,
    pub kind: QueryKind,
}

impl QueryPayload {
    pub fn new(subject_code: &str, kind: QueryKind) -> Result<QueryPayload, HandshakeError> {
        if subject_code.is_empty() {
            return Err(HandshakeError::SubjectCode("subject code is empty".into()));
        }
        if subject_code.len() > SUBJECT_CODE_MAX_LEN {
            return Err(HandshakeError::SubjectCode(format!(
                "subject code is {} bytes, limit is {SUBJECT_CODE_MAX_LEN}",
                subject_code.len()
            )));
        }
        if !subject_code.bytes().all(|b| b.is_ascii_graphic()) {
            return Err(HandshakeError::SubjectCode(format!(
                "subject code {subject_code:?} holds non-printable or non-ASCII bytes"
            )));
        }
        Ok(QueryPayload { subject_code: subject_code.into(), kind })
    }

    pub fn subject_code(&self) -> &str {
        &self.subject_code
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.kind.to_byte()];
        out.extend_from_slice(self.subject_code.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<QueryPayload, HandshakeError> {
        let (&kind_byte, code) = bytes
            .split_first()
            .ok_or_else(|| HandshakeError::SubjectCode("empty query payload".into()))?;
        let kind = QueryKind::from_byte(kind_byte)
            .ok_or_else(|| HandshakeError::SubjectCode(format!("unknown query kind {kind_byte:#04x}")))?;
        let code = std::str::from_utf8(code)
            .map_err(|_| HandshakeError::SubjectCode("subject code is not UTF-8".into()))?;
        QueryPayload::new(code, kind)
    }
}

/// Encrypted request bytes as they travel to the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRequest(Vec<u8>);

impl SourceRequest {
    pub fn from_bytes(bytes: Vec<u8>) -> SourceRequest {
        SourceRequest(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    /// Digest of the ciphertext, used to correlate the later response.
    pub fn digest(&self) -> Digest {
        md5_digest(&self.0)
    }
}

/// Encrypted response bytes as they travel back to the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetResponse(Vec<u8>);

impl TargetResponse {
    pub fn from_bytes(bytes: Vec<u8>) -> TargetResponse {
        TargetResponse(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

/// Everything the source must remember between sending a request and checking
/// the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingState {
    pub nonce: u64,
    pub nonce_ciphertext: Vec<u8>,
    pub random_set: RandomSet,
    pub payload: QueryPayload,
    pub target: AgencyId,
}

/// A request the target has fully checked and unpacked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedRequest {
    pub source: AgencyId,
    pub nonce_ciphertext: Vec<u8>,
    pub random_set: RandomSet,
    pub payload: QueryPayload,
}

fn decode_err(err: impl std::fmt::Display) -> HandshakeError {
    HandshakeError::Decode(err.to_string())
}

fn auth_err(err: impl std::fmt::Display) -> HandshakeError {
    HandshakeError::Authentication(err.to_string())
}

/// Build one outgoing request.
///
/// The nonce challenge is sealed under the source's own public key so only the
/// source can later prove the response answers this request. The random set,
/// query, and a digest binding them to the envelope travel inside a blob sealed
/// under the source's private key; the whole envelope is sealed under the
/// target's public key.
pub fn build_source_request(
    source: &AgencyId,
    target: &AgencyId,
    payload: QueryPayload,
    source_keys: &KeyPair,
    target_public: &PublicKey,
    random_set_len: usize,
    seed: u64,
) -> Result<(SourceRequest, PendingState), HandshakeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nonce: u64 = rng.gen();
    let nonce_ciphertext =
        pk_transform(&source_keys.public, &nonce.to_be_bytes()).map_err(decode_err)?;

    let values = (0..random_set_len).map(|_| rng.gen_range(1..=RANDOM_SET_VALUE_MAX)).collect();
    let random_set = RandomSet::new(values).map_err(decode_err)?;

    let payload_bytes = payload.to_bytes();
    let envelope_digest = md5_digest(&encode_fields(&[
        (FieldTag::NonceCiphertext, &nonce_ciphertext),
        (FieldTag::AgencyId, source.as_bytes()),
        (FieldTag::RandomSet, &random_set.to_bytes()),
        (FieldTag::RequestPayload, &payload_bytes),
    ]));

    let signed_plain = encode_fields(&[
        (FieldTag::RandomSet, &random_set.to_bytes()),
        (FieldTag::RequestPayload, &payload_bytes),
        (FieldTag::Digest, envelope_digest.as_bytes()),
    ]);
    let signed_blob = pk_transform(&source_keys.private, &signed_plain).map_err(decode_err)?;

    let envelope = encode_fields(&[
        (FieldTag::NonceCiphertext, &nonce_ciphertext),
        (FieldTag::AgencyId, source.as_bytes()),
        (FieldTag::SignedBlob, &signed_blob),
    ]);
    let request = pk_transform(target_public, &envelope).map_err(decode_err)?;

    Ok((
        SourceRequest(request),
        PendingState { nonce, nonce_ciphertext, random_set, payload, target: target.clone() },
    ))
}

fn expect_tags(
    fields: &[(FieldTag, Vec<u8>)],
    expected: &[FieldTag],
) -> Result<(), String> {
    let got: Vec<FieldTag> = fields.iter().map(|(tag, _)| *tag).collect();
    if got != expected {
        return Err(format!("expected fields {expected:?}, got {got:?}"));
    }
    Ok(())
}

/// Unpack and check one incoming request at the target.
///
/// The envelope must open under the target's private key, the inner blob under
/// the claimed sender's registered public key, and the digest inside the blob
/// must match a digest recomputed over the envelope parts. The digest spans
/// fields from both layers, so neither layer can be swapped out alone.
pub fn validate_source_request(
    request: &SourceRequest,
    target_keys: &KeyPair,
    registry: &KeyRegistry,
) -> Result<ValidatedRequest, HandshakeError> {
    let envelope = pk_recover(&target_keys.private, &request.0).map_err(decode_err)?;
    let fields = decode_fields(&envelope).map_err(decode_err)?;
    expect_tags(&fields, &[FieldTag::NonceCiphertext, FieldTag::AgencyId, FieldTag::SignedBlob])
        .map_err(HandshakeError::Decode)?;
    let nonce_ciphertext = fields[0].1.clone();
    let source_text = std::str::from_utf8(&fields[1].1).map_err(decode_err)?;
    let source = AgencyId::new(source_text).map_err(decode_err)?;
    let signed_blob = &fields[2].1;

    let source_public = registry
        .lookup(&source)
        .map_err(|_| HandshakeError::UnknownAgency(source.to_string()))?;
    let signed_plain = pk_recover(source_public, signed_blob).map_err(auth_err)?;
    let inner = decode_fields(&signed_plain).map_err(auth_err)?;
    expect_tags(&inner, &[FieldTag::RandomSet, FieldTag::RequestPayload, FieldTag::Digest])
        .map_err(HandshakeError::Authentication)?;
    let random_set_bytes = &inner[0].1;
    let payload_bytes = &inner[1].1;
    let claimed_digest = Digest::from_slice(&inner[2].1)
        .ok_or_else(|| HandshakeError::Authentication("digest field has wrong length".into()))?;

    let expected_digest = md5_digest(&encode_fields(&[
        (FieldTag::NonceCiphertext, &nonce_ciphertext),
        (FieldTag::AgencyId, source.as_bytes()),
        (FieldTag::RandomSet, random_set_bytes),
        (FieldTag::RequestPayload, payload_bytes),
    ]));
    if claimed_digest != expected_digest {
        return Err(HandshakeError::Integrity);
    }

    let random_set = RandomSet::from_bytes(random_set_bytes).map_err(auth_err)?;
    let payload = QueryPayload::from_bytes(payload_bytes)?;

    Ok(ValidatedRequest { source, nonce_ciphertext, random_set, payload })
}

/// Build the reply to a validated request.
///
/// The reply proves the target holds the pair's mapping secret by echoing the
/// sine of the folded random set, echoes the nonce ciphertext, and carries the
/// trust-filtered items (`None` when the target has nothing filed under the
/// subject). The whole reply is sealed under the source's public key.
pub fn build_target_response(
    request: &ValidatedRequest,
    target: &AgencyId,
    plane: &TrustPlane,
    items: Option<&[String]>,
    registry: &KeyRegistry,
) -> Result<TargetResponse, HandshakeError> {
    let subject = request.payload.subject_code();
    let (trust_level, mapping) = plane.lookup_trust(&request.source, target, subject)?;
    let mapping_value = eval_mapping(mapping, &request.random_set)?;

    let shared = match items {
        Some(items) => trust_filter(items, trust_level, &request.source, target, subject),
        None => SharedInfo::empty(trust_level),
    };
    let shared_bytes = shared.to_bytes();

    let body_digest = md5_digest(&encode_fields(&[
        (FieldTag::NonceCiphertext, &request.nonce_ciphertext),
        (FieldTag::MappingValue, &mapping_value.to_bytes()),
        (FieldTag::ResponsePayload, &shared_bytes),
    ]));
    let plain = encode_fields(&[
        (FieldTag::NonceCiphertext, &request.nonce_ciphertext),
        (FieldTag::MappingValue, &mapping_value.to_bytes()),
        (FieldTag::ResponsePayload, &shared_bytes),
        (FieldTag::Digest, body_digest.as_bytes()),
    ]);

    let source_public = registry
        .lookup(&request.source)
        .map_err(|_| HandshakeError::UnknownAgency(request.source.to_string()))?;
    Ok(TargetResponse(pk_transform(source_public, &plain).map_err(decode_err)?))
}

/// Check a response against the pending request it should answer.
///
/// Checks run digest first, then the mapping value (bit-for-bit), then the
/// nonce: the echoed ciphertext must open under the source's private key to the
/// nonce issued for this request.
pub fn validate_target_response(
    response: &TargetResponse,
    pending: &PendingState,
    source_keys: &KeyPair,
    mapping: &MappingFunction,
) -> Result<SharedInfo, HandshakeError> {
    let plain = pk_recover(&source_keys.private, &response.0).map_err(decode_err)?;
    let fields = decode_fields(&plain).map_err(decode_err)?;
    expect_tags(
        &fields,
        &[FieldTag::NonceCiphertext, FieldTag::MappingValue, FieldTag::ResponsePayload, FieldTag::Digest],
    )
    .map_err(HandshakeError::Decode)?;
    let nonce_ciphertext = &fields[0].1;
    let mapping_bytes = &fields[1].1;
    let shared_bytes = &fields[2].1;
    let claimed_digest = Digest::from_slice(&fields[3].1)
        .ok_or_else(|| HandshakeError::Decode("digest field has wrong length".into()))?;

    let expected_digest = md5_digest(&encode_fields(&[
        (FieldTag::NonceCiphertext, nonce_ciphertext),
        (FieldTag::MappingValue, mapping_bytes),
        (FieldTag::ResponsePayload, shared_bytes),
    ]));
    if claimed_digest != expected_digest {
        return Err(HandshakeError::Integrity);
    }

    let got_value = MappingValue::from_bytes(mapping_bytes).map_err(decode_err)?;
    let expected_value = eval_mapping(mapping, &pending.random_set)?;
    if got_value != expected_value {
        return Err(HandshakeError::AgencyVerification);
    }

    let recovered = pk_recover(&source_keys.private, nonce_ciphertext)
        .map_err(|_| HandshakeError::RequestCorrelation)?;
    if recovered != pending.nonce.to_be_bytes() {
        return Err(HandshakeError::RequestCorrelation);
    }

    SharedInfo::from_bytes(shared_bytes).map_err(decode_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyfabric::generate_keypair;
    use crate::trustplane::TrustRecord;

    fn id(s: &str) -> AgencyId {
        AgencyId::new(s).unwrap()
    }

    struct Rig {
        source: AgencyId,
        target: AgencyId,
        source_keys: KeyPair,
        target_keys: KeyPair,
        registry: KeyRegistry,
        plane: TrustPlane,
        items: Vec<String>,
    }

    fn rig(mapping: &str, trust: f64) -> Rig {
        let source = id("CIA");
        let target = id("FBI");
        let source_keys = generate_keypair(256, 41).unwrap();
        let target_keys = generate_keypair(256, 42).unwrap();
        let mut registry = KeyRegistry::new();
        registry.register(source.clone(), source_keys.public.clone()).unwrap();
        registry.register(target.clone(), target_keys.public.clone()).unwrap();
        let mut plane = TrustPlane::new();
        plane
            .insert(
                TrustRecord::new(
                    source.clone(),
                    target.clone(),
                    trust,
                    MappingFunction::parse(mapping).unwrap(),
                )
                .unwrap(),
            )
            .unwrap();
        let items = (11..=20).map(|i| i.to_string()).collect();
        Rig { source, target, source_keys, target_keys, registry, plane, items }
    }

    fn run_exchange(rig: &Rig, seed: u64) -> (SourceRequest, PendingState, TargetResponse) {
        let payload = QueryPayload::new("98LetT1", QueryKind::InfoItems).unwrap();
        let mapping_len = rig.plane.mapping_for(&rig.source, &rig.target).unwrap().arity();
        let (request, pending) = build_source_request(
            &rig.source,
            &rig.target,
            payload,
            &rig.source_keys,
            &rig.target_keys.public,
            mapping_len,
            seed,
        )
        .unwrap();
        let validated =
            validate_source_request(&request, &rig.target_keys, &rig.registry).unwrap();
        let response = build_target_response(
            &validated,
            &rig.target,
            &rig.plane,
            Some(&rig.items),
            &rig.registry,
        )
        .unwrap();
        (request, pending, response)
    }

    #[test]
    fn full_exchange_shares_trust_graded_subset() {
        let rig = rig("++-", 0.9);
        let (_, pending, response) = run_exchange(&rig, 7);
        let mapping = rig.plane.mapping_for(&rig.source, &rig.target).unwrap();
        let shared =
            validate_target_response(&response, &pending, &rig.source_keys, mapping).unwrap();
        assert_eq!(shared.trust_level_used, 0.9);
        assert_eq!(shared.items.len(), 9);
        for item in &shared.items {
            assert!(rig.items.contains(item));
        }
    }

    #[test]
    fn request_build_is_deterministic_per_seed() {
        let rig = rig("+", 0.5);
        let (a, _, _) = run_exchange(&rig, 3);
        let (b, _, _) = run_exchange(&rig, 3);
        let (c, _, _) = run_exchange(&rig, 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn validated_request_exposes_query() {
        let rig = rig("+*", 0.5);
        let (request, pending, _) = run_exchange(&rig, 9);
        let validated =
            validate_source_request(&request, &rig.target_keys, &rig.registry).unwrap();
        assert_eq!(validated.source, rig.source);
        assert_eq!(validated.payload.subject_code(), "98LetT1");
        assert_eq!(validated.payload.kind, QueryKind::InfoItems);
        assert_eq!(validated.random_set, pending.random_set);
        assert_eq!(validated.random_set.len(), 3);
        assert_eq!(validated.nonce_ciphertext, pending.nonce_ciphertext);
    }

    #[test]
    fn unknown_sender_is_rejected() {
        let rig = rig("+", 0.5);
        let (request, _, _) = run_exchange(&rig, 5);
        let mut registry = KeyRegistry::new();
        registry.register(rig.target.clone(), rig.target_keys.public.clone()).unwrap();
        let err = validate_source_request(&request, &rig.target_keys, &registry).unwrap_err();
        assert_eq!(err.error_class(), "unknown-agency");
    }

    #[test]
    fn wrong_target_key_cannot_open_request() {
        let rig = rig("+", 0.5);
        let (request, _, _) = run_exchange(&rig, 5);
        let other = generate_keypair(256, 99).unwrap();
        let err = validate_source_request(&request, &other, &rig.registry).unwrap_err();
        assert_eq!(err.error_class(), "decode");
    }

    #[test]
    fn forged_signature_fails_authentication() {
        let rig = rig("+", 0.5);
        // An impostor holds its own key pair but claims to be the source.
        let impostor_keys = generate_keypair(256, 77).unwrap();
        let payload = QueryPayload::new("98LetT1", QueryKind::InfoItems).unwrap();
        let (request, _) = build_source_request(
            &rig.source,
            &rig.target,
            payload,
            &impostor_keys,
            &rig.target_keys.public,
            2,
            6,
        )
        .unwrap();
        let err = validate_source_request(&request, &rig.target_keys, &rig.registry).unwrap_err();
        assert_eq!(err.error_class(), "authentication");
    }

    #[test]
    fn missing_trust_record_is_reported() {
        let rig = rig("+", 0.5);
        let (request, _, _) = run_exchange(&rig, 5);
        let validated =
            validate_source_request(&request, &rig.target_keys, &rig.registry).unwrap();
        let err = build_target_response(
            &validated,
            &rig.target,
            &TrustPlane::new(),
            Some(&rig.items),
            &rig.registry,
        )
        .unwrap_err();
        assert_eq!(err.error_class(), "no-trust-record");
    }

    #[test]
    fn random_set_must_match_mapping_arity() {
        let rig = rig("++", 0.5);
        let payload = QueryPayload::new("98LetT1", QueryKind::InfoItems).unwrap();
        let (request, _) = build_source_request(
            &rig.source,
            &rig.target,
            payload,
            &rig.source_keys,
            &rig.target_keys.public,
            5,
            8,
        )
        .unwrap();
        let validated =
            validate_source_request(&request, &rig.target_keys, &rig.registry).unwrap();
        let err = build_target_response(
            &validated,
            &rig.target,
            &rig.plane,
            Some(&rig.items),
            &rig.registry,
        )
        .unwrap_err();
        assert_eq!(err, HandshakeError::Arity { expected: 3, got: 5 });
    }

    #[test]
    fn swapped_response_is_rejected() {
        let rig = rig("+-", 0.7);
        let (_, pending_a, _) = run_exchange(&rig, 21);
        let (_, _, response_b) = run_exchange(&rig, 22);
        let mapping = rig.plane.mapping_for(&rig.source, &rig.target).unwrap();
        let err = validate_target_response(&response_b, &pending_a, &rig.source_keys, mapping)
            .unwrap_err();
        // The stranger's random set trips agency verification; were the sets
        // ever equal, the nonce check would still fail the correlation.
        assert!(
            matches!(
                err,
                HandshakeError::AgencyVerification | HandshakeError::RequestCorrelation
            ),
            "unexpected class {err:?}"
        );
    }

    #[test]
    fn mapping_disagreement_fails_verification() {
        let rig = rig("++", 0.7);
        let (_, pending, response) = run_exchange(&rig, 31);
        let wrong = MappingFunction::parse("+-").unwrap();
        let err =
            validate_target_response(&response, &pending, &rig.source_keys, &wrong).unwrap_err();
        assert_eq!(err, HandshakeError::AgencyVerification);
    }

    #[test]
    fn tampered_request_never_validates() {
        let rig = rig("++", 0.7);
        let (request, _, _) = run_exchange(&rig, 13);
        let bytes = request.as_bytes();
        for index in [0, 1, bytes.len() / 2, bytes.len() - 1] {
            let mut tampered = bytes.to_vec();
            tampered[index] ^= 0xff;
            let tampered = SourceRequest::from_bytes(tampered);
            assert!(
                validate_source_request(&tampered, &rig.target_keys, &rig.registry).is_err(),
                "byte {index} flip was accepted"
            );
        }
    }

    #[test]
    fn tampered_response_never_validates() {
        let rig = rig("++", 0.7);
        let (_, pending, response) = run_exchange(&rig, 14);
        let mapping = rig.plane.mapping_for(&rig.source, &rig.target).unwrap();
        let bytes = response.as_bytes();
        for index in [0, 1, bytes.len() / 2, bytes.len() - 1] {
            let mut tampered = bytes.to_vec();
            tampered[index] ^= 0xff;
            let tampered = TargetResponse::from_bytes(tampered);
            assert!(
                validate_target_response(&tampered, &pending, &rig.source_keys, mapping).is_err(),
                "byte {index} flip was accepted"
            );
        }
    }

    #[test]
    fn empty_store_yields_authenticated_empty_share() {
        let rig = rig("+", 0.6);
        let (_, pending, _) = run_exchange(&rig, 15);
        let (request, _, _) = run_exchange(&rig, 15);
        let validated =
            validate_source_request(&request, &rig.target_keys, &rig.registry).unwrap();
        let response =
            build_target_response(&validated, &rig.target, &rig.plane, None, &rig.registry)
                .unwrap();
        let mapping = rig.plane.mapping_for(&rig.source, &rig.target).unwrap();
        let shared =
            validate_target_response(&response, &pending, &rig.source_keys, mapping).unwrap();
        assert!(shared.items.is_empty());
        assert_eq!(shared.trust_level_used, 0.6);
    }

    #[test]
    fn query_payload_round_trip_and_limits() {
        let payload = QueryPayload::new("06TalT4", QueryKind::Activities).unwrap();
        assert_eq!(QueryPayload::from_bytes(&payload.to_bytes()).unwrap(), payload);
        assert_eq!(payload.to_bytes()[0], 0x02);

        assert!(QueryPayload::new("", QueryKind::InfoItems).is_err());
        assert!(QueryPayload::new(&"x".repeat(33), QueryKind::InfoItems).is_err());
        assert!(QueryPayload::new("has space", QueryKind::InfoItems).is_err());
        assert!(QueryPayload::new(&"x".repeat(32), QueryKind::InfoItems).is_ok());
        assert!(QueryPayload::from_bytes(&[0x03, b'a']).is_err());
        assert!(QueryPayload::from_bytes(&[]).is_err());
    }

    #[test]
    fn request_digest_tracks_bytes() {
        let rig = rig("+", 0.5);
        let (a, _, _) = run_exchange(&rig, 1);
        let (b, _, _) = run_exchange(&rig, 2);
        assert_eq!(a.digest(), md5_digest(a.as_bytes()));
        assert_ne!(a.digest(), b.digest());
    }
}
