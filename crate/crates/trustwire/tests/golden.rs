//! Byte-exact checks against the frozen exchange under `tests/golden/`.
//!
//! The request is rebuilt from the codec, digest, and key primitives alone,
//! without calling the handshake builders, so any drift in the wire layout or
//! in the draw order shows up as a literal byte diff.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trustwire::digest::md5_digest;
use trustwire::handshake::{
    build_source_request, validate_source_request, validate_target_response, QueryKind,
    QueryPayload, SourceRequest, TargetResponse, RANDOM_SET_VALUE_MAX,
};
use trustwire::keyfabric::{generate_keypair, pk_transform, AgencyId, KeyPair, KeyRegistry};
use trustwire::trustplane::{trust_filter, MappingFunction};
use trustwire::wirecodec::{encode_fields, FieldTag};

const GOLDEN_REQUEST: &[u8] = include_bytes!("golden/request.bin");
const GOLDEN_RESPONSE: &[u8] = include_bytes!("golden/response.bin");

const KEY_BITS: u32 = 512;
const CIA_KEY_SEED: u64 = 101;
const FBI_KEY_SEED: u64 = 102;
const REQUEST_SEED: u64 = 7;
const SUBJECT: &str = "98LetT1";
const TRUST: f64 = 0.9;

struct Rig {
    cia: AgencyId,
    fbi: AgencyId,
    cia_keys: KeyPair,
    fbi_keys: KeyPair,
    registry: KeyRegistry,
    mapping: MappingFunction,
    items: Vec<String>,
}

fn rig() -> Rig {
    let cia = AgencyId::new("CIA").unwrap();
    let fbi = AgencyId::new("FBI").unwrap();
    let cia_keys = generate_keypair(KEY_BITS, CIA_KEY_SEED).unwrap();
    let fbi_keys = generate_keypair(KEY_BITS, FBI_KEY_SEED).unwrap();

    let mut registry = KeyRegistry::new();
    registry.register(cia.clone(), cia_keys.public.clone()).unwrap();
    registry.register(fbi.clone(), fbi_keys.public.clone()).unwrap();

    let mapping = MappingFunction::parse("++-").unwrap();
    let items = (11..=20).map(|n| n.to_string()).collect();
    Rig { cia, fbi, cia_keys, fbi_keys, registry, mapping, items }
}

/// Draws the nonce and random set exactly as the request builder does.
fn draws() -> (u64, Vec<u64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(REQUEST_SEED);
    let nonce: u64 = rng.gen();
    let values = (0..4).map(|_| rng.gen_range(1..=RANDOM_SET_VALUE_MAX)).collect();
    (nonce, values)
}

#[test]
fn stored_request_rebuilds_from_primitives() {
    let r = rig();
    let (nonce, values) = draws();

    let nonce_ciphertext = pk_transform(&r.cia_keys.public, &nonce.to_be_bytes()).unwrap();
    let set_bytes: Vec<u8> = values.iter().flat_map(|v| v.to_be_bytes()).collect();
    let mut payload_bytes = vec![0x01];
    payload_bytes.extend_from_slice(SUBJECT.as_bytes());

    let digest = md5_digest(&encode_fields(&[
        (FieldTag::NonceCiphertext, &nonce_ciphertext),
        (FieldTag::AgencyId, r.cia.as_bytes()),
        (FieldTag::RandomSet, &set_bytes),
        (FieldTag::RequestPayload, &payload_bytes),
    ]));
    let signed_plain = encode_fields(&[
        (FieldTag::RandomSet, &set_bytes),
        (FieldTag::RequestPayload, &payload_bytes),
        (FieldTag::Digest, digest.as_bytes()),
    ]);
    let signed_blob = pk_transform(&r.cia_keys.private, &signed_plain).unwrap();
    let envelope = encode_fields(&[
        (FieldTag::NonceCiphertext, &nonce_ciphertext),
        (FieldTag::AgencyId, r.cia.as_bytes()),
        (FieldTag::SignedBlob, &signed_blob),
    ]);
    let rebuilt = pk_transform(&r.fbi_keys.public, &envelope).unwrap();

    assert_eq!(rebuilt, GOLDEN_REQUEST);
}

#[test]
fn stored_response_rebuilds_from_primitives() {
    let r = rig();
    let (nonce, values) = draws();
    let nonce_ciphertext = pk_transform(&r.cia_keys.public, &nonce.to_be_bytes()).unwrap();

    // "++-" folded left over the four draws, then sine.
    let folded = ((values[0] as f64 + values[1] as f64) + values[2] as f64) - values[3] as f64;
    let mapping_bytes = folded.sin().to_be_bytes();

    let shared = trust_filter(&r.items, TRUST, &r.cia, &r.fbi, SUBJECT);
    let shared_bytes = shared.to_bytes();

    let digest = md5_digest(&encode_fields(&[
        (FieldTag::NonceCiphertext, &nonce_ciphertext),
        (FieldTag::MappingValue, &mapping_bytes),
        (FieldTag::ResponsePayload, &shared_bytes),
    ]));
    let plain = encode_fields(&[
        (FieldTag::NonceCiphertext, &nonce_ciphertext),
        (FieldTag::MappingValue, &mapping_bytes),
        (FieldTag::ResponsePayload, &shared_bytes),
        (FieldTag::Digest, digest.as_bytes()),
    ]);
    let rebuilt = pk_transform(&r.cia_keys.public, &plain).unwrap();

    assert_eq!(rebuilt, GOLDEN_RESPONSE);
}

#[test]
fn stored_exchange_validates_end_to_end() {
    let r = rig();

    let payload = QueryPayload::new(SUBJECT, QueryKind::InfoItems).unwrap();
    let (request, pending) = build_source_request(
        &r.cia,
        &r.fbi,
        payload,
        &r.cia_keys,
        &r.fbi_keys.public,
        r.mapping.arity(),
        REQUEST_SEED,
    )
    .unwrap();
    assert_eq!(request.as_bytes(), GOLDEN_REQUEST);

    let stored_request = SourceRequest::from_bytes(GOLDEN_REQUEST.to_vec());
    let validated =
        validate_source_request(&stored_request, &r.fbi_keys, &r.registry).unwrap();
    assert_eq!(validated.source, r.cia);
    assert_eq!(validated.payload.subject_code(), SUBJECT);
    assert_eq!(validated.random_set.len(), 4);

    let stored_response = TargetResponse::from_bytes(GOLDEN_RESPONSE.to_vec());
    let shared =
        validate_target_response(&stored_response, &pending, &r.cia_keys, &r.mapping).unwrap();
    assert_eq!(shared.trust_level_used, TRUST);
    assert_eq!(
        shared.items,
        ["20", "18", "19", "16", "12", "14", "11", "17", "13"]
    );
    for item in &shared.items {
        assert!(r.items.contains(item));
    }
}
