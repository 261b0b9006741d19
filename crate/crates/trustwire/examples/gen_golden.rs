//! Regenerates the frozen exchange bytes under `tests/golden/`.
//!
//! The committed files are the contract; run this only when the wire format
//! changes on purpose, then review the diff byte by byte.

use std::fs;
use std::path::Path;

use trustwire::handshake::{
    build_source_request, build_target_response, validate_source_request,
    validate_target_response, QueryKind, QueryPayload,
};
use trustwire::keyfabric::{generate_keypair, AgencyId, KeyRegistry};
use trustwire::trustplane::{MappingFunction, TrustPlane, TrustRecord};

const KEY_BITS: u32 = 512;
const CIA_KEY_SEED: u64 = 101;
const FBI_KEY_SEED: u64 = 102;
const REQUEST_SEED: u64 = 7;

fn hex_lines(bytes: &[u8]) -> String {
    let mut out = String::new();
    for chunk in bytes.chunks(16) {
        for (i, b) in chunk.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{b:02x}"));
        }
        out.push('\n');
    }
    out
}

fn main() {
    let cia = AgencyId::new("CIA").unwrap();
    let fbi = AgencyId::new("FBI").unwrap();
    let cia_keys = generate_keypair(KEY_BITS, CIA_KEY_SEED).unwrap();
    let fbi_keys = generate_keypair(KEY_BITS, FBI_KEY_SEED).unwrap();

    let mut registry = KeyRegistry::new();
    registry.register(cia.clone(), cia_keys.public.clone()).unwrap();
    registry.register(fbi.clone(), fbi_keys.public.clone()).unwrap();

    let mapping = MappingFunction::parse("++-").unwrap();
    let mut plane = TrustPlane::new();
    plane
        .insert(TrustRecord::new(cia.clone(), fbi.clone(), 0.9, mapping.clone()).unwrap())
        .unwrap();

    let payload = QueryPayload::new("98LetT1", QueryKind::InfoItems).unwrap();
    let (request, pending) = build_source_request(
        &cia,
        &fbi,
        payload,
        &cia_keys,
        &fbi_keys.public,
        mapping.arity(),
        REQUEST_SEED,
    )
    .unwrap();

    let validated = validate_source_request(&request, &fbi_keys, &registry).unwrap();
    let items: Vec<String> = (11..=20).map(|n| n.to_string()).collect();
    let response =
        build_target_response(&validated, &fbi, &plane, Some(&items), &registry).unwrap();
    let shared = validate_target_response(&response, &pending, &cia_keys, &mapping).unwrap();

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("request.bin"), request.as_bytes()).unwrap();
    fs::write(dir.join("request.hex"), hex_lines(request.as_bytes())).unwrap();
    fs::write(dir.join("response.bin"), response.as_bytes()).unwrap();
    fs::write(dir.join("response.hex"), hex_lines(response.as_bytes())).unwrap();

    println!("request: {} bytes", request.as_bytes().len());
    println!("response: {} bytes", response.as_bytes().len());
    println!("shared ({} at trust {}):", shared.items.len(), shared.trust_level_used);
    println!("  {}", shared.items.join(", "));
}
