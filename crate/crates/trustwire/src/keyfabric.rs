//! Deterministic key generation, raw block transforms, and the public-key registry.
//!
//! The transform is the textbook permutation with no padding scheme: the protocol
//! encrypts under private exponents for its signature envelope, so both exponents
//! must be usable in either role. Key sizes here are desk-scale; nothing in this
//! module is hardened against a real adversary.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const MIN_KEY_BITS: u32 = 32;
pub const KEY_FILE_HEADER: &str = "TRUSTWIRE-KEY v1";
const PUBLIC_EXPONENT: u32 = 65537;
const PRIMALITY_ROUNDS: u32 = 40;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyError {
    #[error("key bit length must be even and at least {MIN_KEY_BITS}, got {0}")]
    InvalidBitLength(u32),
    #[error("invalid prime pair: {0}")]
    InvalidPrimes(String),
    #[error("block decode failed: {0}")]
    Decode(String),
    #[error("key file rejected: {0}")]
    KeyFile(String),
    #[error("agency {0} already registered")]
    DuplicateAgency(AgencyId),
    #[error("agency {0} not registered")]
    UnknownAgency(AgencyId),
    #[error("invalid agency id: {0}")]
    InvalidAgencyId(String),
}

/// Short printable agency identifier, 1..=16 ASCII graphic bytes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgencyId(String);

impl AgencyId {
    pub fn new(id: &str) -> Result<AgencyId, KeyError> {
        if id.is_empty() || id.len() > 16 || !id.bytes().all(|b| b.is_ascii_graphic()) {
            return Err(KeyError::InvalidAgencyId(id.into()));
        }
        Ok(AgencyId(id.into()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }
}

impl fmt::Display for AgencyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Either half of a key pair; the transform works the same through both.
pub trait TransformKey {
    fn modulus(&self) -> &BigUint;
    fn exponent(&self) -> &BigUint;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    e: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivateKey {
    n: BigUint,
    d: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
}

impl TransformKey for PublicKey {
    fn modulus(&self) -> &BigUint {
        &self.n
    }
    fn exponent(&self) -> &BigUint {
        &self.e
    }
}

impl TransformKey for PrivateKey {
    fn modulus(&self) -> &BigUint {
        &self.n
    }
    fn exponent(&self) -> &BigUint {
        &self.d
    }
}

impl PublicKey {
    pub fn to_key_text(&self) -> String {
        format!("{KEY_FILE_HEADER} public\n{:x}\n{:x}\n", self.n, self.e)
    }

    pub fn from_key_text(text: &str) -> Result<PublicKey, KeyError> {
        let (n, exp) = parse_key_text(text, "public")?;
        Ok(PublicKey { n, e: exp })
    }
}

impl PrivateKey {
    pub fn to_key_text(&self) -> String {
        format!("{KEY_FILE_HEADER} private\n{:x}\n{:x}\n", self.n, self.d)
    }

    pub fn from_key_text(text: &str) -> Result<PrivateKey, KeyError> {
        let (n, exp) = parse_key_text(text, "private")?;
        Ok(PrivateKey { n, d: exp })
    }
}

fn parse_key_text(text: &str, kind: &str) -> Result<(BigUint, BigUint), KeyError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let expected = format!("{KEY_FILE_HEADER} {kind}");
    if header.trim_end() != expected {
        return Err(KeyError::KeyFile(format!("expected header {expected:?}, got {header:?}")));
    }
    let mut integer = |name: &str| -> Result<BigUint, KeyError> {
        let line = lines
            .next()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .ok_or_else(|| KeyError::KeyFile(format!("missing {name} line")))?;
        BigUint::parse_bytes(line.as_bytes(), 16)
            .ok_or_else(|| KeyError::KeyFile(format!("{name} is not lowercase hex: {line:?}")))
    };
    let n = integer("modulus")?;
    let exp = integer("exponent")?;
    Ok((n, exp))
}

impl KeyPair {
    /// Assemble a pair from known primes. The private exponent is the inverse of
    /// `e` modulo (p-1)(q-1).
    pub fn from_primes(p: &BigUint, q: &BigUint, e: &BigUint) -> Result<KeyPair, KeyError> {
        if p == q {
            return Err(KeyError::InvalidPrimes("p and q must differ".into()));
        }
        let one = BigUint::one();
        if p <= &one || q <= &one {
            return Err(KeyError::InvalidPrimes("primes must exceed 1".into()));
        }
        let n = p * q;
        let phi = (p - &one) * (q - &one);
        let d = mod_inverse(e, &phi)
            .ok_or_else(|| KeyError::InvalidPrimes("e shares a factor with (p-1)(q-1)".into()))?;
        Ok(KeyPair {
            public: PublicKey { n: n.clone(), e: e.clone() },
            private: PrivateKey { n, d },
        })
    }
}

/// Generate a key pair deterministically from a seed. Equal seeds and bit lengths
/// always produce the identical pair.
pub fn generate_keypair(bit_length: u32, seed: u64) -> Result<KeyPair, KeyError> {
    if bit_length < MIN_KEY_BITS || !bit_length.is_multiple_of(2) {
        return Err(KeyError::InvalidBitLength(bit_length));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = BigUint::from(PUBLIC_EXPONENT);
    loop {
        let p = generate_prime(bit_length / 2, &mut rng);
        let q = loop {
            let q = generate_prime(bit_length / 2, &mut rng);
            if q != p {
                break q;
            }
        };
        match KeyPair::from_primes(&p, &q, &e) {
            Ok(pair) => return Ok(pair),
            Err(_) => continue, // e not invertible for this pair; draw fresh primes
        }
    }
}

fn small_primes() -> &'static [u32] {
    static TABLE: OnceLock<Vec<u32>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut sieve = vec![true; 1024];
        let mut primes = Vec::new();
        for i in 2..sieve.len() {
            if sieve[i] {
                primes.push(i as u32);
                for j in (i * i..sieve.len()).step_by(i) {
                    sieve[j] = false;
                }
            }
        }
        primes
    })
}

fn random_biguint_bits(bits: u32, rng: &mut ChaCha8Rng) -> BigUint {
    let bytes = bits.div_ceil(8) as usize;
    let mut buf = vec![0u8; bytes];
    rng.fill_bytes(&mut buf);
    let extra = (bytes as u32 * 8).saturating_sub(bits);
    buf[0] &= 0xff >> extra;
    BigUint::from_bytes_be(&buf)
}

fn random_biguint_below(limit: &BigUint, rng: &mut ChaCha8Rng) -> BigUint {
    // Modular reduction gives a slight bias; fine for witness selection.
    let value = random_biguint_bits(limit.bits() as u32 + 64, rng);
    value % limit
}

fn generate_prime(bits: u32, rng: &mut ChaCha8Rng) -> BigUint {
    loop {
        let mut candidate = random_biguint_bits(bits, rng);
        candidate.set_bit(u64::from(bits) - 1, true);
        candidate.set_bit(0, true);
        if small_primes()
            .iter()
            .any(|&p| candidate != BigUint::from(p) && (&candidate % p).is_zero())
        {
            continue;
        }
        if miller_rabin(&candidate, PRIMALITY_ROUNDS, rng) {
            return candidate;
        }
    }
}

fn miller_rabin(n: &BigUint, rounds: u32, rng: &mut ChaCha8Rng) -> bool {
    let one = BigUint::one();
    let two = &one + &one;
    if *n < two {
        return false;
    }
    if n == &two {
        return true;
    }
    if (n % 2u32).is_zero() {
        return false;
    }

    let n_minus_one = n - &one;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;

    let span = n - &two - &one; // witnesses drawn from [2, n-2]
    'witness: for _ in 0..rounds {
        let a = random_biguint_below(&span, rng) + &two;
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn mod_inverse(value: &BigUint, modulus: &BigUint) -> Option<BigUint> {
    let a = BigInt::from(value.clone());
    let m = BigInt::from(modulus.clone());
    let ext = a.extended_gcd(&m);
    if !ext.gcd.is_one() {
        return None;
    }
    let mut x = ext.x % &m;
    if x.sign() == Sign::Minus {
        x += &m;
    }
    x.to_biguint()
}

fn modulus_len(n: &BigUint) -> usize {
    n.bits().div_ceil(8) as usize
}

fn block_capacity(n: &BigUint) -> Result<usize, KeyError> {
    let len = modulus_len(n);
    if len < 3 {
        return Err(KeyError::Decode("modulus too small for block framing".into()));
    }
    Ok((len - 2).min(255))
}

/// Seal bytes under a key: chop into capacity-sized chunks, frame each as a
/// one-byte payload length plus zero padding, and push every block through the
/// permutation. Empty input seals to empty output.
pub fn pk_transform<K: TransformKey>(key: &K, data: &[u8]) -> Result<Vec<u8>, KeyError> {
    let n = key.modulus();
    let cap = block_capacity(n)?;
    let block_len = modulus_len(n);
    let mut out = Vec::with_capacity(data.len().div_ceil(cap).max(1) * block_len);
    for chunk in data.chunks(cap) {
        // Cleartext block is one byte shorter than the modulus, so its value is
        // always below n.
        let mut clear = Vec::with_capacity(block_len - 1);
        clear.push(chunk.len() as u8);
        clear.extend_from_slice(chunk);
        clear.resize(block_len - 1, 0);
        let value = BigUint::from_bytes_be(&clear);
        let sealed = value.modpow(key.exponent(), n);
        out.extend_from_slice(&to_fixed_width(&sealed, block_len));
    }
    Ok(out)
}

/// Invert `pk_transform` under the paired exponent: push every block back through
/// the permutation and strip the length framing.
pub fn pk_recover<K: TransformKey>(key: &K, data: &[u8]) -> Result<Vec<u8>, KeyError> {
    let n = key.modulus();
    let cap = block_capacity(n)?;
    let block_len = modulus_len(n);
    if !data.len().is_multiple_of(block_len) {
        return Err(KeyError::Decode(format!(
            "sealed length {} is not a multiple of the {block_len}-byte block",
            data.len()
        )));
    }
    let block_count = data.len() / block_len;
    let mut out = Vec::new();
    for (index, block) in data.chunks_exact(block_len).enumerate() {
        let value = BigUint::from_bytes_be(block);
        if value >= *n {
            return Err(KeyError::Decode("block value not below modulus".into()));
        }
        let recovered = value.modpow(key.exponent(), n);
        // A genuine cleartext block is one byte narrower than the modulus; a
        // wrong key or mangled block usually lands outside that range.
        if recovered.bits().div_ceil(8) as usize > block_len - 1 {
            return Err(KeyError::Decode("cleartext block overflows framing".into()));
        }
        let clear = to_fixed_width(&recovered, block_len - 1);
        let payload_len = clear[0] as usize;
        let last = index + 1 == block_count;
        if payload_len > cap || payload_len == 0 || (!last && payload_len != cap) {
            return Err(KeyError::Decode(format!("bad payload length byte {payload_len}")));
        }
        if clear[1 + payload_len..].iter().any(|&b| b != 0) {
            return Err(KeyError::Decode("nonzero block padding".into()));
        }
        out.extend_from_slice(&clear[1..1 + payload_len]);
    }
    Ok(out)
}

fn to_fixed_width(value: &BigUint, width: usize) -> Vec<u8> {
    let bytes = value.to_bytes_be();
    assert!(bytes.len() <= width, "value wider than {width} bytes");
    let mut out = vec![0u8; width - bytes.len()];
    out.extend_from_slice(&bytes);
    out
}

/// Authoritative mapping from agency id to public key. Filled once at scenario
/// setup, read-only afterwards.
#[derive(Debug, Clone, Default)]
pub struct KeyRegistry {
    entries: BTreeMap<AgencyId, PublicKey>,
}

impl KeyRegistry {
    pub fn new() -> KeyRegistry {
        KeyRegistry::default()
    }

    pub fn register(&mut self, id: AgencyId, key: PublicKey) -> Result<(), KeyError> {
        if self.entries.contains_key(&id) {
            return Err(KeyError::DuplicateAgency(id));
        }
        self.entries.insert(id, key);
        Ok(())
    }

    pub fn lookup(&self, id: &AgencyId) -> Result<&PublicKey, KeyError> {
        self.entries.get(id).ok_or_else(|| KeyError::UnknownAgency(id.clone()))
    }

    pub fn contains(&self, id: &AgencyId) -> bool {
        self.entries.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AgencyId, &PublicKey)> {
        self.entries.iter()
    }
}
