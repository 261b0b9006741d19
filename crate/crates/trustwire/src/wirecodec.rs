//! Tag-length-value codec shared by every protocol message.
//!
//! Naive byte concatenation is ambiguous; every composite the protocol digests or
//! encrypts goes through `encode_fields` so distinct field lists never collide.

use thiserror::Error;

/// Leading bytes of every encoded field list.
pub const WIRE_MAGIC: [u8; 3] = *b"TW1";

pub const RANDOM_SET_MIN_LEN: usize = 1;
pub const RANDOM_SET_MAX_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FieldTag {
    NonceCiphertext = 0x01,
    AgencyId = 0x02,
    RandomSet = 0x03,
    RequestPayload = 0x04,
    Digest = 0x05,
    SignedBlob = 0x06,
    MappingValue = 0x07,
    ResponsePayload = 0x08,
}

impl FieldTag {
    pub fn from_byte(byte: u8) -> Option<FieldTag> {
        match byte {
            0x01 => Some(FieldTag::NonceCiphertext),
            0x02 => Some(FieldTag::AgencyId),
            0x03 => Some(FieldTag::RandomSet),
            0x04 => Some(FieldTag::RequestPayload),
            0x05 => Some(FieldTag::Digest),
            0x06 => Some(FieldTag::SignedBlob),
            0x07 => Some(FieldTag::MappingValue),
            0x08 => Some(FieldTag::ResponsePayload),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("wire magic missing or wrong")]
    BadMagic,
    #[error("truncated input: needed {expected} more bytes, {remaining} remain")]
    Truncated { expected: usize, remaining: usize },
    #[error("unknown field tag 0x{tag:02x} at byte {position}")]
    UnknownTag { tag: u8, position: usize },
    #[error("bad value length: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("random set must hold 1..=32 values, got {0}")]
    RandomSetLen(usize),
}

/// Encode a field list as magic then `tag : u32-be length : payload` per field.
pub fn encode_fields(fields: &[(FieldTag, &[u8])]) -> Vec<u8> {
    let total: usize = fields.iter().map(|(_, v)| v.len() + 5).sum();
    let mut out = Vec::with_capacity(3 + total);
    out.extend_from_slice(&WIRE_MAGIC);
    for (tag, value) in fields {
        assert!(value.len() <= u32::MAX as usize, "field too large for wire");
        out.push(*tag as u8);
        out.extend_from_slice(&(value.len() as u32).to_be_bytes());
        out.extend_from_slice(value);
    }
    out
}

pub fn decode_fields(bytes: &[u8]) -> Result<Vec<(FieldTag, Vec<u8>)>, CodecError> {
    if bytes.len() < WIRE_MAGIC.len() {
        return Err(CodecError::BadMagic);
    }
    if bytes[..WIRE_MAGIC.len()] != WIRE_MAGIC {
        return Err(CodecError::BadMagic);
    }
    let mut fields = Vec::new();
    let mut pos = WIRE_MAGIC.len();
    while pos < bytes.len() {
        let tag = FieldTag::from_byte(bytes[pos])
            .ok_or(CodecError::UnknownTag { tag: bytes[pos], position: pos })?;
        pos += 1;
        if bytes.len() - pos < 4 {
            return Err(CodecError::Truncated { expected: 4, remaining: bytes.len() - pos });
        }
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        if bytes.len() - pos < len {
            return Err(CodecError::Truncated { expected: len, remaining: bytes.len() - pos });
        }
        fields.push((tag, bytes[pos..pos + len].to_vec()));
        pos += len;
    }
    Ok(fields)
}

/// IEEE-754 binary64, big-endian.
pub fn encode_f64(value: f64) -> [u8; 8] {
    value.to_bits().to_be_bytes()
}

pub fn decode_f64(bytes: &[u8]) -> Result<f64, CodecError> {
    let arr: [u8; 8] =
        bytes.try_into().map_err(|_| CodecError::Length { expected: 8, got: bytes.len() })?;
    Ok(f64::from_bits(u64::from_be_bytes(arr)))
}

pub fn encode_u64(value: u64) -> [u8; 8] {
    value.to_be_bytes()
}

pub fn decode_u64(bytes: &[u8]) -> Result<u64, CodecError> {
    let arr: [u8; 8] =
        bytes.try_into().map_err(|_| CodecError::Length { expected: 8, got: bytes.len() })?;
    Ok(u64::from_be_bytes(arr))
}

/// The request's random operand set: 1..=32 unsigned 64-bit values, order significant.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RandomSet {
    values: Vec<u64>,
}

impl RandomSet {
    pub fn new(values: Vec<u64>) -> Result<RandomSet, CodecError> {
        if !(RANDOM_SET_MIN_LEN..=RANDOM_SET_MAX_LEN).contains(&values.len()) {
            return Err(CodecError::RandomSetLen(values.len()));
        }
        Ok(RandomSet { values })
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor guarantees at least one value
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.values.len() * 8);
        for value in &self.values {
            out.extend_from_slice(&value.to_be_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<RandomSet, CodecError> {
        if !bytes.len().is_multiple_of(8) {
            return Err(CodecError::Length { expected: bytes.len() / 8 * 8 + 8, got: bytes.len() });
        }
        let values: Vec<u64> = bytes
            .chunks_exact(8)
            .map(|chunk| u64::from_be_bytes(chunk.try_into().unwrap()))
            .collect();
        RandomSet::new(values)
    }
}

/// Result of the shared mapping function. Equality is bit-exact, never approximate:
/// both sides must compute the identical binary64 or verification fails.
#[derive(Debug, Clone, Copy)]
pub struct MappingValue(pub f64);

impl MappingValue {
    pub fn bits(&self) -> u64 {
        self.0.to_bits()
    }

    pub fn to_bytes(&self) -> [u8; 8] {
        encode_f64(self.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<MappingValue, CodecError> {
        decode_f64(bytes).map(MappingValue)
    }
}

impl PartialEq for MappingValue {
    fn eq(&self, other: &Self) -> bool {
        self.bits() == other.bits()
    }
}

impl Eq for MappingValue {}
