//! Trust records, the pairwise mapping secret, and trust-graded item selection.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::digest::md5_digest;
use crate::keyfabric::AgencyId;
use crate::wirecodec::{self, encode_fields, CodecError, FieldTag, MappingValue, RandomSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrustError {
    #[error("mapping function wants {expected} operands, random set holds {got}")]
    Arity { expected: usize, got: usize },
    #[error("no trust record for source {requester} at target {holder}")]
    NoTrustRecord { requester: AgencyId, holder: AgencyId },
    #[error("trust record for ({requester}, {holder}) already present")]
    DuplicateRecord { requester: AgencyId, holder: AgencyId },
    #[error("trust level {0} outside [0, 1]")]
    LevelRange(String),
    #[error("unknown mapping operator {0:?}")]
    UnknownOperator(char),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl MapOp {
    pub fn from_char(c: char) -> Result<MapOp, TrustError> {
        match c {
            '+' => Ok(MapOp::Add),
            '-' => Ok(MapOp::Sub),
            '*' | '×' => Ok(MapOp::Mul),
            '/' | '÷' => Ok(MapOp::Div),
            other => Err(TrustError::UnknownOperator(other)),
        }
    }

    pub fn as_char(&self) -> char {
        match self {
            MapOp::Add => '+',
            MapOp::Sub => '-',
            MapOp::Mul => '*',
            MapOp::Div => '/',
        }
    }

    fn apply(&self, acc: f64, operand: f64) -> f64 {
        match self {
            MapOp::Add => acc + operand,
            MapOp::Sub => acc - operand,
            MapOp::Mul => acc * operand,
            // Division by zero keeps the accumulator unchanged.
            MapOp::Div => {
                if operand == 0.0 {
                    acc
                } else {
                    acc / operand
                }
            }
        }
    }
}

/// Ordered operator list shared secretly by one agency pair. A function with n-1
/// operators consumes exactly n operands; an empty list passes the single
/// operand through the fold untouched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingFunction {
    ops: Vec<MapOp>,
}

impl MappingFunction {
    pub fn new(ops: Vec<MapOp>) -> MappingFunction {
        MappingFunction { ops }
    }

    /// Parse an operator string such as `"++-*"`; `×` and `÷` are accepted too.
    pub fn parse(text: &str) -> Result<MappingFunction, TrustError> {
        let ops = text.chars().map(MapOp::from_char).collect::<Result<Vec<_>, _>>()?;
        Ok(MappingFunction::new(ops))
    }

    pub fn ops(&self) -> &[MapOp] {
        &self.ops
    }

    /// Number of operands a matching random set must hold.
    pub fn arity(&self) -> usize {
        self.ops.len() + 1
    }
}

impl fmt::Display for MappingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for op in &self.ops {
            write!(f, "{}", op.as_char())?;
        }
        Ok(())
    }
}

/// Left-fold the operator list over the operand set in binary64, then take the
/// sine. Both peers must reach the identical bit pattern.
pub fn eval_mapping(function: &MappingFunction, set: &RandomSet) -> Result<MappingValue, TrustError> {
    Ok(MappingValue(fold_mapping(function, set)?.sin()))
}

/// The raw fold value, before the sine.
pub fn fold_mapping(function: &MappingFunction, set: &RandomSet) -> Result<f64, TrustError> {
    if function.arity() != set.len() {
        return Err(TrustError::Arity { expected: function.arity(), got: set.len() });
    }
    let values = set.values();
    let mut acc = values[0] as f64;
    for (op, &value) in function.ops.iter().zip(&values[1..]) {
        acc = op.apply(acc, value as f64);
    }
    Ok(acc)
}

/// One directed trust relationship, with optional per-subject overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustRecord {
    pub source: AgencyId,
    pub target: AgencyId,
    trust_level: f64,
    pub mapping: MappingFunction,
    overrides: BTreeMap<String, f64>,
}

fn check_level(level: f64) -> Result<f64, TrustError> {
    if !(0.0..=1.0).contains(&level) {
        return Err(TrustError::LevelRange(format!("{level}")));
    }
    Ok(level)
}

impl TrustRecord {
    pub fn new(
        source: AgencyId,
        target: AgencyId,
        trust_level: f64,
        mapping: MappingFunction,
    ) -> Result<TrustRecord, TrustError> {
        Ok(TrustRecord {
            source,
            target,
            trust_level: check_level(trust_level)?,
            mapping,
            overrides: BTreeMap::new(),
        })
    }

    pub fn with_override(mut self, subject: &str, level: f64) -> Result<TrustRecord, TrustError> {
        self.overrides.insert(subject.into(), check_level(level)?);
        Ok(self)
    }

    pub fn base_level(&self) -> f64 {
        self.trust_level
    }

    /// Trust applied to one subject code: the override if present, else the base.
    pub fn level_for(&self, subject: &str) -> f64 {
        self.overrides.get(subject).copied().unwrap_or(self.trust_level)
    }

    pub fn overrides(&self) -> &BTreeMap<String, f64> {
        &self.overrides
    }
}

/// Every directed trust record a node knows, keyed by (source, target).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrustPlane {
    records: BTreeMap<(AgencyId, AgencyId), TrustRecord>,
}

impl TrustPlane {
    pub fn new() -> TrustPlane {
        TrustPlane::default()
    }

    pub fn insert(&mut self, record: TrustRecord) -> Result<(), TrustError> {
        let key = (record.source.clone(), record.target.clone());
        if self.records.contains_key(&key) {
            return Err(TrustError::DuplicateRecord { requester: key.0, holder: key.1 });
        }
        self.records.insert(key, record);
        Ok(())
    }

    pub fn record(&self, source: &AgencyId, target: &AgencyId) -> Result<&TrustRecord, TrustError> {
        self.records.get(&(source.clone(), target.clone())).ok_or_else(|| {
            TrustError::NoTrustRecord { requester: source.clone(), holder: target.clone() }
        })
    }

    /// Resolve the trust level and mapping secret the target applies to a request
    /// from `source` about `subject`.
    pub fn lookup_trust(
        &self,
        source: &AgencyId,
        target: &AgencyId,
        subject: &str,
    ) -> Result<(f64, &MappingFunction), TrustError> {
        let record = self.record(source, target)?;
        Ok((record.level_for(subject), &record.mapping))
    }

    pub fn mapping_for(
        &self,
        source: &AgencyId,
        target: &AgencyId,
    ) -> Result<&MappingFunction, TrustError> {
        Ok(&self.record(source, target)?.mapping)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrustRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Items released for one request, in disclosure order.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedInfo {
    pub items: Vec<String>,
    pub trust_level_used: f64,
}

impl SharedInfo {
    pub fn empty(trust_level_used: f64) -> SharedInfo {
        SharedInfo { items: Vec::new(), trust_level_used }
    }

    /// Wire form: trust level, then a length-prefixed item list.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&wirecodec::encode_f64(self.trust_level_used));
        out.extend_from_slice(&(self.items.len() as u32).to_be_bytes());
        for item in &self.items {
            out.extend_from_slice(&(item.len() as u32).to_be_bytes());
            out.extend_from_slice(item.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<SharedInfo, CodecError> {
        let take = |bytes: &[u8], pos: &mut usize, len: usize| -> Result<Vec<u8>, CodecError> {
            if bytes.len() - *pos < len {
                return Err(CodecError::Truncated { expected: len, remaining: bytes.len() - *pos });
            }
            let out = bytes[*pos..*pos + len].to_vec();
            *pos += len;
            Ok(out)
        };
        let mut pos = 0;
        let trust_level_used = wirecodec::decode_f64(&take(bytes, &mut pos, 8)?)?;
        let count = u32::from_be_bytes(take(bytes, &mut pos, 4)?.try_into().unwrap()) as usize;
        let mut items = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = u32::from_be_bytes(take(bytes, &mut pos, 4)?.try_into().unwrap()) as usize;
            let raw = take(bytes, &mut pos, len)?;
            let item = String::from_utf8(raw)
                .map_err(|e| CodecError::Length { expected: len, got: e.utf8_error().valid_up_to() })?;
            items.push(item);
        }
        if pos != bytes.len() {
            return Err(CodecError::Length { expected: pos, got: bytes.len() });
        }
        Ok(SharedInfo { items, trust_level_used })
    }
}

/// Select the first `ceil(trust * n)` items of a deterministic pseudorandom
/// permutation seeded by (source, target, subject). Raising trust only ever
/// extends the selection, so higher trust always shares a superset.
pub fn trust_filter(
    items: &[String],
    trust_level: f64,
    source: &AgencyId,
    target: &AgencyId,
    subject: &str,
) -> SharedInfo {
    let n = items.len();
    let count = ((trust_level * n as f64).ceil() as usize).min(n);

    let seed_preimage = encode_fields(&[
        (FieldTag::AgencyId, source.as_bytes()),
        (FieldTag::AgencyId, target.as_bytes()),
        (FieldTag::RequestPayload, subject.as_bytes()),
    ]);
    let seed_digest = md5_digest(&seed_preimage);
    let seed = u64::from_be_bytes(seed_digest.as_bytes()[..8].try_into().unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }

    SharedInfo {
        items: order[..count].iter().map(|&i| items[i].clone()).collect(),
        trust_level_used: trust_level,
    }
}
