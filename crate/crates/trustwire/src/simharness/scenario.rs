//! Scenario file schema: agencies, trust records, stores, and the exchange script.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::agencynode::InfoRecord;
use crate::handshake::{QueryKind, QueryPayload};
use crate::keyfabric::AgencyId;
use crate::trustplane::MappingFunction;

use super::ConfigError;

pub const DEFAULT_KEY_BITS: u32 = 512;

/// One agency's static configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AgencySpec {
    pub id: AgencyId,
    pub key_seed: u64,
    pub key_bits: u32,
    pub rng_seed: u64,
    pub user_tier: Option<f64>,
    pub users: Vec<String>,
    pub info: BTreeMap<String, InfoRecord>,
}

/// One directed trust record between two configured agencies.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustSpec {
    pub source: AgencyId,
    pub target: AgencyId,
    pub level: f64,
    pub mapping: MappingFunction,
    pub overrides: BTreeMap<String, f64>,
}

/// One scripted exchange row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExchangeSpec {
    pub source: AgencyId,
    pub target: AgencyId,
    pub code: String,
    pub kind: QueryKind,
}

/// A full simulation input: the network plus the ordered exchange script.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub agencies: Vec<AgencySpec>,
    pub trust: Vec<TrustSpec>,
    pub exchanges: Vec<ExchangeSpec>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    agencies: Vec<RawAgency>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    trust: Vec<RawTrust>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    exchanges: Vec<RawExchange>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgency {
    id: String,
    key_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    key_bits: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rng_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    user_tier: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    users: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    info: BTreeMap<String, RawInfo>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInfo {
    items: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    activities: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrust {
    source: String,
    target: String,
    level: f64,
    mapping: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExchange {
    source: String,
    target: String,
    code: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
}

fn parse_id(raw: &str, context: &str) -> Result<AgencyId, ConfigError> {
    AgencyId::new(raw).map_err(|e| ConfigError::Invalid(format!("{context}: {e}")))
}

fn check_code(code: &str, context: &str) -> Result<(), ConfigError> {
    QueryPayload::new(code, QueryKind::InfoItems)
        .map_err(|e| ConfigError::Invalid(format!("{context}: {e}")))?;
    Ok(())
}

fn parse_kind(raw: Option<&str>, context: &str) -> Result<QueryKind, ConfigError> {
    match raw {
        None | Some("items") => Ok(QueryKind::InfoItems),
        Some("activities") => Ok(QueryKind::Activities),
        Some(other) => Err(ConfigError::Invalid(format!(
            "{context}: kind must be \"items\" or \"activities\", not {other:?}"
        ))),
    }
}

fn kind_name(kind: QueryKind) -> &'static str {
    match kind {
        QueryKind::InfoItems => "items",
        QueryKind::Activities => "activities",
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Scenario, ConfigError> {
        let raw: RawScenario =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Scenario::from_raw(raw)
    }

    fn from_raw(raw: RawScenario) -> Result<Scenario, ConfigError> {
        let mut ids = BTreeSet::new();
        let mut agencies = Vec::with_capacity(raw.agencies.len());
        for entry in raw.agencies {
            let context = format!("agency {:?}", entry.id);
            let id = parse_id(&entry.id, &context)?;
            if !ids.insert(id.clone()) {
                return Err(ConfigError::Invalid(format!("{context}: duplicate id")));
            }
            if let Some(tier) = entry.user_tier {
                if !(0.0..=1.0).contains(&tier) {
                    return Err(ConfigError::Invalid(format!(
                        "{context}: user_tier {tier} outside [0, 1]"
                    )));
                }
            }
            let mut users = BTreeSet::new();
            for user in &entry.users {
                if !users.insert(user.clone()) {
                    return Err(ConfigError::Invalid(format!(
                        "{context}: duplicate user {user:?}"
                    )));
                }
            }
            let mut info = BTreeMap::new();
            for (code, record) in entry.info {
                check_code(&code, &format!("{context}, info code {code:?}"))?;
                if record.items.is_empty() {
                    return Err(ConfigError::Invalid(format!(
                        "{context}: info {code:?} has no items"
                    )));
                }
                info.insert(
                    code,
                    InfoRecord { items: record.items, activities: record.activities },
                );
            }
            agencies.push(AgencySpec {
                id,
                key_seed: entry.key_seed,
                key_bits: entry.key_bits.unwrap_or(DEFAULT_KEY_BITS),
                rng_seed: entry.rng_seed.unwrap_or(entry.key_seed),
                user_tier: entry.user_tier,
                users: entry.users,
                info,
            });
        }

        let mut pairs = BTreeSet::new();
        let mut trust = Vec::with_capacity(raw.trust.len());
        for (index, entry) in raw.trust.into_iter().enumerate() {
            let context = format!("trust record {index}");
            let source = parse_id(&entry.source, &context)?;
            let target = parse_id(&entry.target, &context)?;
            for id in [&source, &target] {
                if !ids.contains(id) {
                    return Err(ConfigError::Invalid(format!("{context}: unknown agency {id}")));
                }
            }
            if source == target {
                return Err(ConfigError::Invalid(format!("{context}: source equals target")));
            }
            if !pairs.insert((source.clone(), target.clone())) {
                return Err(ConfigError::Invalid(format!(
                    "{context}: duplicate pair ({source}, {target})"
                )));
            }
            for level in
                std::iter::once(&entry.level).chain(entry.overrides.values())
            {
                if !(0.0..=1.0).contains(level) {
                    return Err(ConfigError::Invalid(format!(
                        "{context}: trust level {level} outside [0, 1]"
                    )));
                }
            }
            for code in entry.overrides.keys() {
                check_code(code, &format!("{context}, override {code:?}"))?;
            }
            let mapping = MappingFunction::parse(&entry.mapping)
                .map_err(|e| ConfigError::Invalid(format!("{context}: {e}")))?;
            trust.push(TrustSpec { source, target, level: entry.level, mapping, overrides: entry.overrides });
        }

        let mut exchanges = Vec::with_capacity(raw.exchanges.len());
        for (index, entry) in raw.exchanges.into_iter().enumerate() {
            let context = format!("exchange {index}");
            let source = parse_id(&entry.source, &context)?;
            let target = parse_id(&entry.target, &context)?;
            for id in [&source, &target] {
                if !ids.contains(id) {
                    return Err(ConfigError::Invalid(format!("{context}: unknown agency {id}")));
                }
            }
            if source == target {
                return Err(ConfigError::Invalid(format!("{context}: source equals target")));
            }
            check_code(&entry.code, &context)?;
            let kind = parse_kind(entry.kind.as_deref(), &context)?;
            exchanges.push(ExchangeSpec { source, target, code: entry.code, kind });
        }

        Ok(Scenario { seed: raw.seed.unwrap_or(0), agencies, trust, exchanges })
    }

    pub fn to_toml_string(&self) -> String {
        let raw = RawScenario {
            seed: Some(self.seed),
            agencies: self
                .agencies
                .iter()
                .map(|a| RawAgency {
                    id: a.id.to_string(),
                    key_seed: a.key_seed,
                    key_bits: Some(a.key_bits),
                    rng_seed: Some(a.rng_seed),
                    user_tier: a.user_tier,
                    users: a.users.clone(),
                    info: a
                        .info
                        .iter()
                        .map(|(code, record)| {
                            (
                                code.clone(),
                                RawInfo {
                                    items: record.items.clone(),
                                    activities: record.activities.clone(),
                                },
                            )
                        })
                        .collect(),
                })
                .collect(),
            trust: self
                .trust
                .iter()
                .map(|t| RawTrust {
                    source: t.source.to_string(),
                    target: t.target.to_string(),
                    level: t.level,
                    mapping: t.mapping.to_string(),
                    overrides: t.overrides.clone(),
                })
                .collect(),
            exchanges: self
                .exchanges
                .iter()
                .map(|x| RawExchange {
                    source: x.source.to_string(),
                    target: x.target.to_string(),
                    code: x.code.clone(),
                    kind: Some(kind_name(x.kind).to_string()),
                })
                .collect(),
        };
        toml::to_string(&raw).expect("scenario serializes")
    }

    pub fn agency(&self, id: &AgencyId) -> Option<&AgencySpec> {
        self.agencies.iter().find(|a| &a.id == id)
    }
}
