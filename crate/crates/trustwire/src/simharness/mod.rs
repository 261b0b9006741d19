//! Deterministic in-memory multi-agency network: scenario loading, the exchange
//! runner, fault injection, and the canonical disclosure-table check.

pub mod report;
pub mod scenario;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::agencynode::AgencyNode;
use crate::digest::Digest;
use crate::handshake::{build_source_request, QueryPayload, TargetResponse};
use crate::keyfabric::{generate_keypair, AgencyId, KeyRegistry};
use crate::trustplane::{SharedInfo, TrustRecord};

pub use scenario::{AgencySpec, ExchangeSpec, Scenario, TrustSpec};

/// The canonical four-agency disclosure scenario, embedded verbatim.
pub const TABLE1_SCENARIO: &str = include_str!("../../../../fixtures/table1.scenario");

/// Shared-item counts the canonical scenario must reproduce, in script order.
pub const TABLE1_EXPECTED_COUNTS: [usize; 10] = [9, 9, 4, 5, 8, 3, 6, 5, 4, 8];

/// Script row whose published shared list cites an item outside the available
/// store; membership is skipped there and only the count is checked.
pub const TABLE1_MEMBERSHIP_SKIP_ROW: usize = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("scenario parse failure: {0}")]
    Parse(String),
    #[error("scenario invalid: {0}")]
    Invalid(String),
    #[error("fault spec invalid: {0}")]
    Fault(String),
}

/// A deliberate corruption applied to one script row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FaultKind {
    /// XOR 0xff into byte `k` of the row's request.
    FlipByte(usize),
    /// Deliver this row's response to the named row and vice versa.
    SwapResponses(usize),
    /// Deliver the named row's response to this row instead of its own.
    ReplayResponse(usize),
    /// Seal the row's request under a key that is not the target's.
    WrongTargetKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fault {
    pub row: usize,
    pub kind: FaultKind,
}

/// What one script row produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeOutcome {
    pub index: usize,
    pub source: AgencyId,
    pub target: AgencyId,
    pub code: String,
    /// How many entries the target holds under the code for the queried kind.
    pub available: usize,
    pub shared: Option<SharedInfo>,
    /// Stable error class when the exchange failed.
    pub error: Option<String>,
}

impl ExchangeOutcome {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }

    pub fn shared_count(&self) -> usize {
        self.shared.as_ref().map_or(0, |s| s.items.len())
    }
}

/// A built fleet of agency nodes plus the credentials issued while loading.
pub struct Network {
    nodes: BTreeMap<AgencyId, AgencyNode>,
    issued: BTreeMap<(AgencyId, String), String>,
}

impl Network {
    pub fn node(&self, id: &AgencyId) -> Option<&AgencyNode> {
        self.nodes.get(id)
    }

    pub fn node_mut(&mut self, id: &AgencyId) -> Option<&mut AgencyNode> {
        self.nodes.get_mut(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &AgencyId> {
        self.nodes.keys()
    }

    /// Password issued to a scenario-listed user while the network was built.
    pub fn issued_password(&self, agency: &AgencyId, user: &str) -> Option<&str> {
        self.issued.get(&(agency.clone(), user.to_string())).map(String::as_str)
    }
}

/// Instantiate every agency node: keys, registry, trust records, stores, users.
pub fn build_network(scenario: &Scenario) -> Result<Network, ConfigError> {
    let invalid = |msg: String| ConfigError::Invalid(msg);

    let mut registry = KeyRegistry::new();
    let mut keys = BTreeMap::new();
    for agency in &scenario.agencies {
        let pair = generate_keypair(agency.key_bits, agency.key_seed)
            .map_err(|e| invalid(format!("agency {}: {e}", agency.id)))?;
        registry
            .register(agency.id.clone(), pair.public.clone())
            .map_err(|e| invalid(format!("agency {}: {e}", agency.id)))?;
        keys.insert(agency.id.clone(), pair);
    }
    let registry = Arc::new(registry);

    let mut nodes = BTreeMap::new();
    let mut issued = BTreeMap::new();
    for agency in &scenario.agencies {
        let pair = keys.remove(&agency.id).expect("generated above");
        let mut node =
            AgencyNode::new(agency.id.clone(), pair, Arc::clone(&registry), agency.rng_seed);
        if let Some(tier) = agency.user_tier {
            node.set_user_tier(tier);
        }
        for (code, record) in &agency.info {
            node.add_info(code, record.clone())
                .map_err(|e| invalid(format!("agency {}: {e}", agency.id)))?;
        }
        for user in &agency.users {
            let password = node
                .register_user(user)
                .map_err(|e| invalid(format!("agency {}: {e}", agency.id)))?;
            issued.insert((agency.id.clone(), user.clone()), password);
        }
        nodes.insert(agency.id.clone(), node);
    }

    for (index, spec) in scenario.trust.iter().enumerate() {
        let record = TrustRecord::new(
            spec.source.clone(),
            spec.target.clone(),
            spec.level,
            spec.mapping.clone(),
        )
        .map_err(|e| invalid(format!("trust record {index}: {e}")))?;
        let record = spec
            .overrides
            .iter()
            .try_fold(record, |record, (code, level)| record.with_override(code, *level))
            .map_err(|e| invalid(format!("trust record {index}: {e}")))?;
        // The pair secret lives in both ends' trust databases.
        for id in [&spec.source, &spec.target] {
            nodes
                .get_mut(id)
                .ok_or_else(|| invalid(format!("trust record {index}: unknown agency {id}")))?
                .add_trust(record.clone())
                .map_err(|e| invalid(format!("trust record {index}: {e}")))?;
        }
    }

    for node in nodes.values_mut() {
        node.rebuild_duplicates();
    }

    Ok(Network { nodes, issued })
}

/// Deterministic per-row seed derived from the scenario seed.
pub fn row_seed(scenario_seed: u64, index: usize) -> u64 {
    let mut z = scenario_seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9e3779b97f4a7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Run the script in order with no corruption.
pub fn run_scenario(scenario: &Scenario) -> Result<Vec<ExchangeOutcome>, ConfigError> {
    run_with_faults(scenario, &[])
}

/// Run the script with one injected fault.
pub fn inject_fault(
    scenario: &Scenario,
    row: usize,
    kind: FaultKind,
) -> Result<Vec<ExchangeOutcome>, ConfigError> {
    run_with_faults(scenario, &[Fault { row, kind }])
}

struct RowState {
    available: usize,
    digest: Option<Digest>,
    response: Option<TargetResponse>,
    error: Option<String>,
}

fn check_faults(faults: &[Fault], rows: usize) -> Result<(), ConfigError> {
    let mut touched = std::collections::BTreeSet::new();
    for fault in faults {
        if fault.row >= rows {
            return Err(ConfigError::Fault(format!(
                "row {} out of range, script has {rows} rows",
                fault.row
            )));
        }
        if !touched.insert(fault.row) {
            return Err(ConfigError::Fault(format!("row {} faulted twice", fault.row)));
        }
        match fault.kind {
            FaultKind::SwapResponses(other) | FaultKind::ReplayResponse(other) => {
                if other >= rows {
                    return Err(ConfigError::Fault(format!(
                        "row {other} out of range, script has {rows} rows"
                    )));
                }
                if other == fault.row {
                    return Err(ConfigError::Fault(format!(
                        "row {} paired with itself",
                        fault.row
                    )));
                }
                if let FaultKind::SwapResponses(_) = fault.kind {
                    if !touched.insert(other) {
                        return Err(ConfigError::Fault(format!("row {other} faulted twice")));
                    }
                }
            }
            FaultKind::FlipByte(_) | FaultKind::WrongTargetKey => {}
        }
    }
    Ok(())
}

/// Run the script in order, applying the given faults. Requests all go out
/// first, then responses are (mis)delivered, so swap and replay faults can
/// cross rows without disturbing the others.
pub fn run_with_faults(
    scenario: &Scenario,
    faults: &[Fault],
) -> Result<Vec<ExchangeOutcome>, ConfigError> {
    check_faults(faults, scenario.exchanges.len())?;
    let fault_for = |row: usize| faults.iter().find(|f| f.row == row).map(|f| &f.kind);

    let mut network = build_network(scenario)?;
    let mut rows = Vec::with_capacity(scenario.exchanges.len());

    for (index, exchange) in scenario.exchanges.iter().enumerate() {
        let seed = row_seed(scenario.seed, index);
        let payload = QueryPayload::new(&exchange.code, exchange.kind)
            .map_err(|e| ConfigError::Invalid(format!("exchange {index}: {e}")))?;
        let available = network
            .node(&exchange.target)
            .ok_or_else(|| {
                ConfigError::Invalid(format!("exchange {index}: unknown agency {}", exchange.target))
            })?
            .store()
            .get(&exchange.code)
            .map_or(0, |record| record.list_for(exchange.kind).len());

        let mut state = RowState { available, digest: None, response: None, error: None };

        let request_bytes = if let Some(FaultKind::WrongTargetKey) = fault_for(index) {
            // The source seals under a decoy key; no pending entry is kept
            // because the target can never answer.
            let source = network.node(&exchange.source).expect("validated");
            let decoy = generate_keypair(
                scenario.agency(&exchange.target).expect("validated").key_bits,
                seed ^ 0x00de_c0de,
            )
            .map_err(|e| ConfigError::Invalid(format!("exchange {index}: {e}")))?;
            match source
                .plane()
                .mapping_for(&exchange.source, &exchange.target)
                .map(|mapping| mapping.arity())
                .map_err(crate::handshake::HandshakeError::from)
                .and_then(|arity| {
                    build_source_request(
                        &exchange.source,
                        &exchange.target,
                        payload,
                        source.keys(),
                        &decoy.public,
                        arity,
                        seed,
                    )
                }) {
                Ok((request, _)) => Some(request.into_bytes()),
                Err(err) => {
                    state.error = Some(err.error_class().to_string());
                    None
                }
            }
        } else {
            let source = network.node_mut(&exchange.source).expect("validated");
            match source.begin_exchange(&exchange.target, payload, seed) {
                Ok((request, digest)) => {
                    state.digest = Some(digest);
                    Some(request.into_bytes())
                }
                Err(err) => {
                    state.error = Some(err.error_class().to_string());
                    None
                }
            }
        };

        if let Some(mut bytes) = request_bytes {
            if let Some(FaultKind::FlipByte(position)) = fault_for(index) {
                if *position >= bytes.len() {
                    return Err(ConfigError::Fault(format!(
                        "row {index} request is {} bytes, cannot flip byte {position}",
                        bytes.len()
                    )));
                }
                bytes[*position] ^= 0xff;
            }
            let target = network.node_mut(&exchange.target).expect("validated");
            match target.handle_incoming(&bytes) {
                Ok(response) => state.response = Some(response),
                Err(err) => state.error = Some(err.error_class().to_string()),
            }
        }

        rows.push(state);
    }

    for fault in faults {
        match fault.kind {
            FaultKind::SwapResponses(other) => {
                if rows[fault.row].response.is_none() || rows[other].response.is_none() {
                    return Err(ConfigError::Fault(format!(
                        "swap of rows {} and {other} needs responses on both",
                        fault.row
                    )));
                }
                let taken = rows[fault.row].response.take();
                rows[fault.row].response = rows[other].response.take();
                rows[other].response = taken;
            }
            FaultKind::ReplayResponse(from) => {
                let Some(replayed) = rows[from].response.clone() else {
                    return Err(ConfigError::Fault(format!(
                        "replay into row {} needs a response on row {from}",
                        fault.row
                    )));
                };
                rows[fault.row].response = Some(replayed);
            }
            FaultKind::FlipByte(_) | FaultKind::WrongTargetKey => {}
        }
    }

    let mut outcomes = Vec::with_capacity(rows.len());
    for (index, (state, exchange)) in rows.into_iter().zip(&scenario.exchanges).enumerate() {
        let mut shared = None;
        let error = match state.error {
            Some(error) => Some(error),
            None => {
                let response = state.response.as_ref().expect("no error means a response");
                let digest = state.digest.as_ref().expect("no error means a pending digest");
                let source = network.node_mut(&exchange.source).expect("validated");
                match source.complete_exchange(digest, response) {
                    Ok(info) => {
                        shared = Some(info);
                        None
                    }
                    Err(err) => Some(err.error_class().to_string()),
                }
            }
        };
        outcomes.push(ExchangeOutcome {
            index,
            source: exchange.source.clone(),
            target: exchange.target.clone(),
            code: exchange.code.clone(),
            available: state.available,
            shared,
            error,
        });
    }
    Ok(outcomes)
}

/// Parse the embedded canonical scenario.
pub fn canonical_scenario() -> Scenario {
    Scenario::from_toml_str(TABLE1_SCENARIO).expect("embedded scenario parses")
}

/// Check a canonical-scenario run: ten successes, the exact shared counts, and
/// shared ⊆ store membership on every row except the documented skip.
pub fn verify_table1(scenario: &Scenario, outcomes: &[ExchangeOutcome]) -> Result<(), String> {
    if outcomes.len() != TABLE1_EXPECTED_COUNTS.len() {
        return Err(format!(
            "expected {} outcomes, got {}",
            TABLE1_EXPECTED_COUNTS.len(),
            outcomes.len()
        ));
    }
    let mut problems = Vec::new();
    for (outcome, &expected) in outcomes.iter().zip(&TABLE1_EXPECTED_COUNTS) {
        let row = outcome.index;
        if let Some(error) = &outcome.error {
            problems.push(format!("row {row} failed with {error}"));
            continue;
        }
        let shared = outcome.shared.as_ref().expect("success carries shared info");
        if shared.items.len() != expected {
            problems.push(format!(
                "row {row} shared {} items, expected {expected}",
                shared.items.len()
            ));
        }
        if row == TABLE1_MEMBERSHIP_SKIP_ROW {
            continue;
        }
        let store = scenario
            .agency(&outcome.target)
            .and_then(|agency| agency.info.get(&outcome.code));
        match store {
            Some(record) => {
                for item in &shared.items {
                    if !record.items.contains(item) {
                        problems.push(format!("row {row} shared {item:?} not in store"));
                    }
                }
            }
            None => problems.push(format!("row {row} has no store entry to check against")),
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems.join("; "))
    }
}
