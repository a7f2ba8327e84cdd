//! Asset registry and the gated execution path for requests.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::access::AccessRequest;
use crate::error::ContractError;
use crate::ids::{Ident, Operation};
use crate::ledger::ChannelState;
use crate::revoke::{admit, AccessDecision};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetRecord {
    pub asset: Ident,
    pub attributes: Vec<String>,
    pub values: BTreeMap<String, String>,
    pub version: u64,
}

impl AssetRecord {
    pub fn has_attribute(&self, attribute: &str) -> bool {
        self.values.contains_key(attribute)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecOutcome {
    Value(String),
    Ack,
    Decision(AccessDecision),
}

pub fn create_asset(
    channel: &mut ChannelState,
    admin: &str,
    asset_id: &str,
    attributes: &[&str],
    initial_values: BTreeMap<String, String>,
) -> Result<(), ContractError> {
    channel.require_admin(admin)?;
    let id = Ident::new(asset_id)?;
    if channel.assets.contains_key(&id) {
        return Err(ContractError::DuplicateAsset(asset_id.to_string()));
    }
    let declared: BTreeSet<&str> = attributes.iter().copied().collect();
    let provided: BTreeSet<&str> = initial_values.keys().map(String::as_str).collect();
    if attributes.is_empty() || declared.len() != attributes.len() || declared != provided {
        return Err(ContractError::AttributeMismatch(asset_id.to_string()));
    }
    let summary = attributes
        .iter()
        .map(|a| format!("{a}={}", initial_values[*a]))
        .collect::<Vec<_>>()
        .join(",");
    channel.assets.insert(
        id.clone(),
        AssetRecord {
            asset: id,
            attributes: attributes.iter().map(|a| a.to_string()).collect(),
            values: initial_values,
            version: 0,
        },
    );
    channel.record(admin, asset_id, "", "create", &summary, "ack");
    Ok(())
}

/// Performs an already-authorized request. Does not log.
pub(crate) fn apply(
    channel: &mut ChannelState,
    request: &AccessRequest,
) -> Result<ExecOutcome, ContractError> {
    let record = channel
        .assets
        .get_mut(request.asset.as_str())
        .ok_or_else(|| ContractError::UnknownAsset(request.asset.clone()))?;
    let slot = record
        .values
        .get_mut(&request.attribute)
        .ok_or_else(|| ContractError::UnknownAttribute {
            asset: request.asset.clone(),
            attribute: request.attribute.clone(),
        })?;
    match request.operation {
        Operation::Read => Ok(ExecOutcome::Value(slot.clone())),
        Operation::Write | Operation::Update => {
            *slot = request.value.clone().ok_or(ContractError::InvalidRequest)?;
            record.version += 1;
            channel.stats.mutations += 1;
            Ok(ExecOutcome::Ack)
        }
    }
}

/// The only entry point for participant requests: decide via the revoke
/// contract, then read or mutate on `Allow`. Exactly one log entry per call.
pub fn execute(
    channel: &mut ChannelState,
    request: &AccessRequest,
) -> Result<ExecOutcome, ContractError> {
    let decision = admit(channel, request);
    let (result, label) = match decision {
        AccessDecision::Allow => match apply(channel, request) {
            Ok(ExecOutcome::Value(v)) => (Ok(ExecOutcome::Value(v)), "value"),
            Ok(other) => (Ok(other), "ack"),
            Err(e) => (Err(e), "error"),
        },
        other => (Ok(ExecOutcome::Decision(other)), other.as_str()),
    };
    channel.record(
        &request.participant,
        &request.asset,
        &request.attribute,
        request.operation.as_str(),
        request.value_str(),
        label,
    );
    result
}

pub fn snapshot_json(channel: &ChannelState) -> serde_json::Value {
    serde_json::to_value(&channel.assets).expect("assets serialize")
}
