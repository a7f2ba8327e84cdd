//! Attribute-level privileges: a least-privilege set `Q` and an extra-privilege
//! set `R` per (participant, asset, attribute). An operation is permitted iff
//! it is in `Q ∪ R`. Only `R` moves under promote/demote.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ContractError;
use crate::ids::{Ident, OpSet, Operation, SEPARATOR};
use crate::ledger::{sha256, ChannelState, Digest};

/// A request `(participant, asset, attribute, operation, value)`. The value is
/// present exactly for mutating operations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRequest {
    pub participant: String,
    pub asset: String,
    pub attribute: String,
    pub operation: Operation,
    pub value: Option<String>,
}

impl AccessRequest {
    pub fn new(
        participant: &str,
        asset: &str,
        attribute: &str,
        operation: Operation,
        value: Option<String>,
    ) -> Result<Self, ContractError> {
        if operation.mutates() != value.is_some() {
            return Err(ContractError::InvalidRequest);
        }
        Ok(AccessRequest {
            participant: participant.to_string(),
            asset: asset.to_string(),
            attribute: attribute.to_string(),
            operation,
            value,
        })
    }

    pub fn read(participant: &str, asset: &str, attribute: &str) -> Self {
        Self::new(participant, asset, attribute, Operation::Read, None).expect("read has no value")
    }

    pub fn write(participant: &str, asset: &str, attribute: &str, value: &str) -> Self {
        Self::new(participant, asset, attribute, Operation::Write, Some(value.to_string()))
            .expect("write carries a value")
    }

    pub fn update(participant: &str, asset: &str, attribute: &str, value: &str) -> Self {
        Self::new(participant, asset, attribute, Operation::Update, Some(value.to_string()))
            .expect("update carries a value")
    }

    pub fn value_str(&self) -> &str {
        self.value.as_deref().unwrap_or("")
    }
}

/// `SHA256(participant || 0x1F || asset)`.
pub fn index_of(participant: &str, asset: &str) -> Result<Digest, ContractError> {
    let participant = Ident::new(participant)?;
    let asset = Ident::new(asset)?;
    Ok(sha256(&[
        participant.as_str().as_bytes(),
        &[SEPARATOR],
        asset.as_str().as_bytes(),
    ]))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionRecord {
    pub participant: Ident,
    pub asset: Ident,
    pub least: BTreeMap<String, OpSet>,
    pub extra: BTreeMap<String, OpSet>,
}

impl PermissionRecord {
    fn new(participant: Ident, asset: Ident) -> Self {
        PermissionRecord {
            participant,
            asset,
            least: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn least_for(&self, attribute: &str) -> OpSet {
        self.least.get(attribute).copied().unwrap_or_default()
    }

    pub fn extra_for(&self, attribute: &str) -> OpSet {
        self.extra.get(attribute).copied().unwrap_or_default()
    }
}

/// Permission records of one channel, keyed by [`index_of`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PermissionStore {
    records: BTreeMap<Digest, PermissionRecord>,
}

impl PermissionStore {
    pub fn get(&self, participant: &str, asset: &str) -> Option<&PermissionRecord> {
        let idx = index_of(participant, asset).ok()?;
        self.records.get(&idx)
    }

    /// `Q ∪ R`; a missing record is two empty sets.
    pub fn effective(&self, participant: &str, asset: &str, attribute: &str) -> OpSet {
        self.get(participant, asset)
            .map(|r| r.least_for(attribute).union(r.extra_for(attribute)))
            .unwrap_or_default()
    }

    fn entry(&mut self, participant: &Ident, asset: &Ident) -> &mut PermissionRecord {
        let idx = index_of(participant.as_str(), asset.as_str()).expect("validated identifiers");
        self.records
            .entry(idx)
            .or_insert_with(|| PermissionRecord::new(participant.clone(), asset.clone()))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// JSON object keyed by lowercase hex digest.
    pub fn export(&self) -> serde_json::Value {
        let map: BTreeMap<String, &PermissionRecord> = self
            .records
            .iter()
            .map(|(k, v)| (hex::encode(k), v))
            .collect();
        serde_json::to_value(map).expect("permission records serialize")
    }

    pub fn import(value: &serde_json::Value) -> Result<Self, serde_json::Error> {
        let map: BTreeMap<String, PermissionRecord> = serde_json::from_value(value.clone())?;
        let records = map
            .into_values()
            .map(|r| {
                let idx = index_of(r.participant.as_str(), r.asset.as_str())
                    .expect("identifiers validated on deserialize");
                (idx, r)
            })
            .collect();
        Ok(PermissionStore { records })
    }
}

pub fn check_permission(
    store: &PermissionStore,
    participant: &str,
    asset: &str,
    attribute: &str,
    operation: Operation,
) -> bool {
    store.effective(participant, asset, attribute).contains(operation)
}

fn resolve_target(
    channel: &ChannelState,
    participant: &str,
    asset: &str,
    attribute: &str,
) -> Result<(Ident, Ident), ContractError> {
    let participant = Ident::new(participant)?;
    let asset_id = Ident::new(asset)?;
    let record = channel
        .assets
        .get(&asset_id)
        .ok_or_else(|| ContractError::UnknownAsset(asset.to_string()))?;
    if !record.has_attribute(attribute) {
        return Err(ContractError::UnknownAttribute {
            asset: asset.to_string(),
            attribute: attribute.to_string(),
        });
    }
    Ok((participant, asset_id))
}

fn op_list(ops: OpSet) -> String {
    ops.sorted_names().join(",")
}

/// Replaces `Q` for one attribute. Admin only.
pub fn set_least(
    channel: &mut ChannelState,
    caller: &str,
    participant: &str,
    asset: &str,
    attribute: &str,
    ops: OpSet,
) -> Result<(), ContractError> {
    channel.require_admin(caller)?;
    let (p, a) = resolve_target(channel, participant, asset, attribute)?;
    channel
        .permissions
        .entry(&p, &a)
        .least
        .insert(attribute.to_string(), ops);
    channel.record(participant, asset, attribute, "set_least", &op_list(ops), "ack");
    Ok(())
}

/// `R ← R ∪ {op}`. Admin only.
pub fn promote(
    channel: &mut ChannelState,
    caller: &str,
    participant: &str,
    asset: &str,
    attribute: &str,
    operation: Operation,
) -> Result<(), ContractError> {
    adjust_extra(channel, caller, participant, asset, attribute, operation, true)
}

/// `R ← R \ {op}`. Admin only. Never touches `Q`.
pub fn demote(
    channel: &mut ChannelState,
    caller: &str,
    participant: &str,
    asset: &str,
    attribute: &str,
    operation: Operation,
) -> Result<(), ContractError> {
    adjust_extra(channel, caller, participant, asset, attribute, operation, false)
}

fn adjust_extra(
    channel: &mut ChannelState,
    caller: &str,
    participant: &str,
    asset: &str,
    attribute: &str,
    operation: Operation,
    grant: bool,
) -> Result<(), ContractError> {
    channel.require_admin(caller)?;
    let (p, a) = resolve_target(channel, participant, asset, attribute)?;
    let record = channel.permissions.entry(&p, &a);
    let extra = record.extra.entry(attribute.to_string()).or_default();
    if grant {
        extra.insert(operation);
    } else {
        extra.remove(operation);
    }
    let label = if grant { "promote" } else { "demote" };
    channel.record(participant, asset, attribute, label, operation.as_str(), "ack");
    Ok(())
}
