//! Simulated per-channel ledger.
//!
//! Each channel keeps its own membership, asset registry, permission records,
//! revoke list, pending queue and an append-only transaction log. Every log
//! entry commits to its predecessor:
//!
//! ```text
//! entry_0.hash = SHA256(0^32       || payload_0)
//! entry_n.hash = SHA256(entry_{n-1}.hash || payload_n)
//! ```
//!
//! Timestamps are a logical per-channel counter, so identical call sequences
//! produce byte-identical logs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::access::PermissionStore;
use crate::asset::AssetRecord;
use crate::error::ContractError;
use crate::ids::{Ident, Participant, Role, SEPARATOR};
use crate::revoke::PendingRequest;

pub type Digest = [u8; 32];

pub const GENESIS_PREV: Digest = [0u8; 32];

pub fn sha256(parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    let out = hasher.finalize();
    let mut digest = [0u8; 32];
    digest.copy_from_slice(&out);
    digest
}

/// Structured content of one log entry. Empty strings mark absent fields.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LogPayload {
    pub participant: String,
    pub asset: String,
    pub attribute: String,
    pub operation: String,
    pub value: String,
    pub decision: String,
    pub timestamp: u64,
}

impl LogPayload {
    /// Canonical bytes: each field as `<decimal length>:<bytes>`, fields
    /// joined by 0x1F, in declaration order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let ts = self.timestamp.to_string();
        let fields: [&str; 7] = [
            &self.participant,
            &self.asset,
            &self.attribute,
            &self.operation,
            &self.value,
            &self.decision,
            &ts,
        ];
        let mut out = Vec::with_capacity(fields.iter().map(|f| f.len() + 4).sum());
        for (i, field) in fields.iter().enumerate() {
            if i > 0 {
                out.push(SEPARATOR);
            }
            out.extend_from_slice(field.len().to_string().as_bytes());
            out.push(b':');
            out.extend_from_slice(field.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<LogPayload> {
        let mut fields = Vec::with_capacity(7);
        let mut rest = bytes;
        for i in 0..7 {
            if i > 0 {
                let (&sep, tail) = rest.split_first()?;
                if sep != SEPARATOR {
                    return None;
                }
                rest = tail;
            }
            let colon = rest.iter().position(|&b| b == b':')?;
            let len: usize = std::str::from_utf8(&rest[..colon]).ok()?.parse().ok()?;
            let body = rest.get(colon + 1..colon + 1 + len)?;
            fields.push(String::from_utf8(body.to_vec()).ok()?);
            rest = &rest[colon + 1 + len..];
        }
        if !rest.is_empty() {
            return None;
        }
        let timestamp = fields[6].parse().ok()?;
        let mut it = fields.into_iter();
        Some(LogPayload {
            participant: it.next()?,
            asset: it.next()?,
            attribute: it.next()?,
            operation: it.next()?,
            value: it.next()?,
            decision: it.next()?,
            timestamp,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub seq: u64,
    pub prev_hash: Digest,
    pub payload: Vec<u8>,
    pub entry_hash: Digest,
}

impl LogEntry {
    pub fn decode(&self) -> Option<LogPayload> {
        LogPayload::from_bytes(&self.payload)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainStatus {
    Valid,
    CorruptAt(u64),
}

/// Append-only hash chain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TxLog {
    entries: Vec<LogEntry>,
}

#[derive(Serialize, Deserialize)]
struct LogLine {
    seq: u64,
    prev_hash: String,
    payload: String,
    entry_hash: String,
}

impl TxLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, payload: Vec<u8>) -> &LogEntry {
        let prev_hash = self.entries.last().map_or(GENESIS_PREV, |e| e.entry_hash);
        let entry_hash = sha256(&[&prev_hash, &payload]);
        self.entries.push(LogEntry {
            seq: self.entries.len() as u64,
            prev_hash,
            payload,
            entry_hash,
        });
        self.entries.last().expect("just pushed")
    }

    pub fn verify(&self) -> ChainStatus {
        let mut expected_prev = GENESIS_PREV;
        for (i, entry) in self.entries.iter().enumerate() {
            let corrupt = entry.seq != i as u64
                || entry.prev_hash != expected_prev
                || sha256(&[&entry.prev_hash, &entry.payload]) != entry.entry_hash;
            if corrupt {
                return ChainStatus::CorruptAt(i as u64);
            }
            expected_prev = entry.entry_hash;
        }
        ChainStatus::Valid
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    /// Raw access for tamper experiments.
    pub fn entries_mut(&mut self) -> &mut [LogEntry] {
        &mut self.entries
    }

    pub fn truncate(&mut self, len: usize) {
        self.entries.truncate(len);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn head(&self) -> Digest {
        self.entries.last().map_or(GENESIS_PREV, |e| e.entry_hash)
    }

    /// One JSON object per line, hashes and payload lowercase hex.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            let line = LogLine {
                seq: e.seq,
                prev_hash: hex::encode(e.prev_hash),
                payload: hex::encode(&e.payload),
                entry_hash: hex::encode(e.entry_hash),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Loads entries as stored; call [`TxLog::verify`] to check them.
    pub fn read_jsonl<R: BufRead>(input: R) -> std::io::Result<TxLog> {
        fn bad(e: impl std::fmt::Display) -> std::io::Error {
            std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string())
        }
        fn digest(s: &str) -> std::io::Result<Digest> {
            let bytes = hex::decode(s).map_err(bad)?;
            bytes.try_into().map_err(|_| bad("digest is not 32 bytes"))
        }
        let mut entries = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: LogLine = serde_json::from_str(&line).map_err(bad)?;
            entries.push(LogEntry {
                seq: raw.seq,
                prev_hash: digest(&raw.prev_hash)?,
                payload: hex::decode(&raw.payload).map_err(bad)?,
                entry_hash: digest(&raw.entry_hash)?,
            });
        }
        Ok(TxLog { entries })
    }
}

/// Counters every contract call updates on its own channel only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractStats {
    pub allows: u64,
    pub denies: u64,
    pub pendings: u64,
    pub mutations: u64,
    pub enqueued: u64,
    pub approved: u64,
    pub rejected: u64,
}

#[derive(Debug, Clone)]
pub struct ChannelState {
    pub channel_id: Ident,
    pub participants: BTreeMap<Ident, Role>,
    pub admins: BTreeSet<Ident>,
    pub assets: BTreeMap<Ident, AssetRecord>,
    pub permissions: PermissionStore,
    pub prl: BTreeSet<Ident>,
    pub pending: VecDeque<PendingRequest>,
    pub stats: ContractStats,
    pub(crate) next_ticket: u64,
    clock: u64,
    log: TxLog,
}

impl ChannelState {
    pub fn create(
        channel_id: &str,
        participants: &[Participant],
        admins: &[&str],
    ) -> Result<Self, ContractError> {
        let channel_id = Ident::new(channel_id)?;
        let mut members = BTreeMap::new();
        for p in participants {
            if members.insert(p.id.clone(), p.role).is_some() {
                return Err(ContractError::DuplicateParticipant(p.id.to_string()));
            }
        }
        if admins.is_empty() {
            return Err(ContractError::EmptyAdmins);
        }
        let mut admin_set = BTreeSet::new();
        for a in admins {
            let id = Ident::new(*a)?;
            if !members.contains_key(&id) {
                return Err(ContractError::AdminNotMember(id.to_string()));
            }
            admin_set.insert(id);
        }
        Ok(ChannelState {
            channel_id,
            participants: members,
            admins: admin_set,
            assets: BTreeMap::new(),
            permissions: PermissionStore::default(),
            prl: BTreeSet::new(),
            pending: VecDeque::new(),
            stats: ContractStats::default(),
            next_ticket: 0,
            clock: 0,
            log: TxLog::new(),
        })
    }

    pub fn is_member(&self, id: &str) -> bool {
        self.participants.contains_key(id)
    }

    pub fn is_admin(&self, id: &str) -> bool {
        self.admins.contains(id)
    }

    pub fn role_of(&self, id: &str) -> Option<Role> {
        self.participants.get(id).copied()
    }

    pub(crate) fn require_admin(&self, caller: &str) -> Result<(), ContractError> {
        if self.is_admin(caller) {
            Ok(())
        } else {
            Err(ContractError::NotAdmin(caller.to_string()))
        }
    }

    /// Logical time of the next event.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub(crate) fn tick(&mut self) -> u64 {
        let now = self.clock;
        self.clock += 1;
        now
    }

    pub fn append_log(&mut self, payload: &LogPayload) -> &LogEntry {
        self.log.append(payload.to_bytes())
    }

    pub(crate) fn record(
        &mut self,
        participant: &str,
        asset: &str,
        attribute: &str,
        operation: &str,
        value: &str,
        decision: &str,
    ) {
        let timestamp = self.tick();
        let payload = LogPayload {
            participant: participant.to_string(),
            asset: asset.to_string(),
            attribute: attribute.to_string(),
            operation: operation.to_string(),
            value: value.to_string(),
            decision: decision.to_string(),
            timestamp,
        };
        self.append_log(&payload);
    }

    pub fn log(&self) -> &TxLog {
        &self.log
    }

    pub fn log_mut(&mut self) -> &mut TxLog {
        &mut self.log
    }

    pub fn verify_chain(&self) -> ChainStatus {
        self.log.verify()
    }

    /// JSON snapshot of everything except the log.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "channel_id": self.channel_id,
            "participants": self.participants,
            "admins": self.admins,
            "assets": self.assets,
            "permissions": self.permissions.export(),
            "prl": self.prl,
            "pending": self.pending,
            "stats": self.stats,
            "clock": self.clock,
            "log_len": self.log.len(),
            "log_head": hex::encode(self.log.head()),
        })
    }
}
