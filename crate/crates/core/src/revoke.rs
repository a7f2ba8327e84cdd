//! Permission Revoke List (PRL), the pending-approval queue and the
//! three-way access decision.
//!
//! Decision order: non-members are denied, PRL members are held as pending,
//! everyone else is allowed iff the operation is in `Q ∪ R`.

use serde::{Deserialize, Serialize};

use crate::access::{check_permission, AccessRequest};
use crate::asset::{apply, ExecOutcome};
use crate::error::ContractError;
use crate::ids::Ident;
use crate::ledger::ChannelState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessDecision {
    Allow,
    Deny,
    Pending,
}

impl AccessDecision {
    pub fn as_str(self) -> &'static str {
        match self {
            AccessDecision::Allow => "allow",
            AccessDecision::Deny => "deny",
            AccessDecision::Pending => "pending",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRequest {
    /// Stable handle; survives removal of earlier queue items.
    pub ticket: u64,
    pub request: AccessRequest,
    pub submitted_at: u64,
    pub requestor: Ident,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReviewOutcome {
    /// Approved and permitted by `Q ∪ R`; carries the execution result.
    Executed(ExecOutcome),
    /// Approved, but the privileges do not cover the operation.
    Denied,
    /// Rejected by the admin.
    Dropped,
}

/// The bare decision, without side effects.
pub fn decide(channel: &ChannelState, request: &AccessRequest) -> AccessDecision {
    if !channel.is_member(&request.participant) {
        AccessDecision::Deny
    } else if channel.prl.contains(request.participant.as_str()) {
        AccessDecision::Pending
    } else if check_permission(
        &channel.permissions,
        &request.participant,
        &request.asset,
        &request.attribute,
        request.operation,
    ) {
        AccessDecision::Allow
    } else {
        AccessDecision::Deny
    }
}

/// Decides, counts and enqueues pending requests. Logging is left to the caller.
pub(crate) fn admit(channel: &mut ChannelState, request: &AccessRequest) -> AccessDecision {
    let decision = decide(channel, request);
    match decision {
        AccessDecision::Allow => channel.stats.allows += 1,
        AccessDecision::Deny => channel.stats.denies += 1,
        AccessDecision::Pending => {
            channel.stats.pendings += 1;
            channel.stats.enqueued += 1;
            let ticket = channel.next_ticket;
            channel.next_ticket += 1;
            let requestor = Ident::new(request.participant.as_str()).expect("member ids are valid");
            channel.pending.push_back(PendingRequest {
                ticket,
                request: request.clone(),
                submitted_at: channel.clock(),
                requestor,
            });
        }
    }
    decision
}

/// Decides a request, enqueueing it if pending, and logs the decision.
pub fn check_access(channel: &mut ChannelState, request: &AccessRequest) -> AccessDecision {
    let decision = admit(channel, request);
    channel.record(
        &request.participant,
        &request.asset,
        &request.attribute,
        request.operation.as_str(),
        request.value_str(),
        decision.as_str(),
    );
    decision
}

pub fn add_prl(channel: &mut ChannelState, participant: &str) -> Result<(), ContractError> {
    if !channel.is_member(participant) {
        return Err(ContractError::NotMember(participant.to_string()));
    }
    let id = Ident::new(participant)?;
    channel.prl.insert(id);
    channel.record(participant, "", "", "add_prl", "", "ack");
    Ok(())
}

pub fn remove_prl(
    channel: &mut ChannelState,
    caller: &str,
    participant: &str,
) -> Result<(), ContractError> {
    channel.require_admin(caller)?;
    channel.prl.remove(participant);
    channel.record(participant, "", "", "remove_prl", caller, "ack");
    Ok(())
}

/// Resolves one queued request. Approval lifts the PRL hold for this request
/// only; privileges are re-checked and PRL membership is left unchanged.
pub fn review_pending(
    channel: &mut ChannelState,
    admin: &str,
    ticket: u64,
    verdict: Verdict,
) -> Result<ReviewOutcome, ContractError> {
    channel.require_admin(admin)?;
    let pos = channel
        .pending
        .iter()
        .position(|p| p.ticket == ticket)
        .ok_or(ContractError::BadIndex(ticket))?;
    let request = channel.pending[pos].request.clone();

    let (outcome, decision) = match verdict {
        Verdict::Reject => (ReviewOutcome::Dropped, "rejected"),
        Verdict::Approve => {
            let permitted = check_permission(
                &channel.permissions,
                &request.participant,
                &request.asset,
                &request.attribute,
                request.operation,
            );
            if permitted {
                let result = apply(channel, &request)?;
                let label = match result {
                    ExecOutcome::Value(_) => "approved_value",
                    _ => "approved_ack",
                };
                (ReviewOutcome::Executed(result), label)
            } else {
                (ReviewOutcome::Denied, "approved_deny")
            }
        }
    };
    channel.pending.remove(pos);
    match verdict {
        Verdict::Approve => channel.stats.approved += 1,
        Verdict::Reject => channel.stats.rejected += 1,
    }
    channel.record(
        &request.participant,
        &request.asset,
        &request.attribute,
        request.operation.as_str(),
        request.value_str(),
        decision,
    );
    Ok(outcome)
}

/// Current PRL as a sorted identifier list.
pub fn prl_list(channel: &ChannelState) -> Vec<String> {
    channel.prl.iter().map(|id| id.to_string()).collect()
}

pub fn pending_json(channel: &ChannelState) -> serde_json::Value {
    serde_json::to_value(&channel.pending).expect("pending queue serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::access::set_least;
    use crate::asset::create_asset;
    use crate::ids::{OpSet, Operation, Participant, Role};

    fn channel() -> ChannelState {
        let members = [
            Participant::new("admin", Role::Admin).unwrap(),
            Participant::new("P1", Role::Factory).unwrap(),
            Participant::new("P2", Role::Distributor).unwrap(),
        ];
        let mut ch = ChannelState::create("C1", &members, &["admin"]).unwrap();
        let init = [("qty".to_string(), "100".to_string())].into();
        create_asset(&mut ch, "admin", "A1", &["qty"], init).unwrap();
        let read: OpSet = [Operation::Read].into_iter().collect();
        set_least(&mut ch, "admin", "P2", "A1", "qty", read).unwrap();
        ch
    }

    #[test]
    fn add_and_remove_prl() {
        let mut ch = channel();
        add_prl(&mut ch, "P2").unwrap();
        add_prl(&mut ch, "P2").unwrap();
        assert_eq!(prl_list(&ch), vec!["P2"]);
        assert_eq!(
            add_prl(&mut ch, "P9"),
            Err(ContractError::NotMember("P9".into()))
        );
        assert_eq!(
            remove_prl(&mut ch, "P1", "P2"),
            Err(ContractError::NotAdmin("P1".into()))
        );
        remove_prl(&mut ch, "admin", "P2").unwrap();
        remove_prl(&mut ch, "admin", "P2").unwrap();
        assert!(ch.prl.is_empty());
    }

    #[test]
    fn decision_cases() {
        let mut ch = channel();
        let log_before = ch.log().len();
        assert_eq!(
            check_access(&mut ch, &AccessRequest::read("P2", "A1", "qty")),
            AccessDecision::Allow
        );
        assert_eq!(
            check_access(&mut ch, &AccessRequest::write("P2", "A1", "qty", "1")),
            AccessDecision::Deny
        );
        assert_eq!(
            check_access(&mut ch, &AccessRequest::read("P9", "A1", "qty")),
            AccessDecision::Deny
        );
        add_prl(&mut ch, "P2").unwrap();
        let queued = ch.pending.len();
        assert_eq!(
            check_access(&mut ch, &AccessRequest::read("P2", "A1", "qty")),
            AccessDecision::Pending
        );
        assert_eq!(ch.pending.len(), queued + 1);
        // three checks, one add_prl, one check
        assert_eq!(ch.log().len(), log_before + 5);
    }

    #[test]
    fn review_approve_executes_entitled_read() {
        let mut ch = channel();
        add_prl(&mut ch, "P2").unwrap();
        check_access(&mut ch, &AccessRequest::read("P2", "A1", "qty"));
        let ticket = ch.pending[0].ticket;
        let out = review_pending(&mut ch, "admin", ticket, Verdict::Approve).unwrap();
        assert_eq!(out, ReviewOutcome::Executed(ExecOutcome::Value("100".into())));
        assert!(ch.pending.is_empty());
        assert!(ch.prl.contains("P2"));
    }

    #[test]
    fn review_approve_unprivileged_is_denied() {
        let mut ch = channel();
        add_prl(&mut ch, "P2").unwrap();
        check_access(&mut ch, &AccessRequest::write("P2", "A1", "qty", "5"));
        let ticket = ch.pending[0].ticket;
        let out = review_pending(&mut ch, "admin", ticket, Verdict::Approve).unwrap();
        assert_eq!(out, ReviewOutcome::Denied);
        assert!(ch.pending.is_empty());
        assert_eq!(ch.assets.values().next().unwrap().values["qty"], "100");
        let last = ch.log().entries().last().unwrap().decode().unwrap();
        assert_eq!(last.decision, "approved_deny");
    }

    #[test]
    fn review_reject_and_errors() {
        let mut ch = channel();
        add_prl(&mut ch, "P2").unwrap();
        check_access(&mut ch, &AccessRequest::read("P2", "A1", "qty"));
        check_access(&mut ch, &AccessRequest::read("P2", "A1", "qty"));
        let first = ch.pending[0].ticket;
        let second = ch.pending[1].ticket;
        assert_eq!(
            review_pending(&mut ch, "P1", first, Verdict::Reject),
            Err(ContractError::NotAdmin("P1".into()))
        );
        assert_eq!(
            review_pending(&mut ch, "admin", 99, Verdict::Reject),
            Err(ContractError::BadIndex(99))
        );
        let version = ch.assets.values().next().unwrap().version;
        assert_eq!(
            review_pending(&mut ch, "admin", first, Verdict::Reject).unwrap(),
            ReviewOutcome::Dropped
        );
        // the second ticket is still addressable after the first left
        assert_eq!(ch.pending[0].ticket, second);
        assert_eq!(ch.assets.values().next().unwrap().version, version);
        assert_eq!(
            ch.stats.enqueued,
            ch.stats.approved + ch.stats.rejected + ch.pending.len() as u64
        );
    }
}
