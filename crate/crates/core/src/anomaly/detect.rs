//! Threshold calibration and participant flagging.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::anomaly::features::EventWindow;
use crate::anomaly::model::{score, ModelParams};
use crate::error::{ContractError, ModelError};
use crate::ledger::ChannelState;
use crate::revoke::add_prl;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Window length `T`.
    pub window: usize,
    pub features: usize,
    pub hidden: usize,
    pub batch_size: usize,
    /// Percentile of normal validation scores used as `τ`.
    pub tau_percentile: f64,
    /// Consecutive over-threshold events before a participant is flagged.
    pub flag_policy: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            window: 10,
            features: crate::anomaly::features::FEATURE_DIM,
            hidden: 32,
            batch_size: 32,
            tau_percentile: 99.0,
            flag_policy: 1,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.window < 1 {
            return bad("window length must be at least 1");
        }
        if self.features != crate::anomaly::features::FEATURE_DIM {
            return bad("feature dimension is fixed by the event schema");
        }
        if self.hidden < 1 || self.batch_size < 1 {
            return bad("hidden width and batch size must be positive");
        }
        if !(self.tau_percentile > 50.0 && self.tau_percentile < 100.0) {
            return bad("tau percentile must lie in (50, 100)");
        }
        if self.flag_policy < 1 {
            return bad("flag policy must be at least 1");
        }
        Ok(())
    }

    pub fn dims(&self) -> crate::anomaly::model::ModelDims {
        crate::anomaly::model::ModelDims {
            window: self.window,
            features: self.features,
            hidden: self.hidden,
        }
    }
}

/// Nearest-rank percentile: the value at rank `⌈p/100 · n⌉` (1-based).
pub fn nearest_rank(values: &[f64], percentile: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((percentile / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// `τ` from scores of normal-only validation windows.
pub fn calibrate_tau(
    params: &ModelParams,
    validation: &[EventWindow],
    percentile: f64,
) -> Result<f64, ModelError> {
    if validation.is_empty() {
        return Err(ModelError::EmptyValidation);
    }
    let scores = validation
        .iter()
        .map(|w| score(params, w))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(nearest_rank(&scores, percentile).expect("non-empty"))
}

/// Streaming flagger: an actor is flagged on its `k`-th consecutive event
/// scoring above `τ`.
#[derive(Debug, Clone)]
pub struct Monitor {
    tau: f64,
    k: usize,
    streaks: BTreeMap<String, usize>,
}

impl Monitor {
    pub fn new(tau: f64, k: usize) -> Self {
        Monitor {
            tau,
            k: k.max(1),
            streaks: BTreeMap::new(),
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Returns true when this event completes a flagging streak.
    pub fn observe(&mut self, actor: &str, score: f64) -> bool {
        let streak = self.streaks.entry(actor.to_string()).or_insert(0);
        if score > self.tau {
            *streak += 1;
            if *streak == self.k {
                return true;
            }
        } else {
            *streak = 0;
        }
        false
    }
}

#[derive(Debug)]
pub enum MonitorError {
    Model(ModelError),
    Contract(ContractError),
}

impl From<ModelError> for MonitorError {
    fn from(e: ModelError) -> Self {
        MonitorError::Model(e)
    }
}

impl From<ContractError> for MonitorError {
    fn from(e: ContractError) -> Self {
        MonitorError::Contract(e)
    }
}

impl std::fmt::Display for MonitorError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MonitorError::Model(e) => write!(f, "{e}"),
            MonitorError::Contract(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for MonitorError {}

/// Scores a channel's windows in order and puts flagged actors on the PRL.
pub fn monitor(
    channel: &mut ChannelState,
    params: &ModelParams,
    tau: f64,
    flag_policy: usize,
    windows: &[EventWindow],
) -> Result<BTreeSet<String>, MonitorError> {
    let mut m = Monitor::new(tau, flag_policy);
    let mut flagged = BTreeSet::new();
    for w in windows {
        let s = score(params, w)?;
        if m.observe(&w.actor, s) {
            add_prl(channel, &w.actor)?;
            flagged.insert(w.actor.clone());
        }
    }
    Ok(flagged)
}
