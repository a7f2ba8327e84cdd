//! Channel-scoped access control for supply-chain ledgers, with per-channel
//! behavioral anomaly agents, coalition-scoped federated averaging and
//! SCC-based coalition formation.

pub mod access;
pub mod anomaly;
pub mod asset;
pub mod coalition;
pub mod error;
pub mod fed;
pub mod harness;
pub mod ids;
pub mod ledger;
pub mod par;
pub mod report;
pub mod revoke;
pub mod scenario;
pub mod verify;

pub use error::{
    CoalitionError, ContractError, FedError, HarnessError, ModelError, ScenarioError,
};
