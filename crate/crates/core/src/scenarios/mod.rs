//! Deterministic multi-agent runs of the two demonstration settings: discounted
//! transit fares for regional taxpayers, and decentralized exposure
//! notification with rotating single-use proximity tokens.
//!
//! A run is a pure function of its [`ScenarioConfig`]: the scheduler draws every
//! random choice from one seeded stream and applies events in a single total
//! order.

pub mod tracing;
pub mod transit;

pub use tracing::{
    match_exposures, rotate_ephemeral_id, run_contact_tracing_scenario, simulate_tracing, BulletinBoard,
    EphemeralToken, ExposureReport, HeardToken, ProximityEvent, TracingSetup, DEFAULT_WINDOW,
};
pub use transit::{run_transit_scenario, tax_office_keys, SimulationReport, TAX_OFFICE, TRANSIT_ATTRIBUTE};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("heard-token list is not sorted by epoch")]
    UnsortedInput,
    #[error(transparent)]
    BlindSig(#[from] crate::blindsig::BlindSigError),
    #[error(transparent)]
    Credential(#[from] crate::credentials::CredentialError),
    #[error(transparent)]
    Service(#[from] crate::services::ServiceError),
}

/// Scenario parameters. Every field has a default, so a config file may list
/// only what it changes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Citizens in the transit run; agents in the tracing run.
    pub citizens: usize,
    pub relying_parties: usize,
    pub credentials_per_citizen: usize,
    /// Citizens who replay one already-presented credential.
    pub cheaters: usize,
    pub key_bits: u64,
    /// Full gossip round after this many presentations; 0 disables gossip.
    pub gossip_every: usize,
    pub issuance_quota: u32,
    pub epochs: u64,
    /// Contacts sampled per epoch.
    pub proximity_events: usize,
    pub infected: usize,
    pub window: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            citizens: 10,
            relying_parties: 2,
            credentials_per_citizen: 3,
            cheaters: 0,
            key_bits: 16,
            gossip_every: 1,
            issuance_quota: crate::services::DEFAULT_QUOTA,
            epochs: 28,
            proximity_events: 20,
            infected: 1,
            window: DEFAULT_WINDOW,
        }
    }
}

impl ScenarioConfig {
    pub fn validate_transit(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: &str| Err(ScenarioError::InvalidConfig(msg.to_owned()));
        if self.cheaters > self.citizens {
            return invalid("more cheaters than citizens");
        }
        if self.citizens > 0 && self.credentials_per_citizen > 0 && self.relying_parties == 0 {
            return invalid("credentials to present but no relying party");
        }
        if self.cheaters > 0 && self.credentials_per_citizen == 0 {
            return invalid("cheaters need at least one credential to replay");
        }
        if self.key_bits < 16 || self.key_bits % 2 != 0 || self.key_bits > 4096 {
            return invalid("key_bits must be even and within [16, 4096]");
        }
        Ok(())
    }

    pub fn validate_tracing(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: &str| Err(ScenarioError::InvalidConfig(msg.to_owned()));
        if self.infected > self.citizens {
            return invalid("more infected agents than agents");
        }
        if self.proximity_events > 0 && self.epochs > 0 && self.citizens < 2 {
            return invalid("contacts need at least two agents");
        }
        Ok(())
    }
}
