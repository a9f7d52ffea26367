use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::{ScenarioConfig, ScenarioError};
use crate::blindsig::BlindKeyPair;
use crate::codec::hex_int;
use crate::credentials::{AttributeId, AttributeKeyDirectory, CredentialSelector, Serial, Wallet};
use crate::services::{
    all_pairs, full_gossip_round, CitizenSession, IssueResponse, IssuerNode, PresentationResult, RejectReason,
    RelyingPartyNode,
};
use crate::transcript::Transcript;

pub const TAX_OFFICE: &str = "tax-office";
pub const TRANSIT_ATTRIBUTE: &str = "taxpayer:region-X";
const PUBLIC_EXPONENT: u64 = 3;

/// The tax office's default key set: one key per region attribute, drawn from
/// `seed`. The first key is the one the transit scenario uses.
pub fn tax_office_keys(seed: u64, bits: u64) -> Result<Vec<BlindKeyPair>, ScenarioError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut keys: Vec<BlindKeyPair> = Vec::new();
    for attribute in [TRANSIT_ATTRIBUTE, "taxpayer:region-Y"] {
        loop {
            let key = BlindKeyPair::generate(bits, PUBLIC_EXPONENT, attribute, &mut rng)?;
            if keys.iter().all(|k| k.public().modulus() != key.public().modulus()) {
                keys.push(key);
                break;
            }
        }
    }
    Ok(keys)
}

/// What actually happened to one credential; never visible to the nodes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CredentialTrace {
    pub citizen: usize,
    pub serial: Serial,
    #[serde(with = "hex_int")]
    pub blinded_value: BigUint,
    pub issued_at: u64,
    pub presented_at: u64,
    pub relying_party: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReplayTrace {
    pub citizen: usize,
    pub serial: Serial,
    pub original_relying_party: String,
    pub replay_relying_party: String,
    pub at: u64,
    pub outcome: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TransitGroundTruth {
    pub credentials: Vec<CredentialTrace>,
    pub replays: Vec<ReplayTrace>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SimulationReport {
    pub config: ScenarioConfig,
    pub issued: usize,
    pub issuance_denials: usize,
    pub presentations_attempted: usize,
    pub accepts: usize,
    pub double_spend_rejects: usize,
    pub bad_signature_rejects: usize,
    pub unknown_attribute_rejects: usize,
    pub ground_truth: TransitGroundTruth,
    /// Issuer first, then relying parties in index order.
    #[serde(skip)]
    pub transcripts: Vec<Transcript>,
    #[serde(skip)]
    pub directory: AttributeKeyDirectory,
}

impl SimulationReport {
    pub fn rejects(&self) -> usize {
        self.double_spend_rejects + self.bad_signature_rejects + self.unknown_attribute_rejects
    }

    /// Pretty canonical JSON with sorted keys and a trailing newline.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        serde_json::to_string_pretty(&value).expect("json value serializes") + "\n"
    }

    fn tally(&mut self, result: PresentationResult) {
        self.presentations_attempted += 1;
        match result {
            PresentationResult::Accept => self.accepts += 1,
            PresentationResult::Reject(RejectReason::DoubleSpend) => self.double_spend_rejects += 1,
            PresentationResult::Reject(RejectReason::BadSignature) => self.bad_signature_rejects += 1,
            PresentationResult::Reject(RejectReason::UnknownAttribute) => self.unknown_attribute_rejects += 1,
        }
    }
}

struct Scheduler {
    clock: u64,
    presentations: usize,
    gossip_every: usize,
    pairs: Vec<(usize, usize)>,
}

impl Scheduler {
    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn after_presentation(&mut self, rps: &mut [RelyingPartyNode]) -> Result<(), ScenarioError> {
        self.presentations += 1;
        if self.gossip_every > 0 && self.presentations % self.gossip_every == 0 && rps.len() > 1 {
            let now = self.tick();
            full_gossip_round(rps, &self.pairs, now)?;
        }
        Ok(())
    }
}

/// Regional taxpayers obtain blind-signed fare-discount credentials from the
/// tax office and spend each once at a randomly chosen transit operator.
/// Cheaters then replay one of their spent presentations.
pub fn run_transit_scenario(config: &ScenarioConfig) -> Result<SimulationReport, ScenarioError> {
    config.validate_transit()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let attribute = AttributeId::new(TRANSIT_ATTRIBUTE).expect("non-empty");

    let key = BlindKeyPair::generate(config.key_bits, PUBLIC_EXPONENT, TRANSIT_ATTRIBUTE, &mut rng)?;
    let mut issuer = IssuerNode::new(TAX_OFFICE, Box::new(|_: &CitizenSession, _: &AttributeId| true))
        .with_quota(config.issuance_quota);
    issuer.add_key(key)?;
    let mut directory = AttributeKeyDirectory::new();
    issuer.publish(&mut directory)?;

    let mut rps: Vec<RelyingPartyNode> = (0..config.relying_parties)
        .map(|j| RelyingPartyNode::new(format!("transit-{j}"), attribute.clone(), TAX_OFFICE, directory.clone()))
        .collect();
    let names: Vec<String> = rps.iter().map(|rp| rp.name().to_owned()).collect();
    for (j, rp) in rps.iter_mut().enumerate() {
        for (k, peer) in names.iter().enumerate() {
            if k != j {
                rp.add_peer(peer.clone());
            }
        }
    }
    let mut wallets: Vec<Wallet> = (0..config.citizens).map(|_| Wallet::new(rng.next_u64())).collect();

    let mut report = SimulationReport {
        config: config.clone(),
        issued: 0,
        issuance_denials: 0,
        presentations_attempted: 0,
        accepts: 0,
        double_spend_rejects: 0,
        bad_signature_rejects: 0,
        unknown_attribute_rejects: 0,
        ground_truth: TransitGroundTruth::default(),
        transcripts: Vec::new(),
        directory: directory.clone(),
    };
    let mut scheduler = Scheduler {
        clock: 0,
        presentations: 0,
        gossip_every: config.gossip_every,
        pairs: all_pairs(rps.len()),
    };

    // Issuance, in a shuffled order across citizens.
    let mut requests: Vec<usize> = (0..config.citizens)
        .flat_map(|c| std::iter::repeat_n(c, config.credentials_per_citizen))
        .collect();
    requests.shuffle(&mut rng);
    let mut traces: Vec<CredentialTrace> = Vec::new();
    for citizen in requests {
        let now = scheduler.tick();
        let wallet = &mut wallets[citizen];
        let (request, pending) = wallet.create_issue_request(TAX_OFFICE, &attribute, &directory)?;
        let session = CitizenSession(format!("citizen-{citizen}"));
        match issuer.handle_issue_request(&session, &request, now) {
            IssueResponse::Granted { blinded_signature, .. } => {
                let credential = wallet.finalize_credential(&pending, &blinded_signature)?;
                report.issued += 1;
                traces.push(CredentialTrace {
                    citizen,
                    serial: *credential.serial(),
                    blinded_value: request.blinded_value,
                    issued_at: now,
                    presented_at: 0,
                    relying_party: String::new(),
                });
            }
            IssueResponse::Denied { .. } => report.issuance_denials += 1,
        }
    }

    // Each credential is presented once, at a uniformly chosen operator.
    let mut order: Vec<usize> = (0..traces.len()).collect();
    order.shuffle(&mut rng);
    for index in order {
        let trace = &mut traces[index];
        let rp = rng.gen_range(0..rps.len());
        let presentation = wallets[trace.citizen].take_for_presentation(&CredentialSelector::Serial(trace.serial))?;
        let now = scheduler.tick();
        let result = rps[rp].handle_presentation(&presentation, now);
        report.tally(result);
        trace.presented_at = now;
        trace.relying_party = rps[rp].name().to_owned();
        scheduler.after_presentation(&mut rps)?;
    }

    // Replays of the earliest presentation each cheater made.
    for citizen in 0..config.cheaters {
        let Some(original) = traces
            .iter()
            .filter(|t| t.citizen == citizen)
            .min_by_key(|t| t.presented_at)
        else {
            continue;
        };
        let credential = wallets[citizen]
            .credentials()
            .iter()
            .find(|c| c.serial() == &original.serial)
            .expect("presented credential stays in the wallet");
        let presentation = crate::credentials::Presentation {
            attribute_id: credential.attribute_id().clone(),
            serial: *credential.serial(),
            signature: credential.signature().clone(),
        };
        let rp = rng.gen_range(0..rps.len());
        let now = scheduler.tick();
        let result = rps[rp].handle_presentation(&presentation, now);
        report.tally(result);
        report.ground_truth.replays.push(ReplayTrace {
            citizen,
            serial: original.serial,
            original_relying_party: original.relying_party.clone(),
            replay_relying_party: rps[rp].name().to_owned(),
            at: now,
            outcome: result.label().to_owned(),
        });
        scheduler.after_presentation(&mut rps)?;
    }

    report.ground_truth.credentials = traces;
    report.transcripts.push(issuer.transcript().clone());
    report.transcripts.extend(rps.iter().map(|rp| rp.transcript().clone()));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(citizens: usize, cheaters: usize, gossip_every: usize, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            seed,
            citizens,
            relying_parties: 2,
            credentials_per_citizen: 3,
            cheaters,
            gossip_every,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn honest_run_accepts_everything() {
        let report = run_transit_scenario(&config(10, 0, 1, 1)).unwrap();
        assert_eq!(report.issued, 30);
        assert_eq!(report.accepts, 30);
        assert_eq!(report.double_spend_rejects, 0);
        assert_eq!(report.presentations_attempted, 30);
        assert_eq!(report.transcripts.len(), 3);
    }

    #[test]
    fn empty_run() {
        let report = run_transit_scenario(&config(0, 0, 1, 1)).unwrap();
        assert_eq!(report.accepts, 0);
        assert_eq!(report.presentations_attempted, 0);
    }

    #[test]
    fn replays_rejected_with_eager_gossip() {
        let report = run_transit_scenario(&config(10, 2, 1, 1)).unwrap();
        assert_eq!(report.double_spend_rejects, 2);
        assert_eq!(report.accepts, 30);
        assert_eq!(report.accepts + report.rejects(), report.presentations_attempted);
    }

    #[test]
    fn quota_limits_issuance() {
        let cfg = ScenarioConfig {
            credentials_per_citizen: 5,
            ..config(4, 0, 1, 3)
        };
        let report = run_transit_scenario(&cfg).unwrap();
        assert_eq!(report.issued, 12);
        assert_eq!(report.issuance_denials, 8);
        assert_eq!(report.accepts, 12);
    }

    #[test]
    fn deterministic() {
        let a = run_transit_scenario(&config(6, 2, 0, 42)).unwrap();
        let b = run_transit_scenario(&config(6, 2, 0, 42)).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.transcripts, b.transcripts);
    }

    #[test]
    fn two_default_keys_have_distinct_moduli() {
        let keys = tax_office_keys(0, 16).unwrap();
        assert_eq!(keys.len(), 2);
        assert_ne!(keys[0].public().modulus(), keys[1].public().modulus());
    }
}
