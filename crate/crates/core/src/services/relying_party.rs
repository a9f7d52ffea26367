use serde_json::json;

use super::spent::SpentSet;
use super::wire::{GossipDigest, PresentationResult, RejectReason, WireMessage};
use super::ServiceError;
use crate::blindsig;
use crate::credentials::{AttributeId, AttributeKeyDirectory, Presentation};
use crate::transcript::{kind, Transcript};

/// A service that accepts single-use credentials for one attribute, trusting
/// one issuer's key for it. It never learns anything about the holder beyond
/// the attribute.
#[derive(Clone, Debug)]
pub struct RelyingPartyNode {
    name: String,
    attribute: AttributeId,
    trusted_issuer: String,
    directory: AttributeKeyDirectory,
    spent: SpentSet,
    peers: Vec<String>,
    transcript: Transcript,
}

impl RelyingPartyNode {
    pub fn new(
        name: impl Into<String>,
        attribute: AttributeId,
        trusted_issuer: impl Into<String>,
        directory: AttributeKeyDirectory,
    ) -> Self {
        let name = name.into();
        Self {
            transcript: Transcript::new(name.clone()),
            name,
            attribute,
            trusted_issuer: trusted_issuer.into(),
            directory,
            spent: SpentSet::new(),
            peers: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn attribute(&self) -> &AttributeId {
        &self.attribute
    }

    pub fn spent(&self) -> &SpentSet {
        &self.spent
    }

    pub fn peers(&self) -> &[String] {
        &self.peers
    }

    pub fn add_peer(&mut self, peer: impl Into<String>) {
        let peer = peer.into();
        if !self.peers.contains(&peer) {
            self.peers.push(peer);
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    /// Accepts iff the key is known, the signature verifies, and the serial is
    /// new here. The spent check and insert happen in one step under `&mut`.
    pub fn handle_presentation(&mut self, pres: &Presentation, now: u64) -> PresentationResult {
        let result = self.check(pres);
        self.transcript.append(
            now,
            kind::PRESENTATION,
            [
                ("attribute_id", json!(pres.attribute_id.as_str())),
                ("serial", json!(pres.serial.to_hex())),
                ("outcome", json!(result.label())),
            ],
        );
        result
    }

    fn check(&mut self, pres: &Presentation) -> PresentationResult {
        let key = match self.directory.lookup(&self.trusted_issuer, &pres.attribute_id) {
            Ok(key) if pres.attribute_id == self.attribute => key,
            _ => return PresentationResult::Reject(RejectReason::UnknownAttribute),
        };
        let valid = blindsig::full_domain_hash(pres.serial.as_bytes(), key)
            .map(|m| blindsig::verify(&m, &pres.signature, key))
            .unwrap_or(false);
        if !valid {
            return PresentationResult::Reject(RejectReason::BadSignature);
        }
        if !self.spent.insert(pres.serial) {
            return PresentationResult::Reject(RejectReason::DoubleSpend);
        }
        PresentationResult::Accept
    }

    pub fn handle_message(&mut self, bytes: &[u8], now: u64) -> Result<Vec<u8>, ServiceError> {
        match WireMessage::decode(bytes)? {
            WireMessage::Presentation(p) => Ok(WireMessage::Result(self.handle_presentation(&p, now)).encode()),
            other => Err(ServiceError::UnexpectedKind(other.kind())),
        }
    }

    pub fn gossip_digest(&self) -> GossipDigest {
        GossipDigest {
            attribute_id: self.attribute.clone(),
            serials: self.spent.iter().copied().collect(),
        }
    }

    /// Merges a peer's spent serials. Digests for another attribute are
    /// refused: spent-sets of different services stay separate.
    pub fn receive_gossip(&mut self, from: &str, digest: &GossipDigest, now: u64) -> Result<usize, ServiceError> {
        if digest.attribute_id != self.attribute {
            return Err(ServiceError::CrossAttributeGossip {
                local: self.attribute.clone(),
                remote: digest.attribute_id.clone(),
            });
        }
        let added = self.spent.merge(&digest.serials);
        self.transcript.append(
            now,
            kind::GOSSIP,
            [
                ("attribute_id", json!(self.attribute.as_str())),
                ("peer", json!(from)),
                ("added", json!(added)),
            ],
        );
        Ok(added)
    }
}
