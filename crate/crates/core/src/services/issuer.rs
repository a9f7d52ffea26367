use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde_json::json;

use super::wire::{DenialReason, IssueResponse, WireMessage};
use super::ServiceError;
use crate::blindsig::{self, BlindKeyPair};
use crate::credentials::{AttributeId, AttributeKeyDirectory, IssueRequest};
use crate::transcript::{kind, Transcript};

/// Default number of credentials one session may obtain per attribute and
/// period.
pub const DEFAULT_QUOTA: u32 = 3;

/// An authenticated citizen at the issuer, e.g. a tax-portal login. The issuer
/// knows who it is talking to; the blinding keeps that knowledge from
/// following the credential.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CitizenSession(pub String);

pub type Eligibility = Box<dyn Fn(&CitizenSession, &AttributeId) -> bool + Send + Sync>;

pub struct IssuerNode {
    name: String,
    keys: BTreeMap<AttributeId, BlindKeyPair>,
    eligibility: Eligibility,
    quota: u32,
    period: u64,
    issued: HashMap<(CitizenSession, AttributeId, u64), u32>,
    transcript: Transcript,
}

impl fmt::Debug for IssuerNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IssuerNode")
            .field("name", &self.name)
            .field("attributes", &self.keys.keys().collect::<Vec<_>>())
            .field("quota", &self.quota)
            .field("period", &self.period)
            .finish_non_exhaustive()
    }
}

impl IssuerNode {
    pub fn new(name: impl Into<String>, eligibility: Eligibility) -> Self {
        let name = name.into();
        Self {
            transcript: Transcript::new(name.clone()),
            name,
            keys: BTreeMap::new(),
            eligibility,
            quota: DEFAULT_QUOTA,
            period: 0,
            issued: HashMap::new(),
        }
    }

    pub fn with_quota(mut self, quota: u32) -> Self {
        self.quota = quota;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    /// Starts a new quota period.
    pub fn set_period(&mut self, period: u64) {
        self.period = period;
    }

    /// Installs the signing key for the attribute named by the key's label.
    pub fn add_key(&mut self, key: BlindKeyPair) -> Result<(), ServiceError> {
        let attribute = AttributeId::new(key.attribute_id()).expect("keys carry a non-empty label");
        if self
            .keys
            .iter()
            .any(|(a, k)| a != &attribute && k.public().modulus() == key.public().modulus())
        {
            return Err(ServiceError::SharedModulus(attribute));
        }
        self.keys.insert(attribute, key);
        Ok(())
    }

    pub fn key(&self, attribute: &AttributeId) -> Option<&BlindKeyPair> {
        self.keys.get(attribute)
    }

    /// Publishes every public key under this issuer's name.
    pub fn publish(&self, directory: &mut AttributeKeyDirectory) -> Result<(), ServiceError> {
        for (attribute, key) in &self.keys {
            directory.publish(&self.name, attribute, key.public().clone())?;
        }
        Ok(())
    }

    /// Signs a blinded value if the session is eligible and under quota.
    /// Checks run in the order: attribute, eligibility, range, quota.
    pub fn handle_issue_request(&mut self, session: &CitizenSession, req: &IssueRequest, now: u64) -> IssueResponse {
        let attribute = &req.attribute_id;
        let outcome = match self.keys.get(attribute) {
            None => Err(DenialReason::UnknownAttribute),
            Some(_) if !(self.eligibility)(session, attribute) => Err(DenialReason::NotEligible),
            Some(key) => match blindsig::sign_blinded(&req.blinded_value, key) {
                Err(_) => Err(DenialReason::OutOfRange),
                Ok(signature) => {
                    let count = self
                        .issued
                        .entry((session.clone(), attribute.clone(), self.period))
                        .or_insert(0);
                    if *count >= self.quota {
                        Err(DenialReason::QuotaExceeded)
                    } else {
                        *count += 1;
                        Ok(signature)
                    }
                }
            },
        };
        match outcome {
            Ok(blinded_signature) => {
                self.transcript.append(
                    now,
                    kind::ISSUANCE,
                    [
                        ("attribute_id", json!(attribute.as_str())),
                        ("blinded_value", json!(crate::codec::int_to_hex(&req.blinded_value))),
                    ],
                );
                IssueResponse::Granted {
                    attribute_id: attribute.clone(),
                    blinded_signature,
                }
            }
            Err(reason) => {
                self.transcript.append(
                    now,
                    kind::ISSUANCE_DENIED,
                    [
                        ("attribute_id", json!(attribute.as_str())),
                        ("reason", serde_json::to_value(reason).expect("reason serializes")),
                    ],
                );
                IssueResponse::Denied {
                    attribute_id: attribute.clone(),
                    reason,
                }
            }
        }
    }

    /// Wire-level entry point: one encoded ISSUE_REQUEST in, one encoded
    /// ISSUE_RESPONSE out.
    pub fn handle_message(&mut self, session: &CitizenSession, bytes: &[u8], now: u64) -> Result<Vec<u8>, ServiceError> {
        match WireMessage::decode(bytes)? {
            WireMessage::IssueRequest(req) => {
                let response = self.handle_issue_request(session, &req, now);
                Ok(WireMessage::IssueResponse(response).encode())
            }
            other => Err(ServiceError::UnexpectedKind(other.kind())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blindsig::keygen;
    use num_bigint::BigUint;

    fn attr() -> AttributeId {
        AttributeId::new("taxpayer:region-X").unwrap()
    }

    fn toy_issuer() -> IssuerNode {
        let mut issuer = IssuerNode::new("tax", Box::new(|s: &CitizenSession, _: &AttributeId| s.0 != "mallory"));
        let key = keygen(&BigUint::from(5u32), &BigUint::from(11u32), &BigUint::from(3u32), "taxpayer:region-X").unwrap();
        issuer.add_key(key).unwrap();
        issuer
    }

    fn request(b: u32) -> IssueRequest {
        IssueRequest {
            attribute_id: attr(),
            blinded_value: BigUint::from(b),
        }
    }

    fn alice() -> CitizenSession {
        CitizenSession("alice".into())
    }

    #[test]
    fn signs_for_eligible_session() {
        let mut issuer = toy_issuer();
        assert_eq!(
            issuer.handle_issue_request(&alice(), &request(9), 1),
            IssueResponse::Granted {
                attribute_id: attr(),
                blinded_signature: BigUint::from(4u32)
            }
        );
        let event = &issuer.transcript().events()[0];
        assert_eq!(event.kind, kind::ISSUANCE);
        assert_eq!(event.field("blinded_value"), Some("9"));
        let fields: Vec<_> = event.payload.keys().map(String::as_str).collect();
        assert_eq!(fields, ["attribute_id", "blinded_value"]);
    }

    #[test]
    fn denials() {
        let mut issuer = toy_issuer();
        let denied = |r| IssueResponse::Denied {
            attribute_id: attr(),
            reason: r,
        };
        assert_eq!(
            issuer.handle_issue_request(&CitizenSession("mallory".into()), &request(9), 0),
            denied(DenialReason::NotEligible)
        );
        assert_eq!(issuer.handle_issue_request(&alice(), &request(0), 0), denied(DenialReason::OutOfRange));
        let other = IssueRequest {
            attribute_id: AttributeId::new("resident").unwrap(),
            blinded_value: BigUint::from(9u32),
        };
        assert!(matches!(
            issuer.handle_issue_request(&alice(), &other, 0),
            IssueResponse::Denied {
                reason: DenialReason::UnknownAttribute,
                ..
            }
        ));
    }

    #[test]
    fn quota_per_period() {
        let mut issuer = toy_issuer().with_quota(2);
        for _ in 0..2 {
            assert!(matches!(
                issuer.handle_issue_request(&alice(), &request(9), 0),
                IssueResponse::Granted { .. }
            ));
        }
        assert_eq!(
            issuer.handle_issue_request(&alice(), &request(9), 0),
            IssueResponse::Denied {
                attribute_id: attr(),
                reason: DenialReason::QuotaExceeded
            }
        );
        // Other sessions have their own budget.
        assert!(matches!(
            issuer.handle_issue_request(&CitizenSession("bob".into()), &request(9), 0),
            IssueResponse::Granted { .. }
        ));
        issuer.set_period(1);
        assert!(matches!(
            issuer.handle_issue_request(&alice(), &request(9), 0),
            IssueResponse::Granted { .. }
        ));
    }

    #[test]
    fn default_quota_is_three() {
        let mut issuer = toy_issuer();
        let granted = (0..4)
            .filter(|_| matches!(issuer.handle_issue_request(&alice(), &request(9), 0), IssueResponse::Granted { .. }))
            .count();
        assert_eq!(granted, 3);
    }

    #[test]
    fn wire_entry_point() {
        let mut issuer = toy_issuer();
        let bytes = WireMessage::IssueRequest(request(9)).encode();
        let response = issuer.handle_message(&alice(), &bytes, 0).unwrap();
        assert_eq!(
            String::from_utf8(response).unwrap(),
            r#"{"body":{"attribute_id":"taxpayer:region-X","blinded_signature":"4"},"kind":"ISSUE_RESPONSE"}"#
        );
        let result = WireMessage::Result(super::super::wire::PresentationResult::Accept).encode();
        assert!(matches!(
            issuer.handle_message(&alice(), &result, 0),
            Err(ServiceError::UnexpectedKind(_))
        ));
    }

    #[test]
    fn rejects_shared_modulus_across_attributes() {
        let mut issuer = toy_issuer();
        let dup = keygen(&BigUint::from(5u32), &BigUint::from(11u32), &BigUint::from(3u32), "other").unwrap();
        assert!(matches!(issuer.add_key(dup), Err(ServiceError::SharedModulus(_))));
    }
}
