//! Canonical JSON wire format.
//!
//! Every message is `{"body":{..},"kind":".."}` in UTF-8 with lexicographically
//! sorted keys and no whitespace. Integers are lowercase hex strings without
//! leading zeros; serials are 64 lowercase hex digits. Decoding is strict: an
//! unknown or missing field, a non-canonical number, or any byte sequence that
//! does not re-encode to itself is rejected.

use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::ServiceError;
use crate::codec::{self, hex_int};
use crate::credentials::{AttributeId, IssueRequest, Presentation, Serial};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MessageKind {
    IssueRequest,
    IssueResponse,
    Presentation,
    Result,
    Gossip,
}

impl MessageKind {
    pub const ALL: [MessageKind; 5] = [
        MessageKind::IssueRequest,
        MessageKind::IssueResponse,
        MessageKind::Presentation,
        MessageKind::Result,
        MessageKind::Gossip,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::IssueRequest => "ISSUE_REQUEST",
            MessageKind::IssueResponse => "ISSUE_RESPONSE",
            MessageKind::Presentation => "PRESENTATION",
            MessageKind::Result => "RESULT",
            MessageKind::Gossip => "GOSSIP",
        }
    }

    fn parse(text: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == text)
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenialReason {
    NotEligible,
    QuotaExceeded,
    UnknownAttribute,
    OutOfRange,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IssueResponse {
    Granted {
        attribute_id: AttributeId,
        blinded_signature: BigUint,
    },
    Denied {
        attribute_id: AttributeId,
        reason: DenialReason,
    },
}

/// Rejection reasons in precedence order: the first failing check wins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    UnknownAttribute,
    BadSignature,
    DoubleSpend,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::UnknownAttribute => "unknown_attribute",
            RejectReason::BadSignature => "bad_signature",
            RejectReason::DoubleSpend => "double_spend",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PresentationResult {
    Accept,
    Reject(RejectReason),
}

impl PresentationResult {
    /// Outcome label used in transcripts.
    pub fn label(self) -> &'static str {
        match self {
            PresentationResult::Accept => "accept",
            PresentationResult::Reject(reason) => reason.as_str(),
        }
    }
}

/// A relying party's spent serials for one attribute, ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GossipDigest {
    pub attribute_id: AttributeId,
    pub serials: Vec<Serial>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WireMessage {
    IssueRequest(IssueRequest),
    IssueResponse(IssueResponse),
    Presentation(Presentation),
    Result(PresentationResult),
    Gossip(GossipDigest),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GrantedBody {
    attribute_id: AttributeId,
    #[serde(with = "hex_int")]
    blinded_signature: BigUint,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeniedBody {
    attribute_id: AttributeId,
    denial: DenialReason,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultBody {
    outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reason: Option<RejectReason>,
}

impl WireMessage {
    pub fn kind(&self) -> MessageKind {
        match self {
            WireMessage::IssueRequest(_) => MessageKind::IssueRequest,
            WireMessage::IssueResponse(_) => MessageKind::IssueResponse,
            WireMessage::Presentation(_) => MessageKind::Presentation,
            WireMessage::Result(_) => MessageKind::Result,
            WireMessage::Gossip(_) => MessageKind::Gossip,
        }
    }

    fn body(&self) -> Value {
        let value = match self {
            WireMessage::IssueRequest(req) => serde_json::to_value(req),
            WireMessage::IssueResponse(IssueResponse::Granted {
                attribute_id,
                blinded_signature,
            }) => serde_json::to_value(GrantedBody {
                attribute_id: attribute_id.clone(),
                blinded_signature: blinded_signature.clone(),
            }),
            WireMessage::IssueResponse(IssueResponse::Denied { attribute_id, reason }) => {
                serde_json::to_value(DeniedBody {
                    attribute_id: attribute_id.clone(),
                    denial: *reason,
                })
            }
            WireMessage::Presentation(p) => serde_json::to_value(p),
            WireMessage::Result(PresentationResult::Accept) => Ok(json!({"outcome": "accept"})),
            WireMessage::Result(PresentationResult::Reject(reason)) => serde_json::to_value(ResultBody {
                outcome: "reject".into(),
                reason: Some(*reason),
            }),
            WireMessage::Gossip(digest) => serde_json::to_value(digest),
        };
        value.expect("wire bodies serialize")
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut envelope = Map::new();
        envelope.insert("body".into(), self.body());
        envelope.insert("kind".into(), Value::String(self.kind().as_str().into()));
        Value::Object(envelope).to_string().into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ServiceError> {
        let text = std::str::from_utf8(bytes).map_err(|_| malformed("not UTF-8"))?;
        let value: Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
        let mut envelope = match value {
            Value::Object(map) => map,
            _ => return Err(malformed("envelope is not an object")),
        };
        if envelope.len() != 2 {
            return Err(malformed("envelope must have exactly body and kind"));
        }
        let kind = envelope
            .remove("kind")
            .and_then(|k| k.as_str().and_then(MessageKind::parse))
            .ok_or_else(|| malformed("missing or unknown kind"))?;
        let body = envelope.remove("body").ok_or_else(|| malformed("missing body"))?;
        let message = match kind {
            MessageKind::IssueRequest => WireMessage::IssueRequest(from_body(body)?),
            MessageKind::IssueResponse => {
                let granted = body.get("blinded_signature").is_some();
                if granted {
                    let b: GrantedBody = from_body(body)?;
                    WireMessage::IssueResponse(IssueResponse::Granted {
                        attribute_id: b.attribute_id,
                        blinded_signature: b.blinded_signature,
                    })
                } else {
                    let b: DeniedBody = from_body(body)?;
                    WireMessage::IssueResponse(IssueResponse::Denied {
                        attribute_id: b.attribute_id,
                        reason: b.denial,
                    })
                }
            }
            MessageKind::Presentation => WireMessage::Presentation(from_body(body)?),
            MessageKind::Result => {
                let b: ResultBody = from_body(body)?;
                match (b.outcome.as_str(), b.reason) {
                    ("accept", None) => WireMessage::Result(PresentationResult::Accept),
                    ("reject", Some(reason)) => WireMessage::Result(PresentationResult::Reject(reason)),
                    _ => return Err(malformed("inconsistent result outcome")),
                }
            }
            MessageKind::Gossip => {
                let digest: GossipDigest = from_body(body)?;
                if digest.serials.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(malformed("gossip serials must be strictly ascending"));
                }
                WireMessage::Gossip(digest)
            }
        };
        if message.encode() != bytes {
            return Err(malformed("non-canonical encoding"));
        }
        Ok(message)
    }
}

fn from_body<T: for<'de> Deserialize<'de>>(body: Value) -> Result<T, ServiceError> {
    serde_json::from_value(body).map_err(|e| malformed(e.to_string()))
}

fn malformed(detail: impl Into<String>) -> ServiceError {
    ServiceError::MalformedMessage(detail.into())
}

/// Canonical hex of an integer, as carried on the wire.
pub fn wire_int(value: &BigUint) -> String {
    codec::int_to_hex(value)
}
