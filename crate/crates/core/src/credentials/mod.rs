//! Holder-side credential lifecycle and the public attribute-key directory.
//!
//! A credential is a bearer token: `(attribute, serial, signature)`. The
//! serial and the blinding factor are created inside the [`Wallet`] and only
//! the blinded value ever leaves it during issuance.

mod directory;
mod wallet;

pub use directory::{AttributeKeyDirectory, DirectoryEntry, KeyRotation};
pub use wallet::{CredentialSelector, Wallet};

use std::fmt;

use num_bigint::BigUint;
use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::blindsig::{BlindSigError, BlindingFactor, PublicKey, SERIAL_LEN};
use crate::codec::{self, hex_int};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CredentialError {
    #[error("no key for attribute {attribute:?} from issuer {issuer:?}")]
    UnknownAttribute { issuer: String, attribute: AttributeId },
    #[error("issuer returned a signature that does not verify after unblinding")]
    BadIssuerSignature,
    #[error("no pending issuance for this serial")]
    NoSuchPending,
    #[error("credential already presented")]
    CredentialAlreadyUsed,
    #[error("no matching credential in wallet")]
    NoSuchCredential,
    #[error("issuer {issuer:?} already uses this modulus for attribute {existing:?}")]
    SharedModulus { issuer: String, existing: AttributeId },
    #[error("key is labelled {key_label:?} but was published for {attribute:?}")]
    AttributeMismatch { attribute: AttributeId, key_label: String },
    #[error("malformed directory file: {0}")]
    MalformedDirectory(String),
    #[error(transparent)]
    BlindSig(#[from] BlindSigError),
}

pub type Result<T> = std::result::Result<T, CredentialError>;

/// An attestation label such as `taxpayer:region-X`. Compared byte for byte.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct AttributeId(String);

impl AttributeId {
    pub fn new(value: impl Into<String>) -> Option<Self> {
        let value = value.into();
        (!value.is_empty()).then_some(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl<'de> Deserialize<'de> for AttributeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let value = String::deserialize(d)?;
        Self::new(value).ok_or_else(|| D::Error::custom("empty attribute id"))
    }
}

impl fmt::Debug for AttributeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&self.0, f)
    }
}

impl fmt::Display for AttributeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// 32 random bytes chosen on the holder's device.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Serial([u8; SERIAL_LEN]);

impl Serial {
    /// Wraps bytes received from elsewhere (a presentation or a gossip
    /// message). Holders obtain fresh serials from [`Wallet::generate_serial`].
    pub fn from_bytes(bytes: [u8; SERIAL_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; SERIAL_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> std::result::Result<Self, codec::CodecError> {
        codec::bytes_from_hex(text).map(Self)
    }
}

impl fmt::Debug for Serial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Serial({})", self.to_hex())
    }
}

impl Serialize for Serial {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Serial {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Self::from_hex(&text).map_err(D::Error::custom)
    }
}

/// What the holder sends to the issuer. Nothing else is needed to sign.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssueRequest {
    pub attribute_id: AttributeId,
    #[serde(with = "hex_int")]
    pub blinded_value: BigUint,
}

/// What the holder shows a relying party, exactly once.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Presentation {
    pub attribute_id: AttributeId,
    pub serial: Serial,
    #[serde(with = "hex_int")]
    pub signature: BigUint,
}

/// Issuance state kept in the wallet between request and response.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PendingIssuance {
    issuer: String,
    attribute_id: AttributeId,
    serial: Serial,
    blinding_factor: BlindingFactor,
    blinded_value: BigUint,
    issuer_key: PublicKey,
}

impl PendingIssuance {
    pub fn issuer(&self) -> &str {
        &self.issuer
    }

    pub fn attribute_id(&self) -> &AttributeId {
        &self.attribute_id
    }

    pub fn serial(&self) -> &Serial {
        &self.serial
    }

    pub fn blinding_factor(&self) -> &BlindingFactor {
        &self.blinding_factor
    }

    pub fn blinded_value(&self) -> &BigUint {
        &self.blinded_value
    }

    pub fn issuer_key(&self) -> &PublicKey {
        &self.issuer_key
    }
}

/// A finalized single-use credential.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Credential {
    attribute_id: AttributeId,
    serial: Serial,
    signature: BigUint,
    issuer_key: PublicKey,
    used: bool,
}

impl Credential {
    pub fn attribute_id(&self) -> &AttributeId {
        &self.attribute_id
    }

    pub fn serial(&self) -> &Serial {
        &self.serial
    }

    pub fn signature(&self) -> &BigUint {
        &self.signature
    }

    pub fn issuer_key(&self) -> &PublicKey {
        &self.issuer_key
    }

    pub fn is_used(&self) -> bool {
        self.used
    }
}
