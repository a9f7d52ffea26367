use std::collections::BTreeMap;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::{AttributeId, CredentialError, Result};
use crate::blindsig::PublicKey;
use crate::codec::hex_int;

/// Record emitted when a published key replaces an earlier one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct KeyRotation {
    pub issuer: String,
    pub attribute: AttributeId,
    pub previous: PublicKey,
    pub current: PublicKey,
}

/// One element of the directory file array.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectoryEntry {
    pub issuer: String,
    pub attribute: AttributeId,
    #[serde(with = "hex_int")]
    pub n: BigUint,
    #[serde(with = "hex_int")]
    pub e: BigUint,
}

/// Public lookup table from `(issuer, attribute)` to the attribute's key.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AttributeKeyDirectory {
    entries: BTreeMap<(String, AttributeId), PublicKey>,
    rotations: Vec<KeyRotation>,
}

impl AttributeKeyDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces the key for `(issuer, attribute)`. Replacement is
    /// recorded as a rotation. Two different attributes of one issuer may
    /// never share a modulus.
    pub fn publish(&mut self, issuer: &str, attribute: &AttributeId, key: PublicKey) -> Result<Option<&KeyRotation>> {
        if key.attribute_id() != attribute.as_str() {
            return Err(CredentialError::AttributeMismatch {
                attribute: attribute.clone(),
                key_label: key.attribute_id().to_owned(),
            });
        }
        if let Some(((_, existing), _)) = self
            .entries
            .iter()
            .find(|((i, a), k)| i == issuer && a != attribute && k.modulus() == key.modulus())
        {
            return Err(CredentialError::SharedModulus {
                issuer: issuer.to_owned(),
                existing: existing.clone(),
            });
        }
        let slot = (issuer.to_owned(), attribute.clone());
        match self.entries.insert(slot, key.clone()) {
            Some(previous) => {
                log::info!("rotated key for {issuer}/{attribute}");
                self.rotations.push(KeyRotation {
                    issuer: issuer.to_owned(),
                    attribute: attribute.clone(),
                    previous,
                    current: key,
                });
                Ok(self.rotations.last())
            }
            None => Ok(None),
        }
    }

    pub fn lookup(&self, issuer: &str, attribute: &AttributeId) -> Result<&PublicKey> {
        self.entries
            .get(&(issuer.to_owned(), attribute.clone()))
            .ok_or_else(|| CredentialError::UnknownAttribute {
                issuer: issuer.to_owned(),
                attribute: attribute.clone(),
            })
    }

    pub fn rotations(&self) -> &[KeyRotation] {
        &self.rotations
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in `(issuer, attribute)` order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &AttributeId, &PublicKey)> {
        self.entries.iter().map(|((i, a), k)| (i.as_str(), a, k))
    }

    /// Directory file form: a JSON array of `{attribute, e, issuer, n}`
    /// objects, keys sorted, integers in canonical hex.
    pub fn to_json(&self) -> String {
        let entries: Vec<_> = self
            .entries()
            .map(|(issuer, attribute, key)| DirectoryEntry {
                issuer: issuer.to_owned(),
                attribute: attribute.clone(),
                n: key.modulus().clone(),
                e: key.exponent().clone(),
            })
            .collect();
        let value = serde_json::to_value(entries).expect("directory entries serialize");
        let mut text = serde_json::to_string_pretty(&value).expect("json value serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let entries: Vec<DirectoryEntry> =
            serde_json::from_str(text).map_err(|e| CredentialError::MalformedDirectory(e.to_string()))?;
        let mut directory = Self::new();
        for entry in entries {
            if directory.lookup(&entry.issuer, &entry.attribute).is_ok() {
                return Err(CredentialError::MalformedDirectory(format!(
                    "duplicate entry for {}/{}",
                    entry.issuer, entry.attribute
                )));
            }
            let key = PublicKey::new(entry.n, entry.e, entry.attribute.as_str())?;
            directory.publish(&entry.issuer, &entry.attribute, key)?;
        }
        Ok(directory)
    }
}
