//! Canonical text forms shared by the wire format, transcripts and files.
//!
//! Integers are lowercase big-endian hex with no leading zero digits (zero is
//! `"0"`). Serials and other fixed-width byte strings are plain lowercase hex.

use num_bigint::BigUint;
use num_traits::Zero;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("empty hex integer")]
    Empty,
    #[error("non-canonical hex integer {0:?}")]
    NonCanonical(String),
    #[error("invalid hex digit in {0:?}")]
    InvalidDigit(String),
    #[error("expected {expected} bytes of hex, found {found:?}")]
    WrongLength { expected: usize, found: String },
}

pub fn int_to_hex(value: &BigUint) -> String {
    value.to_str_radix(16)
}

/// Strict inverse of [`int_to_hex`]: rejects uppercase digits, leading zeros
/// and any prefix.
pub fn int_from_hex(text: &str) -> Result<BigUint, CodecError> {
    if text.is_empty() {
        return Err(CodecError::Empty);
    }
    if !text.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        return Err(CodecError::InvalidDigit(text.to_owned()));
    }
    if text.len() > 1 && text.starts_with('0') {
        return Err(CodecError::NonCanonical(text.to_owned()));
    }
    let value = BigUint::parse_bytes(text.as_bytes(), 16)
        .ok_or_else(|| CodecError::InvalidDigit(text.to_owned()))?;
    debug_assert!(text != "0" || value.is_zero());
    Ok(value)
}

pub fn bytes_from_hex<const N: usize>(text: &str) -> Result<[u8; N], CodecError> {
    let wrong = || CodecError::WrongLength {
        expected: N,
        found: text.to_owned(),
    };
    if text.len() != 2 * N {
        return Err(wrong());
    }
    if !text.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        return Err(CodecError::InvalidDigit(text.to_owned()));
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(text, &mut out).map_err(|_| wrong())?;
    Ok(out)
}

/// Serde adapter for `BigUint` fields stored as canonical hex strings.
pub mod hex_int {
    use num_bigint::BigUint;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::int_to_hex(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let text = String::deserialize(d)?;
        super::int_from_hex(&text).map_err(D::Error::custom)
    }
}
