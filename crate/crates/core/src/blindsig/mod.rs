//! RSA blind signatures over a full-domain hash.
//!
//! The holder multiplies the hashed serial by `r^e` before sending it to the
//! issuer; because `(m * r^e)^d = m^d * r (mod n)`, dividing the issuer's
//! answer by `r` yields an ordinary RSA signature on `m` that the issuer has
//! never seen.
//!
//! Key sizes go down to 16-bit moduli so that every unit can be enumerated by
//! the auditor. Nothing here is hardened for production use: there is no
//! padding, no constant-time arithmetic, and keys are demonstration-sized.

mod prime;

pub use prime::{factorize, is_probable_prime, random_prime};

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::One;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::hex_int;

pub const SERIAL_LEN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlindSigError {
    #[error("p and q must be distinct primes")]
    EqualPrimes,
    #[error("{0} is not an odd prime")]
    NotPrime(BigUint),
    #[error("exponent {exponent} is not coprime to lambda(n) = {lambda}")]
    NonCoprimeExponent { exponent: BigUint, lambda: BigUint },
    #[error("public exponent must be odd and at least 3")]
    BadExponent,
    #[error("modulus {0} is too small for the full-domain hash")]
    ModulusTooSmall(BigUint),
    #[error("values were produced under different moduli")]
    ModulusMismatch,
    #[error("value is outside (0, n)")]
    OutOfRange,
    #[error("value shares a factor with the modulus")]
    NotAUnit,
    #[error("attribute id must be non-empty")]
    EmptyAttribute,
    #[error("unsupported modulus size of {0} bits")]
    InvalidKeySize(u64),
}

pub type Result<T> = std::result::Result<T, BlindSigError>;

/// Verification half of a signing key. The attribute label travels with the
/// key: a signature under this key attests that attribute and nothing else.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PublicKey {
    #[serde(with = "hex_int", rename = "n")]
    modulus: BigUint,
    #[serde(with = "hex_int", rename = "e")]
    exponent: BigUint,
    #[serde(rename = "attribute")]
    attribute_id: String,
}

impl PublicKey {
    /// Builds a verification key from public data. The modulus is not
    /// checked for its factor structure, only for being usable at all.
    pub fn new(modulus: BigUint, exponent: BigUint, attribute_id: impl Into<String>) -> Result<Self> {
        let attribute_id = attribute_id.into();
        if attribute_id.is_empty() {
            return Err(BlindSigError::EmptyAttribute);
        }
        if modulus <= BigUint::from(2u32) {
            return Err(BlindSigError::ModulusTooSmall(modulus));
        }
        if exponent < BigUint::from(3u32) || exponent.is_even() {
            return Err(BlindSigError::BadExponent);
        }
        Ok(Self {
            modulus,
            exponent,
            attribute_id,
        })
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn exponent(&self) -> &BigUint {
        &self.exponent
    }

    pub fn attribute_id(&self) -> &str {
        &self.attribute_id
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({}, n={:x}, e={:x})", self.attribute_id, self.modulus, self.exponent)
    }
}

/// An issuer's signing capability for exactly one attribute.
#[derive(Clone, PartialEq, Eq)]
pub struct BlindKeyPair {
    public: PublicKey,
    private_exponent: BigUint,
}

impl fmt::Debug for BlindKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlindKeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl BlindKeyPair {
    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn private_exponent(&self) -> &BigUint {
        &self.private_exponent
    }

    pub fn attribute_id(&self) -> &str {
        &self.public.attribute_id
    }

    /// Random key whose modulus has exactly `bits` bits.
    pub fn generate<R: Rng + ?Sized>(bits: u64, exponent: u64, attribute_id: &str, rng: &mut R) -> Result<Self> {
        if bits < 16 || bits % 2 != 0 || bits > 4096 {
            return Err(BlindSigError::InvalidKeySize(bits));
        }
        let e = BigUint::from(exponent);
        if exponent < 3 || exponent % 2 == 0 {
            return Err(BlindSigError::BadExponent);
        }
        let half = bits / 2;
        let coprime = |p: &BigUint| (p - 1u32).gcd(&e).is_one();
        loop {
            let p = random_prime(half, rng, coprime);
            let q = random_prime(half, rng, coprime);
            if p == q {
                continue;
            }
            let (p, q) = if p < q { (p, q) } else { (q, p) };
            return keygen(&p, &q, &e, attribute_id);
        }
    }

    /// Plain (non-blind) RSA signature on an already hashed message.
    pub fn sign_hashed(&self, msg: &HashedMessage) -> Result<BigUint> {
        if msg.modulus != self.public.modulus {
            return Err(BlindSigError::ModulusMismatch);
        }
        Ok(msg.value.modpow(&self.private_exponent, &self.public.modulus))
    }
}

/// Builds a keypair from explicit primes. `d` is the least positive inverse of
/// `e` modulo the Carmichael function `lcm(p - 1, q - 1)`.
pub fn keygen(p: &BigUint, q: &BigUint, e: &BigUint, attribute_id: &str) -> Result<BlindKeyPair> {
    if p == q {
        return Err(BlindSigError::EqualPrimes);
    }
    for prime in [p, q] {
        if prime.is_even() || !is_probable_prime(prime) {
            return Err(BlindSigError::NotPrime(prime.clone()));
        }
    }
    let lambda = (p - 1u32).lcm(&(q - 1u32));
    let public = PublicKey::new(p * q, e.clone(), attribute_id)?;
    let private_exponent = e
        .modinv(&lambda)
        .ok_or_else(|| BlindSigError::NonCoprimeExponent {
            exponent: e.clone(),
            lambda: lambda.clone(),
        })?;
    Ok(BlindKeyPair {
        public,
        private_exponent,
    })
}

/// A residue ready to be signed, remembering the serial and modulus it was
/// derived for.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct HashedMessage {
    value: BigUint,
    source_serial: Option<[u8; SERIAL_LEN]>,
    modulus: BigUint,
}

impl HashedMessage {
    /// Wraps an arbitrary unit residue in `[1, n - 1]`. Used by the auditor and
    /// by exhaustive checks that range over every unit, not only hash outputs.
    pub fn from_residue(value: BigUint, key: &PublicKey) -> Result<Self> {
        if value == BigUint::ZERO || value >= key.modulus {
            return Err(BlindSigError::OutOfRange);
        }
        if !value.gcd(&key.modulus).is_one() {
            return Err(BlindSigError::NotAUnit);
        }
        Ok(Self {
            value,
            source_serial: None,
            modulus: key.modulus.clone(),
        })
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn source_serial(&self) -> Option<&[u8; SERIAL_LEN]> {
        self.source_serial.as_ref()
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }
}

/// Maps a serial into the units of `Z_n`: SHA-256 over the serial followed by
/// an 8-byte big-endian counter, reduced into `[2, n - 1]`, retrying with the
/// next counter until the result is coprime to `n`.
pub fn full_domain_hash(serial: &[u8; SERIAL_LEN], key: &PublicKey) -> Result<HashedMessage> {
    let n = &key.modulus;
    if *n <= BigUint::from(6u32) {
        return Err(BlindSigError::ModulusTooSmall(n.clone()));
    }
    let span = n - 2u32;
    for counter in 0u64.. {
        let digest = Sha256::new()
            .chain_update(serial)
            .chain_update(counter.to_be_bytes())
            .finalize();
        let value = BigUint::from_bytes_be(&digest) % &span + 2u32;
        if value.gcd(n).is_one() {
            return Ok(HashedMessage {
                value,
                source_serial: Some(*serial),
                modulus: n.clone(),
            });
        }
    }
    unreachable!("counter space exhausted")
}

/// Holder-side secret `r` together with its inverse modulo `n`.
#[derive(Clone, PartialEq, Eq)]
pub struct BlindingFactor {
    r: BigUint,
    r_inverse: BigUint,
    modulus: BigUint,
}

impl fmt::Debug for BlindingFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlindingFactor")
            .field("modulus", &self.modulus)
            .finish_non_exhaustive()
    }
}

impl BlindingFactor {
    /// Uses a caller-chosen `r`, which must be a unit in `[1, n - 1]`.
    pub fn from_r(r: BigUint, key: &PublicKey) -> Result<Self> {
        if r == BigUint::ZERO || r >= key.modulus {
            return Err(BlindSigError::OutOfRange);
        }
        let r_inverse = r.modinv(&key.modulus).ok_or(BlindSigError::NotAUnit)?;
        Ok(Self {
            r,
            r_inverse,
            modulus: key.modulus.clone(),
        })
    }

    pub fn r(&self) -> &BigUint {
        &self.r
    }

    pub fn r_inverse(&self) -> &BigUint {
        &self.r_inverse
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }
}

/// Rejection-samples `r` uniformly from the units in `[2, n - 1]`.
pub fn sample_blinding_factor<R: Rng + ?Sized>(key: &PublicKey, rng: &mut R) -> BlindingFactor {
    let low = BigUint::from(2u32);
    loop {
        let r = rng.gen_biguint_range(&low, &key.modulus);
        if let Some(r_inverse) = r.modinv(&key.modulus) {
            return BlindingFactor {
                r,
                r_inverse,
                modulus: key.modulus.clone(),
            };
        }
    }
}

/// `m * r^e mod n`
pub fn blind(msg: &HashedMessage, bf: &BlindingFactor, key: &PublicKey) -> Result<BigUint> {
    if msg.modulus != key.modulus || bf.modulus != key.modulus {
        return Err(BlindSigError::ModulusMismatch);
    }
    Ok(&msg.value * bf.r.modpow(&key.exponent, &key.modulus) % &key.modulus)
}

/// `b^d mod n`, the only operation that needs the private exponent.
pub fn sign_blinded(blinded: &BigUint, key: &BlindKeyPair) -> Result<BigUint> {
    let n = &key.public.modulus;
    if *blinded == BigUint::ZERO || blinded >= n {
        return Err(BlindSigError::OutOfRange);
    }
    Ok(blinded.modpow(&key.private_exponent, n))
}

/// `s' * r^-1 mod n`
pub fn unblind(blind_signature: &BigUint, bf: &BlindingFactor, key: &PublicKey) -> Result<BigUint> {
    if bf.modulus != key.modulus {
        return Err(BlindSigError::ModulusMismatch);
    }
    Ok(blind_signature * &bf.r_inverse % &key.modulus)
}

/// `s^e == m (mod n)`, using public data only. A message hashed under a
/// different modulus never verifies.
pub fn verify(msg: &HashedMessage, signature: &BigUint, key: &PublicKey) -> bool {
    if msg.modulus != key.modulus || signature >= &key.modulus {
        return false;
    }
    signature.modpow(&key.exponent, &key.modulus) == msg.value
}
