use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::One;
use rand::Rng;
use serde::Serialize;

use super::AuditError;
use crate::blindsig::{full_domain_hash, verify, BlindKeyPair, PublicKey};
use crate::credentials::AttributeKeyDirectory;

/// Cross-verification rate allowed below 64-bit moduli.
pub const MAX_CROSS_RATE: f64 = 0.05;
/// From this modulus size on, any cross-verification fails the check.
pub const ZERO_TOLERANCE_BITS: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureSource {
    /// Real signatures made with the private key.
    PrivateKey,
    /// Uniform units modulo the signer's modulus. RSA signatures on
    /// full-domain hashes of random serials have this distribution, so the
    /// check can run from public data alone.
    Simulated,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossVerification {
    pub signer: String,
    pub verifier: String,
    pub verifier_bits: u64,
    pub source: SignatureSource,
    pub trials: usize,
    pub verified: usize,
    pub rate: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SharedModulus {
    pub issuer: String,
    pub attributes: [String; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KeySeparationReport {
    pub structural_pass: bool,
    pub shared_moduli: Vec<SharedModulus>,
    pub cross_verification: Vec<CrossVerification>,
    pub pass: bool,
}

/// Checks that each attribute key attests only its own attribute:
/// distinct attributes of an issuer never share a modulus, and a signature
/// made under one key verifies under another only at chance rate.
pub fn key_separation_check<R: Rng + ?Sized>(
    directory: &AttributeKeyDirectory,
    signers: &[BlindKeyPair],
    trials: usize,
    rng: &mut R,
) -> Result<KeySeparationReport, AuditError> {
    let entries: Vec<(String, PublicKey)> = directory
        .entries()
        .map(|(i, _, k)| (i.to_owned(), k.clone()))
        .collect();
    key_separation_check_entries(&entries, signers, trials, rng)
}

/// Same check over raw `(issuer, key)` entries, e.g. a published directory
/// file that was never loaded through [`AttributeKeyDirectory`]'s own checks.
pub fn key_separation_check_entries<R: Rng + ?Sized>(
    entries: &[(String, PublicKey)],
    signers: &[BlindKeyPair],
    trials: usize,
    rng: &mut R,
) -> Result<KeySeparationReport, AuditError> {
    if entries.len() < 2 {
        return Err(AuditError::InsufficientAttributes(entries.len()));
    }

    let mut shared_moduli = Vec::new();
    for (i, (issuer_a, a)) in entries.iter().enumerate() {
        for (issuer_b, b) in &entries[i + 1..] {
            if issuer_a == issuer_b && a.modulus() == b.modulus() {
                shared_moduli.push(SharedModulus {
                    issuer: issuer_a.clone(),
                    attributes: [a.attribute_id().to_owned(), b.attribute_id().to_owned()],
                });
            }
        }
    }

    let mut cross_verification = Vec::new();
    for (ia, (issuer_a, a)) in entries.iter().enumerate() {
        let signer = signers.iter().find(|k| k.public() == a);
        for (ib, (issuer_b, b)) in entries.iter().enumerate() {
            if ia == ib {
                continue;
            }
            let mut verified = 0;
            for _ in 0..trials {
                let mut serial = [0u8; 32];
                rng.fill_bytes(&mut serial);
                let signature = match signer {
                    Some(key) => key.sign_hashed(&full_domain_hash(&serial, a)?)?,
                    None => random_unit(a.modulus(), rng),
                };
                if verify(&full_domain_hash(&serial, b)?, &signature, b) {
                    verified += 1;
                }
            }
            let bits = b.modulus().bits();
            let rate = if trials == 0 { 0.0 } else { verified as f64 / trials as f64 };
            let pass = if bits >= ZERO_TOLERANCE_BITS {
                verified == 0
            } else {
                rate < MAX_CROSS_RATE
            };
            cross_verification.push(CrossVerification {
                signer: format!("{issuer_a}/{}", a.attribute_id()),
                verifier: format!("{issuer_b}/{}", b.attribute_id()),
                verifier_bits: bits,
                source: if signer.is_some() {
                    SignatureSource::PrivateKey
                } else {
                    SignatureSource::Simulated
                },
                trials,
                verified,
                rate,
                pass,
            });
        }
    }

    let structural_pass = shared_moduli.is_empty();
    let pass = structural_pass && cross_verification.iter().all(|c| c.pass);
    Ok(KeySeparationReport {
        structural_pass,
        shared_moduli,
        cross_verification,
        pass,
    })
}

fn random_unit<R: Rng + ?Sized>(n: &BigUint, rng: &mut R) -> BigUint {
    loop {
        let r = rng.gen_biguint_range(&BigUint::one(), n);
        if r.gcd(n).is_one() {
            return r;
        }
    }
}
