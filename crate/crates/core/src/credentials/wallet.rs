use std::collections::HashSet;

use num_bigint::BigUint;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{
    AttributeId, AttributeKeyDirectory, Credential, CredentialError, IssueRequest, PendingIssuance, Presentation,
    Result, Serial,
};
use crate::blindsig::{self, BlindingFactor, SERIAL_LEN};

/// Which credential to present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CredentialSelector {
    /// The oldest unused credential for the attribute.
    NextUnused(AttributeId),
    /// A specific credential.
    Serial(Serial),
}

/// Holder state machine. All secrets (serials, blinding factors) originate
/// from the wallet's own random source.
#[derive(Debug)]
pub struct Wallet {
    rng: ChaCha20Rng,
    pending: Vec<PendingIssuance>,
    ready: Vec<Credential>,
    serials: HashSet<Serial>,
}

impl Wallet {
    pub fn new(seed: u64) -> Self {
        Self::from_rng(ChaCha20Rng::seed_from_u64(seed))
    }

    pub fn from_rng(rng: ChaCha20Rng) -> Self {
        Self {
            rng,
            pending: Vec::new(),
            ready: Vec::new(),
            serials: HashSet::new(),
        }
    }

    pub fn pending(&self) -> &[PendingIssuance] {
        &self.pending
    }

    pub fn credentials(&self) -> &[Credential] {
        &self.ready
    }

    pub fn unused(&self) -> impl Iterator<Item = &Credential> {
        self.ready.iter().filter(|c| !c.used)
    }

    /// Draws 32 fresh bytes, never repeating a serial already held.
    pub fn generate_serial(&mut self) -> Serial {
        loop {
            let mut bytes = [0u8; SERIAL_LEN];
            self.rng.fill_bytes(&mut bytes);
            let serial = Serial(bytes);
            if self.serials.insert(serial) {
                return serial;
            }
        }
    }

    /// Prepares a blinded issuance request for `attribute` under `issuer`'s
    /// published key. Only the returned [`IssueRequest`] is meant for the wire.
    pub fn create_issue_request(
        &mut self,
        issuer: &str,
        attribute: &AttributeId,
        directory: &AttributeKeyDirectory,
    ) -> Result<(IssueRequest, PendingIssuance)> {
        let key = directory.lookup(issuer, attribute)?.clone();
        let serial = self.generate_serial();
        let blinding_factor = blindsig::sample_blinding_factor(&key, &mut self.rng);
        self.request_with(issuer, attribute, key, serial, blinding_factor)
    }

    pub(crate) fn request_with(
        &mut self,
        issuer: &str,
        attribute: &AttributeId,
        key: crate::blindsig::PublicKey,
        serial: Serial,
        blinding_factor: BlindingFactor,
    ) -> Result<(IssueRequest, PendingIssuance)> {
        self.serials.insert(serial);
        let message = blindsig::full_domain_hash(serial.as_bytes(), &key)?;
        let blinded_value = blindsig::blind(&message, &blinding_factor, &key)?;
        let pending = PendingIssuance {
            issuer: issuer.to_owned(),
            attribute_id: attribute.clone(),
            serial,
            blinding_factor,
            blinded_value: blinded_value.clone(),
            issuer_key: key,
        };
        self.pending.push(pending.clone());
        let request = IssueRequest {
            attribute_id: attribute.clone(),
            blinded_value,
        };
        Ok((request, pending))
    }

    /// Unblinds the issuer's answer and checks it before accepting. A pending
    /// issuance stays in place when the issuer's signature is bad.
    pub fn finalize_credential(&mut self, pending: &PendingIssuance, blind_signature: &BigUint) -> Result<Credential> {
        let index = self
            .pending
            .iter()
            .position(|p| p.serial == pending.serial)
            .ok_or(CredentialError::NoSuchPending)?;
        let stored = &self.pending[index];
        let key = &stored.issuer_key;
        let signature = blindsig::unblind(blind_signature, &stored.blinding_factor, key)?;
        let message = blindsig::full_domain_hash(stored.serial.as_bytes(), key)?;
        if !blindsig::verify(&message, &signature, key) {
            return Err(CredentialError::BadIssuerSignature);
        }
        let stored = self.pending.remove(index);
        let credential = Credential {
            attribute_id: stored.attribute_id,
            serial: stored.serial,
            signature,
            issuer_key: stored.issuer_key,
            used: false,
        };
        self.ready.push(credential.clone());
        Ok(credential)
    }

    /// Marks a credential used and returns the three fields a relying party
    /// needs. A credential can be taken only once.
    pub fn take_for_presentation(&mut self, selector: &CredentialSelector) -> Result<Presentation> {
        let credential = match selector {
            CredentialSelector::NextUnused(attribute) => self
                .ready
                .iter_mut()
                .find(|c| !c.used && &c.attribute_id == attribute)
                .ok_or(CredentialError::NoSuchCredential)?,
            CredentialSelector::Serial(serial) => {
                let found = self
                    .ready
                    .iter_mut()
                    .find(|c| &c.serial == serial)
                    .ok_or(CredentialError::NoSuchCredential)?;
                if found.used {
                    return Err(CredentialError::CredentialAlreadyUsed);
                }
                found
            }
        };
        credential.used = true;
        Ok(Presentation {
            attribute_id: credential.attribute_id.clone(),
            serial: credential.serial,
            signature: credential.signature.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blindsig::{keygen, sign_blinded, BlindKeyPair, PublicKey};

    fn attr() -> AttributeId {
        AttributeId::new("taxpayer:region-X").unwrap()
    }

    fn toy() -> BlindKeyPair {
        keygen(&BigUint::from(5u32), &BigUint::from(11u32), &BigUint::from(3u32), "taxpayer:region-X").unwrap()
    }

    fn directory(key: &PublicKey) -> AttributeKeyDirectory {
        let mut dir = AttributeKeyDirectory::new();
        dir.publish("tax", &attr(), key.clone()).unwrap();
        dir
    }

    /// Brute-force search for a serial whose full-domain hash under the toy key
    /// is `target`.
    fn serial_hashing_to(target: u64, key: &PublicKey) -> Serial {
        (0u32..)
            .map(|i| {
                let mut bytes = [0u8; SERIAL_LEN];
                bytes[..4].copy_from_slice(&i.to_be_bytes());
                Serial(bytes)
            })
            .find(|s| blindsig::full_domain_hash(s.as_bytes(), key).unwrap().value() == &BigUint::from(target))
            .unwrap()
    }

    fn forced_request(wallet: &mut Wallet, key: &BlindKeyPair, m: u64, r: u64) -> (IssueRequest, PendingIssuance) {
        let pk = key.public();
        let serial = serial_hashing_to(m, pk);
        let bf = BlindingFactor::from_r(BigUint::from(r), pk).unwrap();
        wallet.request_with("tax", &attr(), pk.clone(), serial, bf).unwrap()
    }

    #[test]
    fn serials_are_unique_and_reproducible() {
        let mut wallet = Wallet::new(42);
        let serials: HashSet<_> = (0..10_000).map(|_| wallet.generate_serial()).collect();
        assert_eq!(serials.len(), 10_000);

        let mut a = Wallet::new(7);
        let mut b = Wallet::new(7);
        for _ in 0..5 {
            let s = a.generate_serial();
            assert_eq!(s, b.generate_serial());
            assert_eq!(s.as_bytes().len(), 32);
        }
    }

    #[test]
    fn forced_request_has_expected_blinded_value() {
        let key = toy();
        let mut wallet = Wallet::new(0);
        let (request, pending) = forced_request(&mut wallet, &key, 8, 2);
        assert_eq!(request.blinded_value, BigUint::from(9u32));
        assert_eq!(pending.blinded_value(), &BigUint::from(9u32));
        assert_eq!(wallet.pending().len(), 1);
    }

    #[test]
    fn unknown_attribute() {
        let key = toy();
        let mut wallet = Wallet::new(0);
        let dir = directory(key.public());
        let other = AttributeId::new("resident:region-Y").unwrap();
        assert!(matches!(
            wallet.create_issue_request("tax", &other, &dir),
            Err(CredentialError::UnknownAttribute { .. })
        ));
    }

    #[test]
    fn request_wire_fields_are_minimal() {
        let key = toy();
        let mut wallet = Wallet::new(0);
        let (request, _) = wallet.create_issue_request("tax", &attr(), &directory(key.public())).unwrap();
        let value = serde_json::to_value(&request).unwrap();
        let keys: Vec<_> = value.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["attribute_id", "blinded_value"]);
    }

    #[test]
    fn finalize_examples() {
        let key = toy();
        let mut wallet = Wallet::new(0);
        let (_, pending) = forced_request(&mut wallet, &key, 8, 2);

        // 5 * 28 mod 55 = 30 and 30^3 mod 55 = 50, not 8.
        assert_eq!(
            wallet.finalize_credential(&pending, &BigUint::from(5u32)),
            Err(CredentialError::BadIssuerSignature)
        );
        assert_eq!(wallet.pending().len(), 1);

        let credential = wallet.finalize_credential(&pending, &BigUint::from(4u32)).unwrap();
        assert_eq!(credential.signature(), &BigUint::from(2u32));
        assert!(!credential.is_used());
        assert!(wallet.pending().is_empty());
        assert_eq!(
            wallet.finalize_credential(&pending, &BigUint::from(4u32)),
            Err(CredentialError::NoSuchPending)
        );
    }

    #[test]
    fn presentation_is_single_use() {
        let key = toy();
        let mut wallet = Wallet::new(0);
        assert_eq!(
            wallet.take_for_presentation(&CredentialSelector::NextUnused(attr())),
            Err(CredentialError::NoSuchCredential)
        );
        let (_, pending) = forced_request(&mut wallet, &key, 8, 2);
        let credential = wallet.finalize_credential(&pending, &BigUint::from(4u32)).unwrap();
        let by_serial = CredentialSelector::Serial(*credential.serial());

        let presentation = wallet.take_for_presentation(&by_serial).unwrap();
        let value = serde_json::to_value(&presentation).unwrap();
        let keys: Vec<_> = value.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["attribute_id", "serial", "signature"]);
        assert_eq!(presentation.signature, BigUint::from(2u32));

        assert_eq!(
            wallet.take_for_presentation(&by_serial),
            Err(CredentialError::CredentialAlreadyUsed)
        );
        assert_eq!(
            wallet.take_for_presentation(&CredentialSelector::NextUnused(attr())),
            Err(CredentialError::NoSuchCredential)
        );
        assert!(wallet.credentials()[0].is_used());
    }

    #[test]
    fn end_to_end_all_units_toy_key() {
        let key = toy();
        let pk = key.public();
        let units: Vec<u64> = (1..55).filter(|x| num_integer::gcd(*x, 55) == 1).collect();
        let hash_outputs: Vec<u64> = units.iter().copied().filter(|&m| m >= 2).collect();
        let mut wallet = Wallet::new(1);
        for &m in &hash_outputs {
            let serial = serial_hashing_to(m, pk);
            for &r in &units {
                let bf = BlindingFactor::from_r(BigUint::from(r), pk).unwrap();
                wallet.serials.remove(&serial);
                let (request, pending) = wallet.request_with("tax", &attr(), pk.clone(), serial, bf).unwrap();
                let blind_sig = sign_blinded(&request.blinded_value, &key).unwrap();
                let credential = wallet.finalize_credential(&pending, &blind_sig).unwrap();
                let hashed = blindsig::full_domain_hash(credential.serial().as_bytes(), pk).unwrap();
                assert!(blindsig::verify(&hashed, credential.signature(), pk), "m={m} r={r}");
            }
        }
    }
}
