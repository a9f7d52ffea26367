use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use civic_cred::blindsig::BlindKeyPair;
use civic_cred::codec::int_to_hex;
use civic_cred::credentials::{AttributeId, AttributeKeyDirectory, CredentialSelector, Wallet};
use civic_cred::scenarios::{run_contact_tracing_scenario, run_transit_scenario, ScenarioConfig};
use civic_cred::services::{
    CitizenSession, IssueResponse, IssuerNode, PresentationResult, RejectReason, RelyingPartyNode, WireMessage,
};

fn setup(bits: u64) -> (IssuerNode, AttributeKeyDirectory, AttributeId) {
    let attribute = AttributeId::new("resident:city").unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(bits);
    let key = BlindKeyPair::generate(bits, 65537, "resident:city", &mut rng).unwrap();
    let mut issuer = IssuerNode::new("city-hall", Box::new(|s: &CitizenSession, _: &AttributeId| s.0 != "visitor"));
    issuer.add_key(key).unwrap();
    let mut directory = AttributeKeyDirectory::new();
    issuer.publish(&mut directory).unwrap();
    (issuer, directory, attribute)
}

#[test]
fn wire_flow_keeps_holder_secrets_off_the_wire() {
    let (mut issuer, directory, attribute) = setup(256);
    let mut rp = RelyingPartyNode::new("library", attribute.clone(), "city-hall", directory.clone());
    let mut wallet = Wallet::new(42);
    let session = CitizenSession("resident-1".into());

    let mut outbound: Vec<Vec<u8>> = Vec::new();
    let mut secrets: Vec<String> = Vec::new();
    for now in 1..=3 {
        let (req, pending) = wallet.create_issue_request("city-hall", &attribute, &directory).unwrap();
        secrets.push(pending.serial().to_hex());
        secrets.push(int_to_hex(pending.blinding_factor().r()));
        secrets.push(int_to_hex(pending.blinding_factor().r_inverse()));
        let request = WireMessage::IssueRequest(req).encode();
        outbound.push(request.clone());
        let reply = issuer.handle_message(&session, &request, now).unwrap();
        let WireMessage::IssueResponse(IssueResponse::Granted { blinded_signature, .. }) =
            WireMessage::decode(&reply).unwrap()
        else {
            panic!("issuance denied");
        };
        wallet.finalize_credential(&pending, &blinded_signature).unwrap();
    }

    let issuer_log = issuer.transcript().to_jsonl();
    for wire in &outbound {
        let text = String::from_utf8(wire.clone()).unwrap();
        for secret in &secrets {
            assert!(!text.contains(secret.as_str()), "secret leaked into an issuance request");
        }
    }
    for secret in &secrets {
        assert!(!issuer_log.contains(secret.as_str()));
    }

    // Presenting reveals the serial for the first time, and only then.
    let pres = wallet.take_for_presentation(&CredentialSelector::NextUnused(attribute.clone())).unwrap();
    let bytes = WireMessage::Presentation(pres.clone()).encode();
    let reply = WireMessage::decode(&rp.handle_message(&bytes, 10).unwrap()).unwrap();
    assert_eq!(reply, WireMessage::Result(PresentationResult::Accept));
    let replay = WireMessage::decode(&rp.handle_message(&bytes, 11).unwrap()).unwrap();
    assert_eq!(replay, WireMessage::Result(PresentationResult::Reject(RejectReason::DoubleSpend)));

    // The wallet refuses to hand the same credential out twice.
    assert!(wallet.take_for_presentation(&CredentialSelector::Serial(pres.serial)).is_err());
    assert_eq!(wallet.unused().count(), 2);
}

#[test]
fn ineligible_and_over_quota_requests_are_denied() {
    let (mut issuer, directory, attribute) = setup(64);
    let mut wallet = Wallet::new(1);
    let (req, _) = wallet.create_issue_request("city-hall", &attribute, &directory).unwrap();
    let visitor = CitizenSession("visitor".into());
    assert!(matches!(issuer.handle_issue_request(&visitor, &req, 1), IssueResponse::Denied { .. }));

    let resident = CitizenSession("resident".into());
    let granted = (0..5)
        .filter(|&i| {
            let (req, _) = wallet.create_issue_request("city-hall", &attribute, &directory).unwrap();
            matches!(issuer.handle_issue_request(&resident, &req, 2 + i), IssueResponse::Granted { .. })
        })
        .count();
    assert_eq!(granted, 3);
}

#[test]
fn forged_signature_is_rejected() {
    let (_, directory, attribute) = setup(64);
    let mut rp = RelyingPartyNode::new("pool", attribute.clone(), "city-hall", directory);
    let forged = civic_cred::credentials::Presentation {
        attribute_id: attribute,
        serial: civic_cred::credentials::Serial::from_bytes([9; 32]),
        signature: BigUint::from(12345u32),
    };
    assert_eq!(rp.handle_presentation(&forged, 1), PresentationResult::Reject(RejectReason::BadSignature));
    assert!(rp.spent().is_empty());
}

#[test]
fn scenarios_are_deterministic() {
    let config = ScenarioConfig {
        seed: 17,
        cheaters: 3,
        gossip_every: 2,
        relying_parties: 3,
        ..ScenarioConfig::default()
    };
    let a = run_transit_scenario(&config).unwrap();
    let b = run_transit_scenario(&config).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let logs = |r: &civic_cred::scenarios::SimulationReport| r.transcripts.iter().map(|t| t.to_jsonl()).collect::<Vec<_>>();
    assert_eq!(logs(&a), logs(&b));
    assert_ne!(a.to_json(), run_transit_scenario(&ScenarioConfig { seed: 18, ..config.clone() }).unwrap().to_json());

    let tracing = ScenarioConfig { seed: 3, citizens: 40, ..ScenarioConfig::default() };
    assert_eq!(
        run_contact_tracing_scenario(&tracing).unwrap().to_json(),
        run_contact_tracing_scenario(&tracing).unwrap().to_json()
    );
}
