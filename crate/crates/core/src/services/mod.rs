//! Issuer and relying-party nodes, their wire format, and spent-set gossip.
//!
//! Nodes are single-threaded state machines; a driver owns them and feeds
//! them messages. Double-spend state is kept per relying party and converges
//! through pairwise gossip (set union), so there is no central registry and a
//! replay can slip through at a second node before gossip reaches it.

pub mod issuer;
pub mod relying_party;
pub mod spent;
pub mod wire;

pub use issuer::{CitizenSession, Eligibility, IssuerNode, DEFAULT_QUOTA};
pub use relying_party::RelyingPartyNode;
pub use spent::SpentSet;
pub use wire::{
    DenialReason, GossipDigest, IssueResponse, MessageKind, PresentationResult, RejectReason, WireMessage,
};

use thiserror::Error;

use crate::credentials::{AttributeId, CredentialError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ServiceError {
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error("unexpected {0} message")]
    UnexpectedKind(MessageKind),
    #[error("refusing gossip for {remote} at a node serving {local}")]
    CrossAttributeGossip { local: AttributeId, remote: AttributeId },
    #[error("attribute {0} would share a modulus with another attribute")]
    SharedModulus(AttributeId),
    #[error(transparent)]
    Credential(#[from] CredentialError),
}

/// One bidirectional anti-entropy exchange. Afterwards both nodes hold the
/// union of their previous spent-sets. Returns how many serials each side
/// learned.
pub fn gossip_spent(
    a: &mut RelyingPartyNode,
    b: &mut RelyingPartyNode,
    now: u64,
) -> Result<(usize, usize), ServiceError> {
    let from_a = a.gossip_digest();
    let from_b = b.gossip_digest();
    let learned_by_b = b.receive_gossip(a.name(), &from_a, now)?;
    let learned_by_a = a.receive_gossip(b.name(), &from_b, now)?;
    Ok((learned_by_a, learned_by_b))
}

/// Every unordered pair gossips once, in the given order of node indices.
pub fn full_gossip_round(nodes: &mut [RelyingPartyNode], order: &[(usize, usize)], now: u64) -> Result<(), ServiceError> {
    for &(i, j) in order {
        assert!(i != j, "a node does not gossip with itself");
        let (lo, hi) = (i.min(j), i.max(j));
        let (left, right) = nodes.split_at_mut(hi);
        gossip_spent(&mut left[lo], &mut right[0], now)?;
    }
    Ok(())
}

/// All unordered pairs `(i, j)` with `i < j`.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::credentials::{AttributeKeyDirectory, Serial};

    fn node(name: &str, serials: &[u8]) -> RelyingPartyNode {
        let mut n = RelyingPartyNode::new(
            name,
            AttributeId::new("a").unwrap(),
            "tax",
            AttributeKeyDirectory::new(),
        );
        let digest = GossipDigest {
            attribute_id: AttributeId::new("a").unwrap(),
            serials: serials.iter().map(|&b| Serial::from_bytes([b; 32])).collect(),
        };
        n.receive_gossip("seed", &digest, 0).unwrap();
        n
    }

    fn contents(n: &RelyingPartyNode) -> Vec<u8> {
        n.spent().iter().map(|s| s.as_bytes()[0]).collect()
    }

    #[test]
    fn pairwise_union() {
        let mut a = node("a", &[1]);
        let mut b = node("b", &[2]);
        assert_eq!(gossip_spent(&mut a, &mut b, 1).unwrap(), (1, 1));
        assert_eq!(contents(&a), [1, 2]);
        assert_eq!(contents(&b), [1, 2]);
        assert_eq!(gossip_spent(&mut a, &mut b, 2).unwrap(), (0, 0));
        assert_eq!(contents(&a), [1, 2]);
    }

    #[test]
    fn three_nodes_full_round() {
        let mut nodes = vec![node("a", &[1, 4]), node("b", &[2]), node("c", &[3, 4])];
        full_gossip_round(&mut nodes, &all_pairs(3), 1).unwrap();
        for n in &nodes {
            assert_eq!(contents(n), [1, 2, 3, 4]);
        }
    }
}
