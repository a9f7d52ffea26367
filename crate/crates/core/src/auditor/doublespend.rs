use std::collections::BTreeMap;

use serde::Serialize;

use crate::transcript::{kind, TranscriptEvent};

/// A serial accepted more than once: a replay that reached another node
/// before gossip did.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RaceFinding {
    pub serial: String,
    pub accepted_at: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DoubleSpendAudit {
    /// Presentations of an already-presented serial, recounted from raw
    /// events across all nodes.
    pub recount: usize,
    pub double_spend_rejects: usize,
    pub accepted_duplicates: usize,
    pub races: Vec<RaceFinding>,
    /// `recount == double_spend_rejects + accepted_duplicates`.
    pub consistent: bool,
}

/// Recounts repeated serials over the validly signed presentations of all
/// relying parties (outcomes `accept` and `double_spend`), in global
/// `(timestamp, node, seq)` order.
pub fn double_spend_audit<'a>(events: impl IntoIterator<Item = &'a TranscriptEvent>) -> DoubleSpendAudit {
    let mut presentations: Vec<&TranscriptEvent> = events
        .into_iter()
        .filter(|e| e.kind == kind::PRESENTATION && matches!(e.field("outcome"), Some("accept" | "double_spend")))
        .collect();
    presentations.sort_by(|a, b| (a.timestamp, &a.node, a.seq).cmp(&(b.timestamp, &b.node, b.seq)));

    #[derive(Default)]
    struct Tally {
        seen: usize,
        accepted_at: Vec<String>,
        rejects: usize,
    }
    let mut by_serial: BTreeMap<&str, Tally> = BTreeMap::new();
    for event in presentations {
        let Some(serial) = event.field("serial") else { continue };
        let tally = by_serial.entry(serial).or_default();
        tally.seen += 1;
        match event.field("outcome") {
            Some("accept") => tally.accepted_at.push(event.node.clone()),
            _ => tally.rejects += 1,
        }
    }

    let mut audit = DoubleSpendAudit::default();
    for (serial, tally) in by_serial {
        audit.recount += tally.seen - 1;
        audit.double_spend_rejects += tally.rejects;
        if tally.accepted_at.len() > 1 {
            audit.accepted_duplicates += tally.accepted_at.len() - 1;
            audit.races.push(RaceFinding {
                serial: serial.to_owned(),
                accepted_at: tally.accepted_at,
            });
        }
    }
    audit.consistent = audit.recount == audit.double_spend_rejects + audit.accepted_duplicates;
    audit
}
