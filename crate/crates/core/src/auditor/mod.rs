//! Honest-but-curious analysis over the transcripts of every node.
//!
//! The auditor plays the strongest observer: it holds the issuer's log and all
//! relying-party logs and tries to link issuances to presentations. For each
//! attribute key it asks, for every (issuance, presentation) pair, whether a
//! blinding factor exists that maps one onto the other. With blind RSA
//! signatures the answer is always yes, so every presentation's anonymity set
//! is the whole issuance population for its key. The same pass scans payloads
//! for fields outside their schema, recounts double spends from raw events,
//! and checks that attribute keys are separate.

mod doublespend;
mod keysep;
mod matrix;
mod scan;

pub use doublespend::{double_spend_audit, DoubleSpendAudit, RaceFinding};
pub use keysep::{
    key_separation_check, key_separation_check_entries, CrossVerification, KeySeparationReport, SharedModulus,
    SignatureSource, MAX_CROSS_RATE, ZERO_TOLERANCE_BITS,
};
pub use matrix::{
    anonymity_set_sizes, blinding_witnesses, consistency_matrix, timing_unique_candidates, ConsistencyMatrix,
    IssuanceRow, MatrixMode, PresentationColumn, EXHAUSTIVE_LIMIT,
};
pub use scan::{metadata_leak_scan, AllowedSchemas, FindingClass, LeakFinding};

use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::blindsig::{BlindKeyPair, BlindSigError, PublicKey};
use crate::credentials::DirectoryEntry;
use crate::transcript::TranscriptEvent;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuditError {
    #[error("modulus {0} is too large to enumerate its units")]
    ModulusTooLargeForExhaustive(BigUint),
    #[error("modulus {0} is not square-free")]
    NotSquareFree(BigUint),
    #[error("key separation needs at least two attributes, found {0}")]
    InsufficientAttributes(usize),
    #[error("{node}#{seq}: {detail}")]
    BadEvent { node: String, seq: u64, detail: String },
    #[error("malformed directory: {0}")]
    MalformedDirectory(String),
    #[error(transparent)]
    BlindSig(#[from] BlindSigError),
}

impl AuditError {
    fn bad_event(event: &TranscriptEvent, detail: impl ToString) -> Self {
        AuditError::BadEvent {
            node: event.node.clone(),
            seq: event.seq,
            detail: detail.to_string(),
        }
    }
}

/// Reads a directory file as raw `(issuer, key)` entries, without rejecting
/// shared moduli, so the key-separation check can report them.
pub fn parse_directory_entries(text: &str) -> Result<Vec<(String, PublicKey)>, AuditError> {
    let entries: Vec<DirectoryEntry> =
        serde_json::from_str(text).map_err(|e| AuditError::MalformedDirectory(e.to_string()))?;
    entries
        .into_iter()
        .map(|entry| {
            let key = PublicKey::new(entry.n, entry.e, entry.attribute.as_str())?;
            Ok((entry.issuer, key))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ModeChoice {
    /// Exhaustive where the modulus allows it, algebraic otherwise.
    #[default]
    Auto,
    Exhaustive,
    Algebraic,
}

#[derive(Clone, Debug)]
pub struct AuditOptions {
    pub mode: ModeChoice,
    pub schemas: AllowedSchemas,
    pub key_separation_trials: usize,
    pub seed: u64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            mode: ModeChoice::Auto,
            schemas: AllowedSchemas::default(),
            key_separation_trials: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MatrixSummary {
    pub issuer: String,
    pub attribute_id: String,
    pub mode: MatrixMode,
    pub issuances: usize,
    pub presentations: usize,
    pub all_consistent: bool,
    pub anonymity_set_sizes: Vec<usize>,
    /// Presentations that timing alone narrows to a single issuance.
    pub timing_unique_candidates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum KeySeparationOutcome {
    Checked(KeySeparationReport),
    Skipped { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub events: usize,
    pub linkage: Vec<MatrixSummary>,
    pub leaks: Vec<LeakFinding>,
    pub key_separation: KeySeparationOutcome,
    pub double_spend: DoubleSpendAudit,
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        serde_json::to_string_pretty(&value).expect("json value serializes") + "\n"
    }

    /// Anything a strict audit should fail on: leaked fields, broken key
    /// separation, accepted duplicates, or a recount that does not add up.
    pub fn has_findings(&self) -> bool {
        !self.leaks.is_empty()
            || matches!(&self.key_separation, KeySeparationOutcome::Checked(r) if !r.pass)
            || !self.double_spend.consistent
            || !self.double_spend.races.is_empty()
    }

    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<36} {:>9} {:>13} {:>10} {:>12} {:>13}",
            "key", "issuances", "presentations", "consistent", "min-anon-set", "timing-unique"
        );
        for m in &self.linkage {
            let min = m.anonymity_set_sizes.iter().min().map_or("-".to_owned(), usize::to_string);
            let _ = writeln!(
                out,
                "{:<36} {:>9} {:>13} {:>10} {:>12} {:>13}",
                format!("{}/{}", m.issuer, m.attribute_id),
                m.issuances,
                m.presentations,
                if m.all_consistent { "all" } else { "partial" },
                min,
                m.timing_unique_candidates
            );
        }
        let _ = writeln!(out, "events scanned: {}", self.events);
        let _ = writeln!(out, "metadata leaks: {}", self.leaks.len());
        for leak in &self.leaks {
            let what = match &leak.class {
                FindingClass::ExtraField { field } => format!("extra field {field:?}"),
                FindingClass::UnknownKind { kind } => format!("unknown kind {kind:?}"),
            };
            let _ = writeln!(out, "  {}#{} t={}: {}", leak.node, leak.seq, leak.timestamp, what);
        }
        let ds = &self.double_spend;
        let _ = writeln!(
            out,
            "double spends: recount {} = {} rejected + {} accepted duplicates ({})",
            ds.recount,
            ds.double_spend_rejects,
            ds.accepted_duplicates,
            if ds.consistent { "consistent" } else { "INCONSISTENT" }
        );
        for race in &ds.races {
            let _ = writeln!(out, "  race: {} accepted at {}", race.serial, race.accepted_at.join(", "));
        }
        match &self.key_separation {
            KeySeparationOutcome::Checked(r) => {
                let _ = writeln!(
                    out,
                    "key separation: {} (structural {}, {} cross checks)",
                    if r.pass { "pass" } else { "FAIL" },
                    if r.structural_pass { "pass" } else { "FAIL" },
                    r.cross_verification.len()
                );
            }
            KeySeparationOutcome::Skipped { reason } => {
                let _ = writeln!(out, "key separation: skipped ({reason})");
            }
        }
        out
    }
}

/// Runs every check over `events` (all nodes' transcripts) against the
/// published keys in `entries`. `signers` may supply private keys for the
/// key-separation trials; without them those trials are simulated.
pub fn audit(
    events: &[TranscriptEvent],
    entries: &[(String, PublicKey)],
    signers: &[BlindKeyPair],
    options: &AuditOptions,
) -> Result<AuditReport, AuditError> {
    let mut linkage = Vec::new();
    for (issuer, key) in entries {
        let issuer_events: Vec<TranscriptEvent> = events.iter().filter(|e| &e.node == issuer).cloned().collect();
        let mode = match options.mode {
            ModeChoice::Exhaustive => MatrixMode::Exhaustive,
            ModeChoice::Algebraic => MatrixMode::Algebraic,
            ModeChoice::Auto => match key.modulus().to_u64() {
                Some(n) if n <= EXHAUSTIVE_LIMIT => MatrixMode::Exhaustive,
                _ => MatrixMode::Algebraic,
            },
        };
        let matrix = consistency_matrix(&issuer_events, events, key, mode)?;
        if matrix.rows.is_empty() && matrix.cols.is_empty() {
            continue;
        }
        linkage.push(MatrixSummary {
            issuer: issuer.clone(),
            attribute_id: matrix.attribute_id.clone(),
            mode,
            issuances: matrix.rows.len(),
            presentations: matrix.cols.len(),
            all_consistent: matrix.is_all_true(),
            anonymity_set_sizes: anonymity_set_sizes(&matrix),
            timing_unique_candidates: timing_unique_candidates(&matrix),
        });
    }

    let mut rng = ChaCha20Rng::seed_from_u64(options.seed);
    let key_separation =
        match key_separation_check_entries(entries, signers, options.key_separation_trials, &mut rng) {
            Ok(report) => KeySeparationOutcome::Checked(report),
            Err(AuditError::InsufficientAttributes(n)) => KeySeparationOutcome::Skipped {
                reason: format!("{n} attribute key(s) published; need at least two"),
            },
            Err(other) => return Err(other),
        };

    Ok(AuditReport {
        events: events.len(),
        linkage,
        leaks: metadata_leak_scan(events, &options.schemas),
        key_separation,
        double_spend: double_spend_audit(events),
    })
}
