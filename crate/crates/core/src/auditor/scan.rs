use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::transcript::{kind, TranscriptEvent};

/// Field names each event kind may carry in its payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AllowedSchemas(BTreeMap<String, BTreeSet<String>>);

impl AllowedSchemas {
    pub fn new() -> Self {
        Self(BTreeMap::new())
    }

    pub fn allow(mut self, kind: &str, fields: &[&str]) -> Self {
        self.0
            .insert(kind.to_owned(), fields.iter().map(|f| (*f).to_owned()).collect());
        self
    }

    pub fn fields(&self, kind: &str) -> Option<&BTreeSet<String>> {
        self.0.get(kind)
    }
}

impl Default for AllowedSchemas {
    /// The schemas this crate's nodes write.
    fn default() -> Self {
        Self::new()
            .allow(kind::ISSUANCE, &["attribute_id", "blinded_value"])
            .allow(kind::ISSUANCE_DENIED, &["attribute_id", "reason"])
            .allow(kind::PRESENTATION, &["attribute_id", "serial", "outcome"])
            .allow(kind::GOSSIP, &["attribute_id", "peer", "added"])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum FindingClass {
    ExtraField { field: String },
    UnknownKind { kind: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LeakFinding {
    pub node: String,
    pub timestamp: u64,
    pub seq: u64,
    #[serde(flatten)]
    pub class: FindingClass,
}

/// One finding per payload field outside the event kind's schema, and one per
/// event of an unlisted kind.
pub fn metadata_leak_scan<'a>(
    events: impl IntoIterator<Item = &'a TranscriptEvent>,
    schemas: &AllowedSchemas,
) -> Vec<LeakFinding> {
    let mut findings = Vec::new();
    for event in events {
        let finding = |class| LeakFinding {
            node: event.node.clone(),
            timestamp: event.timestamp,
            seq: event.seq,
            class,
        };
        match schemas.fields(&event.kind) {
            None => findings.push(finding(FindingClass::UnknownKind {
                kind: event.kind.clone(),
            })),
            Some(allowed) => findings.extend(
                event
                    .payload
                    .keys()
                    .filter(|field| !allowed.contains(*field))
                    .map(|field| finding(FindingClass::ExtraField { field: field.clone() })),
            ),
        }
    }
    findings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::Transcript;
    use serde_json::json;

    fn issuance(extra: Option<(&'static str, &'static str)>) -> Transcript {
        let mut t = Transcript::new("tax-office");
        let mut fields = vec![("attribute_id", json!("a")), ("blinded_value", json!("9"))];
        if let Some((k, v)) = extra {
            fields.push((k, json!(v)));
        }
        t.append(4, kind::ISSUANCE, fields);
        t
    }

    #[test]
    fn clean_transcript() {
        assert!(metadata_leak_scan(issuance(None).events(), &AllowedSchemas::default()).is_empty());
    }

    #[test]
    fn extra_field() {
        let t = issuance(Some(("citizen_name", "Y")));
        let findings = metadata_leak_scan(t.events(), &AllowedSchemas::default());
        assert_eq!(
            findings,
            vec![LeakFinding {
                node: "tax-office".into(),
                timestamp: 4,
                seq: 0,
                class: FindingClass::ExtraField {
                    field: "citizen_name".into()
                }
            }]
        );
        let value = serde_json::to_value(&findings[0]).unwrap();
        assert_eq!(value["class"], "extra_field");
    }

    #[test]
    fn unknown_kind() {
        let mut t = Transcript::new("rp");
        t.append(0, "location_ping", [("lat", json!("1"))]);
        let findings = metadata_leak_scan(t.events(), &AllowedSchemas::default());
        assert_eq!(findings.len(), 1);
        assert!(matches!(&findings[0].class, FindingClass::UnknownKind { kind } if kind == "location_ping"));
    }
}
