use std::collections::BTreeSet;

use crate::credentials::Serial;

/// Grow-only set of consumed serials. There is no removal; merging is union.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpentSet {
    serials: BTreeSet<Serial>,
}

impl SpentSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `true` if the serial was not yet spent.
    pub fn insert(&mut self, serial: Serial) -> bool {
        self.serials.insert(serial)
    }

    pub fn contains(&self, serial: &Serial) -> bool {
        self.serials.contains(serial)
    }

    /// Set union; returns how many serials were new.
    pub fn merge<'a>(&mut self, other: impl IntoIterator<Item = &'a Serial>) -> usize {
        other.into_iter().filter(|s| self.serials.insert(**s)).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Serial> {
        self.serials.iter()
    }

    pub fn len(&self) -> usize {
        self.serials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.serials.is_empty()
    }
}

impl FromIterator<Serial> for SpentSet {
    fn from_iter<I: IntoIterator<Item = Serial>>(iter: I) -> Self {
        Self {
            serials: iter.into_iter().collect(),
        }
    }
}
