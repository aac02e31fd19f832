use serde::{Deserialize, Serialize};

use super::cache::CtrlId;

/// Directory view of a line's peer copies.
///
/// `Exclusive` covers both E and M at the owner: the owner upgrades E to M
/// silently, so the LLC cannot tell them apart.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DirState {
    #[default]
    I,
    S,
    Exclusive,
}

/// Per-line directory record embedded in LLC metadata.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectoryEntry {
    pub state: DirState,
    pub owner: Option<CtrlId>,
    pub sharers: u64,
}

impl DirectoryEntry {
    pub fn bit(id: CtrlId) -> u64 {
        1u64 << id.0
    }

    pub fn holders(&self) -> impl Iterator<Item = CtrlId> + '_ {
        (0..64u8).filter(|i| self.sharers & (1 << i) != 0).map(CtrlId)
    }

    pub fn has(&self, id: CtrlId) -> bool {
        self.sharers & Self::bit(id) != 0
    }

    pub fn set_exclusive(&mut self, id: CtrlId) {
        self.state = DirState::Exclusive;
        self.owner = Some(id);
        self.sharers = Self::bit(id);
    }

    pub fn add_sharer(&mut self, id: CtrlId) {
        self.state = DirState::S;
        self.owner = None;
        self.sharers |= Self::bit(id);
    }

    pub fn remove(&mut self, id: CtrlId) {
        self.sharers &= !Self::bit(id);
        if self.owner == Some(id) {
            self.owner = None;
        }
        self.state = if self.sharers == 0 {
            DirState::I
        } else if self.state == DirState::Exclusive && self.owner.is_none() {
            DirState::S
        } else {
            self.state
        };
    }

    pub fn clear(&mut self) {
        *self = DirectoryEntry::default();
    }

    /// The three structural invariants of an entry.
    pub fn is_well_formed(&self) -> bool {
        let owner_ok = match self.owner {
            Some(o) => self.state == DirState::Exclusive && self.sharers == Self::bit(o),
            None => self.state != DirState::Exclusive,
        };
        let state_ok = match self.state {
            DirState::I => self.sharers == 0,
            DirState::S => self.sharers != 0 && self.owner.is_none(),
            DirState::Exclusive => self.owner.is_some(),
        };
        owner_ok && state_ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transitions_keep_entry_well_formed() {
        let mut d = DirectoryEntry::default();
        assert!(d.is_well_formed());
        d.set_exclusive(CtrlId(3));
        assert!(d.is_well_formed());
        assert_eq!(d.holders().collect::<Vec<_>>(), vec![CtrlId(3)]);
        d.add_sharer(CtrlId(5));
        assert!(d.is_well_formed());
        assert_eq!(d.state, DirState::S);
        d.remove(CtrlId(3));
        d.remove(CtrlId(5));
        assert_eq!(d, DirectoryEntry::default());
    }

    #[test]
    fn malformed_entries_detected() {
        let bad = DirectoryEntry { state: DirState::S, owner: None, sharers: 0 };
        assert!(!bad.is_well_formed());
        let bad = DirectoryEntry { state: DirState::Exclusive, owner: Some(CtrlId(1)), sharers: 0b11 };
        assert!(!bad.is_well_formed());
    }
}
