use serde::{Deserialize, Serialize};

use super::addr::{LineAddr, LINE_BYTES};
use super::memory::LineData;
use crate::engine::SimTime;

/// Stable MESI states of a private cache line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mesi {
    M,
    E,
    S,
    I,
}

impl Mesi {
    pub fn is_exclusive(self) -> bool {
        matches!(self, Mesi::M | Mesi::E)
    }
}

/// Identifies a cache controller (host L1s are `0..cores`, the HMC follows).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CtrlId(pub u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheGeometry {
    pub capacity: u64,
    pub ways: usize,
}

impl CacheGeometry {
    pub const HMC: CacheGeometry = CacheGeometry { capacity: 128 * 1024, ways: 4 };

    pub fn sets(&self) -> usize {
        (self.capacity / (self.ways as u64 * LINE_BYTES)) as usize
    }

    pub fn is_valid(&self) -> bool {
        self.ways > 0
            && self.sets() > 0
            && self.sets().is_power_of_two()
            && self.sets() as u64 * self.ways as u64 * LINE_BYTES == self.capacity
    }
}

#[derive(Debug, Clone)]
pub struct Way<M> {
    pub line: LineAddr,
    pub state: Mesi,
    pub dirty: bool,
    pub data: LineData,
    pub meta: M,
    /// The line may not be evicted or snooped before this time.
    pub locked_until: SimTime,
    /// Fill data arrives at this time.
    pub ready_at: SimTime,
    last_touch: u64,
}

impl<M> Way<M> {
    pub fn is_locked(&self, now: SimTime) -> bool {
        now < self.locked_until
    }

    fn pinned(&self, now: SimTime) -> bool {
        now < self.locked_until || now < self.ready_at
    }
}

/// Outcome of asking for room for a new line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Victim {
    /// The set has an empty way.
    Free,
    /// Evict this line first.
    Evict(LineAddr),
    /// Every way is locked or filling; retry at the given time.
    Blocked(SimTime),
}

/// Set-associative, LRU, 64-byte lines. Sets are allocated lazily, so a
/// 96 MB LLC costs memory only for the lines actually touched.
#[derive(Debug, Clone)]
pub struct CacheModel<M = ()> {
    pub id: CtrlId,
    geometry: CacheGeometry,
    set_mask: u64,
    sets: Vec<Vec<Way<M>>>,
    clock: u64,
}

impl<M: Clone + Default> CacheModel<M> {
    pub fn new(id: CtrlId, geometry: CacheGeometry) -> Self {
        assert!(geometry.is_valid(), "invalid cache geometry {geometry:?}");
        let sets = geometry.sets();
        CacheModel { id, geometry, set_mask: sets as u64 - 1, sets: vec![Vec::new(); sets], clock: 0 }
    }

    pub fn geometry(&self) -> CacheGeometry {
        self.geometry
    }

    pub fn set_index(&self, line: LineAddr) -> usize {
        (line.index() & self.set_mask) as usize
    }

    pub fn get(&self, line: LineAddr) -> Option<&Way<M>> {
        self.sets[self.set_index(line)].iter().find(|w| w.line == line)
    }

    pub fn get_mut(&mut self, line: LineAddr) -> Option<&mut Way<M>> {
        let s = self.set_index(line);
        self.sets[s].iter_mut().find(|w| w.line == line)
    }

    pub fn contains(&self, line: LineAddr) -> bool {
        self.get(line).is_some()
    }

    /// Marks the line most recently used.
    pub fn touch(&mut self, line: LineAddr) {
        self.clock += 1;
        let c = self.clock;
        if let Some(w) = self.get_mut(line) {
            w.last_touch = c;
        }
    }

    /// Chooses room for `line`: a free way, else the least-recently-touched
    /// way that is neither locked nor filling at `now` and passes `allowed`.
    pub fn victim_for(&self, line: LineAddr, now: SimTime, allowed: impl Fn(&Way<M>) -> bool) -> Victim {
        let set = &self.sets[self.set_index(line)];
        if set.len() < self.geometry.ways {
            return Victim::Free;
        }
        let candidate = set.iter().filter(|w| !w.pinned(now) && allowed(w)).min_by_key(|w| w.last_touch);
        match candidate {
            Some(w) => Victim::Evict(w.line),
            None => {
                let until =
                    set.iter().map(|w| w.locked_until.max(w.ready_at)).filter(|t| *t > now).min().unwrap_or(now);
                Victim::Blocked(until)
            }
        }
    }

    /// Inserts a line into a free way; panics if the set is full.
    pub fn insert(&mut self, line: LineAddr, state: Mesi, data: LineData, meta: M) -> &mut Way<M> {
        self.clock += 1;
        let ways = self.geometry.ways;
        let clock = self.clock;
        let s = self.set_index(line);
        let set = &mut self.sets[s];
        assert!(set.len() < ways, "insert into full set");
        assert!(!set.iter().any(|w| w.line == line), "duplicate line");
        set.push(Way {
            line,
            state,
            dirty: state == Mesi::M,
            data,
            meta,
            locked_until: SimTime::ZERO,
            ready_at: SimTime::ZERO,
            last_touch: clock,
        });
        set.last_mut().unwrap()
    }

    pub fn remove(&mut self, line: LineAddr) -> Option<Way<M>> {
        let s = self.set_index(line);
        let set = &mut self.sets[s];
        let pos = set.iter().position(|w| w.line == line)?;
        Some(set.swap_remove(pos))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Way<M>> {
        self.sets.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.iter().all(Vec::is_empty)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CacheModel {
        // 4 ways, 2 sets
        CacheModel::new(CtrlId(0), CacheGeometry { capacity: 512, ways: 4 })
    }

    fn line_in_set0(i: u64) -> LineAddr {
        LineAddr::containing(i * 2 * 64)
    }

    #[test]
    fn hmc_geometry() {
        let g = CacheGeometry::HMC;
        assert_eq!(g.sets(), 512);
        assert!(g.is_valid());
        assert!(!CacheGeometry { capacity: 3 * 64 * 4, ways: 4 }.is_valid());
    }

    #[test]
    fn free_until_full() {
        let mut c = small();
        for i in 0..4 {
            assert_eq!(c.victim_for(line_in_set0(i), SimTime::ZERO, |_| true), Victim::Free);
            c.insert(line_in_set0(i), Mesi::E, [0; 64], ());
        }
        assert_eq!(c.victim_for(line_in_set0(9), SimTime::ZERO, |_| true), Victim::Evict(line_in_set0(0)));
    }

    /// Every permutation of touch order over a full 4-way set: the victim is
    /// always the way touched longest ago.
    #[test]
    fn lru_exhaustive_4way() {
        let perms = permutations(&[0u64, 1, 2, 3]);
        assert_eq!(perms.len(), 24);
        for p in perms {
            let mut c = small();
            for i in 0..4 {
                c.insert(line_in_set0(i), Mesi::S, [0; 64], ());
            }
            for &i in &p {
                c.touch(line_in_set0(i));
            }
            assert_eq!(
                c.victim_for(line_in_set0(7), SimTime::ZERO, |_| true),
                Victim::Evict(line_in_set0(p[0])),
                "touch order {p:?}"
            );
        }
    }

    /// Same exhaustive sweep with each way locked in turn: the victim is the
    /// least recent of the remaining unlocked ways.
    #[test]
    fn lru_skips_locked_ways() {
        for p in permutations(&[0u64, 1, 2, 3]) {
            for locked in 0..4u64 {
                let mut c = small();
                for i in 0..4 {
                    c.insert(line_in_set0(i), Mesi::M, [0; 64], ());
                }
                for &i in &p {
                    c.touch(line_in_set0(i));
                }
                c.get_mut(line_in_set0(locked)).unwrap().locked_until = SimTime(100);
                let expect = p.iter().copied().find(|&i| i != locked).unwrap();
                assert_eq!(c.victim_for(line_in_set0(7), SimTime(50), |_| true), Victim::Evict(line_in_set0(expect)));
                // lock expired
                assert_eq!(c.victim_for(line_in_set0(7), SimTime(100), |_| true), Victim::Evict(line_in_set0(p[0])));
            }
        }
    }

    #[test]
    fn all_locked_reports_blocked() {
        let mut c = small();
        for i in 0..4 {
            c.insert(line_in_set0(i), Mesi::M, [0; 64], ()).locked_until = SimTime(10 + i);
        }
        assert_eq!(c.victim_for(line_in_set0(8), SimTime(5), |_| true), Victim::Blocked(SimTime(10)));
    }

    fn permutations(items: &[u64]) -> Vec<Vec<u64>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = vec![];
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let x = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, x);
                out.push(p);
            }
        }
        out
    }
}
