use std::collections::BTreeMap;

use crate::engine::SimTime;

/// A single-server resource booked in time slots.
///
/// Bookings may arrive out of time order (a request computed now may need the
/// port far in the future), so the calendar keeps merged busy intervals and
/// gives each booking the earliest gap that fits.
#[derive(Debug, Clone, Default)]
pub struct SlotCalendar {
    busy: BTreeMap<u64, u64>,
}

impl SlotCalendar {
    pub fn new() -> Self {
        Self::default()
    }

    /// Books `dur` starting no earlier than `at`; returns the start.
    pub fn reserve(&mut self, at: SimTime, dur: SimTime) -> SimTime {
        let dur = dur.ps();
        let mut start = at.ps();
        if dur == 0 {
            return at;
        }
        // the interval that may overlap `start` begins at or before it
        if let Some((&s, &e)) = self.busy.range(..=start).next_back() {
            if e > start {
                debug_assert!(s <= start);
                start = e;
            }
        }
        loop {
            match self.busy.range(start..).next() {
                Some((&s, &e)) if s < start + dur => start = e,
                _ => break,
            }
        }
        self.insert(start, start + dur);
        SimTime(start)
    }

    fn insert(&mut self, mut s: u64, mut e: u64) {
        if let Some((&ps, &pe)) = self.busy.range(..=s).next_back() {
            if pe == s {
                self.busy.remove(&ps);
                s = ps;
            }
        }
        if let Some(&ne) = self.busy.get(&e) {
            self.busy.remove(&e);
            e = ne;
        }
        self.busy.insert(s, e);
    }

    /// Forgets intervals that ended at or before `now`.
    pub fn prune(&mut self, now: SimTime) {
        while let Some((&s, &e)) = self.busy.first_key_value() {
            if e <= now.ps() {
                self.busy.remove(&s);
            } else {
                break;
            }
        }
    }

    /// Total booked time still remembered.
    pub fn booked(&self) -> u64 {
        self.busy.iter().map(|(s, e)| e - s).sum()
    }
}

/// Bounded outstanding-request credits.
///
/// A request acquires a credit when it departs and returns it when its
/// terminal response is delivered. When all credits are held, the request
/// departs at the earliest return time (FIFO in call order).
#[derive(Debug, Clone)]
pub struct CreditPool {
    max: usize,
    releases: BTreeMap<SimTime, usize>,
    held: usize,
    acquired: u64,
    released: u64,
    peak: usize,
}

/// Proof of an acquired credit; must be released exactly once.
#[must_use]
#[derive(Debug)]
pub struct CreditToken {
    pub start: SimTime,
}

impl CreditPool {
    pub fn new(max: usize) -> Self {
        assert!(max >= 1, "credit pool needs at least one credit");
        CreditPool { max, releases: BTreeMap::new(), held: 0, acquired: 0, released: 0, peak: 0 }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    fn forget_before(&mut self, t: SimTime) {
        while let Some((&r, &n)) = self.releases.first_key_value() {
            if r <= t {
                self.releases.remove(&r);
                self.held -= n;
            } else {
                break;
            }
        }
    }

    pub fn acquire(&mut self, at: SimTime) -> CreditToken {
        self.forget_before(at);
        let mut start = at;
        if self.held >= self.max {
            let (&r, _) = self.releases.first_key_value().expect("held credits have release times");
            start = r;
            self.forget_before(r);
        }
        self.acquired += 1;
        self.peak = self.peak.max(self.held + 1);
        // reserve the slot until release() records the real time
        *self.releases.entry(SimTime::MAX).or_default() += 1;
        self.held += 1;
        CreditToken { start }
    }

    pub fn release(&mut self, token: CreditToken, at: SimTime) {
        let _ = token;
        let pending = self.releases.get_mut(&SimTime::MAX).expect("release without acquire");
        *pending -= 1;
        if *pending == 0 {
            self.releases.remove(&SimTime::MAX);
        }
        *self.releases.entry(at).or_default() += 1;
        self.released += 1;
    }

    pub fn acquired(&self) -> u64 {
        self.acquired
    }

    pub fn released(&self) -> u64 {
        self.released
    }

    /// Largest number of credits held at once.
    pub fn peak(&self) -> usize {
        self.peak
    }
}
