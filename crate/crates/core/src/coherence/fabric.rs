use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::addr::{Address, LineAddr, MemoryMap, Region, LINE_BYTES};
use super::cache::{CacheGeometry, CacheModel, CtrlId, Mesi, Victim};
use super::directory::{DirState, DirectoryEntry};
use super::memory::{read_u64, write_u64, BackingStore, LineData};
use super::message::{MessageLog, Opcode, ProtocolMessage};
use crate::engine::SimTime;
use crate::error::{Result, SimError};
use crate::interconnect::{Direction, Link, SlotCalendar, Timing};

/// Host topology and cache geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FabricConfig {
    pub cores: usize,
    pub l1: CacheGeometry,
    pub llc: CacheGeometry,
    pub hmc: CacheGeometry,
    #[serde(skip)]
    pub map: MemoryMap,
    #[serde(skip)]
    pub log_messages: bool,
}

impl Default for FabricConfig {
    fn default() -> Self {
        FabricConfig {
            cores: 48,
            l1: CacheGeometry { capacity: 48 * 1024, ways: 12 },
            llc: CacheGeometry { capacity: 96 << 20, ways: 12 },
            hmc: CacheGeometry::HMC,
            map: MemoryMap::default(),
            log_messages: false,
        }
    }
}

impl FabricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cores == 0 || self.cores > 63 {
            return Err(SimError::Config(format!("topology.cores must be in 1..=63, got {}", self.cores)));
        }
        for (name, g) in [("l1", self.l1), ("llc", self.llc), ("hmc", self.hmc)] {
            if !g.is_valid() {
                return Err(SimError::Config(format!(
                    "topology.{name}: {} bytes / {} ways is not a power-of-two set count",
                    g.capacity, g.ways
                )));
            }
        }
        Ok(())
    }
}

/// Where a request found its data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    L1,
    Hmc,
    Llc,
    Mem,
}

impl Tier {
    pub fn name(self) -> &'static str {
        match self {
            Tier::L1 => "L1",
            Tier::Hmc => "HMC",
            Tier::Llc => "LLC",
            Tier::Mem => "MEM",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intent {
    Shared,
    Own,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access {
    pub done: SimTime,
    pub tier: Tier,
    pub data: LineData,
}

/// Result of a locked read-modify-write on an HMC line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rmw {
    pub old: u64,
    pub new: u64,
    pub tier: Tier,
    /// Read stage finished; the modify stage starts here.
    pub read_done: SimTime,
    /// Write stage finished and the line lock released.
    pub unlock: SimTime,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FabricStats {
    pub hmc_hits: u64,
    pub hmc_misses: u64,
    pub llc_hits: u64,
    pub llc_misses: u64,
    pub snoops: u64,
    pub hmc_evictions: u64,
    pub pushes: u64,
}

/// A line lock held by a device engine, for trace checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LockSpan {
    pub line: LineAddr,
    pub from: SimTime,
    pub until: SimTime,
}

/// Host caches, the device HMC and the CXL.cache link as one coherent system.
///
/// Operations are transaction level: each call applies its functional
/// effect immediately and returns the time it completes. Calls must be made
/// in nondecreasing `now` order; queuing on shared ports, per-line blocking
/// at the LLC, locks and fills in flight are all resolved in time.
pub struct Fabric {
    map: MemoryMap,
    t: Timing,
    cores: usize,
    l1s: Vec<CacheModel>,
    hmc: CacheModel,
    llc: CacheModel<DirectoryEntry>,
    host_mem: BackingStore,
    dev_mem: BackingStore,
    link: Link,
    hmc_port: SlotCalendar,
    llc_port: SlotCalendar,
    mem_port: SlotCalendar,
    line_busy: HashMap<LineAddr, SimTime>,
    log: MessageLog,
    locks: Vec<LockSpan>,
    snoop_done: Vec<(LineAddr, SimTime)>,
    stats: FabricStats,
    last_prune: SimTime,
}

impl Fabric {
    pub fn new(cfg: &FabricConfig, timing: Timing) -> Result<Self> {
        cfg.validate()?;
        let hmc_id = CtrlId(cfg.cores as u8);
        Ok(Fabric {
            map: cfg.map.clone(),
            cores: cfg.cores,
            l1s: (0..cfg.cores).map(|i| CacheModel::new(CtrlId(i as u8), cfg.l1)).collect(),
            hmc: CacheModel::new(hmc_id, cfg.hmc),
            llc: CacheModel::new(CtrlId(u8::MAX), cfg.llc),
            host_mem: BackingStore::default(),
            dev_mem: BackingStore::default(),
            link: Link::new(&timing),
            hmc_port: SlotCalendar::new(),
            llc_port: SlotCalendar::new(),
            mem_port: SlotCalendar::new(),
            line_busy: HashMap::new(),
            log: if cfg.log_messages { MessageLog::enabled() } else { MessageLog::default() },
            locks: Vec::new(),
            snoop_done: Vec::new(),
            stats: FabricStats::default(),
            last_prune: SimTime::ZERO,
            t: timing,
        })
    }

    pub fn hmc_id(&self) -> CtrlId {
        CtrlId(self.cores as u8)
    }

    pub fn cores(&self) -> usize {
        self.cores
    }

    pub fn timing(&self) -> &Timing {
        &self.t
    }

    pub fn map(&self) -> &MemoryMap {
        &self.map
    }

    pub fn log(&self) -> &MessageLog {
        &self.log
    }

    pub fn stats(&self) -> FabricStats {
        self.stats
    }

    pub fn link(&self) -> &Link {
        &self.link
    }

    pub fn lock_spans(&self) -> &[LockSpan] {
        &self.locks
    }

    /// Device-side completion times of snoops, per line (recorded with the log).
    pub fn snoop_completions(&self) -> &[(LineAddr, SimTime)] {
        &self.snoop_done
    }

    pub fn hmc(&self) -> &CacheModel {
        &self.hmc
    }

    pub fn l1(&self, core: usize) -> &CacheModel {
        &self.l1s[core]
    }

    pub fn llc(&self) -> &CacheModel<DirectoryEntry> {
        &self.llc
    }

    fn cycle(&self) -> SimTime {
        self.t.clock.cycles(1)
    }

    fn record(&mut self, tick: SimTime, opcode: Opcode, line: LineAddr, peer: CtrlId, data_valid: bool) {
        self.log.push(ProtocolMessage { tick, channel: opcode.channel(), opcode, line, requester: peer, data_valid });
    }

    fn busy(&self, line: LineAddr) -> SimTime {
        self.line_busy.get(&line).copied().unwrap_or(SimTime::ZERO)
    }

    fn set_busy(&mut self, line: LineAddr, until: SimTime) {
        let e = self.line_busy.entry(line).or_default();
        *e = (*e).max(until);
    }

    fn prune(&mut self, now: SimTime) {
        // bookings can only be needed again by calls at or after `now`
        if now.saturating_sub(self.last_prune) > SimTime::from_ns(10_000.0) {
            self.hmc_port.prune(now);
            self.llc_port.prune(now);
            self.mem_port.prune(now);
            self.link.prune(now);
            self.line_busy.retain(|_, t| *t > now);
            self.last_prune = now;
        }
    }

    fn check_core(&self, core: usize) -> Result<()> {
        if core < self.cores {
            Ok(())
        } else {
            Err(SimError::Config(format!("core {core} out of range (have {})", self.cores)))
        }
    }

    // ---- home agent -------------------------------------------------------

    /// Makes `line` present in the LLC. Returns whether it hit and when its
    /// data is available there.
    fn llc_lookup(&mut self, line: LineAddr, svc: SimTime, device_peer: bool) -> Result<(bool, SimTime)> {
        let after_service = svc + self.t.llc_service;
        if self.llc.contains(line) {
            self.llc.touch(line);
            self.stats.llc_hits += 1;
            return Ok((true, after_service));
        }
        self.stats.llc_misses += 1;
        let hmc = &self.hmc;
        let victim =
            self.llc.victim_for(line, svc, |w| hmc.get(w.line).is_none_or(|h| !h.is_locked(svc) && h.ready_at <= svc));
        match victim {
            Victim::Free => {}
            Victim::Evict(v) => self.llc_evict(v, svc)?,
            Victim::Blocked(_) => {
                return Err(SimError::protocol(line, "every LLC way in the set is locked by a device"));
            }
        }
        let region = self.map.region(line)?;
        let mut leg = self.t.dram;
        match region {
            Region::Host if device_peer => leg += self.t.numa.penalty(self.t.home_node)?,
            Region::Host => {}
            Region::Device => leg += self.t.cxlmem_adder,
        }
        let start = self.mem_port.reserve(after_service, self.t.mem_occupancy);
        let data = match region {
            Region::Host => self.host_mem.read(line),
            Region::Device => self.dev_mem.read(line),
        };
        self.llc.insert(line, Mesi::E, data, DirectoryEntry::default());
        Ok((false, start + leg))
    }

    /// Back-invalidates every peer copy and writes the line to memory.
    fn llc_evict(&mut self, line: LineAddr, at: SimTime) -> Result<()> {
        let dir = self.llc.get(line).map(|w| w.meta).unwrap_or_default();
        for h in dir.holders().collect::<Vec<_>>() {
            self.snoop(h, line, Opcode::SnpInv, at)?;
        }
        let way = self.llc.remove(line).expect("victim present");
        if way.dirty {
            self.write_memory(line, way.data)?;
        }
        Ok(())
    }

    fn write_memory(&mut self, line: LineAddr, data: LineData) -> Result<()> {
        match self.map.region(line)? {
            Region::Host => self.host_mem.write(line, data),
            Region::Device => self.dev_mem.write(line, data),
        }
        Ok(())
    }

    /// Sends a snoop from the LLC at `at`; returns when its response is back
    /// at the LLC. Dirty data is merged into the LLC copy.
    fn snoop(&mut self, target: CtrlId, line: LineAddr, op: Opcode, at: SimTime) -> Result<SimTime> {
        debug_assert!(matches!(op, Opcode::SnpInv | Opcode::SnpData));
        self.stats.snoops += 1;
        self.record(at, op, line, target, false);
        let is_hmc = target == self.hmc_id();
        let l1_hit = self.t.l1_hit;
        let arrive = if is_hmc { self.link.traverse(Direction::H2D, at, false) } else { at + l1_hit };
        let cache = if is_hmc { &mut self.hmc } else { &mut self.l1s[target.0 as usize] };
        let way = cache
            .get_mut(line)
            .ok_or_else(|| SimError::protocol(line, format!("directory lists {} but it holds no copy", target.0)))?;
        let t = arrive.max(way.locked_until).max(way.ready_at);
        let (dirty, data) = (way.dirty, way.data);
        if op == Opcode::SnpInv {
            cache.remove(line);
        } else {
            way.state = Mesi::S;
            way.dirty = false;
        }
        if self.log.is_enabled() {
            self.snoop_done.push((line, t));
        }
        let resp = if is_hmc { self.link.traverse(Direction::D2H, t, dirty) } else { t + l1_hit };
        if dirty {
            let w = self.llc.get_mut(line).expect("inclusive LLC");
            w.data = data;
            w.dirty = true;
            self.record(resp, Opcode::WritebackData, line, target, true);
        }
        Ok(resp)
    }

    /// Serves a read request from `peer` that the LLC starts at `svc`.
    /// Returns the data, the granted state, when the data can leave the LLC,
    /// and the tier that supplied it.
    fn home_read(
        &mut self,
        svc: SimTime,
        peer: CtrlId,
        line: LineAddr,
        intent: Intent,
    ) -> Result<(LineData, Mesi, SimTime, Tier)> {
        let device_peer = peer == self.hmc_id();
        let (hit, mut ready) = self.llc_lookup(line, svc, device_peer)?;
        let tier = if hit { Tier::Llc } else { Tier::Mem };
        let dir = self.llc.get(line).expect("just filled").meta;
        let snoop_at = svc + self.t.llc_service;
        match intent {
            Intent::Own => {
                for h in dir.holders().filter(|h| *h != peer).collect::<Vec<_>>() {
                    ready = ready.max(self.snoop(h, line, Opcode::SnpInv, snoop_at)?);
                }
            }
            Intent::Shared => {
                if let (DirState::Exclusive, Some(o)) = (dir.state, dir.owner) {
                    if o != peer {
                        ready = ready.max(self.snoop(o, line, Opcode::SnpData, snoop_at)?);
                    }
                }
            }
        }
        let way = self.llc.get_mut(line).expect("inclusive LLC");
        let d = &mut way.meta;
        let grant = match intent {
            Intent::Own => {
                d.set_exclusive(peer);
                Mesi::E
            }
            Intent::Shared if d.state == DirState::I || d.sharers == DirectoryEntry::bit(peer) => {
                d.set_exclusive(peer);
                Mesi::E
            }
            Intent::Shared => {
                if d.state == DirState::Exclusive {
                    d.state = DirState::S;
                    d.owner = None;
                }
                d.add_sharer(peer);
                Mesi::S
            }
        };
        Ok((way.data, grant, ready, tier))
    }

    // ---- device side ------------------------------------------------------

    /// Finds room in the HMC for `line` at or after `at`, evicting as needed.
    /// Returns when the way is free.
    fn hmc_room(&mut self, line: LineAddr, mut at: SimTime) -> Result<SimTime> {
        loop {
            match self.hmc.victim_for(line, at, |_| true) {
                Victim::Free => return Ok(at),
                Victim::Evict(v) => {
                    self.hmc_evict_line(v, at)?;
                    return Ok(at);
                }
                Victim::Blocked(t) => at = t,
            }
        }
    }

    /// DirtyEvict / CleanEvict flow for an HMC line. Returns when the
    /// device receives the terminal Go.
    fn hmc_evict_line(&mut self, line: LineAddr, at: SimTime) -> Result<SimTime> {
        let hmc_id = self.hmc_id();
        let way = self.hmc.remove(line).expect("evicting a present line");
        self.stats.hmc_evictions += 1;
        let op = if way.dirty { Opcode::DirtyEvict } else { Opcode::CleanEvict };
        let credit = self.link.acquire_credit(at.max(way.ready_at));
        let arrive = self.link.traverse(Direction::D2H, credit.start, false);
        self.record(arrive, op, line, hmc_id, false);
        let svc = arrive.max(self.busy(line));
        let svc = self.llc_port.reserve(svc, self.t.host_occupancy);
        let mut t = svc + self.t.llc_service;
        if way.dirty {
            self.record(t, Opcode::GoWritePull, line, hmc_id, false);
            let pulled = self.link.traverse(Direction::H2D, t, false);
            t = self.link.traverse(Direction::D2H, pulled, true);
            self.record(t, Opcode::WritebackData, line, hmc_id, true);
        }
        let llc =
            self.llc.get_mut(line).ok_or_else(|| SimError::protocol(line, "HMC line missing from inclusive LLC"))?;
        if way.dirty {
            llc.data = way.data;
            llc.dirty = true;
        }
        llc.meta.remove(hmc_id);
        self.record(t, Opcode::GoInvalidate, line, hmc_id, false);
        let done = self.link.traverse(Direction::H2D, t, false);
        self.link.release_credit(credit, done);
        self.set_busy(line, t);
        Ok(done)
    }

    /// Coherent device load of the line holding `addr`.
    pub fn device_load(&mut self, now: SimTime, addr: Address, intent: Intent) -> Result<Access> {
        let line = addr.line();
        self.map.require_host(line)?;
        self.prune(now);
        let start = self.hmc_port.reserve(now, self.cycle());
        let looked_up = start + self.t.hmc_hit;
        if let Some(w) = self.hmc.get(line) {
            if intent == Intent::Shared || w.state.is_exclusive() {
                let done = looked_up.max(w.ready_at).max(w.locked_until);
                let data = w.data;
                self.hmc.touch(line);
                self.stats.hmc_hits += 1;
                return Ok(Access { done, tier: Tier::Hmc, data });
            }
        }
        self.stats.hmc_misses += 1;
        self.device_miss(looked_up, line, intent)
    }

    fn device_miss(&mut self, looked_up: SimTime, line: LineAddr, intent: Intent) -> Result<Access> {
        let hmc_id = self.hmc_id();
        let op = match intent {
            Intent::Own => Opcode::RdOwn,
            Intent::Shared => Opcode::RdShared,
        };
        let credit = self.link.acquire_credit(looked_up);
        let arrive = self.link.traverse(Direction::D2H, credit.start, false);
        self.record(arrive, op, line, hmc_id, false);
        let svc = arrive.max(self.busy(line));
        let svc = self.llc_port.reserve(svc, self.t.host_occupancy);
        let (data, grant, ready, tier) = self.home_read(svc, hmc_id, line, intent)?;
        self.record(ready, Opcode::Data, line, hmc_id, true);
        self.record(ready, Opcode::Go, line, hmc_id, false);
        let done = self.link.traverse(Direction::H2D, ready, true);
        self.link.release_credit(credit, done);
        self.set_busy(line, done);

        if let Some(w) = self.hmc.get_mut(line) {
            // S to E upgrade keeps the way
            w.state = grant;
            w.data = data;
            w.ready_at = w.ready_at.max(done);
            self.hmc.touch(line);
        } else {
            let room = self.hmc_room(line, looked_up)?;
            let w = self.hmc.insert(line, grant, data, ());
            w.ready_at = done.max(room);
        }
        let done = done.max(self.hmc.get(line).expect("installed").ready_at);
        Ok(Access { done, tier, data })
    }

    /// Writes `bytes` at `addr` from the device, acquiring ownership first.
    /// A store to an E or M line completes locally with no messages.
    pub fn device_store(&mut self, now: SimTime, addr: Address, bytes: &[u8]) -> Result<Access> {
        check_span(addr, bytes.len())?;
        let acc = self.device_load(now, addr, Intent::Own)?;
        let w = self.hmc.get_mut(addr.line()).expect("owned after RdOwn");
        let off = addr.offset();
        w.data[off..off + bytes.len()].copy_from_slice(bytes);
        w.state = Mesi::M;
        w.dirty = true;
        Ok(Access { data: w.data, ..acc })
    }

    /// Locked read-modify-write of the 8-byte word at `addr`.
    ///
    /// The line is fetched with ownership, `f` is applied, and the line stays
    /// locked for `hold` after the read completes (modify and write stages).
    pub fn device_rmw(
        &mut self,
        now: SimTime,
        addr: Address,
        hold: SimTime,
        f: impl FnOnce(u64) -> u64,
    ) -> Result<Rmw> {
        if !addr.0.is_multiple_of(8) {
            return Err(SimError::Misaligned(addr.0));
        }
        let acc = self.device_load(now, addr, Intent::Own)?;
        let line = addr.line();
        let w = self.hmc.get_mut(line).expect("owned after RdOwn");
        let old = read_u64(&w.data, addr.offset());
        let new = f(old);
        write_u64(&mut w.data, addr.offset(), new);
        w.state = Mesi::M;
        w.dirty = true;
        let unlock = acc.done + hold;
        w.locked_until = w.locked_until.max(unlock);
        if self.log.is_enabled() {
            self.locks.push(LockSpan { line, from: acc.done, until: unlock });
        }
        Ok(Rmw { old, new, tier: acc.tier, read_done: acc.done, unlock })
    }

    /// Evicts an HMC line. Fails if the line is absent or locked.
    pub fn hmc_evict(&mut self, now: SimTime, addr: Address) -> Result<SimTime> {
        let line = addr.line();
        let w = self.hmc.get(line).ok_or_else(|| SimError::protocol(line, "evict of a line the HMC does not hold"))?;
        if w.is_locked(now) {
            return Err(SimError::protocol(line, "evict of a locked line"));
        }
        self.prune(now);
        self.hmc_evict_line(line, now)
    }

    /// Non-cacheable push of a full line into the LLC. Any HMC copy is
    /// dropped and other peer copies are invalidated.
    pub fn ncp_push(&mut self, now: SimTime, line: LineAddr, data: LineData) -> Result<SimTime> {
        self.map.require_host(line)?;
        self.prune(now);
        let hmc_id = self.hmc_id();
        self.stats.pushes += 1;
        let start = self.hmc_port.reserve(now, self.cycle());
        let mut start = start;
        if let Some(w) = self.hmc.get(line) {
            start = start.max(w.locked_until).max(w.ready_at);
            self.hmc.remove(line);
        }
        let credit = self.link.acquire_credit(start);
        let arrive = self.link.traverse(Direction::D2H, credit.start, true);
        self.record(arrive, Opcode::NCPush, line, hmc_id, true);
        let svc = arrive.max(self.busy(line));
        let svc = self.llc_port.reserve(svc, self.t.host_occupancy);
        let mut go = svc + self.t.llc_service;
        if !self.llc.contains(line) {
            let hmc = &self.hmc;
            match self.llc.victim_for(line, svc, |w| hmc.get(w.line).is_none_or(|h| !h.is_locked(svc))) {
                Victim::Free => {}
                Victim::Evict(v) => self.llc_evict(v, svc)?,
                Victim::Blocked(_) => return Err(SimError::protocol(line, "every LLC way in the set is locked")),
            }
            self.llc.insert(line, Mesi::E, [0; 64], DirectoryEntry::default());
        } else {
            self.llc.touch(line);
        }
        let dir = self.llc.get(line).expect("present").meta;
        for h in dir.holders().filter(|h| *h != hmc_id).collect::<Vec<_>>() {
            go = go.max(self.snoop(h, line, Opcode::SnpInv, svc + self.t.llc_service)?);
        }
        let w = self.llc.get_mut(line).expect("present");
        w.meta.clear();
        w.data = data;
        w.dirty = true;
        self.record(go, Opcode::Go, line, hmc_id, false);
        let done = self.link.traverse(Direction::H2D, go, false);
        self.link.release_credit(credit, done);
        self.set_busy(line, go);
        Ok(done)
    }

    // ---- host side --------------------------------------------------------

    /// Load (`store == None`) or store by a host core through its L1.
    pub fn host_access(&mut self, now: SimTime, core: usize, addr: Address, store: Option<&[u8]>) -> Result<Access> {
        self.check_core(core)?;
        let line = addr.line();
        self.map.region(line)?;
        if let Some(b) = store {
            check_span(addr, b.len())?;
        }
        self.prune(now);
        let id = CtrlId(core as u8);
        let l1_hit = self.t.l1_hit;
        let intent = if store.is_some() { Intent::Own } else { Intent::Shared };

        let hit = self.l1s[core].get(line).is_some_and(|w| intent == Intent::Shared || w.state.is_exclusive());
        let (done, tier) = if hit {
            let w = self.l1s[core].get(line).expect("hit");
            let done = (now + l1_hit).max(w.ready_at);
            self.l1s[core].touch(line);
            (done, Tier::L1)
        } else {
            let arrive = now + l1_hit;
            let op = if intent == Intent::Own { Opcode::RdOwn } else { Opcode::RdShared };
            self.record(arrive, op, line, id, false);
            let svc = arrive.max(self.busy(line));
            let (data, grant, ready, tier) = self.home_read(svc, id, line, intent)?;
            self.record(ready, Opcode::Data, line, id, true);
            self.record(ready, Opcode::Go, line, id, false);
            let done = ready + l1_hit;
            self.set_busy(line, done);
            if let Some(w) = self.l1s[core].get_mut(line) {
                w.state = grant;
                w.data = data;
                self.l1s[core].touch(line);
            } else {
                self.l1_room(core, line, now)?;
                self.l1s[core].insert(line, grant, data, ()).ready_at = done;
            }
            (done, tier)
        };
        let w = self.l1s[core].get_mut(line).expect("present after access");
        if let Some(b) = store {
            let off = addr.offset();
            w.data[off..off + b.len()].copy_from_slice(b);
            w.state = Mesi::M;
            w.dirty = true;
        }
        Ok(Access { done, tier, data: w.data })
    }

    fn l1_room(&mut self, core: usize, line: LineAddr, at: SimTime) -> Result<()> {
        if let Victim::Evict(v) = self.l1s[core].victim_for(line, SimTime::MAX, |_| true) {
            let id = CtrlId(core as u8);
            let way = self.l1s[core].remove(v).expect("victim present");
            let t = at + self.t.l1_hit;
            let llc = self.llc.get_mut(v).ok_or_else(|| SimError::protocol(v, "L1 line missing from inclusive LLC"))?;
            llc.meta.remove(id);
            if way.dirty {
                llc.data = way.data;
                llc.dirty = true;
                self.record(t, Opcode::DirtyEvict, v, id, false);
                self.record(t, Opcode::GoWritePull, v, id, false);
                self.record(t, Opcode::WritebackData, v, id, true);
            } else {
                self.record(t, Opcode::CleanEvict, v, id, false);
            }
            self.record(t, Opcode::GoInvalidate, v, id, false);
        }
        Ok(())
    }

    // ---- directives and functional access ---------------------------------

    /// Pulls every peer copy back into the LLC (no timing, no messages).
    fn recall(&mut self, line: LineAddr) {
        let Some(llc) = self.llc.get(line) else { return };
        let dir = llc.meta;
        for h in dir.holders() {
            let cache = if h == self.hmc_id() { &mut self.hmc } else { &mut self.l1s[h.0 as usize] };
            if let Some(w) = cache.remove(line) {
                if w.dirty {
                    let l = self.llc.get_mut(line).expect("present");
                    l.data = w.data;
                    l.dirty = true;
                }
            }
        }
        self.llc.get_mut(line).expect("present").meta.clear();
    }

    /// Warm-up directive: leave `addr`'s line resident only in `tier`.
    /// `Tier::Hmc` installs it exclusive in the HMC; `Tier::L1` is not a
    /// valid placement.
    pub fn place_in(&mut self, addr: Address, tier: Tier) -> Result<()> {
        let line = addr.line();
        self.map.region(line)?;
        self.recall(line);
        match tier {
            Tier::Mem => {
                if let Some(w) = self.llc.remove(line) {
                    if w.dirty {
                        self.write_memory(line, w.data)?;
                    }
                }
            }
            Tier::Llc | Tier::Hmc => {
                if !self.llc.contains(line) {
                    if let Victim::Evict(v) = self.llc.victim_for(line, SimTime::MAX, |_| true) {
                        self.recall(v);
                        let w = self.llc.remove(v).expect("victim");
                        if w.dirty {
                            self.write_memory(v, w.data)?;
                        }
                    }
                    let data = match self.map.region(line)? {
                        Region::Host => self.host_mem.read(line),
                        Region::Device => self.dev_mem.read(line),
                    };
                    self.llc.insert(line, Mesi::E, data, DirectoryEntry::default());
                }
                if tier == Tier::Hmc {
                    self.map.require_host(line)?;
                    let hmc_id = self.hmc_id();
                    if let Victim::Evict(v) = self.hmc.victim_for(line, SimTime::MAX, |_| true) {
                        let w = self.hmc.remove(v).expect("victim");
                        let l = self.llc.get_mut(v).expect("inclusive");
                        if w.dirty {
                            l.data = w.data;
                            l.dirty = true;
                        }
                        l.meta.remove(hmc_id);
                    }
                    let l = self.llc.get_mut(line).expect("present");
                    l.meta.set_exclusive(hmc_id);
                    let data = l.data;
                    self.hmc.insert(line, Mesi::E, data, ());
                }
            }
            Tier::L1 => return Err(SimError::Config("place_in accepts HMC, LLC or MEM".into())),
        }
        Ok(())
    }

    /// The coherent value of a line, wherever it currently lives.
    pub fn peek_line(&self, line: LineAddr) -> LineData {
        if let Some(w) = self.hmc.get(line).filter(|w| w.dirty) {
            return w.data;
        }
        for l1 in &self.l1s {
            if let Some(w) = l1.get(line).filter(|w| w.dirty) {
                return w.data;
            }
        }
        if let Some(w) = self.llc.get(line) {
            return w.data;
        }
        match self.map.region(line) {
            Ok(Region::Device) => self.dev_mem.read(line),
            _ => self.host_mem.read(line),
        }
    }

    pub fn peek_u64(&self, addr: Address) -> u64 {
        read_u64(&self.peek_line(addr.line()), addr.offset() & !7)
    }

    /// Functional DMA read of host memory (snoops dirty copies, no state change).
    pub fn dma_read(&self, addr: Address, len: usize) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(len);
        let mut a = addr.0;
        let end = addr.0 + len as u64;
        while a < end {
            let line = LineAddr::containing(a);
            self.map.require_host(line)?;
            let data = self.peek_line(line);
            let off = (a - line.raw()) as usize;
            let n = ((LINE_BYTES - off as u64).min(end - a)) as usize;
            out.extend_from_slice(&data[off..off + n]);
            a += n as u64;
        }
        Ok(out)
    }

    /// Functional DMA write into host memory. Peer copies are invalidated;
    /// the result lands in the LLC if the line is there, else in memory.
    pub fn dma_write(&mut self, addr: Address, bytes: &[u8]) -> Result<()> {
        let mut a = addr.0;
        let mut rest = bytes;
        while !rest.is_empty() {
            let line = LineAddr::containing(a);
            self.map.require_host(line)?;
            self.recall(line);
            let mut data = self.peek_line(line);
            let off = (a - line.raw()) as usize;
            let n = (LINE_BYTES as usize - off).min(rest.len());
            data[off..off + n].copy_from_slice(&rest[..n]);
            match self.llc.get_mut(line) {
                Some(w) => {
                    w.data = data;
                    w.dirty = true;
                }
                None => self.host_mem.write(line, data),
            }
            rest = &rest[n..];
            a += n as u64;
        }
        Ok(())
    }

    /// Writes device-attached memory directly (host CXL.mem stores that
    /// bypass the host caches).
    pub fn write_device_memory(&mut self, addr: Address, bytes: &[u8]) -> Result<()> {
        let mut a = addr.0;
        let mut rest = bytes;
        while !rest.is_empty() {
            let line = LineAddr::containing(a);
            if self.map.region(line)? != Region::Device {
                return Err(SimError::AddressFault(a));
            }
            let mut data = self.dev_mem.read(line);
            let off = (a - line.raw()) as usize;
            let n = (LINE_BYTES as usize - off).min(rest.len());
            data[off..off + n].copy_from_slice(&rest[..n]);
            self.dev_mem.write(line, data);
            rest = &rest[n..];
            a += n as u64;
        }
        Ok(())
    }

    pub fn read_device_memory(&self, line: LineAddr) -> Result<LineData> {
        if self.map.region(line)? != Region::Device {
            return Err(SimError::AddressFault(line.raw()));
        }
        Ok(self.dev_mem.read(line))
    }

    /// Iterates over every peer copy: (holder, line, state, dirty).
    pub fn peer_copies(&self) -> impl Iterator<Item = (CtrlId, LineAddr, Mesi, bool)> + '_ {
        self.l1s
            .iter()
            .chain(std::iter::once(&self.hmc))
            .flat_map(|c| c.iter().map(move |w| (c.id, w.line, w.state, w.dirty)))
    }
}

fn check_span(addr: Address, len: usize) -> Result<()> {
    if len == 0 || addr.offset() + len > LINE_BYTES as usize {
        return Err(SimError::Misaligned(addr.0));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interconnect::LatencyConfig;

    fn fabric() -> Fabric {
        let cfg = FabricConfig { log_messages: true, ..FabricConfig::default() };
        Fabric::new(&cfg, LatencyConfig::default().resolve().unwrap()).unwrap()
    }

    #[test]
    fn three_tier_latencies() {
        let mut f = fabric();
        let a = Address(0x10_0000);
        let m = f.device_load(SimTime::ZERO, a, Intent::Shared).unwrap();
        assert_eq!((m.tier, m.done), (Tier::Mem, SimTime::from_ns(688.3)));
        let t0 = SimTime::from_ns(10_000.0);
        let h = f.device_load(t0, a, Intent::Shared).unwrap();
        assert_eq!((h.tier, h.done - t0), (Tier::Hmc, SimTime::from_ns(115.0)));
        f.place_in(a, Tier::Llc).unwrap();
        let t1 = SimTime::from_ns(20_000.0);
        let l = f.device_load(t1, a, Intent::Shared).unwrap();
        assert_eq!((l.tier, l.done - t1), (Tier::Llc, SimTime::from_ns(575.6)));
    }

    #[test]
    fn store_to_exclusive_line_is_silent() {
        let mut f = fabric();
        let a = Address(0x2000);
        f.device_load(SimTime::ZERO, a, Intent::Own).unwrap();
        let before = f.log().count();
        f.device_store(SimTime::from_ns(1000.0), a, &[7; 8]).unwrap();
        assert_eq!(f.log().count(), before);
        assert_eq!(f.hmc().get(a.line()).unwrap().state, Mesi::M);
    }

    #[test]
    fn host_read_pulls_dirty_device_line() {
        let mut f = fabric();
        let a = Address(0x4000);
        f.device_store(SimTime::ZERO, a, &5u64.to_le_bytes()).unwrap();
        let r = f.host_access(SimTime::from_ns(5000.0), 0, a, None).unwrap();
        assert_eq!(read_u64(&r.data, 0), 5);
        assert_eq!(f.hmc().get(a.line()).unwrap().state, Mesi::S);
        let ops: Vec<_> = f.log().for_line(a.line()).map(|m| m.opcode).collect();
        assert!(ops.contains(&Opcode::SnpData) && ops.contains(&Opcode::WritebackData));
    }

    #[test]
    fn push_invalidates_device_copy() {
        let mut f = fabric();
        let a = Address(0x8000);
        f.device_load(SimTime::ZERO, a, Intent::Shared).unwrap();
        f.host_access(SimTime::from_ns(900.0), 3, a, None).unwrap();
        f.ncp_push(SimTime::from_ns(2000.0), a.line(), [9; 64]).unwrap();
        assert!(!f.hmc().contains(a.line()));
        assert!(!f.l1(3).contains(a.line()));
        assert_eq!(f.peek_line(a.line()), [9; 64]);
        assert_eq!(f.llc().get(a.line()).unwrap().meta, DirectoryEntry::default());
    }

    #[test]
    fn evicting_locked_line_fails() {
        let mut f = fabric();
        let a = Address(0x40);
        let r = f.device_rmw(SimTime::ZERO, a, SimTime::from_ns(50.0), |v| v + 1).unwrap();
        assert!(f.hmc_evict(r.read_done, a).is_err());
        assert!(f.hmc_evict(r.unlock, a).is_ok());
        assert_eq!(f.peek_u64(a), 1);
    }

    #[test]
    fn misaligned_rmw_rejected() {
        let mut f = fabric();
        assert_eq!(
            f.device_rmw(SimTime::ZERO, Address(0x44), SimTime::ZERO, |v| v).unwrap_err(),
            SimError::Misaligned(0x44)
        );
    }

    #[test]
    fn device_region_is_not_cacheable_by_device() {
        let mut f = fabric();
        let dev = Address(f.map().device.start);
        assert!(matches!(f.device_load(SimTime::ZERO, dev, Intent::Shared), Err(SimError::AddressFault(_))));
    }
}
