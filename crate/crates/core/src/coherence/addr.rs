use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub const LINE_BYTES: u64 = 64;
pub const LINE_SHIFT: u32 = 6;

/// A 64-bit physical byte address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Address(pub u64);

impl Address {
    pub fn line(self) -> LineAddr {
        LineAddr(self.0 & !(LINE_BYTES - 1))
    }

    pub fn offset(self) -> usize {
        (self.0 & (LINE_BYTES - 1)) as usize
    }
}

/// A cacheline-aligned address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineAddr(u64);

impl LineAddr {
    /// Aligns down to the containing line.
    pub fn containing(addr: u64) -> Self {
        LineAddr(addr & !(LINE_BYTES - 1))
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    /// Line number (address >> 6).
    pub fn index(self) -> u64 {
        self.0 >> LINE_SHIFT
    }

    pub fn offset_lines(self, lines: i64) -> LineAddr {
        LineAddr((self.0 as i64).wrapping_add(lines * LINE_BYTES as i64) as u64)
    }
}

impl fmt::Display for LineAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

impl fmt::LowerHex for LineAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerHex::fmt(&self.0, f)
    }
}

/// Which memory a line belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Host,
    Device,
}

/// Host and device-attached physical ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryMap {
    pub host: Range<u64>,
    pub device: Range<u64>,
}

impl Default for MemoryMap {
    /// 32 GiB of host DRAM at 0, 16 GiB of device memory above it.
    fn default() -> Self {
        MemoryMap { host: 0..(32 << 30), device: (32 << 30)..(48 << 30) }
    }
}

impl MemoryMap {
    pub fn region(&self, line: LineAddr) -> Result<Region> {
        if self.host.contains(&line.raw()) {
            Ok(Region::Host)
        } else if self.device.contains(&line.raw()) {
            Ok(Region::Device)
        } else {
            Err(SimError::AddressFault(line.raw()))
        }
    }

    pub fn require_host(&self, line: LineAddr) -> Result<()> {
        match self.region(line)? {
            Region::Host => Ok(()),
            Region::Device => Err(SimError::AddressFault(line.raw())),
        }
    }
}
