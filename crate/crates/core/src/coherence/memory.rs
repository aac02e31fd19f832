use std::collections::HashMap;

use super::addr::LineAddr;

pub type LineData = [u8; 64];

/// Sparse DRAM contents; untouched lines read as zero.
#[derive(Debug, Default, Clone)]
pub struct BackingStore {
    lines: HashMap<LineAddr, LineData>,
}

impl BackingStore {
    pub fn read(&self, line: LineAddr) -> LineData {
        self.lines.get(&line).copied().unwrap_or([0; 64])
    }

    pub fn write(&mut self, line: LineAddr, data: LineData) {
        self.lines.insert(line, data);
    }

    pub fn touched(&self) -> usize {
        self.lines.len()
    }
}

pub fn read_u64(data: &LineData, offset: usize) -> u64 {
    u64::from_le_bytes(data[offset..offset + 8].try_into().unwrap())
}

pub fn write_u64(data: &mut LineData, offset: usize, v: u64) {
    data[offset..offset + 8].copy_from_slice(&v.to_le_bytes());
}
