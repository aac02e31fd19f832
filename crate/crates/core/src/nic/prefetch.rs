//! Multi-stride prefetcher fed by HMC demand misses.

use crate::coherence::{LineAddr, MemoryMap};

const PAGE_SHIFT: u32 = 12;
const CONF_MAX: u8 = 3;
const CONF_ISSUE: u8 = 1;

#[derive(Debug, Clone, Copy)]
struct Stream {
    page: u64,
    last: LineAddr,
    stride: i64,
    conf: u8,
    used: u64,
}

/// Tracks one stride per 4 KiB page in a small fully associative table.
/// A stream issues `degree` lines ahead once its stride has repeated.
#[derive(Debug, Clone)]
pub struct StridePrefetcher {
    streams: Vec<Stream>,
    entries: usize,
    degree: usize,
    clock: u64,
    issued: u64,
}

impl StridePrefetcher {
    pub fn new(entries: usize, degree: usize) -> Self {
        StridePrefetcher { streams: Vec::with_capacity(entries), entries, degree, clock: 0, issued: 0 }
    }

    pub fn issued(&self) -> u64 {
        self.issued
    }

    /// Records a demand miss and returns lines to prefetch. Candidates
    /// outside host memory are dropped.
    pub fn on_miss(&mut self, line: LineAddr, map: &MemoryMap) -> Vec<LineAddr> {
        self.clock += 1;
        let page = line.raw() >> PAGE_SHIFT;
        let clock = self.clock;
        let s = match self.streams.iter_mut().find(|s| s.page == page) {
            Some(s) => {
                let stride = line.index() as i64 - s.last.index() as i64;
                if stride == 0 {
                    s.used = clock;
                    return Vec::new();
                }
                if stride == s.stride {
                    s.conf = (s.conf + 1).min(CONF_MAX);
                } else {
                    s.conf = s.conf.saturating_sub(1);
                    if s.conf == 0 {
                        s.stride = stride;
                        s.conf = 1;
                    }
                }
                s.last = line;
                s.used = clock;
                *s
            }
            None => {
                let fresh = Stream { page, last: line, stride: 1, conf: CONF_ISSUE, used: clock };
                if self.streams.len() < self.entries {
                    self.streams.push(fresh);
                } else if let Some(v) = self.streams.iter_mut().min_by_key(|s| s.used) {
                    *v = fresh;
                }
                fresh
            }
        };
        if s.conf < CONF_ISSUE {
            return Vec::new();
        }
        let out: Vec<LineAddr> = (1..=self.degree as i64)
            .map(|k| line.offset_lines(k * s.stride))
            .filter(|l| map.require_host(*l).is_ok())
            .collect();
        self.issued += out.len() as u64;
        out
    }
}
