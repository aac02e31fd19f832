use std::fmt;
use std::io::{self, Write};

use crate::engine::SimTime;

/// One device-engine action: tick, engine, action, address, size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NicEvent {
    pub tick: SimTime,
    pub engine: String,
    pub action: &'static str,
    pub addr: u64,
    pub size: u64,
}

impl fmt::Display for NicEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t{:#x}\t{}", self.tick.ps(), self.engine, self.action, self.addr, self.size)
    }
}

#[derive(Debug, Clone, Default)]
pub struct NicTrace {
    enabled: bool,
    events: Vec<NicEvent>,
}

impl NicTrace {
    pub fn enabled() -> Self {
        NicTrace { enabled: true, events: Vec::new() }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn push(&mut self, tick: SimTime, engine: impl Into<String>, action: &'static str, addr: u64, size: u64) {
        if self.enabled {
            self.events.push(NicEvent { tick, engine: engine.into(), action, addr, size });
        }
    }

    pub fn events(&self) -> &[NicEvent] {
        &self.events
    }

    pub fn count(&self, engine: &str, action: &str) -> usize {
        self.events.iter().filter(|e| e.engine == engine && e.action == action).count()
    }

    pub fn write_tsv(&self, mut w: impl Write) -> io::Result<()> {
        for e in &self.events {
            writeln!(w, "{e}")?;
        }
        Ok(())
    }
}
