use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::addr::LineAddr;
use super::cache::CtrlId;
use crate::engine::SimTime;

/// Message channel. Direction is relative to the home agent (LLC): `D2H`
/// travels from a peer cache to the LLC, `H2D` from the LLC to a peer. Host
/// L1s use the same channel names as the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    D2HReq,
    D2HResp,
    H2DReq,
    H2DResp,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::D2HReq => "D2H-Req",
            Channel::D2HResp => "D2H-Resp",
            Channel::H2DReq => "H2D-Req",
            Channel::H2DResp => "H2D-Resp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Opcode {
    RdOwn,
    RdShared,
    DirtyEvict,
    CleanEvict,
    NCPush,
    SnpInv,
    SnpData,
    Go,
    GoWritePull,
    GoInvalidate,
    Data,
    WritebackData,
}

impl Opcode {
    pub fn name(self) -> &'static str {
        match self {
            Opcode::RdOwn => "RdOwn",
            Opcode::RdShared => "RdShared",
            Opcode::DirtyEvict => "DirtyEvict",
            Opcode::CleanEvict => "CleanEvict",
            Opcode::NCPush => "NCPush",
            Opcode::SnpInv => "SnpInv",
            Opcode::SnpData => "SnpData",
            Opcode::Go => "Go",
            Opcode::GoWritePull => "GoWritePull",
            Opcode::GoInvalidate => "GoInvalidate",
            Opcode::Data => "Data",
            Opcode::WritebackData => "WritebackData",
        }
    }

    /// The channel an opcode is legal on.
    pub fn channel(self) -> Channel {
        use Opcode::*;
        match self {
            RdOwn | RdShared | DirtyEvict | CleanEvict | NCPush => Channel::D2HReq,
            WritebackData => Channel::D2HResp,
            SnpInv | SnpData => Channel::H2DReq,
            Go | GoWritePull | GoInvalidate | Data => Channel::H2DResp,
        }
    }

    pub fn is_request(self) -> bool {
        self.channel() == Channel::D2HReq
    }

    /// Responses that close a peer request. `GoWritePull` only asks for the
    /// eviction data and is answered later by `GoInvalidate`.
    pub fn is_terminal_go(self) -> bool {
        matches!(self, Opcode::Go | Opcode::GoInvalidate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolMessage {
    pub tick: SimTime,
    pub channel: Channel,
    pub opcode: Opcode,
    pub line: LineAddr,
    /// The peer controller at the non-LLC end of the message.
    pub requester: CtrlId,
    pub data_valid: bool,
}

impl fmt::Display for ProtocolMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{:#x}\t{}\t{}",
            self.tick.ps(),
            self.channel.name(),
            self.opcode.name(),
            self.line.raw(),
            self.requester.0,
            self.data_valid as u8
        )
    }
}

/// In-memory message log. Disabled logs only count messages.
#[derive(Debug, Clone, Default)]
pub struct MessageLog {
    enabled: bool,
    entries: Vec<ProtocolMessage>,
    count: u64,
}

impl MessageLog {
    pub fn enabled() -> Self {
        MessageLog { enabled: true, ..Default::default() }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn push(&mut self, msg: ProtocolMessage) {
        debug_assert_eq!(msg.opcode.channel(), msg.channel);
        self.count += 1;
        if self.enabled {
            self.entries.push(msg);
        }
    }

    pub fn entries(&self) -> &[ProtocolMessage] {
        &self.entries
    }

    /// Messages recorded since the log was created (counted even when disabled).
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn for_line(&self, line: LineAddr) -> impl Iterator<Item = &ProtocolMessage> {
        self.entries.iter().filter(move |m| m.line == line)
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// One tab-separated line per message: tick, channel, opcode, line, requester, data_valid.
    pub fn write_tsv(&self, mut w: impl Write) -> io::Result<()> {
        for m in &self.entries {
            writeln!(w, "{m}")?;
        }
        Ok(())
    }
}
