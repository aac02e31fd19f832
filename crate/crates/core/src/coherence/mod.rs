//! MESI caches, the LLC directory and the CXL.cache message fabric.

mod addr;
mod cache;
pub mod checker;
mod directory;
mod fabric;
mod memory;
mod message;

pub use addr::{Address, LineAddr, MemoryMap, Region, LINE_BYTES, LINE_SHIFT};
pub use cache::{CacheGeometry, CacheModel, CtrlId, Mesi, Victim, Way};
pub use directory::{DirState, DirectoryEntry};
pub use fabric::{Access, Fabric, FabricConfig, FabricStats, Intent, LockSpan, Rmw, Tier};
pub use memory::{read_u64, write_u64, BackingStore, LineData};
pub use message::{Channel, MessageLog, Opcode, ProtocolMessage};
