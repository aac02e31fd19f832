//! Workload generators and the wire-format codec.

pub mod circustent;
pub mod codec;
pub mod lsu;
pub mod rpcbench;
pub mod trace;
