//! CXL-NIC and PCIe-NIC device models.

mod config;
pub mod layout;
mod prefetch;
mod rao;
mod rpc;
mod trace;

pub use config::NicConfig;
pub use prefetch::StridePrefetcher;
pub use rao::{run_rao, run_rao_bounded, NicDevice, RaoOp, RaoRequest, RaoResponse, RaoRun};
pub use rpc::{run_deserialize, run_serialize, RpcRegions, RpcResult, RpcRun, SerPath};
pub use trace::{NicEvent, NicTrace};
