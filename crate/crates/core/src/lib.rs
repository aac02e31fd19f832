pub mod coherence;
pub mod engine;
mod error;
pub mod harness;
pub mod interconnect;
pub mod nic;
pub mod workloads;

pub use error::{Result, SimError};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/suites.md")]
    mod suites {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/coherence.md")]
    mod coherence {}
    #[doc = include_str!("../../../book/src/nic.md")]
    mod nic {}
    #[doc = include_str!("../../../book/src/workloads.md")]
    mod workloads {}
}
