use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// NIC datapath parameters. Cycle counts are device cycles; `_ns` fields
/// are host CPU costs and do not follow the device clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NicConfig {
    /// RAO processing elements.
    pub pe_count: usize,
    /// How far the RX scheduler looks past a blocked head request.
    pub rx_window: usize,
    pub rao_modify_cycles: u64,
    pub rao_write_cycles: u64,
    /// On-chip temp buffer of the PCIe deserializer.
    pub temp_buffer_bytes: u64,
    /// Fixed decoder cost per message (header parse, schema lookup).
    pub decode_cycles_per_message: u64,
    pub decode_cycles_per_field: u64,
    pub decode_bytes_per_cycle: f64,
    pub encode_cycles_per_message: u64,
    pub encode_cycles_per_field: u64,
    pub encode_bytes_per_cycle: f64,
    /// CPU staging copy of one noncontiguous chunk (PCIe serialization).
    pub staging_copy_ns: f64,
    pub mmio_doorbell_ns: f64,
    /// CPU cost of filling in one field while constructing an object.
    pub cpu_field_ns: f64,
    /// CPU cost per payload byte while constructing an object.
    pub cpu_byte_ns: f64,
    /// Posted device-memory stores the CPU keeps in flight.
    pub cpu_store_mlp: u64,
    pub prefetch_entries: usize,
    pub prefetch_degree: usize,
}

impl Default for NicConfig {
    fn default() -> Self {
        NicConfig {
            pe_count: 4,
            rx_window: 64,
            rao_modify_cycles: 1,
            rao_write_cycles: 1,
            temp_buffer_bytes: 4096,
            decode_cycles_per_message: 600,
            decode_cycles_per_field: 40,
            decode_bytes_per_cycle: 0.5,
            encode_cycles_per_message: 300,
            encode_cycles_per_field: 28,
            encode_bytes_per_cycle: 8.0,
            staging_copy_ns: 100.0,
            mmio_doorbell_ns: 400.0,
            cpu_field_ns: 30.0,
            cpu_byte_ns: 1.0,
            cpu_store_mlp: 16,
            prefetch_entries: 16,
            prefetch_degree: 2,
        }
    }
}

impl NicConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pe_count", self.pe_count as u64),
            ("rx_window", self.rx_window as u64),
            ("temp_buffer_bytes", self.temp_buffer_bytes),
            ("cpu_store_mlp", self.cpu_store_mlp),
            ("prefetch_entries", self.prefetch_entries as u64),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(SimError::Config(format!("nic.{name} must be >= 1")));
            }
        }
        if !self.temp_buffer_bytes.is_multiple_of(64) {
            return Err(SimError::Config("nic.temp_buffer_bytes must be a multiple of 64".into()));
        }
        for (name, v) in [
            ("decode_bytes_per_cycle", self.decode_bytes_per_cycle),
            ("encode_bytes_per_cycle", self.encode_bytes_per_cycle),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("nic.{name} must be a finite value > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("staging_copy_ns", self.staging_copy_ns),
            ("mmio_doorbell_ns", self.mmio_doorbell_ns),
            ("cpu_field_ns", self.cpu_field_ns),
            ("cpu_byte_ns", self.cpu_byte_ns),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("nic.{name} must be a finite value >= 0, got {v}")));
            }
        }
        Ok(())
    }
}
