use serde::{Deserialize, Serialize};

use super::{DmaConfig, LatencyConfig};
use crate::error::{Result, SimError};
use crate::nic::NicConfig;

const PROFILES: &str = include_str!("profiles.toml");

pub const PROFILE_NAMES: [&str; 4] = ["cxl-fpga-400", "pcie-fpga-400", "cxl-asic-1500", "pcie-asic-1500"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviceKind {
    #[serde(rename = "cxl-nic")]
    Cxl,
    #[serde(rename = "pcie-nic")]
    Pcie,
}

/// A complete, named hardware configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub name: String,
    pub device: DeviceKind,
    pub latency: LatencyConfig,
    pub dma: DmaConfig,
    #[serde(default)]
    pub nic: NicConfig,
}

impl Profile {
    /// Loads one of the shipped profiles.
    pub fn named(name: &str) -> Result<Profile> {
        let all: toml::Table = PROFILES.parse().map_err(|e| SimError::Config(format!("shipped profiles: {e}")))?;
        resolve(&all, name, 0)
    }

    /// Re-clocks the device to `mhz`.
    pub fn rescale(&mut self, mhz: u64) -> Result<()> {
        if mhz == 0 {
            return Err(SimError::Config("rescale_mhz must be >= 1".into()));
        }
        let l = &mut self.latency;
        let f = l.device_mhz as f64 / mhz as f64;
        for t in [&mut l.t_hmc_hit, &mut l.t_link_d2h, &mut l.t_link_h2d, &mut l.t_llc_service, &mut l.host_occupancy] {
            *t *= f;
        }
        l.device_mhz = mhz;
        let d = &mut self.dma;
        let f = d.freq_mhz as f64 / mhz as f64;
        d.t_setup *= f;
        d.t_desc_issue *= f;
        d.freq_mhz = mhz;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.latency.validate()?;
        self.dma.validate()?;
        self.nic.validate()
    }

    /// This profile as a TOML table, for merging overrides.
    pub fn to_table(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn from_table(t: toml::Table) -> Result<Profile> {
        let p: Profile =
            toml::Value::Table(t).try_into().map_err(|e: toml::de::Error| SimError::Config(e.message().to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

fn resolve(all: &toml::Table, name: &str, depth: usize) -> Result<Profile> {
    if depth > PROFILE_NAMES.len() {
        return Err(SimError::Config(format!("profile `{name}` inherits from itself")));
    }
    let section = all.get(name).and_then(|v| v.as_table()).ok_or_else(|| SimError::UnknownProfile(name.to_string()))?;
    let mut body = section.clone();
    let base = body.remove("base");
    let rescale = body.remove("rescale_mhz");
    body.insert("name".into(), toml::Value::String(name.to_string()));

    let mut table = match base {
        Some(b) => {
            let b = b.as_str().ok_or_else(|| SimError::Config(format!("{name}.base must be a string")))?;
            resolve(all, b, depth + 1)?.to_table()?
        }
        None => toml::Table::new(),
    };
    merge_table(&mut table, &body, name, true)?;
    let mut p = Profile::from_table(table)?;
    if let Some(mhz) = rescale {
        let mhz = mhz
            .as_integer()
            .and_then(|v| u64::try_from(v).ok())
            .ok_or_else(|| SimError::Config(format!("{name}.rescale_mhz must be a positive integer")))?;
        p.rescale(mhz)?;
    }
    Ok(p)
}

/// Overlays `over` onto `base`. Unless `allow_new`, keys missing from `base`
/// are errors; sub-tables are merged key by key.
pub(crate) fn merge_table(base: &mut toml::Table, over: &toml::Table, path: &str, allow_new: bool) -> Result<()> {
    for (k, v) in over {
        let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_table(b, o, &here, allow_new)?,
            (Some(slot), _) => *slot = v.clone(),
            (None, _) if allow_new => {
                base.insert(k.clone(), v.clone());
            }
            (None, _) => return Err(SimError::Config(format!("unknown key `{here}`"))),
        }
    }
    Ok(())
}
