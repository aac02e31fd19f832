//! Run configuration.
//!
//! A config is a TOML file that names one shipped profile and overrides
//! parts of it:
//!
//! ```toml
//! profile = "cxl-fpga-400"   # required
//! seed = 1
//! device = "cxl-nic"         # or "pcie-nic"; defaults to the profile's
//!
//! [latency]                  # any LatencyConfig field
//! t_dram = 100.0
//!
//! [dma]                      # any DmaConfig field
//! [nic]                      # any NicConfig field
//! [topology]                 # cores, l1, llc, hmc
//! [engine]                   # max_events
//! [workload]                 # see WorkloadConfig
//! [output]                   # dir, format
//! ```
//!
//! Unknown keys anywhere are errors that name the key and its line.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coherence::FabricConfig;
use crate::engine::DEFAULT_MAX_EVENTS;
use crate::error::{Result, SimError};
use crate::interconnect::{merge_table, DeviceKind, Profile};
use crate::workloads::circustent::PatternKind;
use crate::workloads::rpcbench::BENCHES;

const TOP_KEYS: [&str; 10] =
    ["profile", "seed", "device", "latency", "dma", "nic", "topology", "engine", "workload", "output"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(SimError::Config(format!("format must be csv or json, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub max_events: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { max_events: DEFAULT_MAX_EVENTS }
    }
}

/// Sizes of the canned suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadConfig {
    /// Repetitions of the 32-load latency test.
    pub latency_trials: usize,
    /// Repetitions of each bandwidth stream.
    pub bandwidth_trials: usize,
    /// Loads per bandwidth stream.
    pub bandwidth_lines: usize,
    pub dma_sizes: Vec<u64>,
    /// Back-to-back transfers per DMA bandwidth sample.
    pub dma_stream: usize,
    pub rao_ops: usize,
    pub patterns: Vec<PatternKind>,
    pub rpc_messages: usize,
    pub benches: Vec<u8>,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            latency_trials: 1000,
            bandwidth_trials: 20,
            bandwidth_lines: 2048,
            dma_sizes: (6..=18).map(|p| 1u64 << p).collect(),
            dma_stream: 256,
            rao_ops: 100_000,
            patterns: PatternKind::ALL.to_vec(),
            rpc_messages: 1000,
            benches: BENCHES.to_vec(),
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("latency_trials", self.latency_trials),
            ("bandwidth_trials", self.bandwidth_trials),
            ("bandwidth_lines", self.bandwidth_lines),
            ("dma_stream", self.dma_stream),
            ("rao_ops", self.rao_ops),
            ("rpc_messages", self.rpc_messages),
        ];
        for (k, v) in counts {
            if v == 0 {
                return Err(SimError::Config(format!("workload.{k} must be >= 1")));
            }
        }
        if self.bandwidth_lines < 2 {
            return Err(SimError::Config("workload.bandwidth_lines must be >= 2".into()));
        }
        if self.dma_stream < 2 {
            return Err(SimError::Config("workload.dma_stream must be >= 2".into()));
        }
        if self.dma_sizes.is_empty() || self.dma_sizes.contains(&0) {
            return Err(SimError::Config("workload.dma_sizes must be non-empty sizes >= 1".into()));
        }
        if let Some(b) = self.benches.iter().find(|b| !BENCHES.contains(b)) {
            return Err(SimError::Config(format!("workload.benches: bench must be 1..=6, got {b}")));
        }
        if self.benches.is_empty() || self.patterns.is_empty() {
            return Err(SimError::Config("workload.benches and workload.patterns must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), format: Format::Csv }
    }
}

/// A fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub seed: u64,
    pub profile: Profile,
    pub topology: FabricConfig,
    pub engine: EngineConfig,
    pub workload: WorkloadConfig,
    pub output: OutputConfig,
}

impl SimConfig {
    /// Defaults for a shipped profile.
    pub fn for_profile(name: &str) -> Result<SimConfig> {
        Ok(SimConfig {
            seed: 1,
            profile: Profile::named(name)?,
            topology: FabricConfig::default(),
            engine: EngineConfig::default(),
            workload: WorkloadConfig::default(),
            output: OutputConfig::default(),
        })
    }

    /// The resolved config as TOML, echoed into every report.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`SimConfig::to_toml`], hex encoded.
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn load_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SimError::Io { path: path.display().to_string(), what: e.to_string() })?;
    parse_config(&text).map_err(|e| e.context(path.display().to_string()))
}

pub fn parse_config(text: &str) -> Result<SimConfig> {
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
        SimError::Config(match line {
            Some(l) => format!("line {l}: {}", e.message()),
            None => e.message().to_string(),
        })
    })?;
    for k in doc.keys() {
        if !TOP_KEYS.contains(&k.as_str()) {
            return Err(at_key(text, k, format!("unknown key `{k}`")));
        }
    }
    let name = match doc.remove("profile") {
        Some(toml::Value::String(s)) => s,
        Some(_) => return Err(at_key(text, "profile", "profile must be a string".into())),
        None => return Err(SimError::Config("missing required key `profile`".into())),
    };
    let mut cfg = SimConfig::for_profile(&name).map_err(|e| at_key(text, "profile", e.to_string()))?;

    if let Some(v) = doc.remove("seed") {
        cfg.seed = v
            .as_integer()
            .and_then(|i| u64::try_from(i).ok())
            .ok_or_else(|| at_key(text, "seed", "seed must be a non-negative integer".into()))?;
    }
    if let Some(v) = doc.remove("device") {
        cfg.profile.device = v
            .try_into::<DeviceKind>()
            .map_err(|_| at_key(text, "device", "device must be \"cxl-nic\" or \"pcie-nic\"".into()))?;
    }

    // profile overrides merge into the resolved profile, key by key
    let mut over = toml::Table::new();
    for s in ["latency", "dma", "nic"] {
        if let Some(v) = doc.remove(s) {
            over.insert(s.into(), v);
        }
    }
    if !over.is_empty() {
        let keys = leaf_keys(&over, "");
        let mut base = cfg.profile.to_table()?;
        merge_table(&mut base, &over, "", false).map_err(|e| annotate(e, text, &keys))?;
        cfg.profile = Profile::from_table(base).map_err(|e| annotate(e, text, &keys))?;
    }
    if let Some(v) = doc.remove("topology") {
        let keys = leaf_keys_of(&v, "topology");
        let toml::Value::Table(over) = v else {
            return Err(at_key(text, "topology", "topology must be a table".into()));
        };
        let mut base = toml::Table::try_from(&cfg.topology).map_err(|e| SimError::Config(e.to_string()))?;
        merge_table(&mut base, &over, "topology", false).map_err(|e| annotate(e, text, &keys))?;
        cfg.topology = toml::Value::Table(base).try_into().map_err(|e: toml::de::Error| {
            annotate(SimError::Config(format!("topology: {}", e.message())), text, &keys)
        })?;
        cfg.topology.validate().map_err(|e| annotate(e, text, &keys))?;
    }
    cfg.engine = section(text, &mut doc, "engine")?;
    if cfg.engine.max_events == 0 {
        return Err(at_key(text, "max_events", "engine.max_events must be >= 1".into()));
    }
    cfg.workload = section(text, &mut doc, "workload")?;
    cfg.workload.validate().map_err(|e| annotate(e, text, &leaf_keys_of(&workload_echo(text), "workload")))?;
    cfg.output = section(text, &mut doc, "output")?;
    Ok(cfg)
}

// Only used to find which workload keys the user wrote.
fn workload_echo(text: &str) -> toml::Value {
    text.parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("workload"))
        .unwrap_or(toml::Value::Table(toml::Table::new()))
}

fn section<T: DeserializeOwned + Default>(text: &str, doc: &mut toml::Table, name: &str) -> Result<T> {
    let Some(v) = doc.remove(name) else { return Ok(T::default()) };
    v.try_into().map_err(|e: toml::de::Error| {
        let msg = e.message().to_string();
        // serde names the offending field in backticks
        let key = msg.split('`').nth(1).unwrap_or("").to_string();
        let err = SimError::Config(format!("{name}: {msg}"));
        match find_line(text, name, &key) {
            Some(l) if !key.is_empty() => SimError::Config(format!("line {l}: {name}.{key}: {msg}")),
            _ => err,
        }
    })
}

fn leaf_keys(t: &toml::Table, prefix: &str) -> Vec<String> {
    let mut out = Vec::new();
    for (k, v) in t {
        let here = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        out.extend(leaf_keys_of(v, &here));
    }
    out
}

fn leaf_keys_of(v: &toml::Value, here: &str) -> Vec<String> {
    match v {
        toml::Value::Table(t) => {
            let mut out = leaf_keys(t, here);
            out.push(here.to_string());
            out
        }
        _ => vec![here.to_string()],
    }
}

/// Adds the line of the first user key the message mentions.
fn annotate(e: SimError, text: &str, keys: &[String]) -> SimError {
    let msg = match &e {
        SimError::Config(m) => m.clone(),
        other => other.to_string(),
    };
    let mut keys: Vec<&String> = keys.iter().collect();
    keys.sort_by_key(|k| std::cmp::Reverse(k.len()));
    for k in keys {
        if msg.contains(k.as_str()) {
            let (sec, leaf) = k.rsplit_once('.').unwrap_or(("", k));
            let top = sec.split('.').next().unwrap_or("");
            if let Some(l) = find_line(text, top, leaf) {
                return SimError::Config(format!("line {l}: {msg}"));
            }
        }
    }
    SimError::Config(msg)
}

fn at_key(text: &str, key: &str, msg: String) -> SimError {
    match find_line(text, "", key) {
        Some(l) => SimError::Config(format!("line {l}: {msg}")),
        None => SimError::Config(msg),
    }
}

/// 1-based line where `key` is assigned inside `[section]` ("" = top level).
/// Falls back to any line assigning `key` (inline tables).
fn find_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let assigns = |line: &str| line.strip_prefix(key).map(|rest| rest.trim_start().starts_with('=')).unwrap_or(false);
    let mut current = String::new();
    let mut fallback = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[') {
            current = h.trim_end_matches(']').trim().to_string();
            continue;
        }
        if assigns(line) {
            if current == section || current.starts_with(&format!("{section}.")) && !section.is_empty() {
                return Some(i + 1);
            }
            fallback.get_or_insert(i + 1);
        }
        if line.contains(&format!("{key} =")) || line.contains(&format!("{key}=")) {
            fallback.get_or_insert(i + 1);
        }
    }
    fallback
}
