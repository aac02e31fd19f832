//! Experiment reports and their CSV / JSON emission.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Format;
use crate::engine::{StatSeries, Summary};
use crate::error::{Result, SimError};

pub const CSV_COLUMNS: [&str; 9] = ["experiment", "metric", "unit", "n", "median", "p25", "p75", "mean", "stddev"];

/// `mean(numerator) / mean(denominator)` over two series of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub metric: String,
    pub numerator: String,
    pub denominator: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub config_digest: String,
    /// The resolved config, as TOML.
    pub config: String,
    pub series: Vec<StatSeries>,
    pub ratios: Vec<Ratio>,
}

/// One emitted row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub metric: String,
    pub unit: String,
    pub n: usize,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub mean: f64,
    pub stddev: f64,
}

impl Report {
    pub fn new(experiment: &str, config: &super::SimConfig) -> Report {
        Report {
            experiment: experiment.to_string(),
            config_digest: config.digest(),
            config: config.to_toml(),
            series: Vec::new(),
            ratios: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, unit: &str, samples: Vec<f64>) {
        self.series.push(StatSeries::with_samples(name, unit, samples));
    }

    pub fn series(&self, name: &str) -> Option<&StatSeries> {
        self.series.iter().find(|s| s.name == name)
    }

    pub fn ratio(&self, name: &str) -> Option<f64> {
        self.ratios.iter().find(|r| r.metric == name).map(|r| r.value)
    }

    /// Records `mean(num) / mean(den)` under `metric`.
    pub fn add_ratio(&mut self, metric: impl Into<String>, num: &str, den: &str) -> Result<f64> {
        let get = |n: &str| {
            self.series(n).ok_or_else(|| SimError::Config(format!("ratio over unknown series `{n}`")))?.mean()
        };
        let value = get(num)? / get(den)?;
        self.ratios.push(Ratio { metric: metric.into(), numerator: num.into(), denominator: den.into(), value });
        Ok(value)
    }

    /// Summary of a series, or the median of a ratio row.
    pub fn median(&self, metric: &str) -> Option<f64> {
        self.rows().ok()?.into_iter().find(|r| r.metric == metric).map(|r| r.median)
    }

    /// Series rows first, then one row per ratio with `n = 1`.
    pub fn rows(&self) -> Result<Vec<Row>> {
        let row = |metric: &str, unit: &str, s: Summary| Row {
            experiment: self.experiment.clone(),
            metric: metric.to_string(),
            unit: unit.to_string(),
            n: s.n,
            median: s.median,
            p25: s.p25,
            p75: s.p75,
            mean: s.mean,
            stddev: s.stddev,
        };
        let mut out = Vec::new();
        for s in &self.series {
            out.push(row(&s.name, &s.unit, s.summary()?));
        }
        for r in &self.ratios {
            let v = r.value;
            out.push(row(&r.metric, "ratio", Summary { n: 1, median: v, p25: v, p75: v, mean: v, stddev: 0.0 }));
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).map_err(csv_err)?;
        for r in self.rows()? {
            w.serialize(&r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| SimError::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            experiment: &'a str,
            config_digest: &'a str,
            config: &'a str,
            rows: Vec<Row>,
            ratios: &'a [Ratio],
        }
        let doc = Doc {
            experiment: &self.experiment,
            config_digest: &self.config_digest,
            config: &self.config,
            rows: self.rows()?,
            ratios: &self.ratios,
        };
        Ok(serde_json::to_string_pretty(&doc).expect("report serializes") + "\n")
    }

    /// Every sample of every series: `metric,unit,index,value`.
    pub fn raw_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "unit", "index", "value"]).map_err(csv_err)?;
        for s in &self.series {
            for (i, v) in s.samples.iter().enumerate() {
                w.write_record([s.name.as_str(), s.unit.as_str(), &i.to_string(), &v.to_string()]).map_err(csv_err)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| SimError::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

fn csv_err(e: csv::Error) -> SimError {
    SimError::Config(format!("csv: {e}"))
}

/// Writes the report to `path`, the raw series to `<path>.raw` and the
/// resolved config to `<path>.config.toml`. Returns the files written.
pub fn emit_report(r: &Report, format: Format, path: &Path) -> Result<Vec<PathBuf>> {
    let body = match format {
        Format::Csv => r.to_csv()?,
        Format::Json => r.to_json()?,
    };
    let with = |suffix: &str| {
        let mut p = path.as_os_str().to_owned();
        p.push(suffix);
        PathBuf::from(p)
    };
    let files = [(path.to_path_buf(), body), (with(".raw"), r.raw_csv()?), (with(".config.toml"), r.config.clone())];
    for (p, text) in &files {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        fs::write(p, text).map_err(|e| io_err(p, e))?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

fn io_err(p: &Path, e: std::io::Error) -> SimError {
    SimError::Io { path: p.display().to_string(), what: e.to_string() }
}
