use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// A named, ordered list of observations in one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSeries {
    pub name: String,
    pub unit: String,
    pub samples: Vec<f64>,
}

/// The summary row emitted for a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub mean: f64,
    pub stddev: f64,
}

impl StatSeries {
    pub fn new(name: impl Into<String>, unit: impl Into<String>) -> Self {
        StatSeries { name: name.into(), unit: unit.into(), samples: Vec::new() }
    }

    pub fn with_samples(name: impl Into<String>, unit: impl Into<String>, samples: Vec<f64>) -> Self {
        StatSeries { name: name.into(), unit: unit.into(), samples }
    }

    pub fn push(&mut self, v: f64) {
        self.samples.push(v);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Nearest-rank percentile: rank `ceil(p * n)` (1-indexed) of the sorted
    /// samples, with `p = 0` mapping to rank 1.
    pub fn percentile(&self, p: f64) -> Result<f64> {
        if self.samples.is_empty() {
            return Err(SimError::EmptySeries(self.name.clone()));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(SimError::BadFraction(p));
        }
        let mut sorted = self.samples.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
        Ok(sorted[rank - 1])
    }

    pub fn median(&self) -> Result<f64> {
        self.percentile(0.5)
    }

    pub fn mean(&self) -> Result<f64> {
        if self.samples.is_empty() {
            return Err(SimError::EmptySeries(self.name.clone()));
        }
        Ok(self.samples.iter().sum::<f64>() / self.samples.len() as f64)
    }

    /// Population standard deviation.
    pub fn stddev(&self) -> Result<f64> {
        let mean = self.mean()?;
        let var = self.samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / self.samples.len() as f64;
        Ok(var.sqrt())
    }

    pub fn summary(&self) -> Result<Summary> {
        Ok(Summary {
            n: self.samples.len(),
            median: self.median()?,
            p25: self.percentile(0.25)?,
            p75: self.percentile(0.75)?,
            mean: self.mean()?,
            stddev: self.stddev()?,
        })
    }
}
