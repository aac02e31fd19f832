use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::stream_rng;
use crate::error::{Result, SimError};
use crate::nic::RaoRequest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PatternKind {
    Central,
    Stride1,
    Scatter,
    Gather,
    Sg,
    Rand,
}

impl PatternKind {
    pub const ALL: [PatternKind; 6] = [
        PatternKind::Central,
        PatternKind::Stride1,
        PatternKind::Scatter,
        PatternKind::Gather,
        PatternKind::Sg,
        PatternKind::Rand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PatternKind::Central => "CENTRAL",
            PatternKind::Stride1 => "STRIDE1",
            PatternKind::Scatter => "SCATTER",
            PatternKind::Gather => "GATHER",
            PatternKind::Sg => "SG",
            PatternKind::Rand => "RAND",
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PatternKind {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        PatternKind::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SimError::Config(format!("unknown pattern `{s}`")))
    }
}

/// One CircusTent-style access pattern.
///
/// `region` holds the 8-byte element array; `index_base` is where the
/// index array used by SCATTER, GATHER and SG lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircusPattern {
    pub kind: PatternKind,
    pub n_ops: usize,
    pub region: Range<u64>,
    pub index_base: u64,
    pub seed: u64,
}

impl CircusPattern {
    /// 1 GiB element region at 1 GiB, index array right after it.
    pub fn suite_default(kind: PatternKind, n_ops: usize, seed: u64) -> Self {
        CircusPattern { kind, n_ops, region: (1 << 30)..(2 << 30), index_base: 2 << 30, seed }
    }

    fn elements(&self) -> u64 {
        (self.region.end - self.region.start) / 8
    }
}

/// Expands a pattern into FAA(+1) requests.
///
/// SCATTER iteration i touches IDX[i], ARRAY[i], then ARRAY[IDX[i]].
/// GATHER touches IDX[i], ARRAY[IDX[i]], then ARRAY[i]. SG touches IDX[2i],
/// IDX[2i+1], ARRAY[IDX[2i]], then ARRAY[IDX[2i+1]]. The stream is cut at
/// `n_ops` requests.
pub fn gen_circustent(p: &CircusPattern) -> Result<Vec<RaoRequest>> {
    if p.region.end < p.region.start + 64 || !p.region.start.is_multiple_of(8) {
        return Err(SimError::Config("pattern region must be 8-byte aligned and at least 64 B".into()));
    }
    if p.n_ops == 0 {
        return Err(SimError::Config("pattern needs at least one op".into()));
    }
    let n = p.n_ops;
    let elems = p.elements();
    let elem = |i: u64| p.region.start + (i % elems) * 8;
    let idx = |i: u64| p.index_base + i * 8;
    let mut rng = stream_rng(p.seed, &format!("circustent/{}", p.kind.name()));
    let mut random_elem = move || elem(rng.random_range(0..elems));

    let mut targets = Vec::with_capacity(n);
    let mut i = 0u64;
    while targets.len() < n {
        match p.kind {
            PatternKind::Central => targets.push(p.region.start),
            PatternKind::Stride1 => targets.push(elem(i)),
            PatternKind::Rand => targets.push(random_elem()),
            PatternKind::Scatter => {
                targets.extend([idx(i), elem(i), random_elem()]);
            }
            PatternKind::Gather => {
                targets.extend([idx(i), random_elem(), elem(i)]);
            }
            PatternKind::Sg => {
                targets.extend([idx(2 * i), idx(2 * i + 1), random_elem(), random_elem()]);
            }
        }
        i += 1;
    }
    targets.truncate(n);
    Ok(targets.into_iter().map(|t| RaoRequest::faa(t, 1)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn pat(kind: PatternKind, n: usize) -> CircusPattern {
        CircusPattern::suite_default(kind, n, 7)
    }

    #[test]
    fn central_single_target() {
        let r = gen_circustent(&pat(PatternKind::Central, 4)).unwrap();
        assert_eq!(r.len(), 4);
        assert!(r.iter().all(|q| q.target == r[0].target));
    }

    #[test]
    fn stride1_lines() {
        let r = gen_circustent(&pat(PatternKind::Stride1, 16)).unwrap();
        let lines: HashSet<_> = r.iter().map(|q| q.target.line()).collect();
        assert_eq!(lines.len(), 2);
    }

    #[test]
    fn deterministic_and_in_range() {
        for k in PatternKind::ALL {
            let p = pat(k, 1000);
            let a = gen_circustent(&p).unwrap();
            assert_eq!(a, gen_circustent(&p).unwrap());
            assert_eq!(a.len(), 1000);
            for q in &a {
                assert_eq!(q.target.0 % 8, 0);
                assert!(p.region.contains(&q.target.0) || q.target.0 >= p.index_base);
            }
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!("sg".parse::<PatternKind>().unwrap(), PatternKind::Sg);
        assert!("nope".parse::<PatternKind>().is_err());
    }
}
