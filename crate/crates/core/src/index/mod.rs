//! HNSW and IVF indexes driven by a [`Comparator`].

mod hnsw;
mod ivf;

use std::fmt;
use std::str::FromStr;

pub use hnsw::{AuditReport, Hnsw, HnswParams};
pub use ivf::{Ivf, IvfParams};

use crate::dco::{Comparator, DcoStats};
use crate::error::{Error, Result};
use crate::vector::KnnResult;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum IndexKind {
    #[default]
    Hnsw,
    Ivf,
}

impl IndexKind {
    pub fn name(self) -> &'static str {
        match self {
            IndexKind::Hnsw => "hnsw",
            IndexKind::Ivf => "ivf",
        }
    }

    /// The knob a QPS/recall sweep varies.
    pub fn sweep_param(self) -> &'static str {
        match self {
            IndexKind::Hnsw => "ef_search",
            IndexKind::Ivf => "nprobe",
        }
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IndexKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hnsw" => Ok(IndexKind::Hnsw),
            "ivf" => Ok(IndexKind::Ivf),
            _ => Err(Error::Config(format!("unknown index kind `{s}`; valid kinds: hnsw, ivf"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchParams {
    pub k: usize,
    /// HNSW beam width.
    pub ef_search: usize,
    /// IVF partitions probed.
    pub nprobe: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self { k: 20, ef_search: 200, nprobe: 16 }
    }
}

impl SearchParams {
    pub fn hnsw(k: usize, ef_search: usize) -> Self {
        Self { k, ef_search, ..Default::default() }
    }

    pub fn ivf(k: usize, nprobe: usize) -> Self {
        Self { k, nprobe, ..Default::default() }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchOutput {
    pub result: KnnResult,
    pub stats: DcoStats,
}

pub trait AnnIndex {
    fn kind(&self) -> IndexKind;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Top-k for a prepared query. Returned ids are dataset ids.
    fn search<C: Comparator>(&self, cmp: &C, ctx: &C::Query, params: &SearchParams) -> Result<SearchOutput>;
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::OutOfRange(format!("k = {k} with {n} indexed vectors")));
    }
    Ok(())
}
