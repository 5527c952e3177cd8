//! Hierarchical navigable small-world graph.
//!
//! Upper layers are descended greedily with exact distances. The layer-0 beam
//! hands every candidate to the comparator's DCO with `τ²` set to the worst
//! distance retained in the beam, both when searching and when linking a new
//! node.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::io::{Read, Write};
use std::sync::Mutex;

use super::{check_k, AnnIndex, IndexKind, SearchOutput, SearchParams};
use crate::dco::{Comparator, Dco, DcoStats};
use crate::error::{Error, Result};
use crate::sidecar::{Sidecar, SidecarKind, SidecarReader, SidecarWriter};
use crate::vector::{KnnResult, Neighbor};

const MAX_LEVEL: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HnswParams {
    pub m: usize,
    pub ef_construction: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self { m: 16, ef_construction: 500, seed: 0 }
    }
}

impl HnswParams {
    fn validate(&self) -> Result<()> {
        if self.m < 2 || self.m > 1024 {
            return Err(Error::Config(format!("M must be in 2..=1024, got {}", self.m)));
        }
        if self.ef_construction == 0 {
            return Err(Error::Config("ef_construction must be >= 1".into()));
        }
        Ok(())
    }
}

/// Epoch-stamped visited marks.
#[derive(Debug, Default)]
struct Visited {
    marks: Vec<u32>,
    epoch: u32,
}

impl Visited {
    fn reset(&mut self, n: usize) {
        if self.marks.len() < n {
            self.marks.resize(n, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.fill(0);
            self.epoch = 1;
        }
    }

    /// Marks `id`; returns whether it was already marked.
    #[inline]
    fn visit(&mut self, id: u32) -> bool {
        let slot = &mut self.marks[id as usize];
        let seen = *slot == self.epoch;
        *slot = self.epoch;
        seen
    }
}

#[derive(Debug)]
pub struct Hnsw {
    dim: usize,
    m: usize,
    m0: usize,
    ef_construction: usize,
    seed: u64,
    levels: Vec<u8>,
    /// Layer-0 adjacency, `m0` slots per node.
    l0: Vec<u32>,
    l0_len: Vec<u32>,
    /// `upper[node][layer - 1]`.
    upper: Vec<Vec<Vec<u32>>>,
    entry: Option<u32>,
    max_level: usize,
    pool: Mutex<Vec<Visited>>,
}

impl Clone for Hnsw {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            m: self.m,
            m0: self.m0,
            ef_construction: self.ef_construction,
            seed: self.seed,
            levels: self.levels.clone(),
            l0: self.l0.clone(),
            l0_len: self.l0_len.clone(),
            upper: self.upper.clone(),
            entry: self.entry,
            max_level: self.max_level,
            pool: Mutex::new(Vec::new()),
        }
    }
}

impl PartialEq for Hnsw {
    fn eq(&self, o: &Self) -> bool {
        self.dim == o.dim
            && self.m == o.m
            && self.ef_construction == o.ef_construction
            && self.seed == o.seed
            && self.levels == o.levels
            && self.l0_len == o.l0_len
            && (0..self.levels.len() as u32).all(|i| self.neighbors(i, 0) == o.neighbors(i, 0))
            && self.upper == o.upper
            && self.entry == o.entry
            && self.max_level == o.max_level
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Level of node `id`: `floor(-ln(u) / ln(M))` with `u` hashed from the seed
/// and the id, so insertion order never perturbs it.
fn level_for(seed: u64, id: u32, m: usize) -> usize {
    let h = splitmix64(seed.wrapping_add(splitmix64(id as u64)));
    let u = ((h >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    ((-u.ln() / (m as f64).ln()).floor() as usize).min(MAX_LEVEL)
}

impl Hnsw {
    pub fn empty(dim: usize, params: HnswParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            dim,
            m: params.m,
            m0: 2 * params.m,
            ef_construction: params.ef_construction,
            seed: params.seed,
            levels: Vec::new(),
            l0: Vec::new(),
            l0_len: Vec::new(),
            upper: Vec::new(),
            entry: None,
            max_level: 0,
            pool: Mutex::new(Vec::new()),
        })
    }

    /// Links every vector of `dco`, in id order.
    ///
    /// Classification strategies are refused: they need an index to train.
    pub fn build(dco: &Dco, params: HnswParams) -> Result<Self> {
        check_buildable(dco)?;
        let mut g = Self::empty(dco.dim(), params)?;
        for id in 0..dco.len() as u32 {
            g.link(dco, id)?;
        }
        Ok(g)
    }

    /// Appends `v` to the comparator's stores and links it.
    pub fn insert(&mut self, dco: &mut Dco, v: &[f32]) -> Result<u32> {
        check_buildable(dco)?;
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: v.len() });
        }
        if dco.len() != self.len() {
            return Err(Error::Invariant(format!(
                "comparator holds {} vectors, graph holds {}",
                dco.len(),
                self.len()
            )));
        }
        let id = dco.push(v)?;
        self.link(dco, id)?;
        Ok(id)
    }

    pub fn params(&self) -> HnswParams {
        HnswParams { m: self.m, ef_construction: self.ef_construction, seed: self.seed }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry_point(&self) -> Option<u32> {
        self.entry
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn level(&self, id: u32) -> usize {
        self.levels[id as usize] as usize
    }

    pub fn neighbors(&self, id: u32, layer: usize) -> &[u32] {
        let i = id as usize;
        if layer == 0 {
            &self.l0[i * self.m0..i * self.m0 + self.l0_len[i] as usize]
        } else {
            &self.upper[i][layer - 1]
        }
    }

    fn set_neighbors(&mut self, id: u32, layer: usize, ids: &[u32]) {
        let i = id as usize;
        if layer == 0 {
            self.l0[i * self.m0..i * self.m0 + ids.len()].copy_from_slice(ids);
            self.l0_len[i] = ids.len() as u32;
        } else {
            self.upper[i][layer - 1].clear();
            self.upper[i][layer - 1].extend_from_slice(ids);
        }
    }

    fn take_visited(&self) -> Visited {
        self.pool.lock().map(|mut p| p.pop()).ok().flatten().unwrap_or_default()
    }

    fn return_visited(&self, v: Visited) {
        if let Ok(mut p) = self.pool.lock() {
            p.push(v);
        }
    }

    fn exact<C: Comparator>(cmp: &C, ctx: &C::Query, id: u32, stats: &mut DcoStats) -> f32 {
        let out = cmp.compare(ctx, id, f32::INFINITY);
        stats.record(&out, cmp.code_ops());
        out.distance().expect("an infinite threshold always yields a distance")
    }

    fn greedy<C: Comparator>(&self, cmp: &C, ctx: &C::Query, mut cur: Neighbor, layer: usize, stats: &mut DcoStats) -> Neighbor {
        loop {
            let mut moved = false;
            for &n in self.neighbors(cur.id, layer) {
                let d = Self::exact(cmp, ctx, n, stats);
                let cand = Neighbor { dist: d, id: n };
                if cand < cur {
                    cur = cand;
                    moved = true;
                }
            }
            if !moved {
                return cur;
            }
        }
    }

    /// Beam search on one layer; ascending by `(distance, id)`.
    #[allow(clippy::too_many_arguments)]
    fn beam<C: Comparator>(
        &self,
        cmp: &C,
        ctx: &C::Query,
        entries: &[Neighbor],
        ef: usize,
        layer: usize,
        use_dco: bool,
        visited: &mut Visited,
        stats: &mut DcoStats,
    ) -> Vec<Neighbor> {
        visited.reset(self.len());
        let mut cand: BinaryHeap<Reverse<Neighbor>> = BinaryHeap::new();
        let mut best: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(ef + 1);
        for &e in entries {
            if !visited.visit(e.id) {
                cand.push(Reverse(e));
                best.push(e);
                if best.len() > ef {
                    best.pop();
                }
            }
        }
        while let Some(Reverse(c)) = cand.pop() {
            if best.len() >= ef && c.dist > best.peek().map_or(f32::INFINITY, |b| b.dist) {
                break;
            }
            let nbrs = self.neighbors(c.id, layer);
            if let Some(&first) = nbrs.first() {
                cmp.prefetch(first);
            }
            for (j, &n) in nbrs.iter().enumerate() {
                if let Some(&next) = nbrs.get(j + 1) {
                    cmp.prefetch(next);
                }
                if visited.visit(n) {
                    continue;
                }
                let full = best.len() >= ef;
                let worst = best.peek().map_or(f32::INFINITY, |b| b.dist);
                let tau_sq = if full && use_dco { worst } else { f32::INFINITY };
                let out = cmp.compare(ctx, n, tau_sq);
                stats.record(&out, cmp.code_ops());
                if let Some(d) = out.distance() {
                    if !full || d <= worst {
                        let nb = Neighbor { dist: d, id: n };
                        cand.push(Reverse(nb));
                        best.push(nb);
                        if best.len() > ef {
                            best.pop();
                        }
                    }
                }
            }
        }
        best.into_sorted_vec()
    }

    /// Neighbor-selection heuristic: keep a candidate only when it is closer
    /// to the base than to every neighbor already kept.
    fn select<C: Comparator>(cmp: &C, sorted: &[Neighbor], m: usize) -> Vec<Neighbor> {
        let mut out: Vec<Neighbor> = Vec::with_capacity(m);
        for (j, &c) in sorted.iter().enumerate() {
            if out.len() >= m {
                break;
            }
            if let Some(next) = sorted.get(j + 1) {
                cmp.prefetch(next.id);
            }
            if out.iter().all(|r| cmp.pair_distance(c.id, r.id) >= c.dist) {
                out.push(c);
            }
        }
        out
    }

    fn link<C: Comparator>(&mut self, cmp: &C, id: u32) -> Result<()> {
        if id as usize != self.len() {
            return Err(Error::Invariant(format!("node {id} linked out of order")));
        }
        let level = level_for(self.seed, id, self.m);
        self.levels.push(level as u8);
        self.l0.extend(std::iter::repeat(0).take(self.m0));
        self.l0_len.push(0);
        self.upper.push(vec![Vec::new(); level]);
        let Some(entry) = self.entry else {
            self.entry = Some(id);
            self.max_level = level;
            return Ok(());
        };

        let ctx = cmp.prepare(cmp.vector(id), self.ef_construction.min(cmp.len()))?;
        let mut stats = DcoStats::default();
        let mut visited = self.take_visited();
        let mut cur = Neighbor { dist: Self::exact(cmp, &ctx, entry, &mut stats), id: entry };
        for layer in (level + 1..=self.max_level).rev() {
            cur = self.greedy(cmp, &ctx, cur, layer, &mut stats);
        }
        let mut entries = vec![cur];
        for layer in (0..=level.min(self.max_level)).rev() {
            let found = self.beam(cmp, &ctx, &entries, self.ef_construction, layer, layer == 0, &mut visited, &mut stats);
            let chosen = Self::select(cmp, &found, self.m);
            let ids: Vec<u32> = chosen.iter().map(|n| n.id).collect();
            self.set_neighbors(id, layer, &ids);
            let cap = if layer == 0 { self.m0 } else { self.m };
            for nb in &chosen {
                let existing = self.neighbors(nb.id, layer);
                if existing.len() < cap {
                    let mut grown = existing.to_vec();
                    grown.push(id);
                    self.set_neighbors(nb.id, layer, &grown);
                } else {
                    let mut pool: Vec<Neighbor> = existing
                        .iter()
                        .enumerate()
                        .map(|(j, &x)| {
                            if let Some(&next) = existing.get(j + 1) {
                                cmp.prefetch(next);
                            }
                            Neighbor { dist: cmp.pair_distance(nb.id, x), id: x }
                        })
                        .collect();
                    pool.push(Neighbor { dist: nb.dist, id });
                    pool.sort_unstable();
                    let kept: Vec<u32> = Self::select(cmp, &pool, cap).iter().map(|n| n.id).collect();
                    self.set_neighbors(nb.id, layer, &kept);
                }
            }
            entries = found;
        }
        self.return_visited(visited);
        if level > self.max_level {
            self.max_level = level;
            self.entry = Some(id);
        }
        Ok(())
    }

    /// Structural checks over the whole graph.
    pub fn audit(&self) -> AuditReport {
        let n = self.len();
        let mut r = AuditReport { nodes: n, ..Default::default() };
        r.entry_ok = match self.entry {
            None => n == 0,
            Some(e) => (e as usize) < n && self.level(e) == self.max_level,
        };
        for id in 0..n as u32 {
            for layer in 0..=self.level(id) {
                let nb = self.neighbors(id, layer);
                let cap = if layer == 0 { self.m0 } else { self.m };
                r.edges += nb.len();
                if nb.len() > cap {
                    r.degree_violations += 1;
                }
                let mut seen = nb.to_vec();
                seen.sort_unstable();
                seen.dedup();
                r.duplicate_edges += nb.len() - seen.len();
                for &x in nb {
                    if x as usize >= n {
                        r.invalid_ids += 1;
                    } else if x == id {
                        r.self_loops += 1;
                    } else if self.level(x) < layer {
                        r.layer_violations += 1;
                    }
                }
            }
        }
        if let Some(e) = self.entry {
            if (e as usize) < n {
                let mut seen = vec![false; n];
                let mut queue = VecDeque::from([e]);
                seen[e as usize] = true;
                while let Some(x) = queue.pop_front() {
                    r.reachable_layer0 += 1;
                    for &y in self.neighbors(x, 0) {
                        if (y as usize) < n && !seen[y as usize] {
                            seen[y as usize] = true;
                            queue.push_back(y);
                        }
                    }
                }
            }
        }
        r
    }
}

fn check_buildable(dco: &Dco) -> Result<()> {
    if dco.kind().is_classifier() {
        return Err(Error::Config(format!(
            "{} cannot drive index construction: it needs an index to train on",
            dco.kind()
        )));
    }
    Ok(())
}

impl AnnIndex for Hnsw {
    fn kind(&self) -> IndexKind {
        IndexKind::Hnsw
    }

    fn len(&self) -> usize {
        self.levels.len()
    }

    fn search<C: Comparator>(&self, cmp: &C, ctx: &C::Query, params: &SearchParams) -> Result<SearchOutput> {
        check_k(params.k, self.len())?;
        if params.ef_search < params.k {
            return Err(Error::Config(format!("ef_search = {} is below k = {}", params.ef_search, params.k)));
        }
        if cmp.len() < self.len() {
            return Err(Error::Invariant("comparator holds fewer vectors than the graph".into()));
        }
        let entry = self.entry.expect("non-empty graph has an entry point");
        let mut stats = DcoStats::default();
        let mut cur = Neighbor { dist: Self::exact(cmp, ctx, entry, &mut stats), id: entry };
        for layer in (1..=self.max_level).rev() {
            cur = self.greedy(cmp, ctx, cur, layer, &mut stats);
        }
        let mut visited = self.take_visited();
        let mut found = self.beam(cmp, ctx, &[cur], params.ef_search, 0, true, &mut visited, &mut stats);
        self.return_visited(visited);
        found.truncate(params.k);
        Ok(SearchOutput { result: KnnResult::from_sorted(found), stats })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub nodes: usize,
    pub edges: usize,
    pub degree_violations: usize,
    pub invalid_ids: usize,
    pub self_loops: usize,
    pub duplicate_edges: usize,
    /// Edges on layer `l` pointing at a node whose level is below `l`.
    pub layer_violations: usize,
    pub reachable_layer0: usize,
    pub entry_ok: bool,
}

impl AuditReport {
    pub fn reachable_fraction(&self) -> f64 {
        if self.nodes == 0 {
            1.0
        } else {
            self.reachable_layer0 as f64 / self.nodes as f64
        }
    }

    /// No structural violation and at least 99% of nodes reachable on layer 0.
    pub fn passed(&self) -> bool {
        self.degree_violations == 0
            && self.invalid_ids == 0
            && self.self_loops == 0
            && self.duplicate_edges == 0
            && self.layer_violations == 0
            && self.entry_ok
            && self.reachable_fraction() >= 0.99
    }
}

impl Sidecar for Hnsw {
    fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = SidecarWriter::new(w, SidecarKind::Hnsw, self.dim)?;
        w.usize32(self.m)?;
        w.usize32(self.ef_construction)?;
        w.u64(self.seed)?;
        w.usize32(self.len())?;
        w.u32(self.entry.unwrap_or(u32::MAX))?;
        w.usize32(self.max_level)?;
        w.bytes(&self.levels)?;
        for id in 0..self.len() as u32 {
            for layer in 0..=self.level(id) {
                let nb = self.neighbors(id, layer);
                w.usize32(nb.len())?;
                w.u32s(nb)?;
            }
        }
        w.finish()?;
        Ok(())
    }

    fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = SidecarReader::new(r)?.expect(SidecarKind::Hnsw)?;
        let m = r.u32()? as usize;
        let ef_construction = r.u32()? as usize;
        let seed = r.u64()?;
        let mut g = Hnsw::empty(r.dim, HnswParams { m, ef_construction, seed })?;
        let n = r.u32()? as usize;
        let entry = r.u32()?;
        g.entry = (entry != u32::MAX).then_some(entry);
        g.max_level = r.u32()? as usize;
        g.levels = r.bytes(n)?;
        g.l0 = vec![0; n * g.m0];
        g.l0_len = vec![0; n];
        g.upper = g.levels.iter().map(|&l| vec![Vec::new(); l as usize]).collect();
        for id in 0..n as u32 {
            for layer in 0..=g.level(id) {
                let len = r.u32()? as usize;
                let cap = if layer == 0 { g.m0 } else { g.m };
                if len > cap {
                    return Err(Error::Format(format!("node {id} has {len} links on layer {layer}, cap {cap}")));
                }
                let ids = r.u32s(len)?;
                if ids.iter().any(|&x| x as usize >= n) {
                    return Err(Error::Format(format!("node {id} links past the end of the graph")));
                }
                g.set_neighbors(id, layer, &ids);
            }
        }
        if g.entry.map_or(n != 0, |e| e as usize >= n) {
            return Err(Error::Format("entry point outside the graph".into()));
        }
        r.finish()?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests;
