//! Inverted-file index with contiguous partitions.
//!
//! Partition `c` occupies positions `offsets[c]..offsets[c + 1]` of the
//! layout; `members[pos]` is the dataset id stored there. Comparators used
//! with the index must be built over the permuted data
//! ([`crate::dco::VectorSpaces::permuted`] with [`Ivf::layout`]) so that a
//! partition scan walks memory sequentially.

use std::collections::BinaryHeap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_k, AnnIndex, IndexKind, SearchOutput, SearchParams};
use crate::dco::{Comparator, DcoStats};
use crate::error::{Error, Result};
use crate::kmeans;
use crate::sidecar::{Sidecar, SidecarKind, SidecarReader, SidecarWriter};
use crate::vector::{sq_dist, Dataset, KnnResult, Neighbor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IvfParams {
    pub nlist: usize,
    pub iterations: usize,
    /// Vectors k-means trains on when the dataset is larger.
    pub train_sample: usize,
    pub seed: u64,
}

impl Default for IvfParams {
    fn default() -> Self {
        Self { nlist: 256, iterations: kmeans::DEFAULT_ITERATIONS, train_sample: 65_536, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ivf {
    dim: usize,
    centroids: Vec<f32>,
    offsets: Vec<u32>,
    members: Vec<u32>,
}

impl Ivf {
    pub fn build(ds: &Dataset, params: IvfParams) -> Result<Self> {
        let n = ds.len();
        let dim = ds.dim();
        if params.nlist == 0 || params.nlist > n {
            return Err(Error::Config(format!("nlist = {} must lie in 1..={n}", params.nlist)));
        }
        let cap = params.train_sample.max(params.nlist);
        let centroids = if n > cap {
            let mut ids: Vec<u32> = (0..n as u32).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let (picked, _) = ids.partial_shuffle(&mut rng, cap);
            picked.sort_unstable();
            let sample = ds.subset(picked)?;
            kmeans::train(sample.as_slice(), dim, params.nlist, params.iterations, params.seed)?
        } else {
            kmeans::train(ds.as_slice(), dim, params.nlist, params.iterations, params.seed)?
        };
        let (labels, _) = kmeans::assign_exact(ds.as_slice(), dim, &centroids);
        Ok(Self::from_assignment(dim, centroids, &labels))
    }

    fn from_assignment(dim: usize, centroids: Vec<f32>, labels: &[u32]) -> Self {
        let nlist = centroids.len() / dim;
        let mut offsets = vec![0u32; nlist + 1];
        for &l in labels {
            offsets[l as usize + 1] += 1;
        }
        for c in 0..nlist {
            offsets[c + 1] += offsets[c];
        }
        let mut cursor = offsets.clone();
        let mut members = vec![0u32; labels.len()];
        for (id, &l) in labels.iter().enumerate() {
            members[cursor[l as usize] as usize] = id as u32;
            cursor[l as usize] += 1;
        }
        Self { dim, centroids, offsets, members }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nlist(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    /// Dataset ids in storage order.
    pub fn layout(&self) -> &[u32] {
        &self.members
    }

    pub fn partition(&self, c: usize) -> &[u32] {
        &self.members[self.offsets[c] as usize..self.offsets[c + 1] as usize]
    }

    pub fn partition_sizes(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| (w[1] - w[0]) as usize).collect()
    }

    /// Probed partitions for a query, nearest first, ties to the lower id.
    pub fn probe_order(&self, q: &[f32], nprobe: usize) -> Vec<usize> {
        let mut ranked: Vec<Neighbor> = self
            .centroids
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(c, x)| Neighbor { dist: sq_dist(q, x), id: c as u32 })
            .collect();
        let nprobe = nprobe.min(ranked.len());
        if nprobe < ranked.len() {
            ranked.select_nth_unstable(nprobe);
            ranked.truncate(nprobe);
        }
        ranked.sort_unstable();
        ranked.into_iter().map(|n| n.id as usize).collect()
    }
}

impl AnnIndex for Ivf {
    fn kind(&self) -> IndexKind {
        IndexKind::Ivf
    }

    fn len(&self) -> usize {
        self.members.len()
    }

    fn search<C: Comparator>(&self, cmp: &C, ctx: &C::Query, params: &SearchParams) -> Result<SearchOutput> {
        check_k(params.k, self.len())?;
        if params.nprobe == 0 || params.nprobe > self.nlist() {
            return Err(Error::Config(format!("nprobe = {} must lie in 1..={}", params.nprobe, self.nlist())));
        }
        if cmp.len() != self.len() {
            return Err(Error::Invariant("comparator and index hold different vector counts".into()));
        }
        let k = params.k;
        let mut stats = DcoStats::default();
        let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(k + 1);
        for c in self.probe_order(cmp.query_vector(ctx), params.nprobe) {
            for pos in self.offsets[c]..self.offsets[c + 1] {
                let tau_sq = if heap.len() < k { f32::INFINITY } else { heap.peek().map_or(f32::INFINITY, |n| n.dist) };
                let out = cmp.compare(ctx, pos, tau_sq);
                stats.record(&out, cmp.code_ops());
                if let Some(d) = out.distance() {
                    heap.push(Neighbor { dist: d, id: self.members[pos as usize] });
                    if heap.len() > k {
                        heap.pop();
                    }
                }
            }
        }
        Ok(SearchOutput { result: KnnResult::from_sorted(heap.into_sorted_vec()), stats })
    }
}

impl Sidecar for Ivf {
    fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = SidecarWriter::new(w, SidecarKind::Ivf, self.dim)?;
        w.usize32(self.nlist())?;
        w.usize32(self.members.len())?;
        w.f32s(&self.centroids)?;
        w.u32s(&self.offsets)?;
        w.u32s(&self.members)?;
        w.finish()?;
        Ok(())
    }

    fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = SidecarReader::new(r)?.expect(SidecarKind::Ivf)?;
        let dim = r.dim;
        let nlist = r.u32()? as usize;
        let n = r.u32()? as usize;
        let centroids = r.f32s(nlist * dim)?;
        let offsets = r.u32s(nlist + 1)?;
        let members = r.u32s(n)?;
        r.finish()?;
        let sorted = offsets.windows(2).all(|w| w[0] <= w[1]);
        if offsets.first() != Some(&0) || offsets.last() != Some(&(n as u32)) || !sorted {
            return Err(Error::Format("IVF offsets are inconsistent".into()));
        }
        let mut seen = vec![false; n];
        for &m in &members {
            match seen.get_mut(m as usize) {
                Some(s) if !*s => *s = true,
                _ => return Err(Error::Format(format!("IVF member {m} is out of range or repeated"))),
            }
        }
        Ok(Self { dim, centroids, offsets, members })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dco::{Artifacts, DcoConfig, StrategyKind, VectorSpaces};
    use crate::vector::{brute_force_knn, recall, Metric};
    use rand::Rng;

    fn gaussian(n: usize, dim: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * dim).map(|_| rng.sample::<f32, _>(rand_distr::StandardNormal)).collect();
        Dataset::new(dim, data).unwrap()
    }

    #[test]
    fn partitions_cover_every_id_once() {
        let ds = gaussian(500, 8, 1);
        let ivf = Ivf::build(&ds, IvfParams { nlist: 16, ..Default::default() }).unwrap();
        assert_eq!(ivf.partition_sizes().iter().sum::<usize>(), 500);
        let mut ids = ivf.layout().to_vec();
        ids.sort_unstable();
        assert_eq!(ids, (0..500).collect::<Vec<u32>>());
        for c in 0..16 {
            for &id in ivf.partition(c) {
                let (best, _) = kmeans::nearest(ds.row(id as usize), ivf.centroids(), 8);
                assert_eq!(best as usize, c);
            }
        }
    }

    #[test]
    fn singleton_partitions_and_bad_nlist() {
        let ds = gaussian(20, 4, 2);
        let ivf = Ivf::build(&ds, IvfParams { nlist: 20, ..Default::default() }).unwrap();
        assert!(ivf.partition_sizes().iter().all(|&s| s == 1));
        assert!(Ivf::build(&ds, IvfParams { nlist: 21, ..Default::default() }).is_err());
    }

    #[test]
    fn separated_blobs_are_pure() {
        let mut rows = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..200 {
            let c = if i % 2 == 0 { 50.0 } else { -50.0 };
            rows.push(vec![c + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        }
        let ds = Dataset::from_rows(&rows).unwrap();
        let ivf = Ivf::build(&ds, IvfParams { nlist: 2, ..Default::default() }).unwrap();
        for c in 0..2 {
            let p = ivf.partition(c);
            assert!(p.iter().all(|&id| id % 2 == p[0] % 2));
        }
    }

    #[test]
    fn exhaustive_probe_is_exact_and_round_trips() {
        let ds = gaussian(800, 16, 4);
        let ivf = Ivf::build(&ds, IvfParams { nlist: 8, ..Default::default() }).unwrap();
        let spaces = VectorSpaces::new(ds.clone(), Artifacts::default()).unwrap().permuted(ivf.layout()).unwrap();
        let fd = spaces.dco(StrategyKind::FdScanning, &DcoConfig::default_for(16)).unwrap();
        let qs = gaussian(10, 16, 5);
        for q in qs.rows() {
            let ctx = fd.prepare(q, 10).unwrap();
            let got = ivf.search(&fd, &ctx, &SearchParams::ivf(10, 8)).unwrap();
            let truth = brute_force_knn(&ds, q, 10, Metric::Euclidean).unwrap();
            assert_eq!(recall(&got.result, &truth, 10).unwrap(), 1.0);
            assert_eq!(got.stats.invocations, 800);
        }
        let bytes = ivf.to_bytes().unwrap();
        let back = Ivf::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, ivf);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }
}
