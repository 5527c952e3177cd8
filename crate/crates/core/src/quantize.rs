//! Product quantization: per-sub-space k-means codebooks, encoding, and
//! asymmetric distances through a per-query lookup table.

use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kmeans;
use crate::sidecar::{Sidecar, SidecarKind, SidecarReader, SidecarWriter};
use crate::vector::{sq_dist, Dataset};

pub const DEFAULT_BITS: usize = 8;
/// Rows used to train each sub-space codebook.
pub const TRAIN_SAMPLE_CAP: usize = 65_536;

/// Largest divisor of `dim` not above `min(dim / 8, 64)`.
pub fn default_subspaces(dim: usize) -> usize {
    let cap = (dim / 8).clamp(1, 64);
    (1..=cap).rev().find(|c| dim % c == 0).unwrap_or(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PqCodebook {
    dim: usize,
    subspaces: usize,
    bits: usize,
    /// `subspaces x 2^bits x sub_dim`, row-major.
    centroids: Vec<f32>,
    /// Fingerprint of the training dataset; unknown after loading from disk.
    pub trained_on: Option<String>,
    /// Mean squared reconstruction error on the training rows.
    pub training_error: Option<f64>,
}

/// One code per sub-space per vector, `N x c` bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PqCodes {
    subspaces: usize,
    codes: Vec<u8>,
}

impl PqCodes {
    pub fn len(&self) -> usize {
        self.codes.len() / self.subspaces
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    #[inline]
    pub fn get(&self, id: usize) -> &[u8] {
        &self.codes[id * self.subspaces..(id + 1) * self.subspaces]
    }

    pub fn push(&mut self, code: &[u8]) {
        debug_assert_eq!(code.len(), self.subspaces);
        self.codes.extend_from_slice(code);
    }
}

impl PqCodebook {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn subspaces(&self) -> usize {
        self.subspaces
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn sub_dim(&self) -> usize {
        self.dim / self.subspaces
    }

    pub fn centroids_per_subspace(&self) -> usize {
        1 << self.bits
    }

    #[inline]
    pub fn centroid(&self, sub: usize, code: usize) -> &[f32] {
        let sd = self.sub_dim();
        let start = (sub * self.centroids_per_subspace() + code) * sd;
        &self.centroids[start..start + sd]
    }

    /// Nearest centroid per sub-space; ties go to the lowest index.
    pub fn encode(&self, v: &[f32]) -> Result<Vec<u8>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: v.len() });
        }
        let sd = self.sub_dim();
        let ksub = self.centroids_per_subspace();
        Ok((0..self.subspaces)
            .map(|s| {
                let block = &self.centroids[s * ksub * sd..(s + 1) * ksub * sd];
                kmeans::nearest(&v[s * sd..(s + 1) * sd], block, sd).0 as u8
            })
            .collect())
    }

    pub fn encode_dataset(&self, ds: &Dataset) -> Result<PqCodes> {
        if ds.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: ds.dim() });
        }
        let sd = self.sub_dim();
        if sd > kmeans::SMALL_DIM {
            let mut codes = Vec::with_capacity(ds.len() * self.subspaces);
            for v in ds.rows() {
                codes.extend(self.encode(v)?);
            }
            return Ok(PqCodes { subspaces: self.subspaces, codes });
        }
        let ksub = self.centroids_per_subspace();
        let tables: Vec<kmeans::Transposed> = (0..self.subspaces)
            .map(|s| kmeans::Transposed::new(&self.centroids[s * ksub * sd..(s + 1) * ksub * sd], sd))
            .collect();
        let mut buf = vec![0.0f32; ksub];
        let mut codes = Vec::with_capacity(ds.len() * self.subspaces);
        for v in ds.rows() {
            for (s, t) in tables.iter().enumerate() {
                codes.push(t.nearest(&v[s * sd..(s + 1) * sd], &mut buf).0 as u8);
            }
        }
        Ok(PqCodes { subspaces: self.subspaces, codes })
    }

    pub fn empty_codes(&self) -> PqCodes {
        PqCodes { subspaces: self.subspaces, codes: Vec::new() }
    }

    pub fn decode(&self, codes: &[u8]) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.dim);
        for (s, &c) in codes.iter().enumerate() {
            out.extend_from_slice(self.centroid(s, c as usize));
        }
        out
    }

    /// Mean `‖v - decode(encode(v))‖²` over a dataset.
    pub fn reconstruction_error(&self, ds: &Dataset) -> Result<f64> {
        let codes = self.encode_dataset(ds)?;
        let mut total = 0.0f64;
        for (i, v) in ds.rows().enumerate() {
            total += sq_dist(v, &self.decode(codes.get(i))) as f64;
        }
        Ok(total / ds.len() as f64)
    }

    /// Per-query table of sub-space squared distances, `c x 2^b` entries.
    pub fn lookup_table(&self, q: &[f32]) -> Result<LookupTable> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: q.len() });
        }
        let sd = self.sub_dim();
        let ksub = self.centroids_per_subspace();
        let mut table = Vec::with_capacity(self.subspaces * ksub);
        for s in 0..self.subspaces {
            let qs = &q[s * sd..(s + 1) * sd];
            for j in 0..ksub {
                table.push(sq_dist(qs, self.centroid(s, j)));
            }
        }
        Ok(LookupTable { ksub, table })
    }
}

#[derive(Clone, Debug)]
pub struct LookupTable {
    ksub: usize,
    table: Vec<f32>,
}

impl LookupTable {
    /// Asymmetric squared distance: `Σ_s table[s][code_s]`.
    #[inline]
    pub fn distance(&self, codes: &[u8]) -> f32 {
        let mut acc = 0.0f32;
        for (s, &c) in codes.iter().enumerate() {
            acc += self.table[s * self.ksub + c as usize];
        }
        acc
    }
}

/// Trains one k-means codebook with `2^bits` centroids per sub-space.
pub fn train_pq(ds: &Dataset, subspaces: usize, bits: usize, seed: u64) -> Result<PqCodebook> {
    let dim = ds.dim();
    if subspaces == 0 || dim % subspaces != 0 {
        return Err(Error::InvalidArgument(format!("{subspaces} sub-spaces do not divide dimension {dim}")));
    }
    if bits == 0 || bits > 8 {
        return Err(Error::InvalidArgument(format!("bits per code must be in 1..=8, got {bits}")));
    }
    let ksub = 1usize << bits;
    if ds.len() < ksub {
        return Err(Error::InvalidArgument(format!("{} vectors cannot train {ksub} centroids", ds.len())));
    }
    let rows: Vec<usize> = if ds.len() > TRAIN_SAMPLE_CAP {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5051_5f53_414d_504c);
        let mut ids = sample(&mut rng, ds.len(), TRAIN_SAMPLE_CAP).into_vec();
        ids.sort_unstable();
        ids
    } else {
        (0..ds.len()).collect()
    };
    let sd = dim / subspaces;
    let mut centroids = Vec::with_capacity(subspaces * ksub * sd);
    for s in 0..subspaces {
        let mut block = Vec::with_capacity(rows.len() * sd);
        for &i in &rows {
            block.extend_from_slice(&ds.row(i)[s * sd..(s + 1) * sd]);
        }
        centroids.extend(kmeans::train(&block, sd, ksub, kmeans::DEFAULT_ITERATIONS, seed.wrapping_add(s as u64))?);
    }
    let mut cb = PqCodebook { dim, subspaces, bits, centroids, trained_on: Some(ds.fingerprint()), training_error: None };
    let train_rows = Dataset::from_parts_unchecked(
        dim,
        rows.iter().flat_map(|&i| ds.row(i).iter().copied()).collect(),
        false,
    );
    cb.training_error = Some(cb.reconstruction_error(&train_rows)?);
    Ok(cb)
}

/// Asymmetric distance between encoded `codes` and a raw query.
pub fn pq_distance(cb: &PqCodebook, codes: &[u8], q: &[f32]) -> Result<f32> {
    if codes.len() != cb.subspaces() {
        return Err(Error::DimensionMismatch { expected: cb.subspaces(), found: codes.len() });
    }
    Ok(cb.lookup_table(q)?.distance(codes))
}

impl Sidecar for PqCodebook {
    fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = SidecarWriter::new(w, SidecarKind::Pq, self.dim)?;
        w.usize32(self.subspaces)?;
        w.usize32(self.bits)?;
        w.f32s(&self.centroids)?;
        w.finish()?;
        Ok(())
    }

    fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = SidecarReader::new(r)?.expect(SidecarKind::Pq)?;
        let dim = r.dim;
        let subspaces = r.u32()? as usize;
        let bits = r.u32()? as usize;
        if subspaces == 0 || dim % subspaces != 0 || bits == 0 || bits > 8 {
            return Err(Error::Format(format!("invalid PQ shape c={subspaces} b={bits} for dimension {dim}")));
        }
        let centroids = r.f32s((1 << bits) * dim)?;
        r.finish()?;
        Ok(PqCodebook { dim, subspaces, bits, centroids, trained_on: None, training_error: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::new(d, (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn shape_errors() {
        let ds = gaussian(300, 12, 1);
        assert!(train_pq(&ds, 5, 4, 0).is_err());
        assert!(train_pq(&ds, 3, 9, 0).is_err());
        assert!(train_pq(&gaussian(10, 12, 1), 3, 4, 0).is_err());
        assert_eq!(default_subspaces(128), 16);
        assert_eq!(default_subspaces(960), 64);
        assert_eq!(default_subspaces(200), 25);
        assert_eq!(default_subspaces(12288), 64);
        assert_eq!(default_subspaces(4), 1);
    }

    #[test]
    fn exact_when_every_point_is_a_centroid() {
        // Four distinct sub-vectors per sub-space, 2 bits.
        let rows: Vec<Vec<f32>> = (0..4).map(|i| vec![i as f32, -(i as f32), 2.0 * i as f32, 0.5]).collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        let cb = train_pq(&ds, 2, 2, 7).unwrap();
        assert_eq!(cb.training_error, Some(0.0));
        for (i, r) in rows.iter().enumerate() {
            let codes = cb.encode(r).unwrap();
            assert_eq!(cb.decode(&codes), *r);
            for q in &rows {
                let pq = pq_distance(&cb, &codes, q).unwrap();
                assert!((pq - sq_dist(r, q)).abs() <= 1e-4, "row {i}");
            }
        }
    }

    #[test]
    fn one_bit_two_clusters() {
        let rows: Vec<Vec<f32>> = (0..40).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }, 0.01 * (i % 5) as f32]).collect();
        let cb = train_pq(&Dataset::from_rows(&rows).unwrap(), 1, 1, 3).unwrap();
        let mut xs = [cb.centroid(0, 0)[0], cb.centroid(0, 1)[0]];
        xs.sort_by(f32::total_cmp);
        assert!((xs[0] + 1.0).abs() < 1e-3 && (xs[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn more_bits_less_error() {
        let ds = gaussian(2000, 16, 4);
        let errs: Vec<f64> = (4..=8).map(|b| train_pq(&ds, 4, b, 1).unwrap().training_error.unwrap()).collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
    }

    #[test]
    fn encoding_is_idempotent_and_table_matches_naive() {
        let ds = gaussian(600, 16, 5);
        let cb = train_pq(&ds, 4, 4, 2).unwrap();
        let v = ds.row(3);
        let codes = cb.encode(v).unwrap();
        assert_eq!(cb.encode(&cb.decode(&codes)).unwrap(), codes);
        assert_eq!(cb.encode(v).unwrap(), cb.encode(&v.to_vec()).unwrap());
        let q = ds.row(10);
        let table = cb.lookup_table(q).unwrap();
        for id in 0..50 {
            let c = cb.encode(ds.row(id)).unwrap();
            let mut naive = 0.0f32;
            for (s, &code) in c.iter().enumerate() {
                naive += sq_dist(&q[s * 4..(s + 1) * 4], cb.centroid(s, code as usize));
            }
            assert_eq!(table.distance(&c).to_bits(), naive.to_bits());
        }
        let self_dist = pq_distance(&cb, &cb.encode(q).unwrap(), q).unwrap();
        assert!(self_dist >= 0.0);
    }

    #[test]
    fn held_out_reconstruction_is_bounded() {
        let train = gaussian(3000, 16, 6);
        let cb = train_pq(&train, 4, 6, 3).unwrap();
        let per_row: Vec<f64> = train
            .rows()
            .map(|v| sq_dist(v, &cb.decode(&cb.encode(v).unwrap())) as f64)
            .collect();
        let mean = per_row.iter().sum::<f64>() / per_row.len() as f64;
        let std = (per_row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / per_row.len() as f64).sqrt();
        let held_out = gaussian(200, 16, 99);
        let err = cb.reconstruction_error(&held_out).unwrap();
        assert!(err <= mean + 3.0 * std, "{err} vs {mean} + 3*{std}");
    }

    #[test]
    fn sidecar_round_trip() {
        let cb = train_pq(&gaussian(300, 8, 1), 2, 3, 1).unwrap();
        let bytes = cb.to_bytes().unwrap();
        let back = PqCodebook::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.centroids, cb.centroids);
    }
}
