//! fvecs/ivecs readers and writers, plus synthetic dataset generators.
//!
//! Both formats are a sequence of records: a little-endian `i32` length `d`
//! followed by `d` little-endian payload words (`f32` or `i32`).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::transform::random_orthogonal;
use crate::vector::Dataset;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.display().to_string()),
        _ => Error::Io(e),
    })
}

/// Splits a vecs buffer into records, checking framing. Returns `(dim, payload words)`.
fn frame(bytes: &[u8], what: &str) -> Result<(usize, Vec<[u8; 4]>)> {
    let mut words = Vec::with_capacity(bytes.len() / 4);
    let mut dim = None;
    let mut pos = 0usize;
    let mut record = 0usize;
    while pos < bytes.len() {
        let head = bytes
            .get(pos..pos + 4)
            .ok_or_else(|| Error::Format(format!("{what} record {record}: truncated length header")))?;
        let d = i32::from_le_bytes(head.try_into().unwrap());
        if d <= 0 {
            return Err(Error::Format(format!("{what} record {record}: invalid dimension {d}")));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(first) if first != d => {
                return Err(Error::Format(format!(
                    "{what} record {record}: dimension {d} differs from first record's {first}"
                )))
            }
            _ => {}
        }
        pos += 4;
        let body = bytes
            .get(pos..pos + 4 * d)
            .ok_or_else(|| Error::Format(format!("{what} record {record}: truncated payload")))?;
        words.extend(body.chunks_exact(4).map(|c| <[u8; 4]>::try_from(c).unwrap()));
        pos += 4 * d;
        record += 1;
    }
    Ok((dim.unwrap_or(0), words))
}

pub fn parse_fvecs(bytes: &[u8]) -> Result<Dataset> {
    let (dim, words) = frame(bytes, "fvecs")?;
    if words.is_empty() {
        return Err(Error::Format("fvecs file holds no vectors".into()));
    }
    let data: Vec<f32> = words.into_iter().map(f32::from_le_bytes).collect();
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { vector: i / dim, coord: i % dim });
    }
    Dataset::new(dim, data)
}

pub fn read_fvecs(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_fvecs(&read_file(path.as_ref())?)
}

pub fn fvecs_bytes(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(ds.len() * (4 + 4 * ds.dim()));
    for row in ds.rows() {
        out.extend_from_slice(&(ds.dim() as i32).to_le_bytes());
        for x in row {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn write_fvecs(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&fvecs_bytes(ds))?;
    w.flush()?;
    Ok(())
}

/// Parses ground-truth id lists. An empty buffer is an empty truth set.
pub fn parse_ivecs(bytes: &[u8]) -> Result<Vec<Vec<u32>>> {
    let (dim, words) = frame(bytes, "ivecs")?;
    if words.is_empty() {
        return Ok(Vec::new());
    }
    let ids: Vec<i32> = words.into_iter().map(i32::from_le_bytes).collect();
    if let Some(i) = ids.iter().position(|&x| x < 0) {
        return Err(Error::Format(format!("ivecs record {}: negative id {}", i / dim, ids[i])));
    }
    Ok(ids.chunks_exact(dim).map(|c| c.iter().map(|&x| x as u32).collect()).collect())
}

pub fn read_ivecs(path: impl AsRef<Path>) -> Result<Vec<Vec<u32>>> {
    parse_ivecs(&read_file(path.as_ref())?)
}

pub fn ivecs_bytes(rows: &[Vec<u32>]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    if let Some(first) = rows.first() {
        if first.is_empty() {
            return Err(Error::InvalidArgument("ivecs records need at least one id".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != first.len() {
                return Err(Error::Format(format!("ivecs record {i}: length {} differs from {}", r.len(), first.len())));
            }
            out.extend_from_slice(&(r.len() as i32).to_le_bytes());
            for &id in r {
                let id = i32::try_from(id).map_err(|_| Error::OutOfRange(format!("id {id} exceeds i32")))?;
                out.extend_from_slice(&id.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn write_ivecs(rows: &[Vec<u32>], path: impl AsRef<Path>) -> Result<()> {
    let bytes = ivecs_bytes(rows)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub enum Distribution {
    IsotropicGaussian,
    /// Variance concentrated in `rank` random orthogonal directions.
    LowRank { rank: usize },
    /// Each vector concatenates randomly drawn rows of `source`.
    ConcatTokens { source: Dataset },
    /// Clustered non-negative integer-valued data shaped like SIFT descriptors:
    /// skewed spectrum, overlapping clusters, byte-range coordinates.
    SiftLike { clusters: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub dim: usize,
    pub distribution: Distribution,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n: usize, dim: usize, distribution: Distribution, seed: u64) -> Self {
        Self { n, dim, distribution, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.dim == 0 {
            return Err(Error::InvalidArgument(format!("synthetic N = {} and D = {} must be positive", self.n, self.dim)));
        }
        match &self.distribution {
            Distribution::LowRank { rank } if *rank == 0 || *rank > self.dim => {
                Err(Error::InvalidArgument(format!("low-rank r = {rank} must lie in 1..={}", self.dim)))
            }
            Distribution::ConcatTokens { source } if source.is_empty() || self.dim % source.dim() != 0 => {
                Err(Error::InvalidArgument(format!(
                    "target D = {} must be a multiple of the token dimension {} and the source non-empty",
                    self.dim,
                    source.dim()
                )))
            }
            Distribution::SiftLike { clusters: 0 } => Err(Error::InvalidArgument("SIFT-like data needs clusters".into())),
            _ => Ok(()),
        }
    }
}

/// Share of total variance left to isotropic noise in low-rank data.
const LOW_RANK_NOISE_SHARE: f64 = 0.02;

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let (n, dim) = (spec.n, spec.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let data = match &spec.distribution {
        Distribution::IsotropicGaussian => (0..n * dim).map(|_| rng.sample(StandardNormal)).collect(),
        Distribution::LowRank { rank } => low_rank(n, dim, *rank, spec.seed, &mut rng)?,
        Distribution::ConcatTokens { source } => {
            let tokens = dim / source.dim();
            let mut data = Vec::with_capacity(n * dim);
            for _ in 0..n * tokens {
                data.extend_from_slice(source.row(rng.gen_range(0..source.len())));
            }
            data
        }
        Distribution::SiftLike { clusters } => sift_like(n, dim, *clusters, spec.seed, &mut rng)?,
    };
    Dataset::new(dim, data)
}

fn low_rank(n: usize, dim: usize, rank: usize, seed: u64, rng: &mut ChaCha8Rng) -> Result<Vec<f32>> {
    let basis = random_orthogonal(dim, seed ^ 0x5eed)?;
    let basis = basis.matrix();
    // Component standard deviations decay gently from 1 to about 0.3.
    let scales: Vec<f32> = (0..rank).map(|i| 1.0 / (1.0 + 2.0 * i as f32 / rank as f32)).collect();
    let signal: f64 = scales.iter().map(|&s| (s as f64).powi(2)).sum();
    let noise = ((LOW_RANK_NOISE_SHARE / (1.0 - LOW_RANK_NOISE_SHARE)) * signal / dim as f64).sqrt() as f32;
    let mut data = vec![0.0f32; n * dim];
    let mut z = vec![0.0f32; rank];
    for row in data.chunks_exact_mut(dim) {
        for (zi, &s) in z.iter_mut().zip(&scales) {
            *zi = s * rng.sample::<f32, _>(StandardNormal);
        }
        for (j, x) in row.iter_mut().enumerate() {
            // Columns of the orthogonal matrix span the signal directions.
            let mut acc = 0.0f32;
            for (i, &zi) in z.iter().enumerate() {
                acc += basis[j * dim + i] * zi;
            }
            *x = acc + noise * rng.sample::<f32, _>(StandardNormal);
        }
    }
    Ok(data)
}

/// Per-coordinate standard deviation SIFT-like data is scaled to before
/// rounding, and the mean it is shifted to.
const SIFT_COORD_STD: f64 = 24.0;
const SIFT_COORD_MEAN: f32 = 32.0;
/// Share of the variance carried by cluster centers rather than spread.
const SIFT_BETWEEN_SHARE: f64 = 0.5;

/// Mixture of overlapping clusters in a rotated basis whose spectrum decays as
/// `1/(1+j)`, shifted positive, rounded and clamped to bytes.
fn sift_like(n: usize, dim: usize, clusters: usize, seed: u64, rng: &mut ChaCha8Rng) -> Result<Vec<f32>> {
    let basis = random_orthogonal(dim, seed ^ 0x51f7)?;
    let basis = basis.matrix();
    let raw: Vec<f64> = (0..dim).map(|j| 1.0 / (1.0 + j as f64)).collect();
    let norm = SIFT_COORD_STD.powi(2) * dim as f64 / raw.iter().sum::<f64>();
    let between: Vec<f32> = raw.iter().map(|l| (l * norm * SIFT_BETWEEN_SHARE).sqrt() as f32).collect();
    let within: Vec<f32> = raw.iter().map(|l| (l * norm * (1.0 - SIFT_BETWEEN_SHARE)).sqrt() as f32).collect();
    let centers: Vec<f32> =
        (0..clusters).flat_map(|_| between.iter().map(|&s| s * rng.sample::<f32, _>(StandardNormal)).collect::<Vec<_>>()).collect();
    let mut ids: Vec<usize> = (0..n).map(|i| i % clusters).collect();
    ids.shuffle(rng);
    let mut data = vec![0.0f32; n * dim];
    let mut z = vec![0.0f32; dim];
    for (row, c) in data.chunks_exact_mut(dim).zip(ids) {
        let center = &centers[c * dim..(c + 1) * dim];
        for ((zi, &m), &s) in z.iter_mut().zip(center).zip(&within) {
            *zi = m + s * rng.sample::<f32, _>(StandardNormal);
        }
        for (j, x) in row.iter_mut().enumerate() {
            let acc: f32 = basis[j * dim..(j + 1) * dim].iter().zip(&z).map(|(a, b)| a * b).sum();
            *x = (SIFT_COORD_MEAN + acc).round().clamp(0.0, 255.0);
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::fit_pca;
    use crate::vector::{brute_force_knn, tie_aware_recall, Metric};

    fn record(d: i32, payload: &[[u8; 4]]) -> Vec<u8> {
        let mut v = d.to_le_bytes().to_vec();
        for w in payload {
            v.extend_from_slice(w);
        }
        v
    }

    #[test]
    fn hand_built_fvecs() {
        let mut bytes = record(2, &[1.5f32.to_le_bytes(), (-2.0f32).to_le_bytes()]);
        bytes.extend(record(2, &[0.0f32.to_le_bytes(), 3.25f32.to_le_bytes()]));
        let ds = parse_fvecs(&bytes).unwrap();
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.row(0), &[1.5, -2.0]);
        assert_eq!(ds.row(1), &[0.0, 3.25]);
        assert_eq!(fvecs_bytes(&ds), bytes);
    }

    #[test]
    fn framing_errors_name_the_record() {
        let mut bytes = record(2, &[1f32.to_le_bytes(), 2f32.to_le_bytes()]);
        bytes.extend(record(3, &[1f32.to_le_bytes(); 3]));
        let msg = parse_fvecs(&bytes).unwrap_err().to_string();
        assert!(msg.contains("record 1"), "{msg}");
        let good = record(2, &[1f32.to_le_bytes(), 2f32.to_le_bytes()]);
        let msg = parse_fvecs(&good[..good.len() - 1]).unwrap_err().to_string();
        assert!(msg.contains("record 0") && msg.contains("truncated"), "{msg}");
        let nan = record(2, &[1f32.to_le_bytes(), f32::NAN.to_le_bytes()]);
        assert!(matches!(parse_fvecs(&nan), Err(Error::NonFinite { vector: 0, coord: 1 })));
        let inf = [good.clone(), record(2, &[f32::INFINITY.to_le_bytes(), 0f32.to_le_bytes()])].concat();
        assert!(matches!(parse_fvecs(&inf), Err(Error::NonFinite { vector: 1, coord: 0 })));
    }

    #[test]
    fn file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_synthetic(&SyntheticSpec::new(37, 5, Distribution::IsotropicGaussian, 4)).unwrap();
        let p = dir.path().join("x.fvecs");
        write_fvecs(&ds, &p).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 37 * (4 + 4 * 5));
        let back = read_fvecs(&p).unwrap();
        assert!(back.as_slice().iter().zip(ds.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let truth = vec![vec![3u32, 1, 4], vec![1, 5, 9]];
        let q = dir.path().join("t.ivecs");
        write_ivecs(&truth, &q).unwrap();
        assert_eq!(read_ivecs(&q).unwrap(), truth);
        fs::write(&q, b"").unwrap();
        assert!(read_ivecs(&q).unwrap().is_empty());
        assert!(matches!(read_fvecs(dir.path().join("nope")), Err(Error::MissingArtifact(_))));
    }

    #[test]
    fn ivecs_truth_matches_brute_force() {
        let ds = gen_synthetic(&SyntheticSpec::new(10, 3, Distribution::IsotropicGaussian, 8)).unwrap();
        let q = [0.1f32, -0.2, 0.3];
        let truth = brute_force_knn(&ds, &q, 4, Metric::Euclidean).unwrap();
        let parsed = parse_ivecs(&ivecs_bytes(&[truth.ids.clone()]).unwrap()).unwrap();
        // Independent oracle: sort (distance, id) pairs in f64.
        let mut oracle: Vec<(f64, u32)> = ds
            .rows()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(&q).map(|(a, b)| ((a - b) as f64).powi(2)).sum(), i as u32))
            .collect();
        oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let dists: Vec<f32> = oracle[..4].iter().map(|p| p.0 as f32).collect();
        let expected: Vec<u32> = oracle[..4].iter().map(|p| p.1).collect();
        assert_eq!(tie_aware_recall(&parsed[0], &dists, &expected, &dists, 1e-5).unwrap(), 1.0);
    }

    #[test]
    fn isotropic_covariance_is_identity() {
        let ds = gen_synthetic(&SyntheticSpec::new(10_000, 8, Distribution::IsotropicGaussian, 1)).unwrap();
        for j in 0..8 {
            let mean: f64 = ds.rows().map(|r| r[j] as f64).sum::<f64>() / 1e4;
            let var: f64 = ds.rows().map(|r| (r[j] as f64 - mean).powi(2)).sum::<f64>() / 1e4;
            assert!((var - 1.0).abs() < 0.1, "coord {j}: {var}");
        }
    }

    #[test]
    fn low_rank_concentrates_variance() {
        let ds = gen_synthetic(&SyntheticSpec::new(4000, 64, Distribution::LowRank { rank: 4 }, 2)).unwrap();
        let pca = fit_pca(&ds).unwrap();
        let p = pca.eigen_prefix();
        assert!(p[4] / p[64] >= 0.95, "{}", p[4] / p[64]);
        assert!(p[3] / p[64] < 0.95);
    }

    #[test]
    fn concat_tiles_source_rows() {
        let source = Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let spec = SyntheticSpec::new(50, 8, Distribution::ConcatTokens { source: source.clone() }, 3);
        let ds = gen_synthetic(&spec).unwrap();
        for row in ds.rows() {
            for tok in row.chunks_exact(2) {
                assert!(source.rows().any(|s| s == tok));
            }
        }
        let bad = SyntheticSpec::new(5, 7, Distribution::ConcatTokens { source }, 3);
        assert!(gen_synthetic(&bad).is_err());
    }

    #[test]
    fn seeded_and_validated() {
        for dist in [Distribution::IsotropicGaussian, Distribution::LowRank { rank: 3 }, Distribution::SiftLike { clusters: 4 }] {
            let a = gen_synthetic(&SyntheticSpec::new(100, 16, dist.clone(), 9)).unwrap();
            let b = gen_synthetic(&SyntheticSpec::new(100, 16, dist.clone(), 9)).unwrap();
            let c = gen_synthetic(&SyntheticSpec::new(100, 16, dist, 10)).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c);
        }
        assert!(gen_synthetic(&SyntheticSpec::new(10, 4, Distribution::LowRank { rank: 5 }, 0)).is_err());
        assert!(gen_synthetic(&SyntheticSpec::new(0, 4, Distribution::IsotropicGaussian, 0)).is_err());
    }

    #[test]
    fn sift_like_values_are_byte_integers() {
        let ds = gen_synthetic(&SyntheticSpec::new(500, 128, Distribution::SiftLike { clusters: 16 }, 5)).unwrap();
        assert!(ds.as_slice().iter().all(|&x| (0.0..=255.0).contains(&x) && x.fract() == 0.0));
        let pca = fit_pca(&ds).unwrap();
        assert!(pca.explained(32) > 0.5);
    }
}
