//! Offline rotations: PCA, random orthogonal projection, normalization, and
//! the inner-product bridge for unit-norm data.
//!
//! Both rotation artifacts are full `D x D` orthonormal matrices. They rotate
//! the space without reducing it, so scanning the first `d` coordinates of a
//! rotated vector is a prefix view for every `d` at once.

use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sidecar::{Sidecar, SidecarKind, SidecarReader, SidecarWriter};
use crate::vector::{dot, Dataset, NORMALIZED_TOLERANCE};

/// Vectors fitted on when the dataset is larger.
pub const PCA_SAMPLE_CAP: usize = 100_000;

const COVARIANCE_CHUNK: usize = 4096;

/// A square orthonormal map `x -> R (x - center)`.
pub trait Rotation {
    fn dim(&self) -> usize;
    /// `R` row-major; row `j` produces output coordinate `j`.
    fn rows(&self) -> &[f32];
    /// The vector subtracted before rotating when centering is requested.
    fn center(&self) -> Option<&[f32]>;

    /// Largest `|R Rᵀ - I|` entry, computed in `f64`.
    fn orthonormality_error(&self) -> f64 {
        let d = self.dim();
        let m = DMatrix::from_row_slice(d, d, self.rows()).map(|x| x as f64);
        let g = &m * m.transpose();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }
}

/// Principal axes of a sample: mean, loading matrix, and eigenvalue tables.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    mean: Vec<f32>,
    /// `W` row-major: `loading[i * D + j]` is coordinate `i` of direction `j`.
    loading: Vec<f32>,
    /// `Wᵀ` row-major, the form applied at query time.
    components: Vec<f32>,
    eigenvalues: Vec<f32>,
    eigen_prefix: Vec<f64>,
    sigma: Vec<f32>,
}

impl PcaModel {
    fn from_parts(mean: Vec<f32>, loading: Vec<f32>, eigenvalues: Vec<f32>) -> Self {
        let d = mean.len();
        let mut components = vec![0.0f32; d * d];
        for i in 0..d {
            for j in 0..d {
                components[j * d + i] = loading[i * d + j];
            }
        }
        let mut eigen_prefix = Vec::with_capacity(d + 1);
        eigen_prefix.push(0.0);
        let mut acc = 0.0f64;
        for &l in &eigenvalues {
            acc += l as f64;
            eigen_prefix.push(acc);
        }
        let sigma = eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
        Self { mean, loading, components, eigenvalues, eigen_prefix, sigma }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f32] {
        &self.mean
    }

    pub fn loading(&self) -> &[f32] {
        &self.loading
    }

    /// Non-increasing, clamped at zero.
    pub fn eigenvalues(&self) -> &[f32] {
        &self.eigenvalues
    }

    /// `eigen_prefix[d] = λ_1 + ... + λ_d`, with `eigen_prefix[0] = 0`.
    pub fn eigen_prefix(&self) -> &[f64] {
        &self.eigen_prefix
    }

    pub fn sigma(&self) -> &[f32] {
        &self.sigma
    }

    /// Fraction of total variance carried by the first `d` directions.
    pub fn explained(&self, d: usize) -> f64 {
        let total = self.eigen_prefix[self.dim()];
        if total <= 0.0 {
            1.0
        } else {
            self.eigen_prefix[d.min(self.dim())] / total
        }
    }
}

impl Rotation for PcaModel {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn rows(&self) -> &[f32] {
        &self.components
    }

    fn center(&self) -> Option<&[f32]> {
        Some(&self.mean)
    }
}

/// Random orthogonal matrix drawn from a seeded Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthoProjection {
    matrix: Vec<f32>,
    dim: usize,
    seed: u64,
}

impl OrthoProjection {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }
}

impl Rotation for OrthoProjection {
    fn dim(&self) -> usize {
        self.dim
    }

    fn rows(&self) -> &[f32] {
        &self.matrix
    }

    fn center(&self) -> Option<&[f32]> {
        None
    }
}

/// Fits PCA by eigendecomposition of the sample covariance.
pub fn fit_pca(sample: &Dataset) -> Result<PcaModel> {
    let (n, d) = (sample.len(), sample.dim());
    if n < 2 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 2 vectors, got {n}")));
    }
    let mut mean = vec![0.0f64; d];
    for row in sample.rows() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut start = 0;
    while start < n {
        let end = (start + COVARIANCE_CHUNK).min(n);
        let mut block = Vec::with_capacity((end - start) * d);
        for i in start..end {
            block.extend(sample.row(i).iter().zip(&mean).map(|(&x, &m)| x as f64 - m));
        }
        // Column-major with one vector per column.
        let x = DMatrix::from_column_slice(d, end - start, &block);
        cov.gemm(1.0, &x, &x.transpose(), 1.0);
        start = end;
    }
    cov /= (n - 1) as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut loading = vec![0.0f32; d * d];
    let mut eigenvalues = Vec::with_capacity(d);
    for (j, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        // Sign convention: the largest-magnitude coordinate is positive.
        let pivot = col.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            loading[i * d + j] = (sign * col[i]) as f32;
        }
        eigenvalues.push(eig.eigenvalues[src].max(0.0) as f32);
    }
    // Keep the ordering invariant exact after the f32 cast.
    for j in 1..d {
        if eigenvalues[j] > eigenvalues[j - 1] {
            eigenvalues[j] = eigenvalues[j - 1];
        }
    }
    Ok(PcaModel::from_parts(mean.into_iter().map(|m| m as f32).collect(), loading, eigenvalues))
}

/// Fits on a seeded uniform sample of at most `cap` vectors.
pub fn fit_pca_sampled(ds: &Dataset, cap: usize, seed: u64) -> Result<PcaModel> {
    if ds.len() <= cap {
        return fit_pca(ds);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u32> = sample(&mut rng, ds.len(), cap).into_iter().map(|i| i as u32).collect();
    ids.sort_unstable();
    fit_pca(&ds.subset(&ids)?)
}

/// Haar-distributed orthogonal matrix from the QR factorization of a seeded
/// Gaussian matrix.
pub fn random_orthogonal(dim: usize, seed: u64) -> Result<OrthoProjection> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    // Rows of P are the columns of Q.
    let mut matrix = vec![0.0f32; dim * dim];
    for j in 0..dim {
        for i in 0..dim {
            matrix[j * dim + i] = q[(i, j)] as f32;
        }
    }
    Ok(OrthoProjection { matrix, dim, seed })
}

/// Writes `R (v - center)` into `out` (centering only when asked and available).
pub fn rotate_into<R: Rotation + ?Sized>(rot: &R, v: &[f32], center: bool, scratch: &mut Vec<f32>, out: &mut [f32]) {
    let d = rot.dim();
    let input: &[f32] = match (center, rot.center()) {
        (true, Some(mu)) => {
            scratch.clear();
            scratch.extend(v.iter().zip(mu).map(|(&x, &m)| x - m));
            scratch
        }
        _ => v,
    };
    for (o, row) in out.iter_mut().zip(rot.rows().chunks_exact(d)) {
        *o = dot(row, input);
    }
}

/// `Wᵀ(v - μ)` for PCA (with `center`), `P v` for a projection.
pub fn apply_rotation<R: Rotation + ?Sized>(rot: &R, v: &[f32], center: bool) -> Result<Vec<f32>> {
    if v.len() != rot.dim() {
        return Err(Error::DimensionMismatch { expected: rot.dim(), found: v.len() });
    }
    let mut out = vec![0.0f32; v.len()];
    rotate_into(rot, v, center, &mut Vec::new(), &mut out);
    Ok(out)
}

/// Rotates every row of a dataset.
pub fn rotate_dataset<R: Rotation + ?Sized>(rot: &R, ds: &Dataset, center: bool) -> Result<Dataset> {
    if ds.dim() != rot.dim() {
        return Err(Error::DimensionMismatch { expected: rot.dim(), found: ds.dim() });
    }
    let d = ds.dim();
    let mut data = vec![0.0f32; ds.len() * d];
    let mut scratch = Vec::with_capacity(d);
    for (row, out) in ds.rows().zip(data.chunks_exact_mut(d)) {
        rotate_into(rot, row, center, &mut scratch, out);
    }
    Ok(Dataset::from_parts_unchecked(d, data, false))
}

/// Scales every vector to unit L2 norm.
pub fn normalize_dataset(ds: &Dataset) -> Result<Dataset> {
    let d = ds.dim();
    let mut data = Vec::with_capacity(ds.len() * d);
    for (id, row) in ds.rows().enumerate() {
        let norm = (row.iter().map(|&x| x as f64 * x as f64).sum::<f64>()).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroVector { id });
        }
        data.extend(row.iter().map(|&x| (x as f64 / norm) as f32));
    }
    let out = Dataset::new(d, data)?;
    debug_assert!(out.is_normalized());
    Ok(out)
}

/// Inner product of two unit vectors from their squared Euclidean distance:
/// `<o, q> = 1 - sq_dis / 2`.
pub fn ip_from_sq_euclidean(sq_dis: f32) -> Result<f32> {
    if !(0.0..=4.0 + NORMALIZED_TOLERANCE).contains(&sq_dis) {
        return Err(Error::InvalidArgument(format!(
            "squared distance {sq_dis} outside [0, 4]; inputs are not unit vectors"
        )));
    }
    Ok(1.0 - 0.5 * sq_dis)
}

impl Sidecar for PcaModel {
    fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = SidecarWriter::new(w, SidecarKind::Pca, self.dim())?;
        w.f32s(&self.mean)?;
        w.f32s(&self.eigenvalues)?;
        w.f32s(&self.loading)?;
        w.finish()?;
        Ok(())
    }

    fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = SidecarReader::new(r)?.expect(SidecarKind::Pca)?;
        let d = r.dim;
        let mean = r.f32s(d)?;
        let eigenvalues = r.f32s(d)?;
        let loading = r.f32s(d * d)?;
        r.finish()?;
        Ok(PcaModel::from_parts(mean, loading, eigenvalues))
    }
}

impl Sidecar for OrthoProjection {
    fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = SidecarWriter::new(w, SidecarKind::Ortho, self.dim)?;
        w.u64(self.seed)?;
        w.f32s(&self.matrix)?;
        w.finish()?;
        Ok(())
    }

    fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = SidecarReader::new(r)?.expect(SidecarKind::Ortho)?;
        let dim = r.dim;
        let seed = r.u64()?;
        let matrix = r.f32s(dim * dim)?;
        r.finish()?;
        Ok(OrthoProjection { matrix, dim, seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::sq_dist;

    fn gaussian(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        Dataset::new(d, data).unwrap()
    }

    fn rel(a: f32, b: f32) -> f32 {
        (a - b).abs() / b.abs().max(1e-12)
    }

    #[test]
    fn rank_one_line() {
        let rows: Vec<Vec<f32>> = (0..50).map(|i| vec![i as f32 * 0.1, i as f32 * 0.1]).collect();
        let pca = fit_pca(&Dataset::from_rows(&rows).unwrap()).unwrap();
        let h = std::f32::consts::FRAC_1_SQRT_2;
        let (w0, w1) = (pca.loading()[0], pca.loading()[2]);
        assert!((w0.abs() - h).abs() < 1e-5 && (w1.abs() - h).abs() < 1e-5);
        assert_eq!(w0.signum(), w1.signum());
        assert!(pca.eigenvalues()[1] <= 1e-6);
    }

    #[test]
    fn isotropic_eigenvalues_are_flat() {
        let pca = fit_pca(&gaussian(10_000, 8, 1)).unwrap();
        let ev = pca.eigenvalues();
        assert!(ev[0] / ev[7] < 1.1 / 0.9, "{ev:?}");
        for l in ev {
            assert!((l - 1.0).abs() < 0.1, "{ev:?}");
        }
    }

    #[test]
    fn model_invariants_and_reconstruction() {
        let ds = gaussian(500, 24, 2);
        let pca = fit_pca(&ds).unwrap();
        assert!(pca.orthonormality_error() <= 1e-4);
        assert!(pca.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        let total: f64 = pca.eigenvalues().iter().map(|&l| l as f64).sum();
        assert!((pca.eigen_prefix()[24] - total).abs() <= 1e-4 * total);
        // Rotate then un-rotate with W.
        for v in ds.rows().take(20) {
            let r = apply_rotation(&pca, v, true).unwrap();
            for i in 0..24 {
                let back: f32 =
                    (0..24).map(|j| pca.loading()[i * 24 + j] * r[j]).sum::<f32>() + pca.mean()[i];
                assert!((back - v[i]).abs() <= 1e-4);
            }
        }
        let m = apply_rotation(&pca, pca.mean(), true).unwrap();
        assert!(m.iter().all(|x| x.abs() <= 1e-5));
    }

    #[test]
    fn pairwise_distances_survive_rotation() {
        let ds = gaussian(200, 32, 3);
        let pca = fit_pca(&ds).unwrap();
        let ortho = random_orthogonal(32, 9).unwrap();
        for i in 0..100 {
            let (a, b) = (ds.row(2 * i), ds.row(2 * i + 1));
            let exact = sq_dist(a, b);
            let pa = apply_rotation(&pca, a, true).unwrap();
            let pb = apply_rotation(&pca, b, true).unwrap();
            assert!(rel(sq_dist(&pa, &pb), exact) <= 1e-3);
            let oa = apply_rotation(&ortho, a, false).unwrap();
            let ob = apply_rotation(&ortho, b, false).unwrap();
            assert!(rel(sq_dist(&oa, &ob), exact) <= 1e-3);
            let n = sq_dist(a, pca.mean());
            assert!(rel(sq_dist(&pa, &vec![0.0; 32]), n) <= 1e-4);
        }
    }

    #[test]
    fn identity_rotation_is_a_no_op() {
        let d = 5;
        let mut loading = vec![0.0f32; d * d];
        (0..d).for_each(|i| loading[i * d + i] = 1.0);
        let pca = PcaModel::from_parts(vec![0.0; d], loading, vec![1.0; d]);
        let v = [1.0f32, -2.0, 3.5, 0.0, 9.0];
        assert_eq!(apply_rotation(&pca, &v, true).unwrap(), v.to_vec());
        assert!(apply_rotation(&pca, &v[..3], true).is_err());
    }

    #[test]
    fn random_orthogonal_properties() {
        let one = random_orthogonal(1, 4).unwrap();
        assert_eq!(one.matrix()[0].abs(), 1.0);
        let a = random_orthogonal(32, 77).unwrap();
        let b = random_orthogonal(32, 77).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_orthogonal(32, 78).unwrap());
        assert!(a.orthonormality_error() <= 1e-4);
        assert!(random_orthogonal(0, 1).is_err());
    }

    #[test]
    fn pca_needs_two_vectors() {
        assert!(fit_pca(&gaussian(1, 4, 0)).is_err());
    }

    #[test]
    fn normalization() {
        let ds = Dataset::from_rows(&[vec![3.0f32, 4.0], vec![0.6, 0.8]]).unwrap();
        let n = normalize_dataset(&ds).unwrap();
        assert!(n.is_normalized());
        assert!((n.row(0)[0] - 0.6).abs() < 1e-7 && (n.row(0)[1] - 0.8).abs() < 1e-7);
        assert!((n.row(1)[0] - 0.6).abs() < 1e-6);
        let zero = Dataset::from_rows(&[vec![1.0f32, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(normalize_dataset(&zero), Err(Error::ZeroVector { id: 1 })));
        let batch = normalize_dataset(&gaussian(300, 17, 5)).unwrap();
        for v in batch.rows() {
            let norm = dot(v, v).sqrt();
            assert!((norm - 1.0).abs() <= 1e-5);
        }
    }

    #[test]
    fn inner_product_bridge() {
        assert_eq!(ip_from_sq_euclidean(0.0).unwrap(), 1.0);
        assert_eq!(ip_from_sq_euclidean(2.0).unwrap(), 0.0);
        assert!(ip_from_sq_euclidean(4.5).is_err());
        assert!(ip_from_sq_euclidean(-0.1).is_err());
        let ds = normalize_dataset(&gaussian(2000, 16, 8)).unwrap();
        for i in 0..1000 {
            let (a, b) = (ds.row(2 * i), ds.row(2 * i + 1));
            let direct: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
            let bridged = ip_from_sq_euclidean(sq_dist(a, b)).unwrap() as f64;
            assert!((bridged - direct).abs() <= 1e-5);
        }
    }

    #[test]
    fn sidecars_round_trip_bytes() {
        let pca = fit_pca(&gaussian(100, 6, 1)).unwrap();
        let bytes = pca.to_bytes().unwrap();
        let back = PcaModel::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, pca);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let ortho = random_orthogonal(6, 3).unwrap();
        let bytes = ortho.to_bytes().unwrap();
        assert_eq!(OrthoProjection::read_from(bytes.as_slice()).unwrap().to_bytes().unwrap(), bytes);
        assert!(OrthoProjection::read_from(pca.to_bytes().unwrap().as_slice()).is_err());
    }

    #[test]
    fn sampled_fit_uses_whole_set_when_small() {
        let ds = gaussian(300, 4, 12);
        assert_eq!(fit_pca_sampled(&ds, 1000, 1).unwrap(), fit_pca(&ds).unwrap());
        let sub = fit_pca_sampled(&ds, 100, 1).unwrap();
        assert_eq!(sub.dim(), 4);
    }
}
