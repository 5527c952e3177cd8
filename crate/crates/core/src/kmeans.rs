//! Lloyd's k-means with k-means++ seeding, shared by the IVF coarse quantizer
//! and the PQ sub-space codebooks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vector::sq_dist;

pub const DEFAULT_ITERATIONS: usize = 25;

const ASSIGN_CHUNK: usize = 4096;
pub(crate) const SMALL_DIM: usize = crate::vector::LANES;

/// Trains `k` centroids over row-major `data`. Returns them row-major.
///
/// Empty clusters are re-seeded from the point farthest from its centroid.
pub fn train(data: &[f32], dim: usize, k: usize, iterations: usize, seed: u64) -> Result<Vec<f32>> {
    let n = data.len() / dim;
    if k == 0 || n < k {
        return Err(Error::InvalidArgument(format!("k-means with k = {k} needs at least k points, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(data, dim, k, &mut rng);
    let mut labels = vec![0u32; n];
    let mut dists = vec![0.0f32; n];
    for _ in 0..iterations {
        assign_fast(data, dim, &centroids, &mut labels, &mut dists);
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            let c = c as usize;
            counts[c] += 1;
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(&data[i * dim..(i + 1) * dim]) {
                *s += x as f64;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = dists
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                centroids[c * dim..(c + 1) * dim].copy_from_slice(&data[far * dim..(far + 1) * dim]);
                dists[far] = 0.0;
            } else {
                for (dst, &s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *dst = (s / counts[c] as f64) as f32;
                }
            }
        }
    }
    Ok(centroids)
}

fn plus_plus(data: &[f32], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(row(first));
    let mut min_d: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first)) as f64).collect();
    for _ in 1..k {
        let total: f64 = min_d.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in min_d.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // Rounding can walk off the end onto an already-covered point.
            if min_d[chosen] == 0.0 {
                chosen = min_d.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let c = row(pick).to_vec();
        for (i, m) in min_d.iter_mut().enumerate() {
            let d = sq_dist(row(i), &c) as f64;
            if d < *m {
                *m = d;
            }
        }
        centroids.extend_from_slice(&c);
    }
    centroids
}

/// Approximate nearest-centroid assignment through `‖x‖² - 2 x·c + ‖c‖²`.
fn assign_fast(data: &[f32], dim: usize, centroids: &[f32], labels: &mut [u32], dists: &mut [f32]) {
    let n = data.len() / dim;
    let k = centroids.len() / dim;
    if dim <= SMALL_DIM {
        return assign_small(data, dim, centroids, labels, dists);
    }
    let c = DMatrix::from_row_slice(k, dim, centroids);
    let c_norms: Vec<f32> = centroids.chunks_exact(dim).map(|r| r.iter().map(|x| x * x).sum()).collect();
    let mut start = 0;
    while start < n {
        let end = (start + ASSIGN_CHUNK).min(n);
        // Row-major points read as columns; each column of `g` is one point's products.
        let xt = DMatrix::from_column_slice(dim, end - start, &data[start * dim..end * dim]);
        let g = &c * &xt;
        for r in 0..end - start {
            let xi = &data[(start + r) * dim..(start + r + 1) * dim];
            let x_norm: f32 = xi.iter().map(|v| v * v).sum();
            let mut best = (f32::INFINITY, 0u32);
            for (j, (&p, &cn)) in g.column(r).iter().zip(&c_norms).enumerate() {
                let d = x_norm - 2.0 * p + cn;
                if d < best.0 {
                    best = (d, j as u32);
                }
            }
            labels[start + r] = best.1;
            dists[start + r] = best.0.max(0.0);
        }
        start = end;
    }
}

/// Centroids stored dimension-major so one point's distances to all of them
/// run as contiguous passes. Sums match [`sq_dist`] bit for bit up to
/// `SMALL_DIM` dimensions.
pub(crate) struct Transposed {
    ct: Vec<f32>,
    k: usize,
    dim: usize,
}

impl Transposed {
    pub(crate) fn new(centroids: &[f32], dim: usize) -> Self {
        let k = centroids.len() / dim;
        let mut ct = vec![0.0f32; dim * k];
        for (j, c) in centroids.chunks_exact(dim).enumerate() {
            for (t, &v) in c.iter().enumerate() {
                ct[t * k + j] = v;
            }
        }
        Self { ct, k, dim }
    }

    /// Same result as [`nearest`] for `dim <= SMALL_DIM`; `buf` holds `k` floats.
    #[inline]
    pub(crate) fn nearest(&self, x: &[f32], buf: &mut [f32]) -> (u32, f32) {
        debug_assert!(x.len() == self.dim && buf.len() == self.k);
        buf.iter_mut().for_each(|b| *b = 0.0);
        for (t, &xt) in x.iter().enumerate() {
            for (b, &c) in buf.iter_mut().zip(&self.ct[t * self.k..(t + 1) * self.k]) {
                let d = xt - c;
                *b += d * d;
            }
        }
        let min = buf.iter().fold(f32::INFINITY, |a, &b| a.min(b));
        (buf.iter().position(|&d| d == min).unwrap_or(0) as u32, min)
    }

    pub(crate) fn k(&self) -> usize {
        self.k
    }
}

fn assign_small(data: &[f32], dim: usize, centroids: &[f32], labels: &mut [u32], dists: &mut [f32]) {
    let t = Transposed::new(centroids, dim);
    let mut buf = vec![0.0f32; t.k()];
    for (i, x) in data.chunks_exact(dim).enumerate() {
        (labels[i], dists[i]) = t.nearest(x, &mut buf);
    }
}

/// Exact nearest centroid per point with the crate's distance kernel; ties go
/// to the lowest centroid index.
pub fn assign_exact(data: &[f32], dim: usize, centroids: &[f32]) -> (Vec<u32>, Vec<f32>) {
    data.chunks_exact(dim).map(|x| nearest(x, centroids, dim)).unzip()
}

pub fn nearest(x: &[f32], centroids: &[f32], dim: usize) -> (u32, f32) {
    let mut best = (0u32, f32::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j as u32, d);
        }
    }
    best
}
