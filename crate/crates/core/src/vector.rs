//! Dense vector storage, exact distance kernels, the brute-force oracle, and recall.
//!
//! All distances inside the crate are *squared* Euclidean. The kernels
//! accumulate in `f32` over fixed 16-wide lanes and fold the lanes into a
//! running total every 256 dimensions. Fold points are aligned to absolute
//! dimension indices, so a scan that stops and resumes at arbitrary depths
//! produces bitwise the same total as one uninterrupted scan.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub(crate) const LANES: usize = 16;
const FOLD_SPAN: usize = 256;

/// Tolerance on the unit norm for a dataset to count as normalized.
pub const NORMALIZED_TOLERANCE: f32 = 1e-4;

/// N vectors of dimensionality D stored row-major in one allocation.
///
/// Ids are row indices `0..N`. Constructors reject non-finite coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl Dataset {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if data.is_empty() {
            return Err(Error::InvalidArgument("dataset must hold at least one vector".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "buffer of {} floats is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        check_finite(&data, dim, 0)?;
        let normalized = all_unit_norm(&data, dim, NORMALIZED_TOLERANCE);
        Ok(Self { dim, data, normalized })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::InvalidArgument("dataset must hold at least one vector".into()))?;
        let mut data = Vec::with_capacity(dim * rows.len());
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    /// An empty, growable store. Only index insertion paths start from one.
    pub fn empty(dim: usize) -> Self {
        Self { dim: dim.max(1), data: Vec::new(), normalized: true }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, id: usize) -> &[f32] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// True when every vector has unit L2 norm within [`NORMALIZED_TOLERANCE`].
    pub fn is_normalized(&self) -> bool {
        self.normalized && !self.data.is_empty()
    }

    /// Appends a vector and returns its id.
    pub fn push(&mut self, v: &[f32]) -> Result<u32> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: v.len() });
        }
        let id = self.len();
        check_finite(v, self.dim, id)?;
        if self.normalized {
            self.normalized = all_unit_norm(v, self.dim, NORMALIZED_TOLERANCE);
        }
        self.data.extend_from_slice(v);
        Ok(id as u32)
    }

    /// Copies the rows named by `ids`, in that order.
    pub fn subset(&self, ids: &[u32]) -> Result<Dataset> {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            let id = id as usize;
            if id >= self.len() {
                return Err(Error::OutOfRange(format!("id {id} >= {}", self.len())));
            }
            data.extend_from_slice(self.row(id));
        }
        Dataset::new(self.dim, data)
    }

    /// The first `n` rows.
    pub fn prefix(&self, n: usize) -> Result<Dataset> {
        if n == 0 || n > self.len() {
            return Err(Error::OutOfRange(format!("prefix of {n} rows from {}", self.len())));
        }
        Dataset::new(self.dim, self.data[..n * self.dim].to_vec())
    }

    /// SHA-256 over the dimension and raw little-endian payload, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for x in &self.data {
            h.update(x.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub(crate) fn from_parts_unchecked(dim: usize, data: Vec<f32>, normalized: bool) -> Self {
        Self { dim, data, normalized }
    }
}

fn check_finite(data: &[f32], dim: usize, first_id: usize) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(pos) => Err(Error::NonFinite { vector: first_id + pos / dim, coord: pos % dim }),
        None => Ok(()),
    }
}

fn all_unit_norm(data: &[f32], dim: usize, tol: f32) -> bool {
    data.chunks_exact(dim).all(|v| (dot(v, v).sqrt() - 1.0).abs() <= tol)
}

/// Similarity measure used for ground truth and brute-force search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    Euclidean,
    /// Ranked by `-<o, q>`; requires normalized data.
    InnerProduct,
    /// Ranked by `1 - cos(o, q)`; requires normalized data.
    Cosine,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::InnerProduct => "inner_product",
            Metric::Cosine => "cosine",
        }
    }

    pub fn check_admissible(self, ds: &Dataset) -> Result<()> {
        match self {
            Metric::Euclidean => Ok(()),
            _ if ds.is_normalized() => Ok(()),
            _ => Err(Error::MetricNotAdmissible(self.name())),
        }
    }
}

/// Resumable squared-difference accumulator.
///
/// Lane `i % 16` receives dimension `i`; the lanes fold into `total` whenever
/// an absolute multiple of 256 is crossed. [`ScanAccumulator::value`] does not
/// mutate, so probing the running partial at any depth leaves the final sum
/// unchanged.
#[derive(Clone, Debug)]
pub struct ScanAccumulator {
    lanes: [f32; LANES],
    total: f32,
    pos: usize,
}

impl ScanAccumulator {
    #[inline]
    pub fn new(start: usize) -> Self {
        Self { lanes: [0.0; LANES], total: 0.0, pos: start }
    }

    /// Dimensions consumed so far (absolute index of the next one).
    #[inline]
    pub fn position(&self) -> usize {
        self.pos
    }

    /// Scans `a[pos..to]` against `b[pos..to]`.
    #[inline]
    pub fn advance(&mut self, a: &[f32], b: &[f32], to: usize) {
        self.advance_with(a, b, to, |x, y| {
            let d = x - y;
            d * d
        });
    }

    /// Same lane and fold discipline for products, used for cross terms.
    #[inline]
    pub fn advance_dot(&mut self, a: &[f32], b: &[f32], to: usize) {
        self.advance_with(a, b, to, |x, y| x * y);
    }

    #[inline(always)]
    fn advance_with(&mut self, a: &[f32], b: &[f32], to: usize, term: impl Fn(f32, f32) -> f32) {
        debug_assert!(to <= a.len() && to <= b.len());
        while self.pos < to {
            let fold_at = (self.pos / FOLD_SPAN + 1) * FOLD_SPAN;
            let end = to.min(fold_at);
            let mut i = self.pos;
            while i < end && i % LANES != 0 {
                self.lanes[i % LANES] += term(a[i], b[i]);
                i += 1;
            }
            let body = (end - i) / LANES * LANES;
            for (ca, cb) in a[i..i + body].chunks_exact(LANES).zip(b[i..i + body].chunks_exact(LANES)) {
                for l in 0..LANES {
                    self.lanes[l] += term(ca[l], cb[l]);
                }
            }
            i += body;
            while i < end {
                self.lanes[i % LANES] += term(a[i], b[i]);
                i += 1;
            }
            self.pos = end;
            if end == fold_at {
                self.total += lane_sum(&self.lanes);
                self.lanes = [0.0; LANES];
            }
        }
    }

    /// Running sum over `[start, position)`.
    #[inline]
    pub fn value(&self) -> f32 {
        self.total + lane_sum(&self.lanes)
    }
}

#[inline]
fn lane_sum(lanes: &[f32; LANES]) -> f32 {
    let mut s = 0.0;
    for x in lanes {
        s += x;
    }
    s
}

/// Hints the first cache lines of `row` into L1 ahead of a random access.
#[inline(always)]
pub(crate) fn prefetch(row: &[f32]) {
    #[cfg(target_arch = "x86_64")]
    {
        use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
        for start in (0..row.len().min(PREFETCH_FLOATS)).step_by(16) {
            // SAFETY: SSE is baseline on x86_64 and a prefetch never faults.
            unsafe { _mm_prefetch::<_MM_HINT_T0>(row[start..].as_ptr().cast()) };
        }
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = row;
}

const PREFETCH_FLOATS: usize = 128;

/// Squared Euclidean distance; callers guarantee equal lengths.
#[inline]
pub fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = ScanAccumulator::new(0);
    acc.advance(a, b, a.len());
    acc.value()
}

/// Inner product with the same accumulation discipline as [`sq_dist`].
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = ScanAccumulator::new(0);
    acc.advance_dot(a, b, a.len());
    acc.value()
}

/// `Σ (a_i - b_i)^2`, checked.
pub fn squared_euclidean(a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    Ok(sq_dist(a, b))
}

/// `Σ_{i in [from, to)} (a_i - b_i)^2`.
pub fn partial_sq_dist(a: &[f32], b: &[f32], from: usize, to: usize) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    if from > to || to > a.len() {
        return Err(Error::OutOfRange(format!("range [{from}, {to}) over dimension {}", a.len())));
    }
    let mut acc = ScanAccumulator::new(from);
    acc.advance(a, b, to);
    Ok(acc.value())
}

/// Total order on `(distance, id)` used by every heap in the crate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Neighbor {
    pub dist: f32,
    pub id: u32,
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.id.cmp(&other.id))
    }
}

/// The k nearest ids with their distances, ascending by `(distance, id)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnnResult {
    pub ids: Vec<u32>,
    pub dists: Vec<f32>,
}

impl KnnResult {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub(crate) fn from_sorted(neighbors: Vec<Neighbor>) -> Self {
        let (ids, dists) = neighbors.into_iter().map(|n| (n.id, n.dist)).unzip();
        Self { ids, dists }
    }

    pub fn truncated(&self, k: usize) -> KnnResult {
        KnnResult { ids: self.ids[..k.min(self.len())].to_vec(), dists: self.dists[..k.min(self.len())].to_vec() }
    }
}

/// Metric-specific ranking distance for a single pair.
fn metric_distance(metric: Metric, o: &[f32], q: &[f32], q_norm: f32) -> f32 {
    match metric {
        Metric::Euclidean => sq_dist(o, q),
        Metric::InnerProduct => -dot(o, q),
        Metric::Cosine => 1.0 - dot(o, q) / q_norm,
    }
}

/// Exhaustive linear scan. Equal distances are ordered by ascending id.
pub fn brute_force_knn(ds: &Dataset, q: &[f32], k: usize, metric: Metric) -> Result<KnnResult> {
    if q.len() != ds.dim() {
        return Err(Error::DimensionMismatch { expected: ds.dim(), found: q.len() });
    }
    if k == 0 || k > ds.len() {
        return Err(Error::OutOfRange(format!("k = {k} with {} vectors", ds.len())));
    }
    metric.check_admissible(ds)?;
    let q_norm = dot(q, q).sqrt().max(f32::MIN_POSITIVE);
    let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(k + 1);
    for (id, o) in ds.rows().enumerate() {
        let n = Neighbor { dist: metric_distance(metric, o, q, q_norm), id: id as u32 };
        if heap.len() < k {
            heap.push(n);
        } else if n < *heap.peek().expect("heap holds k entries") {
            heap.pop();
            heap.push(n);
        }
    }
    Ok(KnnResult::from_sorted(heap.into_sorted_vec()))
}

/// Brute-force truth for a batch of queries, parallel across queries.
pub fn ground_truth(ds: &Dataset, queries: &Dataset, k: usize, metric: Metric) -> Result<Vec<KnnResult>> {
    (0..queries.len())
        .into_par_iter()
        .map(|i| brute_force_knn(ds, queries.row(i), k, metric))
        .collect()
}

/// `|ids(result) ∩ ids(truth)| / k`.
pub fn recall(result: &KnnResult, truth: &KnnResult, k: usize) -> Result<f64> {
    if result.len() != k || truth.len() != k {
        return Err(Error::InvalidArgument(format!(
            "recall@{k} needs {k} entries in both lists, got {} and {}",
            result.len(),
            truth.len()
        )));
    }
    let truth_ids: HashSet<u32> = truth.ids.iter().copied().collect();
    let hits = result.ids.iter().filter(|id| truth_ids.contains(id)).count();
    Ok(hits as f64 / k as f64)
}

/// Recall where an id outside the truth set still counts when its distance
/// equals an unmatched truth distance within `tol`.
///
/// Reference ground-truth files do not document their tie-breaking, so two
/// equidistant ids are interchangeable here.
pub fn tie_aware_recall(
    result_ids: &[u32],
    result_dists: &[f32],
    truth_ids: &[u32],
    truth_dists: &[f32],
    tol: f32,
) -> Result<f64> {
    let k = truth_ids.len();
    if result_ids.len() != k || result_dists.len() != k || truth_dists.len() != k || k == 0 {
        return Err(Error::InvalidArgument("tie-aware recall needs equal, non-empty lists".into()));
    }
    let truth_set: HashSet<u32> = truth_ids.iter().copied().collect();
    let result_set: HashSet<u32> = result_ids.iter().copied().collect();
    let mut hits = result_ids.iter().filter(|id| truth_set.contains(id)).count();
    let mut spare_result: Vec<f32> = result_ids
        .iter()
        .zip(result_dists)
        .filter(|(id, _)| !truth_set.contains(id))
        .map(|(_, &d)| d)
        .collect();
    let mut spare_truth: Vec<f32> = truth_ids
        .iter()
        .zip(truth_dists)
        .filter(|(id, _)| !result_set.contains(id))
        .map(|(_, &d)| d)
        .collect();
    spare_result.sort_by(f32::total_cmp);
    spare_truth.sort_by(f32::total_cmp);
    let (mut i, mut j) = (0, 0);
    while i < spare_result.len() && j < spare_truth.len() {
        let (a, b) = (spare_result[i], spare_truth[j]);
        if (a - b).abs() <= tol {
            hits += 1;
            i += 1;
            j += 1;
        } else if a < b {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(hits as f64 / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn identity_and_orthogonal_pair() {
        let a = [0.3f32, -1.2, 4.0];
        assert_eq!(squared_euclidean(&a, &a).unwrap(), 0.0);
        assert_eq!(squared_euclidean(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(matches!(squared_euclidean(&[1.0], &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        assert!(partial_sq_dist(&[1.0, 2.0], &[0.0, 0.0], 1, 3).is_err());
        assert!(partial_sq_dist(&[1.0, 2.0], &[0.0, 0.0], 2, 1).is_err());
    }

    #[test]
    fn matches_f64_resummation() {
        let rows = random_rows(2000, 64, 7);
        for pair in rows.chunks_exact(2) {
            let exact: f64 =
                pair[0].iter().zip(&pair[1]).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
            let got = squared_euclidean(&pair[0], &pair[1]).unwrap() as f64;
            assert!((got - exact).abs() <= 1e-4 * exact.max(1e-12), "{got} vs {exact}");
        }
    }

    #[test]
    fn long_vectors_stay_accurate() {
        let rows = random_rows(2, 12288, 3);
        let exact: f64 = rows[0].iter().zip(&rows[1]).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
        let got = sq_dist(&rows[0], &rows[1]) as f64;
        assert!((got - exact).abs() <= 1e-4 * exact);
    }

    #[test]
    fn empty_range_and_additivity() {
        let rows = random_rows(20, 37, 11);
        for p in rows.chunks_exact(2) {
            assert_eq!(partial_sq_dist(&p[0], &p[1], 5, 5).unwrap(), 0.0);
            let half = 37 / 2;
            let lo = partial_sq_dist(&p[0], &p[1], 0, half).unwrap();
            let hi = partial_sq_dist(&p[0], &p[1], half, 37).unwrap();
            let full = squared_euclidean(&p[0], &p[1]).unwrap();
            assert!((lo + hi - full).abs() <= 1e-5 * full);
            assert_eq!(partial_sq_dist(&p[0], &p[1], 0, 37).unwrap(), full);
        }
    }

    #[test]
    fn prefix_is_a_lower_bound() {
        // Six coordinates whose squared partial is 12^2 = 144, then ten more
        // that bring the total to 15^2 = 225.
        let o = [6.0f32, 6.0, 6.0, 6.0, 0.0, 0.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 0.0];
        let q = [0.0f32; 16];
        let prefix = partial_sq_dist(&o, &q, 0, 6).unwrap();
        assert_eq!(prefix, 144.0);
        assert_eq!(squared_euclidean(&o, &q).unwrap(), 225.0);
        assert!(prefix > 11.0 * 11.0);
    }

    #[test]
    fn resumed_scan_is_bitwise_stable() {
        let rows = random_rows(2, 1000, 5);
        let full = sq_dist(&rows[0], &rows[1]);
        for step in [1usize, 7, 16, 32, 100, 333] {
            let mut acc = ScanAccumulator::new(0);
            let mut d = 0;
            while d < 1000 {
                d = (d + step).min(1000);
                acc.advance(&rows[0], &rows[1], d);
                let _ = acc.value();
            }
            assert_eq!(acc.value().to_bits(), full.to_bits(), "step {step}");
        }
    }

    #[test]
    fn brute_force_trivial_cases() {
        let ds = Dataset::from_rows(&[vec![1.0f32, 2.0]]).unwrap();
        let r = brute_force_knn(&ds, &[0.0, 0.0], 1, Metric::Euclidean).unwrap();
        assert_eq!(r.ids, vec![0]);
        assert_eq!(r.dists, vec![5.0]);
        assert!(brute_force_knn(&ds, &[0.0, 0.0], 2, Metric::Euclidean).is_err());

        let rows = random_rows(50, 8, 1);
        let ds = Dataset::from_rows(&rows).unwrap();
        let r = brute_force_knn(&ds, &rows[17], 1, Metric::Euclidean).unwrap();
        assert_eq!(r.ids, vec![17]);
        assert_eq!(r.dists, vec![0.0]);
    }

    #[test]
    fn brute_force_matches_full_sort() {
        let rows = random_rows(201, 16, 2);
        let ds = Dataset::from_rows(&rows[..200]).unwrap();
        let q = &rows[200];
        let mut all: Vec<(f64, u32)> = rows[..200]
            .iter()
            .enumerate()
            .map(|(i, o)| (o.iter().zip(q).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum(), i as u32))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        let expect: HashSet<u32> = all[..10].iter().map(|x| x.1).collect();
        let got = brute_force_knn(&ds, q, 10, Metric::Euclidean).unwrap();
        assert_eq!(got.ids.iter().copied().collect::<HashSet<_>>(), expect);
        assert!(got.dists.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let ds = Dataset::from_rows(&[vec![1.0f32], vec![-1.0], vec![1.0], vec![5.0]]).unwrap();
        let r = brute_force_knn(&ds, &[0.0], 3, Metric::Euclidean).unwrap();
        assert_eq!(r.ids, vec![0, 1, 2]);
    }

    #[test]
    fn k_equals_n_returns_everything_sorted() {
        let rows = random_rows(30, 4, 9);
        let ds = Dataset::from_rows(&rows).unwrap();
        let r = brute_force_knn(&ds, &rows[0], 30, Metric::Euclidean).unwrap();
        let mut ids = r.ids.clone();
        ids.sort_unstable();
        assert_eq!(ids, (0..30).collect::<Vec<u32>>());
        assert!(r.dists.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn inner_product_requires_normalized_data() {
        let ds = Dataset::from_rows(&[vec![3.0f32, 4.0]]).unwrap();
        assert!(matches!(
            brute_force_knn(&ds, &[1.0, 0.0], 1, Metric::InnerProduct),
            Err(Error::MetricNotAdmissible(_))
        ));
        let unit = Dataset::from_rows(&[vec![0.6f32, 0.8]]).unwrap();
        assert!(unit.is_normalized());
        assert!(brute_force_knn(&unit, &[1.0, 0.0], 1, Metric::Cosine).is_ok());
    }

    #[test]
    fn recall_cases() {
        let truth = KnnResult { ids: (0..20).collect(), dists: vec![0.0; 20] };
        assert_eq!(recall(&truth, &truth, 20).unwrap(), 1.0);
        let disjoint = KnnResult { ids: (100..120).collect(), dists: vec![0.0; 20] };
        assert_eq!(recall(&disjoint, &truth, 20).unwrap(), 0.0);
        let partial = KnnResult { ids: (5..25).collect(), dists: vec![0.0; 20] };
        assert_eq!(recall(&partial, &truth, 20).unwrap(), 0.75);
        assert!(recall(&partial.truncated(10), &truth, 20).is_err());
    }

    #[test]
    fn tie_aware_recall_accepts_equidistant_swaps() {
        let r = tie_aware_recall(&[1, 2, 9], &[0.5, 1.0, 2.0], &[1, 2, 3], &[0.5, 1.0, 2.0], 1e-6).unwrap();
        assert_eq!(r, 1.0);
        let r = tie_aware_recall(&[1, 2, 9], &[0.5, 1.0, 2.5], &[1, 2, 3], &[0.5, 1.0, 2.0], 1e-6).unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_with_location() {
        let err = Dataset::new(2, vec![0.0, 1.0, f32::NAN, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { vector: 1, coord: 0 }));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn symmetric_and_monotone(v in proptest::collection::vec((-100.0f32..100.0, -100.0f32..100.0), 1..80)) {
                let (a, b): (Vec<f32>, Vec<f32>) = v.into_iter().unzip();
                prop_assert_eq!(sq_dist(&a, &b), sq_dist(&b, &a));
                let mut prev = 0.0f32;
                for to in 0..=a.len() {
                    let p = partial_sq_dist(&a, &b, 0, to).unwrap();
                    prop_assert!(p >= prev);
                    prev = p;
                }
            }

            #[test]
            fn recall_of_self_is_one(n in 1usize..40) {
                let r = KnnResult { ids: (0..n as u32).collect(), dists: vec![0.0; n] };
                prop_assert_eq!(recall(&r, &r, n).unwrap(), 1.0);
            }
        }
    }
}
