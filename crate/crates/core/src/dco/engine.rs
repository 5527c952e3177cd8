//! Strategy-bound comparators over shared vector stores.

use std::sync::{Arc, OnceLock};

use super::{
    ads_rejects, dade_rejects, ddcres_rejects, exact_outcome, fd_scan, hypothesis_scan, pd_scan, DcoOutcome,
    HypothesisParams, ScanSchedule, StrategyKind,
};
use crate::error::{Error, Result};
use crate::quantize::{LookupTable, PqCodebook, PqCodes};
use crate::train::{LinearModel, ModelSet};
use crate::transform::{rotate_dataset, rotate_into, OrthoProjection, PcaModel, Rotation};
use crate::vector::{sq_dist, Dataset, ScanAccumulator};

/// Relative margin a rotated partial must clear before PDScanning+ prunes.
/// Rotation rounding stays well below it, so pruned pairs are truly above.
const PD_PLUS_SLACK: f32 = 1e-3;

/// Preprocessing outputs a strategy may depend on.
#[derive(Clone, Debug, Default)]
pub struct Artifacts {
    pub pca: Option<Arc<PcaModel>>,
    pub ortho: Option<Arc<OrthoProjection>>,
    pub pq: Option<Arc<PqCodebook>>,
    pub models: Option<Arc<ModelSet>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DcoConfig {
    pub schedule: ScanSchedule,
    pub params: HypothesisParams,
}

impl DcoConfig {
    /// Defaults with the scan steps capped at `dim`.
    pub fn default_for(dim: usize) -> Self {
        Self { schedule: ScanSchedule::default().clamped(dim), params: HypothesisParams::default() }
    }
}

/// The raw dataset plus lazily built transformed copies, shared by every
/// strategy constructed from it.
#[derive(Debug)]
pub struct VectorSpaces {
    raw: Arc<Dataset>,
    artifacts: Artifacts,
    pca_store: OnceLock<Arc<Dataset>>,
    ortho_store: OnceLock<Arc<Dataset>>,
    pq_codes: OnceLock<Arc<PqCodes>>,
}

fn lazy<T>(cell: &OnceLock<Arc<T>>, build: impl FnOnce() -> Result<T>) -> Result<Arc<T>> {
    if let Some(v) = cell.get() {
        return Ok(v.clone());
    }
    let v = Arc::new(build()?);
    Ok(cell.get_or_init(|| v).clone())
}

impl VectorSpaces {
    pub fn new(raw: impl Into<Arc<Dataset>>, artifacts: Artifacts) -> Result<Self> {
        let raw = raw.into();
        let dim = raw.dim();
        let check = |what: &str, d: usize| {
            if d != dim {
                Err(Error::Config(format!("{what} has dimension {d}, dataset has {dim}")))
            } else {
                Ok(())
            }
        };
        if let Some(p) = &artifacts.pca {
            check("PCA model", p.dim())?;
        }
        if let Some(p) = &artifacts.ortho {
            check("projection", Rotation::dim(p.as_ref()))?;
        }
        if let Some(p) = &artifacts.pq {
            check("PQ codebook", p.dim())?;
        }
        Ok(Self {
            raw,
            artifacts,
            pca_store: OnceLock::new(),
            ortho_store: OnceLock::new(),
            pq_codes: OnceLock::new(),
        })
    }

    pub fn raw(&self) -> &Arc<Dataset> {
        &self.raw
    }

    pub fn dim(&self) -> usize {
        self.raw.dim()
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn artifacts(&self) -> &Artifacts {
        &self.artifacts
    }

    /// Replaces the trained models; cached stores survive.
    pub fn set_models(&mut self, models: Arc<ModelSet>) {
        self.artifacts.models = Some(models);
    }

    /// Centered PCA coordinates of every vector.
    pub fn pca_store(&self) -> Result<Arc<Dataset>> {
        let pca = self.artifacts.pca.as_ref().ok_or_else(|| Error::MissingArtifact("PCA model".into()))?;
        lazy(&self.pca_store, || rotate_dataset(pca.as_ref(), &self.raw, true))
    }

    pub fn ortho_store(&self) -> Result<Arc<Dataset>> {
        let p = self.artifacts.ortho.as_ref().ok_or_else(|| Error::MissingArtifact("orthogonal projection".into()))?;
        lazy(&self.ortho_store, || rotate_dataset(p.as_ref(), &self.raw, false))
    }

    pub fn pq_codes(&self) -> Result<Arc<PqCodes>> {
        let cb = self.artifacts.pq.as_ref().ok_or_else(|| Error::MissingArtifact("PQ codebook".into()))?;
        lazy(&self.pq_codes, || cb.encode_dataset(&self.raw))
    }

    /// The same spaces with rows reordered: row `i` of the result is row
    /// `order[i]` here. Already built stores are permuted instead of rebuilt.
    pub fn permuted(&self, order: &[u32]) -> Result<VectorSpaces> {
        let out = VectorSpaces::new(self.raw.subset(order)?, self.artifacts.clone())?;
        if let Some(s) = self.pca_store.get() {
            let _ = out.pca_store.set(Arc::new(permute_rows(s, order)));
        }
        if let Some(s) = self.ortho_store.get() {
            let _ = out.ortho_store.set(Arc::new(permute_rows(s, order)));
        }
        if let Some(codes) = self.pq_codes.get() {
            let mut c = self.artifacts.pq.as_ref().expect("codes imply a codebook").empty_codes();
            for &id in order {
                c.push(codes.get(id as usize));
            }
            let _ = out.pq_codes.set(Arc::new(c));
        }
        Ok(out)
    }

    /// Binds a strategy to these spaces.
    pub fn dco(&self, kind: StrategyKind, cfg: &DcoConfig) -> Result<Dco> {
        Dco::new(self, kind, cfg)
    }
}

fn permute_rows(ds: &Dataset, order: &[u32]) -> Dataset {
    let d = ds.dim();
    let mut data = Vec::with_capacity(order.len() * d);
    for &id in order {
        data.extend_from_slice(ds.row(id as usize));
    }
    Dataset::from_parts_unchecked(d, data, false)
}

#[derive(Clone, Debug)]
enum Rotator {
    Pca(Arc<PcaModel>),
    Ortho(Arc<OrthoProjection>),
}

impl Rotator {
    fn apply(&self, v: &[f32], out: &mut [f32]) {
        let mut scratch = Vec::with_capacity(v.len());
        match self {
            Rotator::Pca(p) => rotate_into(p.as_ref(), v, true, &mut scratch, out),
            Rotator::Ortho(p) => rotate_into(p.as_ref(), v, false, &mut scratch, out),
        }
    }
}

/// Per-query state: the query in each space plus strategy tables.
#[derive(Clone, Debug)]
pub struct QueryContext {
    pub(crate) raw: Vec<f32>,
    /// Query in the strategy's scan space; empty for raw-space strategies.
    pub(crate) scan: Vec<f32>,
    pub(crate) k: usize,
    /// `tail_var[d] = Σ_{i>=d} (q_i σ_i)²`, length `D + 1` (DDCres).
    pub(crate) tail_var: Vec<f32>,
    /// `√tail_var` and `‖q[d..]‖²` at each test depth (DDCres).
    pub(crate) tail_std: Vec<f32>,
    pub(crate) tail_norm: Vec<f32>,
    /// `Σλ / Σ_{<=d}λ`, length `D + 1` (DADE).
    pub(crate) scale: Arc<Vec<f32>>,
    pub(crate) lut: Option<LookupTable>,
    /// `(w_partial, w_tau, w_depth, bias)` of `M_{k,d}` per test depth.
    pub(crate) step_models: Vec<[f32; 4]>,
    pub(crate) opq_model: [f32; 3],
}

impl QueryContext {
    pub fn raw(&self) -> &[f32] {
        &self.raw
    }

    /// The query as the strategy scans it.
    pub fn scan(&self) -> &[f32] {
        if self.scan.is_empty() {
            &self.raw
        } else {
            &self.scan
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn tail_var(&self) -> &[f32] {
        &self.tail_var
    }

    pub fn scale(&self) -> &[f32] {
        &self.scale
    }

    pub fn lut(&self) -> Option<&LookupTable> {
        self.lut.as_ref()
    }
}

/// Counters accumulated over the comparisons of a query or a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DcoStats {
    pub invocations: u64,
    pub dims_scanned: u64,
    pub within: u64,
    pub above: u64,
    /// PQ table lookups.
    pub code_ops: u64,
}

impl DcoStats {
    #[inline]
    pub fn record(&mut self, outcome: &DcoOutcome, code_ops: u64) {
        self.invocations += 1;
        self.dims_scanned += outcome.dims_scanned() as u64;
        self.code_ops += code_ops;
        if outcome.is_within() {
            self.within += 1;
        } else {
            self.above += 1;
        }
    }

    pub fn merge(&mut self, other: &DcoStats) {
        self.invocations += other.invocations;
        self.dims_scanned += other.dims_scanned;
        self.within += other.within;
        self.above += other.above;
        self.code_ops += other.code_ops;
    }

    /// Scanned dimensions over `invocations · D`.
    pub fn scan_fraction(&self, dim: usize) -> f64 {
        if self.invocations == 0 {
            0.0
        } else {
            self.dims_scanned as f64 / (self.invocations as f64 * dim as f64)
        }
    }
}

/// What index search needs from a distance oracle.
pub trait Comparator {
    type Query;

    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    /// Raw coordinates of a stored vector.
    fn vector(&self, id: u32) -> &[f32];
    fn prepare(&self, q: &[f32], k: usize) -> Result<Self::Query>;
    /// Raw coordinates of a prepared query.
    fn query_vector<'a>(&self, ctx: &'a Self::Query) -> &'a [f32];
    /// The DCO: decide `dis(id, q) <= τ`.
    fn compare(&self, ctx: &Self::Query, id: u32, tau_sq: f32) -> DcoOutcome;
    /// Exact squared distance in the comparator's reporting space.
    fn distance(&self, ctx: &Self::Query, id: u32) -> f32;
    fn pair_distance(&self, a: u32, b: u32) -> f32;
    /// PQ lookups charged per comparison.
    fn code_ops(&self) -> u64 {
        0
    }
    /// Hint that `id` is compared next.
    fn prefetch(&self, _id: u32) {}
}

/// One strategy bound to a vector store.
#[derive(Clone, Debug)]
pub struct Dco {
    kind: StrategyKind,
    dim: usize,
    schedule: ScanSchedule,
    /// Scheduled depths strictly below `dim`.
    test_depths: Vec<usize>,
    params: HypothesisParams,
    raw: Arc<Dataset>,
    scan: Option<Arc<Dataset>>,
    rotator: Option<Rotator>,
    pca: Option<Arc<PcaModel>>,
    scale: Arc<Vec<f32>>,
    dade_eps: Vec<f32>,
    /// `‖o[d..]‖²` per vector per test depth (DDCres).
    tail_norms: Arc<Vec<f32>>,
    models: Option<Arc<ModelSet>>,
    pq: Option<Arc<PqCodebook>>,
    codes: Option<Arc<PqCodes>>,
}

impl Dco {
    pub fn new(spaces: &VectorSpaces, kind: StrategyKind, cfg: &DcoConfig) -> Result<Self> {
        let dim = spaces.dim();
        cfg.schedule.validate(dim)?;
        cfg.params.validate()?;
        let depths = cfg.schedule.depths(dim);
        let test_depths = depths[..depths.len() - 1].to_vec();
        let art = spaces.artifacts();

        let mut out = Dco {
            kind,
            dim,
            schedule: cfg.schedule,
            test_depths,
            params: cfg.params.clone(),
            raw: spaces.raw().clone(),
            scan: None,
            rotator: None,
            pca: None,
            scale: Arc::new(Vec::new()),
            dade_eps: Vec::new(),
            tail_norms: Arc::new(Vec::new()),
            models: None,
            pq: None,
            codes: None,
        };

        if kind.needs_pca() {
            let pca = art.pca.clone().ok_or_else(|| missing(kind, "PCA model"))?;
            out.scan = Some(spaces.pca_store()?);
            out.rotator = Some(Rotator::Pca(pca.clone()));
            out.pca = Some(pca);
        }
        if kind.needs_projection() {
            let p = art.ortho.clone().ok_or_else(|| missing(kind, "orthogonal projection"))?;
            out.scan = Some(spaces.ortho_store()?);
            out.rotator = Some(Rotator::Ortho(p));
        }
        if kind.needs_pq() {
            out.pq = Some(art.pq.clone().ok_or_else(|| missing(kind, "PQ codebook"))?);
            out.codes = Some(spaces.pq_codes()?);
        }
        if kind.is_classifier() {
            let models = art.models.clone().ok_or_else(|| missing(kind, "trained models"))?;
            let has_any = match kind {
                StrategyKind::DdcPca => !models.pca_ks().is_empty(),
                _ => !models.opq_ks().is_empty(),
            };
            if !has_any {
                return Err(missing(kind, "trained models"));
            }
            out.models = Some(models);
        }
        match kind {
            StrategyKind::Dade => {
                let pca = out.pca.as_ref().expect("DADE has a PCA model");
                out.scale = Arc::new(dade_scale(pca));
                out.dade_eps = out
                    .test_depths
                    .iter()
                    .map(|&d| {
                        cfg.params.dade_eps.get(d).ok_or_else(|| {
                            Error::MissingArtifact(format!("DADE tolerance for depth {d}; calibrate first"))
                        })
                    })
                    .collect::<Result<_>>()?;
            }
            StrategyKind::DdcRes => {
                let store = out.scan.as_ref().expect("DDCres scans the PCA store");
                let mut norms = Vec::with_capacity(store.len() * out.test_depths.len());
                for row in store.rows() {
                    push_tail_norms(row, &out.test_depths, &mut norms);
                }
                out.tail_norms = Arc::new(norms);
            }
            _ => {}
        }
        Ok(out)
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn schedule(&self) -> &ScanSchedule {
        &self.schedule
    }

    /// Depths at which the early-exit test fires (all below `D`).
    pub fn test_depths(&self) -> &[usize] {
        &self.test_depths
    }

    pub fn params(&self) -> &HypothesisParams {
        &self.params
    }

    pub fn raw(&self) -> &Arc<Dataset> {
        &self.raw
    }

    fn scan_row(&self, id: usize) -> &[f32] {
        match &self.scan {
            Some(s) => s.row(id),
            None => self.raw.row(id),
        }
    }

    /// Whether distances are reported from the transformed store.
    fn reports_scan_space(&self) -> bool {
        matches!(
            self.kind,
            StrategyKind::AdSampling | StrategyKind::Dade | StrategyKind::DdcRes | StrategyKind::DdcPca
        )
    }

    fn report_row(&self, id: usize) -> &[f32] {
        if self.reports_scan_space() {
            self.scan_row(id)
        } else {
            self.raw.row(id)
        }
    }

    pub fn prepare(&self, q: &[f32], k: usize) -> Result<QueryContext> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: q.len() });
        }
        if let Some(coord) = q.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { vector: 0, coord });
        }
        if k == 0 {
            return Err(Error::OutOfRange("k must be >= 1".into()));
        }
        let mut ctx = QueryContext {
            raw: q.to_vec(),
            scan: Vec::new(),
            k,
            tail_var: Vec::new(),
            tail_std: Vec::new(),
            tail_norm: Vec::new(),
            scale: self.scale.clone(),
            lut: None,
            step_models: Vec::new(),
            opq_model: [0.0; 3],
        };
        if let Some(rot) = &self.rotator {
            ctx.scan = vec![0.0; self.dim];
            rot.apply(q, &mut ctx.scan);
        }
        match self.kind {
            StrategyKind::DdcRes => {
                let sigma = self.pca.as_ref().expect("DDCres has a PCA model").sigma();
                ctx.tail_var = tail_variance(&ctx.scan, sigma);
                ctx.tail_std = self.test_depths.iter().map(|&d| ctx.tail_var[d].sqrt()).collect();
                push_tail_norms(&ctx.scan, &self.test_depths, &mut ctx.tail_norm);
            }
            StrategyKind::DdcPca => {
                let models = self.models.as_ref().expect("classifier has models");
                ctx.step_models = self
                    .test_depths
                    .iter()
                    .map(|&d| {
                        let m = models
                            .pca(k, d)
                            .ok_or_else(|| Error::MissingArtifact(format!("DDCpca model for k={k}, d={d}")))?;
                        packed::<3, 4>(m)
                    })
                    .collect::<Result<_>>()?;
            }
            StrategyKind::DdcOpq => {
                let models = self.models.as_ref().expect("classifier has models");
                let m = models.opq(k).ok_or_else(|| Error::MissingArtifact(format!("DDCopq model for k={k}")))?;
                ctx.opq_model = packed::<2, 3>(m)?;
                ctx.lut = Some(self.pq.as_ref().expect("DDCopq has a codebook").lookup_table(q)?);
            }
            _ => {}
        }
        Ok(ctx)
    }

    /// The DCO for vector `id` against threshold `τ²`.
    pub fn compare(&self, ctx: &QueryContext, id: u32, tau_sq: f32) -> DcoOutcome {
        let idx = id as usize;
        if !tau_sq.is_finite() {
            // Warm-up (τ = ∞): no test can reject, so skip straight to the distance.
            return exact_outcome(self.distance(ctx, id), tau_sq, self.dim);
        }
        let dim = self.dim;
        match self.kind {
            StrategyKind::FdScanning => fd_scan(self.raw.row(idx), &ctx.raw, tau_sq),
            StrategyKind::PdScanning => pd_scan(self.raw.row(idx), &ctx.raw, tau_sq, &self.schedule),
            StrategyKind::PdScanningPlus => {
                let prune = tau_sq * (1.0 + PD_PLUS_SLACK);
                let o = self.scan_row(idx);
                let mut acc = ScanAccumulator::new(0);
                for &d in &self.test_depths {
                    acc.advance(o, &ctx.scan, d);
                    if acc.value() > prune {
                        return DcoOutcome::Above { dims_scanned: d };
                    }
                }
                exact_outcome(sq_dist(self.raw.row(idx), &ctx.raw), tau_sq, dim)
            }
            StrategyKind::AdSampling => {
                let eps0 = self.params.ads_epsilon0;
                hypothesis_scan(self.scan_row(idx), &ctx.scan, tau_sq, &self.schedule, |p, d, _| {
                    ads_rejects(p, d, dim, tau_sq, eps0)
                })
            }
            StrategyKind::Dade => {
                let scale = &self.scale;
                let eps = &self.dade_eps;
                hypothesis_scan(self.scan_row(idx), &ctx.scan, tau_sq, &self.schedule, |p, d, step| {
                    dade_rejects(p, scale[d], eps[step], tau_sq)
                })
            }
            StrategyKind::DdcRes => {
                let steps = self.test_depths.len();
                let o_tail = &self.tail_norms[idx * steps..(idx + 1) * steps];
                let m = self.params.ddcres_m;
                hypothesis_scan(self.scan_row(idx), &ctx.scan, tau_sq, &self.schedule, |p, _, step| {
                    ddcres_rejects(p + o_tail[step] + ctx.tail_norm[step], ctx.tail_std[step], tau_sq, m)
                })
            }
            StrategyKind::DdcPca => {
                hypothesis_scan(self.scan_row(idx), &ctx.scan, tau_sq, &self.schedule, |p, d, step| {
                    let w = &ctx.step_models[step];
                    w[3] + w[0] * p + w[1] * tau_sq + w[2] * (d as f32 / dim as f32) > 0.0
                })
            }
            StrategyKind::DdcOpq => {
                let codes = self.codes.as_ref().expect("DDCopq has codes");
                let lut = ctx.lut.as_ref().expect("DDCopq context has a lookup table");
                let w = &ctx.opq_model;
                let pq = lut.distance(codes.get(idx));
                if w[2] + w[0] * pq + w[1] * tau_sq > 0.0 {
                    DcoOutcome::Above { dims_scanned: 0 }
                } else {
                    fd_scan(self.raw.row(idx), &ctx.raw, tau_sq)
                }
            }
        }
    }

    pub fn distance(&self, ctx: &QueryContext, id: u32) -> f32 {
        let q = if self.reports_scan_space() { &ctx.scan } else { &ctx.raw };
        sq_dist(self.report_row(id as usize), q)
    }

    pub fn pair_distance(&self, a: u32, b: u32) -> f32 {
        sq_dist(self.report_row(a as usize), self.report_row(b as usize))
    }

    /// Appends a vector to every store this strategy reads; returns its id.
    pub fn push(&mut self, v: &[f32]) -> Result<u32> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: v.len() });
        }
        let id = Arc::make_mut(&mut self.raw).push(v)?;
        if let (Some(rot), Some(store)) = (&self.rotator, self.scan.as_mut()) {
            let mut r = vec![0.0; self.dim];
            rot.apply(v, &mut r);
            Arc::make_mut(store).push(&r)?;
            if self.kind == StrategyKind::DdcRes {
                push_tail_norms(&r, &self.test_depths, Arc::make_mut(&mut self.tail_norms));
            }
        }
        if let (Some(cb), Some(codes)) = (&self.pq, self.codes.as_mut()) {
            let c = cb.encode(v)?;
            Arc::make_mut(codes).push(&c);
        }
        Ok(id)
    }
}

impl Comparator for Dco {
    type Query = QueryContext;

    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.raw.len()
    }

    fn vector(&self, id: u32) -> &[f32] {
        self.raw.row(id as usize)
    }

    fn prepare(&self, q: &[f32], k: usize) -> Result<QueryContext> {
        Dco::prepare(self, q, k)
    }

    fn query_vector<'a>(&self, ctx: &'a QueryContext) -> &'a [f32] {
        &ctx.raw
    }

    #[inline]
    fn compare(&self, ctx: &QueryContext, id: u32, tau_sq: f32) -> DcoOutcome {
        Dco::compare(self, ctx, id, tau_sq)
    }

    #[inline]
    fn distance(&self, ctx: &QueryContext, id: u32) -> f32 {
        Dco::distance(self, ctx, id)
    }

    #[inline]
    fn pair_distance(&self, a: u32, b: u32) -> f32 {
        Dco::pair_distance(self, a, b)
    }

    fn code_ops(&self) -> u64 {
        self.codes.as_ref().map_or(0, |_| self.pq.as_ref().map_or(0, |p| p.subspaces() as u64))
    }

    #[inline]
    fn prefetch(&self, id: u32) {
        let i = id as usize;
        match self.kind {
            StrategyKind::FdScanning | StrategyKind::PdScanning | StrategyKind::DdcOpq => {
                crate::vector::prefetch(self.raw.row(i))
            }
            _ => crate::vector::prefetch(self.scan_row(i)),
        }
    }
}

fn missing(kind: StrategyKind, what: &str) -> Error {
    Error::MissingArtifact(format!("{kind} needs a {what}"))
}

/// `scale[d] = Σλ / Σ_{<=d}λ`; `scale[0]` is infinite, `scale[D] = 1`.
pub(crate) fn dade_scale(pca: &PcaModel) -> Vec<f32> {
    let prefix = pca.eigen_prefix();
    let total = prefix[pca.dim()];
    prefix
        .iter()
        .enumerate()
        .map(|(d, &p)| {
            if d == pca.dim() || total <= 0.0 {
                1.0
            } else if p <= 0.0 {
                f32::INFINITY
            } else {
                (total / p) as f32
            }
        })
        .collect()
}

/// `tail_var[d] = Σ_{i>=d} (q_i σ_i)²` for `d` in `0..=D`, accumulated in f64.
pub(crate) fn tail_variance(q_rot: &[f32], sigma: &[f32]) -> Vec<f32> {
    let dim = q_rot.len();
    let mut out = vec![0.0f32; dim + 1];
    let mut acc = 0.0f64;
    for i in (0..dim).rev() {
        let t = q_rot[i] as f64 * sigma[i] as f64;
        acc += t * t;
        out[i] = acc as f32;
    }
    out
}

fn push_tail_norms(row: &[f32], depths: &[usize], out: &mut Vec<f32>) {
    for &d in depths {
        let mut acc = ScanAccumulator::new(d);
        acc.advance_dot(row, row, row.len());
        out.push(acc.value());
    }
}

/// Weights followed by the bias, checked against the expected feature count.
fn packed<const F: usize, const N: usize>(m: &LinearModel) -> Result<[f32; N]> {
    if m.weights.len() != F {
        return Err(Error::Format(format!("model has {} weights, expected {F}", m.weights.len())));
    }
    let mut out = [0.0f32; N];
    out[..F].copy_from_slice(&m.weights);
    out[F] = m.bias;
    Ok(out)
}
