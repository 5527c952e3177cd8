//! Measurement harness: QPS/recall sweeps, construction and insertion studies,
//! and the limited-data study.
//!
//! The query loop is single-threaded. Ground truth and training may use the
//! rayon pool.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dco::{
    calibrate_dade, Artifacts, Comparator, DcoConfig, DcoStats, StrategyKind, VectorSpaces, DADE_CALIBRATION_PAIRS,
};
use crate::error::{Error, Result};
use crate::index::{AnnIndex, Hnsw, HnswParams, IndexKind, Ivf, IvfParams, SearchOutput, SearchParams};
use crate::quantize::{default_subspaces, train_pq, DEFAULT_BITS};
use crate::train::{fit_models, gen_training_samples, FitOptions, ModelSet, SampleOptions, TrainingSet};
use crate::transform::{fit_pca_sampled, random_orthogonal, PCA_SAMPLE_CAP};
use crate::vector::{ground_truth, sq_dist, tie_aware_recall, Dataset, Metric};

pub const CSV_HEADER: &str =
    "strategy,index,k,sweep_param,sweep_value,recall,qps_query,qps_e2e,scan_fraction,preproc_ms,dco_count,within_count";

/// Vectors a classifier needs before the limited-data study trains it.
pub const CLASSIFIER_MIN_VECTORS: usize = 10_000;

/// Deterministic per-phase seed derived from the root seed.
pub fn phase_seed(root: u64, phase: &str) -> u64 {
    // FNV-1a over the phase name, mixed with the root.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in phase.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = root ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn default_sweep(kind: IndexKind) -> Vec<usize> {
    match kind {
        IndexKind::Hnsw => vec![100, 200, 400, 800],
        IndexKind::Ivf => vec![8, 16, 32, 64],
    }
}

fn search_params(kind: IndexKind, k: usize, value: usize) -> SearchParams {
    match kind {
        IndexKind::Hnsw => SearchParams::hnsw(k, value),
        IndexKind::Ivf => SearchParams::ivf(k, value),
    }
}

#[derive(Clone, Debug)]
pub enum BuiltIndex {
    Hnsw(Hnsw),
    Ivf(Ivf),
}

impl AnnIndex for BuiltIndex {
    fn kind(&self) -> IndexKind {
        match self {
            BuiltIndex::Hnsw(_) => IndexKind::Hnsw,
            BuiltIndex::Ivf(_) => IndexKind::Ivf,
        }
    }

    fn len(&self) -> usize {
        match self {
            BuiltIndex::Hnsw(g) => g.len(),
            BuiltIndex::Ivf(i) => i.len(),
        }
    }

    fn search<C: Comparator>(&self, cmp: &C, ctx: &C::Query, params: &SearchParams) -> Result<SearchOutput> {
        match self {
            BuiltIndex::Hnsw(g) => g.search(cmp, ctx, params),
            BuiltIndex::Ivf(i) => i.search(cmp, ctx, params),
        }
    }
}

/// An index plus the vector spaces laid out in its storage order.
#[derive(Debug)]
pub struct Bench {
    index: BuiltIndex,
    raw: Arc<Dataset>,
    spaces: VectorSpaces,
    build_ms: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IndexOptions {
    pub kind: IndexKind,
    pub hnsw: HnswParams,
    pub ivf: IvfParams,
}

impl Bench {
    /// Builds the index with exact comparisons.
    pub fn build(raw: Arc<Dataset>, artifacts: Artifacts, opts: &IndexOptions) -> Result<Self> {
        let start = Instant::now();
        let dim = raw.dim();
        let (index, spaces) = match opts.kind {
            IndexKind::Hnsw => {
                let spaces = VectorSpaces::new(raw.clone(), artifacts)?;
                let fd = spaces.dco(StrategyKind::FdScanning, &DcoConfig::default_for(dim))?;
                (BuiltIndex::Hnsw(Hnsw::build(&fd, opts.hnsw)?), spaces)
            }
            IndexKind::Ivf => {
                let ivf = Ivf::build(&raw, opts.ivf)?;
                let spaces = VectorSpaces::new(raw.clone(), artifacts)?.permuted(ivf.layout())?;
                (BuiltIndex::Ivf(ivf), spaces)
            }
        };
        let build_ms = start.elapsed().as_secs_f64() * 1e3;
        info!("built {} over {} vectors in {:.0} ms", opts.kind, raw.len(), build_ms);
        Ok(Self { index, raw, spaces, build_ms })
    }

    /// The same index bound to different artifacts.
    pub fn with_artifacts(&self, artifacts: Artifacts) -> Result<Self> {
        let spaces = match &self.index {
            BuiltIndex::Hnsw(_) => VectorSpaces::new(self.raw.clone(), artifacts)?,
            BuiltIndex::Ivf(ivf) => VectorSpaces::new(self.raw.clone(), artifacts)?.permuted(ivf.layout())?,
        };
        Ok(Self { index: self.index.clone(), raw: self.raw.clone(), spaces, build_ms: self.build_ms })
    }

    pub fn from_parts(index: BuiltIndex, raw: Arc<Dataset>, artifacts: Artifacts) -> Result<Self> {
        let spaces = VectorSpaces::new(raw.clone(), artifacts)?;
        let spaces = match &index {
            BuiltIndex::Hnsw(g) if g.len() != raw.len() => {
                return Err(Error::Config(format!("index holds {} vectors, dataset {}", g.len(), raw.len())))
            }
            BuiltIndex::Ivf(ivf) if ivf.len() != raw.len() => {
                return Err(Error::Config(format!("index holds {} vectors, dataset {}", ivf.len(), raw.len())))
            }
            BuiltIndex::Ivf(ivf) => spaces.permuted(ivf.layout())?,
            BuiltIndex::Hnsw(_) => spaces,
        };
        Ok(Self { index, raw, spaces, build_ms: 0.0 })
    }

    pub fn index(&self) -> &BuiltIndex {
        &self.index
    }

    pub fn raw(&self) -> &Arc<Dataset> {
        &self.raw
    }

    pub fn spaces(&self) -> &VectorSpaces {
        &self.spaces
    }

    pub fn build_ms(&self) -> f64 {
        self.build_ms
    }

    pub fn set_models(&mut self, models: Arc<ModelSet>) {
        self.spaces.set_models(models);
    }
}

#[derive(Clone, Debug)]
pub struct PrepareOptions {
    pub seed: u64,
    pub pca_sample: usize,
    /// Defaults to [`default_subspaces`].
    pub pq_subspaces: Option<usize>,
    pub pq_bits: usize,
    pub dade_pairs: usize,
    pub dco: DcoConfig,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            pca_sample: PCA_SAMPLE_CAP,
            pq_subspaces: None,
            pq_bits: DEFAULT_BITS,
            dade_pairs: DADE_CALIBRATION_PAIRS,
            dco: DcoConfig::default(),
        }
    }
}

/// Offline artifacts plus the DCO configuration they imply.
#[derive(Clone, Debug, Default)]
pub struct Prepared {
    pub artifacts: Artifacts,
    pub dco: DcoConfig,
}

/// Fits whatever `strategies` need, except classifier models.
pub fn prepare_artifacts(ds: &Arc<Dataset>, strategies: &[StrategyKind], opts: &PrepareOptions) -> Result<Prepared> {
    let dim = ds.dim();
    let mut dco = opts.dco.clone();
    dco.schedule = dco.schedule.clamped(dim);
    let mut art = Artifacts::default();
    if strategies.iter().any(|k| k.needs_pca()) {
        let t = Instant::now();
        art.pca = Some(Arc::new(fit_pca_sampled(ds, opts.pca_sample, phase_seed(opts.seed, "pca"))?));
        info!("PCA fitted in {:.0} ms", t.elapsed().as_secs_f64() * 1e3);
    }
    if strategies.iter().any(|k| k.needs_projection()) {
        art.ortho = Some(Arc::new(random_orthogonal(dim, phase_seed(opts.seed, "ortho"))?));
    }
    if strategies.iter().any(|k| k.needs_pq()) {
        let t = Instant::now();
        let c = opts.pq_subspaces.unwrap_or_else(|| default_subspaces(dim));
        art.pq = Some(Arc::new(train_pq(ds, c, opts.pq_bits, phase_seed(opts.seed, "pq"))?));
        info!("PQ trained in {:.0} ms", t.elapsed().as_secs_f64() * 1e3);
    }
    if strategies.contains(&StrategyKind::Dade) {
        let pca = art.pca.clone().expect("DADE implies PCA");
        let spaces = VectorSpaces::new(ds.clone(), art.clone())?;
        dco.params.dade_eps = calibrate_dade(
            spaces.pca_store()?.as_ref(),
            &pca,
            &dco.schedule,
            dco.params.dade_alpha,
            opts.dade_pairs,
            phase_seed(opts.seed, "dade"),
        )?;
    }
    Ok(Prepared { artifacts: art, dco })
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub ks: Vec<usize>,
    pub n_queries: usize,
    pub search: SearchParams,
    pub sample: SampleOptions,
    pub fit: FitOptions,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            ks: vec![20, 100],
            n_queries: 1000,
            search: SearchParams::default(),
            sample: SampleOptions::default(),
            fit: FitOptions::default(),
        }
    }
}

/// Generates labeled comparisons on `bench` and fits the classifier models.
pub fn train_models(bench: &Bench, opts: &TrainOptions) -> Result<(ModelSet, TrainingSet)> {
    let t = Instant::now();
    let set = gen_training_samples(&bench.index, &bench.spaces, &opts.ks, opts.n_queries, &opts.search, &opts.sample)?;
    let models = fit_models(&set, &opts.fit)?;
    info!(
        "trained {} PCA and {} PQ models from {} + {} samples in {:.0} ms",
        models.pca_models().count(),
        models.opq_models().count(),
        set.pca.len(),
        set.opq.len(),
        t.elapsed().as_secs_f64() * 1e3
    );
    Ok((models, set))
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub strategies: Vec<StrategyKind>,
    pub sweep: Vec<usize>,
    pub ks: Vec<usize>,
    pub repetitions: usize,
    pub warmup: bool,
    pub dco: DcoConfig,
    /// Share of queries whose reported distances are recomputed by brute force.
    pub spot_check: f64,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(strategies: Vec<StrategyKind>, sweep: Vec<usize>, ks: Vec<usize>) -> Self {
        Self { strategies, sweep, ks, repetitions: 3, warmup: true, dco: DcoConfig::default(), spot_check: 0.01, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Config("strategies: at least one strategy is required".into()));
        }
        if self.sweep.is_empty() || self.sweep.contains(&0) {
            return Err(Error::Config("sweep: the grid must be non-empty with positive values".into()));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::Config("k: at least one k >= 1 is required".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.spot_check) {
            return Err(Error::Config("spot_check must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub strategy: StrategyKind,
    pub index: IndexKind,
    pub k: usize,
    pub sweep_value: usize,
    pub recall: f64,
    pub qps_query: f64,
    pub qps_e2e: f64,
    pub scan_fraction: f64,
    /// Mean per-query preparation time.
    pub preproc_ms: f64,
    pub dco_count: u64,
    pub within_count: u64,
}

impl BenchRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.3},{:.3},{:.6},{:.6},{},{}",
            self.strategy.name(),
            self.index,
            self.k,
            self.index.sweep_param(),
            self.sweep_value,
            self.recall,
            self.qps_query,
            self.qps_e2e,
            self.scan_fraction,
            self.preproc_ms,
            self.dco_count,
            self.within_count
        )
    }
}

pub fn records_to_csv(records: &[BenchRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Brute-force truth ids, parallel across queries.
pub fn compute_truth(ds: &Dataset, queries: &Dataset, k: usize) -> Result<Vec<Vec<u32>>> {
    Ok(ground_truth(ds, queries, k, Metric::Euclidean)?.into_iter().map(|r| r.ids).collect())
}

/// Recall@k where equidistant ids are interchangeable, with distances
/// recomputed in the raw space.
pub fn recall_against(raw: &Dataset, q: &[f32], found: &[u32], truth: &[u32], k: usize) -> Result<f64> {
    if truth.len() < k {
        return Err(Error::Config(format!("ground truth lists {} ids per query, k = {k}", truth.len())));
    }
    if found.len() != k {
        return Ok(found.iter().filter(|id| truth[..k].contains(id)).count() as f64 / k as f64);
    }
    let dist = |ids: &[u32]| ids.iter().map(|&id| sq_dist(raw.row(id as usize), q)).collect::<Vec<f32>>();
    let td = dist(&truth[..k]);
    let tol = 1e-6 * td.iter().fold(1.0f32, |m, &d| m.max(d));
    tie_aware_recall(found, &dist(found), &truth[..k], &td, tol)
}

struct Pass {
    recall: f64,
    query_s: f64,
    prep_s: f64,
    stats: DcoStats,
}

fn run_pass(
    bench: &Bench,
    kind: StrategyKind,
    dco: &crate::dco::Dco,
    queries: &Dataset,
    truth: &[Vec<u32>],
    params: &SearchParams,
    checked: &[bool],
) -> Result<Pass> {
    let mut stats = DcoStats::default();
    let (mut query_s, mut prep_s, mut recall) = (0.0, 0.0, 0.0);
    let k = params.k;
    for (qi, q) in queries.rows().enumerate() {
        let t0 = Instant::now();
        let ctx = dco.prepare(q, k)?;
        let t1 = Instant::now();
        let out = bench.index.search(dco, &ctx, params)?;
        let t2 = Instant::now();
        prep_s += (t1 - t0).as_secs_f64();
        query_s += (t2 - t1).as_secs_f64();
        stats.merge(&out.stats);
        if checked[qi] {
            spot_check(bench.raw(), q, &out.result.ids, &out.result.dists, kind)?;
        }
        recall += recall_against(bench.raw(), q, &out.result.ids, &truth[qi], k)?;
    }
    Ok(Pass { recall: recall / queries.len() as f64, query_s, prep_s, stats })
}

fn spot_check(raw: &Dataset, q: &[f32], ids: &[u32], dists: &[f32], kind: StrategyKind) -> Result<()> {
    for (&id, &d) in ids.iter().zip(dists) {
        let exact = sq_dist(raw.row(id as usize), q);
        if (d - exact).abs() > 1e-3 * exact.max(1.0) {
            return Err(Error::Invariant(format!(
                "{kind} reported distance {d} for id {id}, brute force gives {exact}"
            )));
        }
    }
    Ok(())
}

fn clamped(cfg: &DcoConfig, dim: usize) -> DcoConfig {
    DcoConfig { schedule: cfg.schedule.clamped(dim), ..cfg.clone() }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One record per `(strategy, k, sweep value)`.
///
/// Missing truth is computed by brute force. Recall, scan fraction and
/// counts are deterministic; timings are medians over the repetitions.
pub fn run_sweep(bench: &Bench, queries: &Dataset, truth: Option<&[Vec<u32>]>, cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    cfg.validate()?;
    let dim = bench.raw.dim();
    if queries.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: queries.dim() });
    }
    if queries.is_empty() {
        return Err(Error::Config("no queries to run".into()));
    }
    let kmax = *cfg.ks.iter().max().expect("validated");
    let computed;
    let truth = match truth {
        Some(t) => {
            if t.len() != queries.len() {
                return Err(Error::Config(format!("ground truth has {} rows for {} queries", t.len(), queries.len())));
            }
            t
        }
        None => {
            warn!("no ground truth supplied; computing it by brute force");
            computed = compute_truth(&bench.raw, queries, kmax)?;
            &computed[..]
        }
    };
    let mut checked = vec![false; queries.len()];
    let n_checked = ((queries.len() as f64 * cfg.spot_check).ceil() as usize).min(queries.len());
    let mut order: Vec<usize> = (0..queries.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(phase_seed(cfg.seed, "spot-check")));
    for &i in &order[..n_checked] {
        checked[i] = true;
    }

    let kind = bench.index.kind();
    let dco_cfg = clamped(&cfg.dco, dim);
    let mut records = Vec::new();
    for &strategy in &cfg.strategies {
        let dco = bench.spaces.dco(strategy, &dco_cfg)?;
        for &k in &cfg.ks {
            for &value in &cfg.sweep {
                let params = search_params(kind, k, value);
                if cfg.warmup {
                    run_pass(bench, strategy, &dco, queries, truth, &params, &checked)?;
                }
                let mut passes = Vec::with_capacity(cfg.repetitions);
                for _ in 0..cfg.repetitions {
                    passes.push(run_pass(bench, strategy, &dco, queries, truth, &params, &checked)?);
                }
                let first = &passes[0];
                if passes.iter().any(|p| p.recall != first.recall || p.stats != first.stats) {
                    return Err(Error::Invariant(format!("{strategy} produced different results across repetitions")));
                }
                let nq = queries.len() as f64;
                let q_s = median(passes.iter().map(|p| p.query_s).collect());
                let e_s = median(passes.iter().map(|p| p.query_s + p.prep_s).collect());
                let p_s = median(passes.iter().map(|p| p.prep_s).collect());
                let rec = BenchRecord {
                    strategy,
                    index: kind,
                    k,
                    sweep_value: value,
                    recall: first.recall,
                    qps_query: nq / q_s.max(1e-12),
                    qps_e2e: nq / e_s.max(1e-12),
                    scan_fraction: first.stats.scan_fraction(dim),
                    preproc_ms: p_s * 1e3 / nq,
                    dco_count: first.stats.invocations,
                    within_count: first.stats.within,
                };
                info!("{}", rec.csv_row());
                records.push(rec);
            }
        }
    }
    for (s, k, v) in recall_dips(&records) {
        warn!("{s} k={k}: recall drops at {} = {v}", kind.sweep_param());
    }
    Ok(records)
}

/// Sweep points where recall falls below the previous, larger-budget-last point.
pub fn recall_dips(records: &[BenchRecord]) -> Vec<(StrategyKind, usize, usize)> {
    let mut out = Vec::new();
    for w in records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.strategy == b.strategy && a.k == b.k && b.sweep_value > a.sweep_value && b.recall < a.recall {
            out.push((b.strategy, b.k, b.sweep_value));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstructionReport {
    pub strategies: Vec<StrategyKind>,
    pub build_ms: Vec<f64>,
    /// Recall of each index when searched with FDScanning.
    pub recall: Vec<f64>,
    /// `delta[i][j] = recall[i] - recall[j]`.
    pub delta: Vec<Vec<f64>>,
}

impl ConstructionReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("strategy,build_ms,recall");
        for k in &self.strategies {
            let _ = write!(s, ",delta_vs_{}", k.name());
        }
        s.push('\n');
        for (i, k) in self.strategies.iter().enumerate() {
            let _ = write!(s, "{},{:.1},{:.6}", k.name(), self.build_ms[i], self.recall[i]);
            for d in &self.delta[i] {
                let _ = write!(s, ",{d:.6}");
            }
            s.push('\n');
        }
        s
    }
}

/// Builds one HNSW graph per strategy and searches each with FDScanning.
pub fn measure_construction(
    raw: &Arc<Dataset>,
    prepared: &Prepared,
    strategies: &[StrategyKind],
    hnsw: HnswParams,
    queries: &Dataset,
    truth: Option<&[Vec<u32>]>,
    search: &SearchParams,
) -> Result<ConstructionReport> {
    if let Some(k) = strategies.iter().find(|k| k.is_classifier()) {
        return Err(Error::Config(format!("{k} cannot build an index: classifiers need an index to train on")));
    }
    if strategies.is_empty() {
        return Err(Error::Config("strategies: at least one strategy is required".into()));
    }
    let computed;
    let truth = match truth {
        Some(t) => t,
        None => {
            computed = compute_truth(raw, queries, search.k)?;
            &computed[..]
        }
    };
    let spaces = VectorSpaces::new(raw.clone(), prepared.artifacts.clone())?;
    let dco_cfg = clamped(&prepared.dco, raw.dim());
    let fd = spaces.dco(StrategyKind::FdScanning, &dco_cfg)?;
    let (mut build_ms, mut recall) = (Vec::new(), Vec::new());
    for &k in strategies {
        let dco = spaces.dco(k, &dco_cfg)?;
        let t = Instant::now();
        let g = Hnsw::build(&dco, hnsw)?;
        build_ms.push(t.elapsed().as_secs_f64() * 1e3);
        let mut r = 0.0;
        for (qi, q) in queries.rows().enumerate() {
            let out = g.search(&fd, &fd.prepare(q, search.k)?, search)?;
            r += recall_against(raw, q, &out.result.ids, &truth[qi], search.k)?;
        }
        recall.push(r / queries.len() as f64);
        info!("{k}-built graph: {:.0} ms, recall {:.4}", build_ms.last().unwrap(), recall.last().unwrap());
    }
    let delta = recall.iter().map(|a| recall.iter().map(|b| a - b).collect()).collect();
    Ok(ConstructionReport { strategies: strategies.to_vec(), build_ms, recall, delta })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InsertionRecord {
    pub strategy: StrategyKind,
    /// 0 is the base build.
    pub batch: usize,
    pub n: usize,
    pub recall: f64,
    pub qps: f64,
    pub build_ms: f64,
    /// Insertion time summed over batches so far.
    pub update_ms: f64,
    pub audit_passed: bool,
}

pub fn insertion_to_csv(records: &[InsertionRecord]) -> String {
    let mut s = String::from("strategy,batch,n,recall,qps,build_ms,update_ms,audit_passed\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.3},{:.1},{:.1},{}",
            r.strategy.name(),
            r.batch,
            r.n,
            r.recall,
            r.qps,
            r.build_ms,
            r.update_ms,
            r.audit_passed
        );
    }
    s
}

pub const INSERT_BASE_FRACTION: f64 = 0.6;
pub const INSERT_BATCHES: usize = 4;

/// Batch boundaries: the base set, then four equal increments up to `n`.
pub fn insertion_boundaries(n: usize) -> Vec<usize> {
    let base = (n as f64 * INSERT_BASE_FRACTION).round() as usize;
    let mut b = vec![base];
    for i in 1..=INSERT_BATCHES {
        b.push(base + ((n - base) * i) / INSERT_BATCHES);
    }
    b
}

/// Builds HNSW on the first 60% of `raw`, inserts the rest in four batches,
/// and searches with the same strategy after each step.
pub fn measure_insertion(
    raw: &Arc<Dataset>,
    prepared: &Prepared,
    strategies: &[StrategyKind],
    index: IndexKind,
    hnsw: HnswParams,
    queries: &Dataset,
    search: &SearchParams,
) -> Result<Vec<InsertionRecord>> {
    if index != IndexKind::Hnsw {
        return Err(Error::Config("insert-bench supports only the hnsw index".into()));
    }
    let bounds = insertion_boundaries(raw.len());
    if bounds[0] == 0 {
        return Err(Error::Config("dataset too small for a 60% base set".into()));
    }
    let truths: Vec<Vec<Vec<u32>>> = bounds
        .iter()
        .map(|&n| compute_truth(&raw.prefix(n)?, queries, search.k))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for &strategy in strategies {
        let base = VectorSpaces::new(raw.prefix(bounds[0])?, prepared.artifacts.clone())?;
        let mut dco = base.dco(strategy, &clamped(&prepared.dco, raw.dim()))?;
        let t = Instant::now();
        let mut g = Hnsw::build(&dco, hnsw)?;
        let build_ms = t.elapsed().as_secs_f64() * 1e3;
        let mut update_ms = 0.0;
        for (batch, &n) in bounds.iter().enumerate() {
            if batch > 0 {
                let t = Instant::now();
                for id in bounds[batch - 1]..n {
                    g.insert(&mut dco, raw.row(id))?;
                }
                update_ms += t.elapsed().as_secs_f64() * 1e3;
            }
            let audit = g.audit();
            if !audit.passed() {
                warn!("{strategy} batch {batch}: audit failed {audit:?}");
            }
            let t = Instant::now();
            let mut r = 0.0;
            for (qi, q) in queries.rows().enumerate() {
                let res = g.search(&dco, &dco.prepare(q, search.k)?, search)?;
                r += recall_against(raw, q, &res.result.ids, &truths[batch][qi], search.k)?;
            }
            let qps = queries.len() as f64 / t.elapsed().as_secs_f64().max(1e-12);
            let rec = InsertionRecord {
                strategy,
                batch,
                n,
                recall: r / queries.len() as f64,
                qps,
                build_ms,
                update_ms,
                audit_passed: audit.passed(),
            };
            info!("{strategy} batch {batch}: n = {n}, recall {:.4}", rec.recall);
            out.push(rec);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub enum LimitedOutcome {
    Measured(BenchRecord),
    Skipped(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LimitedRecord {
    pub fraction: f64,
    pub train_vectors: usize,
    pub strategy: StrategyKind,
    pub outcome: LimitedOutcome,
}

pub fn limited_to_csv(records: &[LimitedRecord]) -> String {
    let mut s = String::from("fraction,train_vectors,strategy,status,recall,scan_fraction,qps_query,dco_count\n");
    for r in records {
        let _ = write!(s, "{},{},{},", r.fraction, r.train_vectors, r.strategy.name());
        match &r.outcome {
            LimitedOutcome::Measured(b) => {
                let _ = writeln!(s, "ok,{:.6},{:.6},{:.3},{}", b.recall, b.scan_fraction, b.qps_query, b.dco_count);
            }
            LimitedOutcome::Skipped(why) => {
                let _ = writeln!(s, "SKIPPED,,,,{}", why.replace(',', ";"));
            }
        }
    }
    s
}

#[derive(Clone, Debug)]
pub struct LimitedOptions {
    pub prepare: PrepareOptions,
    pub train: TrainOptions,
    pub index: IndexOptions,
    pub k: usize,
    pub sweep_value: usize,
}

/// Fits artifacts on a fraction of the data and evaluates on the full index.
pub fn limited_data_study(
    full: &Bench,
    queries: &Dataset,
    truth: Option<&[Vec<u32>]>,
    strategies: &[StrategyKind],
    fractions: &[f64],
    opts: &LimitedOptions,
) -> Result<Vec<LimitedRecord>> {
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::Config(format!("fractions: {f} is outside (0, 1]")));
    }
    let raw = full.raw().clone();
    let computed;
    let truth = match truth {
        Some(t) => t,
        None => {
            computed = compute_truth(&raw, queries, opts.k)?;
            &computed[..]
        }
    };
    let mut out = Vec::new();
    for &f in fractions {
        let n = ((raw.len() as f64 * f).round() as usize).clamp(2, raw.len());
        let sample = if n == raw.len() {
            raw.clone()
        } else {
            let mut ids: Vec<u32> = (0..raw.len() as u32).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(phase_seed(opts.prepare.seed, "limited"));
            let (picked, _) = ids.partial_shuffle(&mut rng, n);
            picked.sort_unstable();
            Arc::new(raw.subset(picked)?)
        };
        let mut prepared = prepare_artifacts(&sample, strategies, &opts.prepare)?;
        let classifiers: Vec<StrategyKind> = strategies.iter().copied().filter(|k| k.is_classifier()).collect();
        let mut skip_reason = None;
        if !classifiers.is_empty() {
            if n < CLASSIFIER_MIN_VECTORS {
                skip_reason = Some(format!(
                    "classifiers require a minimum of {CLASSIFIER_MIN_VECTORS} vectors for training, have {n}"
                ));
            } else {
                let sample_bench = Bench::build(sample.clone(), prepared.artifacts.clone(), &opts.index)?;
                let mut train = opts.train.clone();
                train.n_queries = train.n_queries.min(n);
                match train_models(&sample_bench, &train) {
                    Ok((models, _)) => prepared.artifacts.models = Some(Arc::new(models)),
                    Err(e) => skip_reason = Some(format!("training failed: {e}")),
                }
            }
        }
        let bench = full.with_artifacts(prepared.artifacts.clone())?;
        for &strategy in strategies {
            let outcome = match (&skip_reason, strategy.is_classifier()) {
                (Some(why), true) => LimitedOutcome::Skipped(why.clone()),
                _ => {
                    let mut cfg = BenchConfig::new(vec![strategy], vec![opts.sweep_value], vec![opts.k]);
                    cfg.repetitions = 1;
                    cfg.warmup = false;
                    cfg.dco = prepared.dco.clone();
                    cfg.seed = opts.prepare.seed;
                    let rec = run_sweep(&bench, queries, Some(truth), &cfg)?;
                    LimitedOutcome::Measured(rec.into_iter().next().expect("one record"))
                }
            };
            out.push(LimitedRecord { fraction: f, train_vectors: n, strategy, outcome });
        }
    }
    Ok(out)
}
