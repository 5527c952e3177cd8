//! Training the linear classifiers behind DDCpca and DDCopq.
//!
//! Samples come from real searches: every comparison an exact search makes is
//! logged with its threshold, then re-featurized in PCA or PQ space. A sample
//! is labeled *above* when the true squared distance exceeds `τ²`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dco::{
    ddcopq_features, ddcpca_features, Comparator, DcoConfig, DcoOutcome, ScanSchedule, StrategyKind, VectorSpaces,
};
use crate::error::{Error, Result};
use crate::index::{AnnIndex, SearchParams};
use crate::sidecar::{Sidecar, SidecarKind, SidecarReader, SidecarWriter};
use crate::transform::apply_rotation;
use crate::vector::ScanAccumulator;

pub const MIN_SAMPLES: usize = 200;
pub const MIN_QUERIES: usize = 100;
/// Below this many samples a model still trains, with a warning.
pub const RECOMMENDED_SAMPLES: usize = 10_000;
pub const DEFAULT_RECORDS_PER_QUERY: usize = 400;

/// `score = bias + Σ w_i f_i`; positive means the pair is predicted above `τ`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f32>,
    pub bias: f32,
    pub trained_k: usize,
    /// Scan depth of a DDCpca model; `None` for DDCopq.
    pub trained_d: Option<usize>,
    pub held_out_accuracy: f32,
    pub held_out_false_reject: f32,
    /// Accuracy of always predicting the majority class on the held-out split.
    pub majority_baseline: f32,
    pub train_samples: usize,
    /// True when training failed the false-reject ceiling and the model
    /// accepts everything.
    pub fallback: bool,
}

impl LinearModel {
    /// Never predicts above; every comparison falls through to the scan.
    pub fn always_accept(features: usize) -> Self {
        Self {
            weights: vec![0.0; features],
            bias: -1.0,
            trained_k: 0,
            trained_d: None,
            held_out_accuracy: 0.0,
            held_out_false_reject: 0.0,
            majority_baseline: 0.0,
            train_samples: 0,
            fallback: true,
        }
    }

    #[inline]
    pub fn score(&self, features: &[f32]) -> f32 {
        let mut s = self.bias;
        for (w, f) in self.weights.iter().zip(features) {
            s += w * f;
        }
        s
    }

    #[inline]
    pub fn predicts_above(&self, features: &[f32]) -> bool {
        self.score(features) > 0.0
    }
}

/// `M_{k,d}` for DDCpca and `M_k` for DDCopq.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelSet {
    pca: BTreeMap<(usize, usize), LinearModel>,
    opq: BTreeMap<usize, LinearModel>,
}

impl ModelSet {
    pub fn pca(&self, k: usize, d: usize) -> Option<&LinearModel> {
        self.pca.get(&(k, d))
    }

    pub fn opq(&self, k: usize) -> Option<&LinearModel> {
        self.opq.get(&k)
    }

    pub fn insert_pca(&mut self, k: usize, d: usize, m: LinearModel) {
        self.pca.insert((k, d), m);
    }

    pub fn insert_opq(&mut self, k: usize, m: LinearModel) {
        self.opq.insert(k, m);
    }

    pub fn pca_ks(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = self.pca.keys().map(|&(k, _)| k).collect();
        ks.dedup();
        ks
    }

    pub fn opq_ks(&self) -> Vec<usize> {
        self.opq.keys().copied().collect()
    }

    pub fn pca_models(&self) -> impl Iterator<Item = (usize, usize, &LinearModel)> {
        self.pca.iter().map(|(&(k, d), m)| (k, d, m))
    }

    pub fn opq_models(&self) -> impl Iterator<Item = (usize, &LinearModel)> {
        self.opq.iter().map(|(&k, m)| (k, m))
    }

    /// Human-readable listing, one model per line.
    pub fn manifest(&self) -> String {
        let mut s = String::from("# kind k d bias weights... held_out_accuracy held_out_frr majority_baseline samples fallback\n");
        let mut line = |kind: &str, k: usize, d: usize, m: &LinearModel| {
            let w: Vec<String> = m.weights.iter().map(|x| format!("{x:e}")).collect();
            let _ = writeln!(
                s,
                "{kind} {k} {d} {:e} {} {:.4} {:.4} {:.4} {} {}",
                m.bias,
                w.join(" "),
                m.held_out_accuracy,
                m.held_out_false_reject,
                m.majority_baseline,
                m.train_samples,
                m.fallback
            );
        };
        for (k, d, m) in self.pca_models() {
            line("pca", k, d, m);
        }
        for (k, m) in self.opq_models() {
            line("opq", k, 0, m);
        }
        s
    }
}

fn write_model<W: Write>(w: &mut SidecarWriter<W>, m: &LinearModel) -> Result<()> {
    w.usize32(m.weights.len())?;
    w.f32s(&m.weights)?;
    w.f32(m.bias)?;
    w.usize32(m.trained_k)?;
    w.u32(m.trained_d.map_or(u32::MAX, |d| d as u32))?;
    w.f32(m.held_out_accuracy)?;
    w.f32(m.held_out_false_reject)?;
    w.f32(m.majority_baseline)?;
    w.usize32(m.train_samples)?;
    w.u8(m.fallback as u8)
}

fn read_model<R: Read>(r: &mut SidecarReader<R>) -> Result<LinearModel> {
    let n = r.u32()? as usize;
    if n > 16 {
        return Err(Error::Format(format!("model with {n} weights")));
    }
    Ok(LinearModel {
        weights: r.f32s(n)?,
        bias: r.f32()?,
        trained_k: r.u32()? as usize,
        trained_d: match r.u32()? {
            u32::MAX => None,
            d => Some(d as usize),
        },
        held_out_accuracy: r.f32()?,
        held_out_false_reject: r.f32()?,
        majority_baseline: r.f32()?,
        train_samples: r.u32()? as usize,
        fallback: r.u8()? != 0,
    })
}

impl Sidecar for ModelSet {
    fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = SidecarWriter::new(w, SidecarKind::Models, 0)?;
        w.usize32(self.pca.len())?;
        for (&(k, d), m) in &self.pca {
            w.usize32(k)?;
            w.usize32(d)?;
            write_model(&mut w, m)?;
        }
        w.usize32(self.opq.len())?;
        for (&k, m) in &self.opq {
            w.usize32(k)?;
            write_model(&mut w, m)?;
        }
        w.finish()?;
        Ok(())
    }

    fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = SidecarReader::new(r)?.expect(SidecarKind::Models)?;
        let mut out = ModelSet::default();
        for _ in 0..r.u32()? {
            let k = r.u32()? as usize;
            let d = r.u32()? as usize;
            out.pca.insert((k, d), read_model(&mut r)?);
        }
        for _ in 0..r.u32()? {
            let k = r.u32()? as usize;
            out.opq.insert(k, read_model(&mut r)?);
        }
        r.finish()?;
        Ok(out)
    }
}

/// One labeled comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub query: u32,
    pub k: usize,
    /// Scan depth for DDCpca features; 0 for DDCopq.
    pub d: usize,
    pub features: Vec<f32>,
    /// True distance exceeds the threshold.
    pub above: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingSet {
    pub pca: Vec<TrainingSample>,
    pub opq: Vec<TrainingSample>,
}

/// `k,d,feat...,label` rows, label 1 for above.
pub fn samples_to_csv(samples: &[TrainingSample]) -> String {
    let nfeat = samples.first().map_or(0, |s| s.features.len());
    let mut out = String::from("k,d");
    for i in 0..nfeat {
        let _ = write!(out, ",f{i}");
    }
    out.push_str(",label\n");
    for s in samples {
        let _ = write!(out, "{},{}", s.k, s.d);
        for f in &s.features {
            let _ = write!(out, ",{f}");
        }
        let _ = writeln!(out, ",{}", s.above as u8);
    }
    out
}

/// Forwards to an inner comparator and logs every `(id, τ²)` it is asked.
pub struct RecordingComparator<'a, C: Comparator> {
    inner: &'a C,
    log: RefCell<Vec<(u32, f32)>>,
}

impl<'a, C: Comparator> RecordingComparator<'a, C> {
    pub fn new(inner: &'a C) -> Self {
        Self { inner, log: RefCell::new(Vec::new()) }
    }

    pub fn take(&self) -> Vec<(u32, f32)> {
        std::mem::take(&mut self.log.borrow_mut())
    }
}

impl<C: Comparator> Comparator for RecordingComparator<'_, C> {
    type Query = C::Query;

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn len(&self) -> usize {
        self.inner.len()
    }

    fn vector(&self, id: u32) -> &[f32] {
        self.inner.vector(id)
    }

    fn prepare(&self, q: &[f32], k: usize) -> Result<C::Query> {
        self.inner.prepare(q, k)
    }

    fn query_vector<'a>(&self, ctx: &'a C::Query) -> &'a [f32] {
        self.inner.query_vector(ctx)
    }

    fn compare(&self, ctx: &C::Query, id: u32, tau_sq: f32) -> DcoOutcome {
        self.log.borrow_mut().push((id, tau_sq));
        self.inner.compare(ctx, id, tau_sq)
    }

    fn distance(&self, ctx: &C::Query, id: u32) -> f32 {
        self.inner.distance(ctx, id)
    }

    fn pair_distance(&self, a: u32, b: u32) -> f32 {
        self.inner.pair_distance(a, b)
    }
}

#[derive(Clone, Debug)]
pub struct SampleOptions {
    pub schedule: ScanSchedule,
    /// Comparisons kept per query and k, drawn uniformly.
    pub records_per_query: usize,
    pub seed: u64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self { schedule: ScanSchedule::default(), records_per_query: DEFAULT_RECORDS_PER_QUERY, seed: 0 }
    }
}

/// Samples `n_queries` vectors from the indexed data, runs an exact search
/// for each of them per `k`, and featurizes every comparison it made.
///
/// `spaces` must be indexed the same way as `index`. PCA samples are produced
/// at every scheduled depth (including `D`) when a PCA model is present, PQ
/// samples when a codebook is.
pub fn gen_training_samples<I: AnnIndex + Sync>(
    index: &I,
    spaces: &VectorSpaces,
    ks: &[usize],
    n_queries: usize,
    params: &SearchParams,
    opts: &SampleOptions,
) -> Result<TrainingSet> {
    let dim = spaces.dim();
    if n_queries < MIN_QUERIES {
        return Err(Error::Config(format!("training needs at least {MIN_QUERIES} queries, got {n_queries}")));
    }
    if n_queries > spaces.len() {
        return Err(Error::Config(format!(
            "{n_queries} training queries requested from {} vectors",
            spaces.len()
        )));
    }
    let mut ids: Vec<u32> = (0..spaces.len() as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (picked, _) = ids.partial_shuffle(&mut rng, n_queries);
    let mut picked = picked.to_vec();
    picked.sort_unstable();
    let queries = spaces.raw().subset(&picked)?;
    let sched = opts.schedule.clamped(dim);
    let all_depths = sched.depths(dim);
    let depths = &all_depths[..];
    let fd = spaces.dco(StrategyKind::FdScanning, &DcoConfig { schedule: sched, ..Default::default() })?;
    let pca = spaces.artifacts().pca.clone();
    let pca_store = match pca {
        Some(_) => Some(spaces.pca_store()?),
        None => None,
    };
    let pq = spaces.artifacts().pq.clone();
    let codes = match pq {
        Some(_) => Some(spaces.pq_codes()?),
        None => None,
    };

    let per_query: Vec<Result<TrainingSet>> = (0..queries.len())
        .into_par_iter()
        .map(|qi| {
            let q = queries.row(qi);
            let q_rot = match &pca {
                Some(p) => Some(apply_rotation(p.as_ref(), q, true)?),
                None => None,
            };
            let lut = match &pq {
                Some(cb) => Some(cb.lookup_table(q)?),
                None => None,
            };
            let mut out = TrainingSet::default();
            for &k in ks {
                if k > fd.len() {
                    return Err(Error::OutOfRange(format!("k = {k} with {} vectors", fd.len())));
                }
                let rec = RecordingComparator::new(&fd);
                let ctx = fd.prepare(q, k)?;
                index.search(&rec, &ctx, &SearchParams { k, ..*params })?;
                let mut log: Vec<(u32, f32)> = rec.take().into_iter().filter(|(_, t)| t.is_finite()).collect();
                if log.len() > opts.records_per_query {
                    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ ((qi as u64) << 20) ^ k as u64);
                    log.shuffle(&mut rng);
                    log.truncate(opts.records_per_query);
                    log.sort_by_key(|r| r.0);
                }
                for (id, tau_sq) in log {
                    let above = fd.distance(&ctx, id) > tau_sq;
                    if let (Some(store), Some(qr)) = (&pca_store, &q_rot) {
                        let o = store.row(id as usize);
                        let mut acc = ScanAccumulator::new(0);
                        for &d in depths {
                            acc.advance(o, qr, d);
                            out.pca.push(TrainingSample {
                                query: qi as u32,
                                k,
                                d,
                                features: ddcpca_features(acc.value(), tau_sq, d, dim).to_vec(),
                                above,
                            });
                        }
                    }
                    if let (Some(codes), Some(lut)) = (&codes, &lut) {
                        out.opq.push(TrainingSample {
                            query: qi as u32,
                            k,
                            d: 0,
                            features: ddcopq_features(lut.distance(codes.get(id as usize)), tau_sq).to_vec(),
                            above,
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect();

    let mut set = TrainingSet::default();
    for r in per_query {
        let r = r?;
        set.pca.extend(r.pca);
        set.opq.extend(r.opq);
    }
    let key = |s: &TrainingSample| (s.query, s.k, s.d);
    set.pca.sort_by_key(key);
    set.opq.sort_by_key(key);
    Ok(set)
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    /// Loss weight of a within sample relative to an above sample.
    pub reject_weight: f64,
    pub held_out_fraction: f64,
    /// False-reject rate the bias is calibrated to on the training split.
    pub target_frr: f64,
    /// Held-out false-reject rate above which training falls back.
    pub max_frr: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            reject_weight: 5.0,
            held_out_fraction: 0.2,
            target_frr: 0.05,
            max_frr: 0.10,
            iterations: 400,
            learning_rate: 0.5,
            l2: 1e-4,
            seed: 0,
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean weighted cross-entropy plus `l2/2 ‖w‖²`; `x` is row-major with
/// `w.len()` columns, `y` true for above.
pub fn logistic_loss(w: &[f64], b: f64, x: &[f64], y: &[bool], sample_w: &[f64], l2: f64) -> f64 {
    let f = w.len();
    let mut total = 0.0;
    let mut wsum = 0.0;
    for ((row, &label), &sw) in x.chunks_exact(f).zip(y).zip(sample_w) {
        let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        // log(1 + e^{-z}) for positives, log(1 + e^{z}) for negatives, stably.
        let m = if label { -z } else { z };
        total += sw * (m.max(0.0) + (-m.abs()).exp().ln_1p());
        wsum += sw;
    }
    total / wsum + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

/// Gradient of [`logistic_loss`] with respect to `(w, b)`.
pub fn logistic_gradient(w: &[f64], b: f64, x: &[f64], y: &[bool], sample_w: &[f64], l2: f64) -> (Vec<f64>, f64) {
    let f = w.len();
    let mut gw = vec![0.0; f];
    let mut gb = 0.0;
    let mut wsum = 0.0;
    for ((row, &label), &sw) in x.chunks_exact(f).zip(y).zip(sample_w) {
        let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let r = sw * (sigmoid(z) - if label { 1.0 } else { 0.0 });
        for (g, a) in gw.iter_mut().zip(row) {
            *g += r * a;
        }
        gb += r;
        wsum += sw;
    }
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / wsum + l2 * wi;
    }
    (gw, gb / wsum)
}

/// Fits one weighted logistic model, calibrates its bias for the false-reject
/// target, and reports held-out metrics.
///
/// Falls back to [`LinearModel::always_accept`] when the held-out
/// false-reject rate still exceeds `max_frr`.
pub fn fit_linear(samples: &[TrainingSample], opts: &FitOptions) -> Result<LinearModel> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "{} samples is below the minimum of {MIN_SAMPLES}",
            samples.len()
        )));
    }
    let f = samples[0].features.len();
    if f == 0 || samples.iter().any(|s| s.features.len() != f) {
        return Err(Error::InvalidArgument("samples must share a non-empty feature layout".into()));
    }
    let n_above = samples.iter().filter(|s| s.above).count();
    if n_above == 0 || n_above == samples.len() {
        return Err(Error::InvalidArgument("training samples contain a single class".into()));
    }
    if samples.len() < RECOMMENDED_SAMPLES {
        warn!("training on {} samples (fewer than {RECOMMENDED_SAMPLES})", samples.len());
    }

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    let n_held = ((samples.len() as f64 * opts.held_out_fraction).round() as usize).clamp(1, samples.len() - 1);
    let (held, train) = order.split_at(n_held);

    // Standardize on the training split.
    let mut mean = vec![0.0f64; f];
    let mut std = vec![0.0f64; f];
    for &i in train {
        for (m, &v) in mean.iter_mut().zip(&samples[i].features) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= train.len() as f64);
    for &i in train {
        for ((s, &v), m) in std.iter_mut().zip(&samples[i].features).zip(&mean) {
            *s += (v as f64 - m).powi(2);
        }
    }
    let active: Vec<bool> = std.iter().map(|s| (s / train.len() as f64).sqrt() > 1e-12).collect();
    for (s, a) in std.iter_mut().zip(&active) {
        *s = if *a { (*s / train.len() as f64).sqrt() } else { 1.0 };
    }
    let standardize = |i: usize, out: &mut Vec<f64>| {
        for j in 0..f {
            out.push(if active[j] { (samples[i].features[j] as f64 - mean[j]) / std[j] } else { 0.0 });
        }
    };
    let mut x = Vec::with_capacity(train.len() * f);
    for &i in train {
        standardize(i, &mut x);
    }
    let y: Vec<bool> = train.iter().map(|&i| samples[i].above).collect();
    let sw: Vec<f64> = y.iter().map(|&a| if a { 1.0 } else { opts.reject_weight }).collect();

    let mut w = vec![0.0f64; f];
    let mut b = 0.0f64;
    for _ in 0..opts.iterations {
        let (gw, gb) = logistic_gradient(&w, b, &x, &y, &sw, opts.l2);
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= opts.learning_rate * g;
        }
        b -= opts.learning_rate * gb;
    }

    // Back to raw feature units.
    let raw_w: Vec<f64> = (0..f).map(|j| if active[j] { w[j] / std[j] } else { 0.0 }).collect();
    let mut raw_b = b - (0..f).map(|j| raw_w[j] * mean[j]).sum::<f64>();
    let margin = |i: usize| -> f64 {
        samples[i].features.iter().zip(&raw_w).map(|(&v, c)| v as f64 * c).sum::<f64>()
    };

    // Cap the bias so at most `target_frr` of training within samples score positive.
    let mut within: Vec<f64> = train.iter().filter(|&&i| !samples[i].above).map(|&i| margin(i)).collect();
    within.sort_by(f64::total_cmp);
    let idx = (((1.0 - opts.target_frr) * within.len() as f64).ceil() as usize).clamp(1, within.len()) - 1;
    raw_b = raw_b.min(-within[idx]);

    let weights: Vec<f32> = raw_w.iter().map(|&v| v as f32).collect();
    let mut model = LinearModel {
        weights,
        bias: raw_b as f32,
        trained_k: samples[0].k,
        trained_d: None,
        held_out_accuracy: 0.0,
        held_out_false_reject: 0.0,
        majority_baseline: 0.0,
        train_samples: train.len(),
        fallback: false,
    };
    let (acc, frr, base) = evaluate(&model, held.iter().map(|&i| &samples[i]));
    model.held_out_accuracy = acc;
    model.held_out_false_reject = frr;
    model.majority_baseline = base;
    if frr as f64 > opts.max_frr {
        warn!("held-out false-reject rate {frr:.3} exceeds {}; using an always-accept model", opts.max_frr);
        let mut fb = LinearModel::always_accept(f);
        let (acc, frr, base) = evaluate(&fb, held.iter().map(|&i| &samples[i]));
        fb.held_out_accuracy = acc;
        fb.held_out_false_reject = frr;
        fb.majority_baseline = base;
        fb.train_samples = train.len();
        return Ok(fb);
    }
    Ok(model)
}

/// `(accuracy, false-reject rate, majority-class accuracy)`.
pub fn evaluate<'a>(m: &LinearModel, samples: impl Iterator<Item = &'a TrainingSample>) -> (f32, f32, f32) {
    let (mut n, mut correct, mut within, mut false_rej, mut above) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for s in samples {
        let pred = m.predicts_above(&s.features);
        n += 1;
        correct += (pred == s.above) as usize;
        if s.above {
            above += 1;
        } else {
            within += 1;
            false_rej += pred as usize;
        }
    }
    if n == 0 {
        return (0.0, 0.0, 0.0);
    }
    let frr = if within == 0 { 0.0 } else { false_rej as f32 / within as f32 };
    (correct as f32 / n as f32, frr, above.max(within) as f32 / n as f32)
}

/// Fits every `M_{k,d}` and `M_k` the sample set supports.
pub fn fit_models(set: &TrainingSet, opts: &FitOptions) -> Result<ModelSet> {
    let mut out = ModelSet::default();
    let mut groups: BTreeMap<(usize, usize), Vec<TrainingSample>> = BTreeMap::new();
    for s in &set.pca {
        groups.entry((s.k, s.d)).or_default().push(s.clone());
    }
    for ((k, d), g) in groups {
        let mut m = fit_or_fallback(&g, opts, 3)?;
        m.trained_k = k;
        m.trained_d = Some(d);
        out.insert_pca(k, d, m);
    }
    let mut groups: BTreeMap<usize, Vec<TrainingSample>> = BTreeMap::new();
    for s in &set.opq {
        groups.entry(s.k).or_default().push(s.clone());
    }
    for (k, g) in groups {
        let mut m = fit_opq_model(&g, opts).or_else(|e| fallback_on_single_class(e, &g, 2))?;
        m.trained_k = k;
        out.insert_opq(k, m);
    }
    Ok(out)
}

/// `M_k` on `(PQ distance, τ²)`.
pub fn fit_opq_model(samples: &[TrainingSample], opts: &FitOptions) -> Result<LinearModel> {
    fit_linear(samples, opts)
}

fn fit_or_fallback(g: &[TrainingSample], opts: &FitOptions, nfeat: usize) -> Result<LinearModel> {
    fit_linear(g, opts).or_else(|e| fallback_on_single_class(e, g, nfeat))
}

/// One class only: an always-accept model when everything is within, an
/// error otherwise.
fn fallback_on_single_class(e: Error, g: &[TrainingSample], nfeat: usize) -> Result<LinearModel> {
    if g.len() >= MIN_SAMPLES && g.iter().all(|s| !s.above) {
        warn!("all {} samples are within; using an always-accept model", g.len());
        let mut m = LinearModel::always_accept(nfeat);
        m.train_samples = g.len();
        return Ok(m);
    }
    Err(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn separable(n: usize, seed: u64) -> Vec<TrainingSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let tau: f32 = rng.gen_range(1.0..2.0);
                let dist: f32 = rng.gen_range(0.0..4.0);
                TrainingSample { query: i as u32, k: 10, d: 0, features: vec![dist, tau], above: dist > tau }
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 50;
        let x: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        let sw: Vec<f64> = y.iter().map(|&a| if a { 1.0 } else { 5.0 }).collect();
        let w = vec![0.3, -0.7, 1.1];
        let b = 0.2;
        let (gw, gb) = logistic_gradient(&w, b, &x, &y, &sw, 1e-3);
        let h = 1e-6;
        for j in 0..3 {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += h;
            wm[j] -= h;
            let num = (logistic_loss(&wp, b, &x, &y, &sw, 1e-3) - logistic_loss(&wm, b, &x, &y, &sw, 1e-3)) / (2.0 * h);
            assert!((num - gw[j]).abs() < 1e-6, "{num} vs {}", gw[j]);
        }
        let num = (logistic_loss(&w, b + h, &x, &y, &sw, 1e-3) - logistic_loss(&w, b - h, &x, &y, &sw, 1e-3)) / (2.0 * h);
        assert!((num - gb).abs() < 1e-6);
    }

    #[test]
    fn learns_a_threshold_rule() {
        let samples = separable(4000, 1);
        let m = fit_linear(&samples, &FitOptions::default()).unwrap();
        assert!(!m.fallback);
        assert!(m.held_out_accuracy > 0.9, "{m:?}");
        assert!(m.held_out_false_reject <= 0.10);
        assert!(m.weights[0] > 0.0 && m.weights[1] < 0.0);
    }

    #[test]
    fn rejects_tiny_or_one_class_sets() {
        assert!(fit_linear(&separable(150, 2), &FitOptions::default()).is_err());
        let mut s = separable(500, 3);
        s.iter_mut().for_each(|x| x.above = true);
        assert!(fit_linear(&s, &FitOptions::default()).is_err());
    }

    #[test]
    fn noise_labels_fall_back_or_stay_conservative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<TrainingSample> = (0..2000)
            .map(|i| TrainingSample {
                query: i,
                k: 1,
                d: 0,
                features: vec![rng.gen(), rng.gen()],
                above: rng.gen_bool(0.5),
            })
            .collect();
        let m = fit_linear(&samples, &FitOptions::default()).unwrap();
        assert!(m.fallback || m.held_out_false_reject <= 0.10);
    }

    #[test]
    fn model_set_round_trip() {
        let mut set = ModelSet::default();
        let m = fit_linear(&separable(1000, 6), &FitOptions::default()).unwrap();
        set.insert_opq(20, m.clone());
        let mut m3 = LinearModel::always_accept(3);
        m3.weights = vec![1.0, -1.0, 0.5];
        set.insert_pca(20, 32, m3.clone());
        set.insert_pca(100, 32, m3);
        let back = ModelSet::read_from(set.to_bytes().unwrap().as_slice()).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.pca_ks(), vec![20, 100]);
        assert!(set.manifest().lines().count() == 4);
    }

    #[test]
    fn csv_layout() {
        let s = vec![TrainingSample { query: 0, k: 20, d: 32, features: vec![1.5, 2.0, 0.25], above: true }];
        assert_eq!(samples_to_csv(&s), "k,d,f0,f1,f2,label\n20,32,1.5,2,0.25,1\n");
    }
}
