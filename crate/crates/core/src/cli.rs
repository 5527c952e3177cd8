//! Command-line frontend.
//!
//! Every subcommand reads one TOML config (`--config`), applies `--set
//! key=value` overrides, and writes into the output directory
//! (`output_dir`, or `DCOKIT_OUT` when set). Exit status: 0 on success, 2 on
//! configuration or missing-artifact errors, 1 otherwise.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{
    self, default_sweep, insertion_to_csv, limited_to_csv, phase_seed, prepare_artifacts, records_to_csv,
    train_models, Bench, BenchConfig, BuiltIndex, IndexOptions, LimitedOptions, PrepareOptions, Prepared,
    TrainOptions,
};
use crate::dco::{Artifacts, DcoConfig, DepthTolerances, HypothesisParams, ScanSchedule, StrategyKind};
use crate::error::{Error, Result};
use crate::index::{Hnsw, HnswParams, IndexKind, Ivf, IvfParams, SearchParams};
use crate::io::{gen_synthetic, read_fvecs, read_ivecs, write_ivecs, Distribution, SyntheticSpec};
use crate::quantize::PqCodebook;
use crate::sidecar::Sidecar;
use crate::train::{samples_to_csv, FitOptions, ModelSet, SampleOptions};
use crate::transform::{normalize_dataset, OrthoProjection, PcaModel};
use crate::vector::Dataset;

pub const OUTPUT_DIR_ENV: &str = "DCOKIT_OUT";

pub const PCA_FILE: &str = "pca.dcok";
pub const ORTHO_FILE: &str = "ortho.dcok";
pub const PQ_FILE: &str = "pq.dcok";
pub const DADE_FILE: &str = "dade_eps.json";
pub const INDEX_FILE: &str = "index.dcok";
pub const MODELS_FILE: &str = "models.dcok";
pub const TRUTH_FILE: &str = "truth.ivecs";

#[derive(Parser, Debug)]
#[command(name = "dcokit", version, about = "Distance comparison operations for vector search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    pub config: PathBuf,
    /// Override one config key, e.g. `--set index.kind=ivf`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit PCA, projection and PQ artifacts and calibrate DADE.
    Preprocess(Common),
    /// Build the configured index with exact comparisons.
    Build(Common),
    /// Generate training samples on the built index and fit classifier models.
    Train(Common),
    /// Brute-force ground truth for the query set.
    Groundtruth(Common),
    /// QPS/recall sweep over strategies.
    Bench(Common),
    /// Build on 60% of the data, insert the rest in four batches.
    InsertBench(Common),
    /// Fit artifacts on fractions of the data and evaluate on the full set.
    LimitedData(Common),
    /// Build one graph per strategy and compare recall under exact search.
    BuildBench(Common),
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub index: IndexConfig,
    pub dco: DcoSection,
    pub bench: BenchSection,
    pub train: TrainSection,
    pub limited: LimitedSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            index: IndexConfig::default(),
            dco: DcoSection::default(),
            bench: BenchSection::default(),
            train: TrainSection::default(),
            limited: LimitedSection::default(),
        }
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// fvecs base set; when absent the synthetic section is used.
    pub base: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    /// ivecs truth; defaults to the one `groundtruth` writes.
    pub truth: Option<PathBuf>,
    /// `euclidean`, or `ip` to normalize and search by inner product.
    pub metric: Metric,
    pub synthetic: SyntheticSection,
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Ip,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    /// `gaussian`, `low-rank`, or `sift-like`.
    pub kind: String,
    pub n: usize,
    pub dim: usize,
    pub rank: usize,
    pub clusters: usize,
    pub queries: usize,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self { kind: "gaussian".into(), n: 10_000, dim: 128, rank: 16, clusters: 64, queries: 100 }
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct IndexConfig {
    pub kind: IndexKindName,
    pub m: usize,
    pub ef_construction: usize,
    pub nlist: usize,
    pub kmeans_iterations: usize,
}

#[derive(Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum IndexKindName {
    #[default]
    Hnsw,
    Ivf,
}

impl From<IndexKindName> for IndexKind {
    fn from(k: IndexKindName) -> Self {
        match k {
            IndexKindName::Hnsw => IndexKind::Hnsw,
            IndexKindName::Ivf => IndexKind::Ivf,
        }
    }
}

impl Default for IndexConfig {
    fn default() -> Self {
        let h = HnswParams::default();
        let i = IvfParams::default();
        Self {
            kind: IndexKindName::Hnsw,
            m: h.m,
            ef_construction: h.ef_construction,
            nlist: i.nlist,
            kmeans_iterations: i.iterations,
        }
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DcoSection {
    pub delta0: usize,
    pub delta_d: usize,
    pub epsilon0: f32,
    pub alpha: f32,
    pub m: f32,
    pub dade_pairs: usize,
    pub pq_subspaces: Option<usize>,
    pub pq_bits: usize,
}

impl Default for DcoSection {
    fn default() -> Self {
        let p = HypothesisParams::default();
        let o = PrepareOptions::default();
        Self {
            delta0: 32,
            delta_d: 32,
            epsilon0: p.ads_epsilon0,
            alpha: p.dade_alpha,
            m: p.ddcres_m,
            dade_pairs: o.dade_pairs,
            pq_subspaces: None,
            pq_bits: o.pq_bits,
        }
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub strategies: Vec<String>,
    /// Defaults per index kind when empty.
    pub sweep: Vec<usize>,
    pub k: Vec<usize>,
    pub repetitions: usize,
    pub spot_check: f64,
    /// Sweep point for study commands.
    pub ef_search: usize,
    pub nprobe: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            strategies: vec!["FDScanning".into()],
            sweep: Vec::new(),
            k: vec![20, 100],
            repetitions: 3,
            spot_check: 0.01,
            ef_search: 200,
            nprobe: 16,
        }
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub queries: usize,
    pub k: Vec<usize>,
    pub records_per_query: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { queries: 1000, k: vec![20, 100], records_per_query: crate::train::DEFAULT_RECORDS_PER_QUERY }
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LimitedSection {
    pub fractions: Vec<f64>,
}

impl Default for LimitedSection {
    fn default() -> Self {
        Self { fractions: vec![0.01, 0.1, 1.0] }
    }
}

/// Applies `key=value` to a TOML table. Values parse as TOML, falling back
/// to a bare string.
fn apply_override(root: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not KEY=VALUE")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        table = entry.as_table_mut().ok_or_else(|| Error::Config(format!("{key}: `{p}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<Config> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(format!("config file {}", path.display())),
        _ => Error::Io(e),
    })?;
    parse_config(&text, overrides, path.parent())
}

pub fn parse_config(text: &str, overrides: &[String], base_dir: Option<&Path>) -> Result<Config> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut cfg: Config = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("config: {e}")))?;
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        cfg.output_dir = PathBuf::from(dir);
    }
    if let Some(dir) = base_dir {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut cfg.output_dir);
        for p in [&mut cfg.data.base, &mut cfg.data.queries, &mut cfg.data.truth].into_iter().flatten() {
            fix(p);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.strategies()?;
        if self.bench.k.is_empty() || self.bench.k.contains(&0) {
            return Err(Error::Config("bench.k: values must be >= 1".into()));
        }
        if self.train.k.is_empty() || self.train.k.contains(&0) {
            return Err(Error::Config("train.k: values must be >= 1".into()));
        }
        if self.bench.repetitions == 0 {
            return Err(Error::Config("bench.repetitions must be >= 1".into()));
        }
        if self.dco.delta0 == 0 || self.dco.delta_d == 0 {
            return Err(Error::Config("dco.delta0 and dco.delta_d must be >= 1".into()));
        }
        if self.data.base.is_some() != self.data.queries.is_some() {
            return Err(Error::Config("data.queries: a base file needs a query file".into()));
        }
        if self.data.base.is_none() {
            self.synthetic_spec()?.validate()?;
        }
        Ok(())
    }

    pub fn strategies(&self) -> Result<Vec<StrategyKind>> {
        if self.bench.strategies.is_empty() {
            return Err(Error::Config("bench.strategies: at least one strategy is required".into()));
        }
        self.bench
            .strategies
            .iter()
            .map(|s| s.parse().map_err(|e: Error| Error::Config(format!("bench.strategies: {e}"))))
            .collect()
    }

    fn synthetic_spec(&self) -> Result<SyntheticSpec> {
        let s = &self.data.synthetic;
        let distribution = match s.kind.as_str() {
            "gaussian" | "isotropic" => Distribution::IsotropicGaussian,
            "low-rank" => Distribution::LowRank { rank: s.rank },
            "sift-like" => Distribution::SiftLike { clusters: s.clusters },
            other => {
                return Err(Error::Config(format!(
                    "data.synthetic.kind: unknown `{other}`; valid: gaussian, low-rank, sift-like"
                )))
            }
        };
        Ok(SyntheticSpec::new(s.n + s.queries, s.dim, distribution, phase_seed(self.seed, "data")))
    }

    pub fn index_kind(&self) -> IndexKind {
        self.index.kind.into()
    }

    pub fn index_options(&self) -> IndexOptions {
        IndexOptions {
            kind: self.index_kind(),
            hnsw: HnswParams { m: self.index.m, ef_construction: self.index.ef_construction, seed: phase_seed(self.seed, "hnsw") },
            ivf: IvfParams {
                nlist: self.index.nlist,
                iterations: self.index.kmeans_iterations,
                seed: phase_seed(self.seed, "ivf"),
                ..Default::default()
            },
        }
    }

    pub fn dco_config(&self) -> Result<DcoConfig> {
        Ok(DcoConfig {
            schedule: ScanSchedule::new(self.dco.delta0, self.dco.delta_d)?,
            params: HypothesisParams {
                ads_epsilon0: self.dco.epsilon0,
                dade_alpha: self.dco.alpha,
                ddcres_m: self.dco.m,
                ..Default::default()
            },
        })
    }

    pub fn prepare_options(&self) -> Result<PrepareOptions> {
        Ok(PrepareOptions {
            seed: self.seed,
            pq_subspaces: self.dco.pq_subspaces,
            pq_bits: self.dco.pq_bits,
            dade_pairs: self.dco.dade_pairs,
            dco: self.dco_config()?,
            ..Default::default()
        })
    }

    pub fn search_params(&self, k: usize) -> SearchParams {
        match self.index_kind() {
            IndexKind::Hnsw => SearchParams::hnsw(k, self.bench.ef_search),
            IndexKind::Ivf => SearchParams::ivf(k, self.bench.nprobe),
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            ks: self.train.k.clone(),
            n_queries: self.train.queries,
            search: self.search_params(1),
            sample: SampleOptions {
                schedule: ScanSchedule::new(self.dco.delta0, self.dco.delta_d).unwrap_or_default(),
                records_per_query: self.train.records_per_query,
                seed: phase_seed(self.seed, "train-samples"),
            },
            fit: FitOptions { seed: phase_seed(self.seed, "fit"), ..Default::default() },
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

/// Base and query sets with their content fingerprints.
pub struct Data {
    pub base: Arc<Dataset>,
    pub queries: Dataset,
    pub fingerprints: BTreeMap<String, String>,
}

pub fn load_data(cfg: &Config) -> Result<Data> {
    let mut fingerprints = BTreeMap::new();
    let (base, queries) = match (&cfg.data.base, &cfg.data.queries) {
        (Some(b), Some(q)) => {
            fingerprints.insert(b.display().to_string(), file_sha256(b)?);
            fingerprints.insert(q.display().to_string(), file_sha256(q)?);
            (read_fvecs(b)?, read_fvecs(q)?)
        }
        _ => {
            let all = gen_synthetic(&cfg.synthetic_spec()?)?;
            let n = cfg.data.synthetic.n;
            let base = all.prefix(n)?;
            let ids: Vec<u32> = (n as u32..all.len() as u32).collect();
            (base, all.subset(&ids)?)
        }
    };
    if base.dim() != queries.dim() {
        return Err(Error::Config(format!(
            "data.queries: query dimension {} differs from base dimension {}",
            queries.dim(),
            base.dim()
        )));
    }
    let (base, queries) = match cfg.data.metric {
        Metric::Euclidean => (base, queries),
        Metric::Ip => (normalize_dataset(&base)?, normalize_dataset(&queries)?),
    };
    fingerprints.insert("base".into(), base.fingerprint());
    fingerprints.insert("queries".into(), queries.fingerprint());
    Ok(Data { base: Arc::new(base), queries, fingerprints })
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.display().to_string()),
        _ => Error::Io(e),
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

#[derive(Serialize, Debug)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub git_describe: String,
    pub config: Config,
    pub seeds: BTreeMap<String, u64>,
    pub fingerprints: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

fn seeds(cfg: &Config) -> BTreeMap<String, u64> {
    ["data", "pca", "ortho", "pq", "dade", "hnsw", "ivf", "train-samples", "fit", "spot-check", "limited"]
        .iter()
        .map(|p| (p.to_string(), phase_seed(cfg.seed, p)))
        .chain(std::iter::once(("root".to_string(), cfg.seed)))
        .collect()
}

struct Run<'a> {
    name: &'a str,
    cfg: &'a Config,
    started: f64,
    outputs: Vec<String>,
    fingerprints: BTreeMap<String, String>,
}

impl<'a> Run<'a> {
    fn new(name: &'a str, cfg: &'a Config) -> Result<Self> {
        fs::create_dir_all(&cfg.output_dir)?;
        Ok(Self { name, cfg, started: unix_now(), outputs: Vec::new(), fingerprints: BTreeMap::new() })
    }

    fn write(&mut self, file: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        fs::write(self.cfg.out(file), bytes)?;
        self.outputs.push(file.to_string());
        Ok(())
    }

    fn save<T: Sidecar>(&mut self, file: &str, value: &T) -> Result<()> {
        self.write(file, value.to_bytes()?)
    }

    fn finish(self) -> Result<()> {
        let manifest = RunManifest {
            command: self.name.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            git_describe: git_describe(),
            config: self.cfg.clone(),
            seeds: seeds(self.cfg),
            fingerprints: self.fingerprints,
            outputs: self.outputs,
            started_unix: self.started,
            finished_unix: unix_now(),
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Invariant(e.to_string()))?;
        fs::write(self.cfg.out(&format!("{}.manifest.json", self.name)), json)?;
        Ok(())
    }
}

fn load_artifact<T: Sidecar>(cfg: &Config, file: &str, producer: &str) -> Result<Arc<T>> {
    let path = cfg.out(file);
    if !path.exists() {
        return Err(Error::MissingArtifact(format!("{} (run `{producer}` first)", path.display())));
    }
    Ok(Arc::new(T::load(&path)?))
}

/// Loads what `strategies` need from the output directory.
fn load_prepared(cfg: &Config, strategies: &[StrategyKind]) -> Result<Prepared> {
    let mut art = Artifacts::default();
    let mut dco = cfg.dco_config()?;
    if strategies.iter().any(|k| k.needs_pca()) {
        art.pca = Some(load_artifact::<PcaModel>(cfg, PCA_FILE, "preprocess")?);
    }
    if strategies.iter().any(|k| k.needs_projection()) {
        art.ortho = Some(load_artifact::<OrthoProjection>(cfg, ORTHO_FILE, "preprocess")?);
    }
    if strategies.iter().any(|k| k.needs_pq()) {
        art.pq = Some(load_artifact::<PqCodebook>(cfg, PQ_FILE, "preprocess")?);
    }
    if strategies.contains(&StrategyKind::Dade) {
        dco.params.dade_eps = read_tolerances(&cfg.out(DADE_FILE))?;
    }
    if strategies.iter().any(|k| k.is_classifier()) {
        art.models = Some(load_artifact::<ModelSet>(cfg, MODELS_FILE, "train")?);
    }
    Ok(Prepared { artifacts: art, dco })
}

fn tolerances_json(t: &DepthTolerances) -> String {
    serde_json::json!({ "depths": t.depths(), "eps": t.values() }).to_string()
}

fn read_tolerances(path: &Path) -> Result<DepthTolerances> {
    if !path.exists() {
        return Err(Error::MissingArtifact(format!("{} (run `preprocess` first)", path.display())));
    }
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let parse = |key: &str| -> Result<Vec<f64>> {
        v.get(key)
            .and_then(|a| a.as_array())
            .and_then(|a| a.iter().map(|x| x.as_f64()).collect::<Option<Vec<f64>>>())
            .ok_or_else(|| Error::Format(format!("{}: `{key}` must be a numeric array", path.display())))
    };
    let depths = parse("depths")?.into_iter().map(|d| d as usize).collect();
    let eps = parse("eps")?.into_iter().map(|e| e as f32).collect();
    DepthTolerances::new(depths, eps)
}

fn load_index(cfg: &Config, n: usize) -> Result<BuiltIndex> {
    let index = match cfg.index_kind() {
        IndexKind::Hnsw => BuiltIndex::Hnsw(Arc::unwrap_or_clone(load_artifact::<Hnsw>(cfg, INDEX_FILE, "build")?)),
        IndexKind::Ivf => BuiltIndex::Ivf(Arc::unwrap_or_clone(load_artifact::<Ivf>(cfg, INDEX_FILE, "build")?)),
    };
    use crate::index::AnnIndex;
    if index.len() != n {
        return Err(Error::Config(format!(
            "{} holds {} vectors but the dataset has {n}; rebuild it",
            cfg.out(INDEX_FILE).display(),
            index.len()
        )));
    }
    Ok(index)
}

fn load_truth(cfg: &Config, queries: usize) -> Result<Option<Vec<Vec<u32>>>> {
    let path = cfg.data.truth.clone().unwrap_or_else(|| cfg.out(TRUTH_FILE));
    if !path.exists() {
        return Ok(None);
    }
    let t = read_ivecs(&path)?;
    if t.is_empty() {
        return Ok(None);
    }
    if t.len() != queries {
        return Err(Error::Config(format!("{}: {} rows for {queries} queries", path.display(), t.len())));
    }
    Ok(Some(t))
}

fn cmd_preprocess(cfg: &Config) -> Result<()> {
    let mut run = Run::new("preprocess", cfg)?;
    let data = load_data(cfg)?;
    run.fingerprints = data.fingerprints.clone();
    let all = StrategyKind::ALL.to_vec();
    let prepared = prepare_artifacts(&data.base, &all, &cfg.prepare_options()?)?;
    let a = &prepared.artifacts;
    run.save(PCA_FILE, a.pca.as_deref().expect("PCA fitted"))?;
    run.save(ORTHO_FILE, a.ortho.as_deref().expect("projection drawn"))?;
    run.save(PQ_FILE, a.pq.as_deref().expect("PQ trained"))?;
    run.write(DADE_FILE, tolerances_json(&prepared.dco.params.dade_eps))?;
    run.finish()
}

fn cmd_build(cfg: &Config) -> Result<()> {
    let mut run = Run::new("build", cfg)?;
    let data = load_data(cfg)?;
    run.fingerprints = data.fingerprints.clone();
    let bench = Bench::build(data.base, Artifacts::default(), &cfg.index_options())?;
    match bench.index() {
        BuiltIndex::Hnsw(g) => {
            let audit = g.audit();
            if !audit.passed() {
                warn!("graph audit failed: {audit:?}");
            }
            run.save(INDEX_FILE, g)?;
        }
        BuiltIndex::Ivf(i) => run.save(INDEX_FILE, i)?,
    }
    run.write("build_time_ms.txt", format!("{:.1}\n", bench.build_ms()))?;
    run.finish()
}

fn cmd_train(cfg: &Config) -> Result<()> {
    let mut run = Run::new("train", cfg)?;
    let data = load_data(cfg)?;
    run.fingerprints = data.fingerprints.clone();
    let index = load_index(cfg, data.base.len())?;
    let mut art = Artifacts::default();
    art.pca = Some(load_artifact::<PcaModel>(cfg, PCA_FILE, "preprocess")?);
    art.pq = Some(load_artifact::<PqCodebook>(cfg, PQ_FILE, "preprocess")?);
    let bench = Bench::from_parts(index, data.base, art)?;
    let (models, samples) = train_models(&bench, &cfg.train_options())?;
    run.save(MODELS_FILE, &models)?;
    run.write("models.txt", models.manifest())?;
    run.write("samples_pca.csv", samples_to_csv(&samples.pca))?;
    run.write("samples_opq.csv", samples_to_csv(&samples.opq))?;
    run.finish()
}

fn cmd_groundtruth(cfg: &Config) -> Result<()> {
    let mut run = Run::new("groundtruth", cfg)?;
    let data = load_data(cfg)?;
    run.fingerprints = data.fingerprints.clone();
    let k = cfg.bench.k.iter().copied().max().expect("validated").min(data.base.len());
    let truth = bench::compute_truth(&data.base, &data.queries, k)?;
    write_ivecs(&truth, cfg.out(TRUTH_FILE))?;
    run.outputs.push(TRUTH_FILE.into());
    run.finish()
}

fn cmd_bench(cfg: &Config) -> Result<()> {
    let mut run = Run::new("bench", cfg)?;
    let strategies = cfg.strategies()?;
    let data = load_data(cfg)?;
    run.fingerprints = data.fingerprints.clone();
    let prepared = load_prepared(cfg, &strategies)?;
    let index = load_index(cfg, data.base.len())?;
    let truth = load_truth(cfg, data.queries.len())?;
    let bench = Bench::from_parts(index, data.base, prepared.artifacts)?;
    let sweep = if cfg.bench.sweep.is_empty() { default_sweep(cfg.index_kind()) } else { cfg.bench.sweep.clone() };
    let mut bc = BenchConfig::new(strategies, sweep, cfg.bench.k.clone());
    bc.repetitions = cfg.bench.repetitions;
    bc.spot_check = cfg.bench.spot_check;
    bc.dco = prepared.dco;
    bc.seed = cfg.seed;
    let records = bench::run_sweep(&bench, &data.queries, truth.as_deref(), &bc)?;
    run.write("bench.csv", records_to_csv(&records))?;
    run.finish()
}

fn cmd_insert_bench(cfg: &Config) -> Result<()> {
    let mut run = Run::new("insert-bench", cfg)?;
    let strategies = cfg.strategies()?;
    let data = load_data(cfg)?;
    run.fingerprints = data.fingerprints.clone();
    let prepared = load_prepared(cfg, &strategies)?;
    let k = cfg.bench.k[0];
    let records = bench::measure_insertion(
        &data.base,
        &prepared,
        &strategies,
        cfg.index_kind(),
        cfg.index_options().hnsw,
        &data.queries,
        &SearchParams::hnsw(k, cfg.bench.ef_search),
    )?;
    run.write("insert.csv", insertion_to_csv(&records))?;
    run.finish()
}

fn cmd_build_bench(cfg: &Config) -> Result<()> {
    let mut run = Run::new("build-bench", cfg)?;
    let strategies = cfg.strategies()?;
    let data = load_data(cfg)?;
    run.fingerprints = data.fingerprints.clone();
    let prepared = load_prepared(cfg, &strategies)?;
    let truth = load_truth(cfg, data.queries.len())?;
    let report = bench::measure_construction(
        &data.base,
        &prepared,
        &strategies,
        cfg.index_options().hnsw,
        &data.queries,
        truth.as_deref(),
        &SearchParams::hnsw(cfg.bench.k[0], cfg.bench.ef_search),
    )?;
    run.write("construction.csv", report.to_csv())?;
    run.finish()
}

fn cmd_limited_data(cfg: &Config) -> Result<()> {
    let mut run = Run::new("limited-data", cfg)?;
    let strategies = cfg.strategies()?;
    let data = load_data(cfg)?;
    run.fingerprints = data.fingerprints.clone();
    let truth = load_truth(cfg, data.queries.len())?;
    let full = match load_index(cfg, data.base.len()) {
        Ok(index) => Bench::from_parts(index, data.base.clone(), Artifacts::default())?,
        Err(Error::MissingArtifact(m)) => {
            info!("{m}; building the index now");
            Bench::build(data.base.clone(), Artifacts::default(), &cfg.index_options())?
        }
        Err(e) => return Err(e),
    };
    let k = cfg.bench.k[0];
    let opts = LimitedOptions {
        prepare: cfg.prepare_options()?,
        train: cfg.train_options(),
        index: cfg.index_options(),
        k,
        sweep_value: match cfg.index_kind() {
            IndexKind::Hnsw => cfg.bench.ef_search,
            IndexKind::Ivf => cfg.bench.nprobe,
        },
    };
    let records =
        bench::limited_data_study(&full, &data.queries, truth.as_deref(), &strategies, &cfg.limited.fractions, &opts)?;
    run.write("limited.csv", limited_to_csv(&records))?;
    run.finish()
}

pub fn execute(command: &Command) -> Result<()> {
    let common = match command {
        Command::Preprocess(c)
        | Command::Build(c)
        | Command::Train(c)
        | Command::Groundtruth(c)
        | Command::Bench(c)
        | Command::InsertBench(c)
        | Command::LimitedData(c)
        | Command::BuildBench(c) => c,
    };
    let cfg = load_config(&common.config, &common.overrides)?;
    match command {
        Command::Preprocess(_) => cmd_preprocess(&cfg),
        Command::Build(_) => cmd_build(&cfg),
        Command::Train(_) => cmd_train(&cfg),
        Command::Groundtruth(_) => cmd_groundtruth(&cfg),
        Command::Bench(_) => cmd_bench(&cfg),
        Command::InsertBench(_) => cmd_insert_bench(&cfg),
        Command::LimitedData(_) => cmd_limited_data(&cfg),
        Command::BuildBench(_) => cmd_build_bench(&cfg),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        2
    } else {
        1
    }
}

/// Parses `args` and runs the command, returning the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_and_defaults() {
        let cfg = parse_config(
            "seed = 4\n[bench]\nstrategies = [\"pd\"]\n",
            &["index.kind=ivf".into(), "bench.k=[5]".into(), "dco.alpha=0.1".into()],
            None,
        )
        .unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.index_kind(), IndexKind::Ivf);
        assert_eq!(cfg.bench.k, vec![5]);
        assert_eq!(cfg.dco.alpha, 0.1);
        assert_eq!(cfg.strategies().unwrap(), vec![StrategyKind::PdScanning]);
        assert_eq!(cfg.index.ef_construction, 500);
    }

    #[test]
    fn config_errors_name_the_field() {
        let e = parse_config("[bench]\nstrategies = [\"bogus\"]\n", &[], None).unwrap_err();
        assert!(e.is_config() && e.to_string().contains("bench.strategies") && e.to_string().contains("DDCres"));
        let e = parse_config("[index]\nefc = 3\n", &[], None).unwrap_err();
        assert!(e.is_config() && e.to_string().contains("efc"), "{e}");
        let e = parse_config("", &["bench.k=[0]".into()], None).unwrap_err();
        assert!(e.to_string().contains("bench.k"));
        let e = parse_config("", &["nokey".into()], None).unwrap_err();
        assert!(e.is_config());
        let e = parse_config("[data.synthetic]\nkind = \"low-rank\"\nrank = 500\n", &[], None).unwrap_err();
        assert!(e.to_string().contains("low-rank"), "{e}");
    }

    #[test]
    fn synthetic_queries_are_held_out() {
        let cfg = parse_config("[data.synthetic]\nn = 200\ndim = 8\nqueries = 7\n", &[], None).unwrap();
        let d = load_data(&cfg).unwrap();
        assert_eq!((d.base.len(), d.queries.len()), (200, 7));
        let again = load_data(&cfg).unwrap();
        assert_eq!(d.fingerprints, again.fingerprints);
    }

    #[test]
    fn tolerances_round_trip_through_json() {
        let t = DepthTolerances::new(vec![32, 64], vec![0.5, 0.25]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        fs::write(&p, tolerances_json(&t)).unwrap();
        assert_eq!(read_tolerances(&p).unwrap(), t);
    }
}
