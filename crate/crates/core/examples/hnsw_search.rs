//! An FD-built HNSW graph searched with several strategies.

use std::sync::Arc;

use dcokit::dco::{Artifacts, DcoConfig, StrategyKind, VectorSpaces};
use dcokit::index::{AnnIndex, Hnsw, HnswParams, SearchParams};
use dcokit::io::{gen_synthetic, Distribution, SyntheticSpec};
use dcokit::transform::{fit_pca, random_orthogonal};
use dcokit::vector::{ground_truth, recall, Dataset, Metric};

fn main() -> dcokit::Result<()> {
    let all = gen_synthetic(&SyntheticSpec::new(10_050, 128, Distribution::SiftLike { clusters: 64 }, 11))?;
    let base = all.prefix(10_000)?;
    let queries = all.subset(&(10_000..10_050).collect::<Vec<u32>>())?;
    let artifacts = Artifacts {
        pca: Some(Arc::new(fit_pca(&base)?)),
        ortho: Some(Arc::new(random_orthogonal(128, 12)?)),
        ..Default::default()
    };
    let spaces = VectorSpaces::new(base.clone(), artifacts)?;
    let cfg = DcoConfig::default_for(128);
    let graph = Hnsw::build(&spaces.dco(StrategyKind::FdScanning, &cfg)?, HnswParams { ef_construction: 200, ..Default::default() })?;
    println!("graph: {} nodes, top level {}, audit passed {}", graph.len(), graph.max_level(), graph.audit().passed());

    let truth = ground_truth(&base, &queries, 10, Metric::Euclidean)?;
    let params = SearchParams::hnsw(10, 100);
    for kind in [StrategyKind::FdScanning, StrategyKind::PdScanningPlus, StrategyKind::AdSampling, StrategyKind::DdcRes] {
        let dco = spaces.dco(kind, &cfg)?;
        let (r, frac) = mean_recall(&graph, &dco, &queries, &truth, &params)?;
        println!("{kind:<12} recall@10 {r:.3}  scan fraction {frac:.3}");
    }
    Ok(())
}

fn mean_recall(
    g: &Hnsw,
    dco: &dcokit::dco::Dco,
    queries: &Dataset,
    truth: &[dcokit::vector::KnnResult],
    p: &SearchParams,
) -> dcokit::Result<(f64, f64)> {
    let (mut r, mut frac) = (0.0, 0.0);
    for (q, t) in queries.rows().zip(truth) {
        let out = g.search(dco, &dco.prepare(q, p.k)?, p)?;
        r += recall(&out.result, t, p.k)?;
        frac += out.stats.scan_fraction(dco.dim());
    }
    Ok((r / queries.len() as f64, frac / queries.len() as f64))
}
