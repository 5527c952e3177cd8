//! Training the DDCpca and DDCopq linear models from index search traces.

use std::sync::Arc;

use dcokit::bench::{prepare_artifacts, train_models, Bench, IndexOptions, PrepareOptions, TrainOptions};
use dcokit::dco::StrategyKind;
use dcokit::index::SearchParams;
use dcokit::io::{gen_synthetic, Distribution, SyntheticSpec};

fn main() -> dcokit::Result<()> {
    let base = Arc::new(gen_synthetic(&SyntheticSpec::new(12_000, 96, Distribution::IsotropicGaussian, 31))?);
    let strategies = [StrategyKind::DdcPca, StrategyKind::DdcOpq];
    let prep = prepare_artifacts(&base, &strategies, &PrepareOptions::default())?;
    let bench = Bench::build(base, prep.artifacts, &IndexOptions::default())?;
    let opts = TrainOptions { ks: vec![10], n_queries: 200, search: SearchParams::hnsw(10, 100), ..Default::default() };
    let (models, samples) = train_models(&bench, &opts)?;
    println!("{} DDCpca samples, {} DDCopq samples", samples.pca.len(), samples.opq.len());
    for (k, d, m) in models.pca_models() {
        println!(
            "DDCpca k={k} d={d:>2}: accuracy {:.3} (majority {:.3}), false rejects {:.3}{}",
            m.held_out_accuracy,
            m.majority_baseline,
            m.held_out_false_reject,
            if m.fallback { ", always-accept fallback" } else { "" }
        );
    }
    for (k, m) in models.opq_models() {
        println!("DDCopq k={k}: accuracy {:.3}, false rejects {:.3}", m.held_out_accuracy, m.held_out_false_reject);
    }
    Ok(())
}
