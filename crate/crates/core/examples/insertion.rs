//! Growing an HNSW graph in batches and tracking recall and graph health.

use std::sync::Arc;

use dcokit::bench::{insertion_to_csv, measure_insertion, prepare_artifacts, PrepareOptions};
use dcokit::dco::StrategyKind;
use dcokit::index::{HnswParams, IndexKind, SearchParams};
use dcokit::io::{gen_synthetic, Distribution, SyntheticSpec};

fn main() -> dcokit::Result<()> {
    let all = gen_synthetic(&SyntheticSpec::new(6_050, 64, Distribution::IsotropicGaussian, 51))?;
    let base = Arc::new(all.prefix(6_000)?);
    let queries = all.subset(&(6_000..6_050).collect::<Vec<u32>>())?;
    let strategies = [StrategyKind::FdScanning, StrategyKind::DdcRes];
    let prep = prepare_artifacts(&base, &strategies, &PrepareOptions::default())?;
    let hnsw = HnswParams { ef_construction: 100, ..Default::default() };
    let recs = measure_insertion(&base, &prep, &strategies, IndexKind::Hnsw, hnsw, &queries, &SearchParams::hnsw(10, 100))?;
    print!("{}", insertion_to_csv(&recs));
    Ok(())
}
