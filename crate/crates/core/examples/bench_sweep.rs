//! A sweep over beam widths for a few strategies, printed as CSV.

use std::sync::Arc;

use dcokit::bench::{prepare_artifacts, records_to_csv, run_sweep, Bench, BenchConfig, IndexOptions, PrepareOptions};
use dcokit::dco::StrategyKind;
use dcokit::index::HnswParams;
use dcokit::io::{gen_synthetic, Distribution, SyntheticSpec};

fn main() -> dcokit::Result<()> {
    let all = gen_synthetic(&SyntheticSpec::new(8_100, 128, Distribution::SiftLike { clusters: 64 }, 41))?;
    let base = Arc::new(all.prefix(8_000)?);
    let queries = all.subset(&(8_000..8_100).collect::<Vec<u32>>())?;
    let strategies = vec![StrategyKind::FdScanning, StrategyKind::PdScanningPlus, StrategyKind::AdSampling, StrategyKind::Dade];
    let prep = prepare_artifacts(&base, &strategies, &PrepareOptions::default())?;
    let opts = IndexOptions { hnsw: HnswParams { ef_construction: 200, ..Default::default() }, ..Default::default() };
    let bench = Bench::build(base, prep.artifacts, &opts)?;
    let mut cfg = BenchConfig::new(strategies, vec![20, 50, 100], vec![10]);
    cfg.dco = prep.dco;
    cfg.repetitions = 1;
    print!("{}", records_to_csv(&run_sweep(&bench, &queries, None, &cfg)?));
    Ok(())
}
