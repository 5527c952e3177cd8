//! IVF partitions, probe counts, and the permuted storage comparators need.

use dcokit::dco::{Artifacts, DcoConfig, StrategyKind, VectorSpaces};
use dcokit::index::{AnnIndex, Ivf, IvfParams, SearchParams};
use dcokit::io::{gen_synthetic, Distribution, SyntheticSpec};
use dcokit::vector::{ground_truth, recall, Metric};

fn main() -> dcokit::Result<()> {
    let all = gen_synthetic(&SyntheticSpec::new(20_050, 64, Distribution::SiftLike { clusters: 128 }, 21))?;
    let base = all.prefix(20_000)?;
    let queries = all.subset(&(20_000..20_050).collect::<Vec<u32>>())?;
    let ivf = Ivf::build(&base, IvfParams { nlist: 128, ..Default::default() })?;
    let sizes = ivf.partition_sizes();
    println!("{} partitions, largest {}, smallest {}", ivf.nlist(), sizes.iter().max().unwrap(), sizes.iter().min().unwrap());

    // Comparators address vectors by their position in the partition layout.
    let spaces = VectorSpaces::new(base.clone(), Artifacts::default())?.permuted(ivf.layout())?;
    let dco = spaces.dco(StrategyKind::PdScanning, &DcoConfig::default_for(64))?;
    let truth = ground_truth(&base, &queries, 10, Metric::Euclidean)?;
    for nprobe in [1, 4, 16, 128] {
        let p = SearchParams::ivf(10, nprobe);
        let mut r = 0.0;
        for (q, t) in queries.rows().zip(&truth) {
            r += recall(&ivf.search(&dco, &dco.prepare(q, 10)?, &p)?.result, t, 10)?;
        }
        println!("nprobe {nprobe:>3}: recall@10 {:.3}", r / queries.len() as f64);
    }
    Ok(())
}
