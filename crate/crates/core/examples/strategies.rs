//! Every strategy compared against the same thresholds through `VectorSpaces`.

use std::sync::Arc;

use dcokit::dco::{calibrate_dade, Artifacts, DcoConfig, DcoStats, StrategyKind, VectorSpaces};
use dcokit::io::{gen_synthetic, Distribution, SyntheticSpec};
use dcokit::quantize::{default_subspaces, train_pq};
use dcokit::transform::{fit_pca, random_orthogonal};
use dcokit::vector::brute_force_knn;

fn main() -> dcokit::Result<()> {
    let dim = 256;
    let data = gen_synthetic(&SyntheticSpec::new(4000, dim, Distribution::LowRank { rank: 32 }, 3))?;
    let pca = Arc::new(fit_pca(&data)?);
    let artifacts = Artifacts {
        pca: Some(pca.clone()),
        ortho: Some(Arc::new(random_orthogonal(dim, 4)?)),
        pq: Some(Arc::new(train_pq(&data, default_subspaces(dim), 8, 5)?)),
        models: None,
    };
    let spaces = VectorSpaces::new(data.clone(), artifacts)?;
    let mut cfg = DcoConfig::default_for(dim);
    cfg.params.dade_eps = calibrate_dade(spaces.pca_store()?.as_ref(), &pca, &cfg.schedule, 0.05, 20_000, 6)?;

    let q = data.row(0).to_vec();
    let knn = brute_force_knn(&data, &q, 50, dcokit::vector::Metric::Euclidean)?;
    let tau = *knn.dists.last().unwrap();
    let truth: Vec<bool> = (0..data.len()).map(|i| dcokit::vector::sq_dist(data.row(i), &q) <= tau).collect();

    for kind in StrategyKind::ALL.iter().copied().filter(|k| !k.is_classifier()) {
        let dco = spaces.dco(kind, &cfg)?;
        let ctx = dco.prepare(&q, 50)?;
        let mut stats = DcoStats::default();
        let mut missed = 0;
        for id in 0..data.len() {
            let out = dco.compare(&ctx, id as u32, tau);
            stats.record(&out, 0);
            missed += (truth[id] && !out.is_within()) as usize;
        }
        println!("{kind:<12} scan fraction {:.3}  missed {missed}/50", stats.scan_fraction(dim));
    }
    Ok(())
}
