use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::dco::{Artifacts, DcoConfig, StrategyKind, VectorSpaces};
use crate::transform::fit_pca;
use crate::vector::{brute_force_knn, recall, Dataset, Metric};

fn gaussian(n: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dataset::new(dim, (0..n * dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()).unwrap()
}

fn small_params() -> HnswParams {
    HnswParams { m: 8, ef_construction: 64, seed: 3 }
}

fn fd(ds: &Dataset) -> Dco {
    VectorSpaces::new(ds.clone(), Artifacts::default())
        .unwrap()
        .dco(StrategyKind::FdScanning, &DcoConfig::default_for(ds.dim()))
        .unwrap()
}

#[test]
fn single_node_is_the_entry() {
    let ds = gaussian(1, 8, 1);
    let g = Hnsw::build(&fd(&ds), small_params()).unwrap();
    assert_eq!(g.entry_point(), Some(0));
    assert!(g.audit().passed());
    let cmp = fd(&ds);
    let out = g.search(&cmp, &cmp.prepare(ds.row(0), 1).unwrap(), &SearchParams::hnsw(1, 1)).unwrap();
    assert_eq!(out.result.ids, vec![0]);
}

#[test]
fn insert_into_empty_graph() {
    let ds = gaussian(3, 8, 2);
    let empty = Dataset::empty(8);
    let mut cmp = VectorSpaces::new(empty, Artifacts::default())
        .unwrap()
        .dco(StrategyKind::FdScanning, &DcoConfig::default_for(8))
        .unwrap();
    let mut g = Hnsw::empty(8, small_params()).unwrap();
    assert_eq!(g.insert(&mut cmp, ds.row(0)).unwrap(), 0);
    assert_eq!(g.entry_point(), Some(0));
    g.insert(&mut cmp, ds.row(1)).unwrap();
    g.insert(&mut cmp, ds.row(2)).unwrap();
    assert!(g.audit().passed());
    assert!(g.insert(&mut cmp, &[0.0; 3]).is_err());
}

#[test]
fn exhaustive_beam_is_exact() {
    let ds = gaussian(300, 16, 4);
    let cmp = fd(&ds);
    let g = Hnsw::build(&cmp, small_params()).unwrap();
    let audit = g.audit();
    assert!(audit.passed(), "{audit:?}");
    let qs = gaussian(20, 16, 5);
    for q in qs.rows() {
        let ctx = cmp.prepare(q, 10).unwrap();
        let out = g.search(&cmp, &ctx, &SearchParams::hnsw(10, 300)).unwrap();
        let truth = brute_force_knn(&ds, q, 10, Metric::Euclidean).unwrap();
        assert_eq!(recall(&out.result, &truth, 10).unwrap(), 1.0);
        assert!(out.stats.dims_scanned <= 16 * out.stats.invocations);
    }
}

#[test]
fn search_errors() {
    let ds = gaussian(50, 8, 6);
    let cmp = fd(&ds);
    let g = Hnsw::build(&cmp, small_params()).unwrap();
    let ctx = cmp.prepare(ds.row(0), 5).unwrap();
    assert!(g.search(&cmp, &ctx, &SearchParams::hnsw(51, 100)).is_err());
    assert!(g.search(&cmp, &ctx, &SearchParams::hnsw(10, 5)).is_err());
}

#[test]
fn exact_strategies_agree() {
    let ds = gaussian(2000, 64, 7);
    let sp = VectorSpaces::new(ds.clone(), Artifacts { pca: Some(Arc::new(fit_pca(&ds).unwrap())), ..Default::default() })
        .unwrap();
    let cfg = DcoConfig::default();
    let base = sp.dco(StrategyKind::FdScanning, &cfg).unwrap();
    let g = Hnsw::build(&base, HnswParams { m: 8, ef_construction: 100, seed: 1 }).unwrap();
    let qs = gaussian(30, 64, 8);
    let results: Vec<Vec<_>> = [StrategyKind::FdScanning, StrategyKind::PdScanning, StrategyKind::PdScanningPlus]
        .iter()
        .map(|&k| {
            let c = sp.dco(k, &cfg).unwrap();
            qs.rows()
                .map(|q| g.search(&c, &c.prepare(q, 10).unwrap(), &SearchParams::hnsw(10, 50)).unwrap().result)
                .collect()
        })
        .collect();
    assert_eq!(results[0], results[1]);
    assert_eq!(results[0], results[2]);
}

#[test]
fn classifiers_cannot_build() {
    let ds = gaussian(20, 8, 9);
    let mut models = crate::train::ModelSet::default();
    models.insert_opq(5, crate::train::LinearModel::always_accept(2));
    let art = Artifacts {
        pq: Some(Arc::new(crate::quantize::train_pq(&ds, 2, 2, 0).unwrap())),
        models: Some(Arc::new(models)),
        ..Default::default()
    };
    let sp = VectorSpaces::new(ds, art).unwrap();
    let c = sp.dco(StrategyKind::DdcOpq, &DcoConfig::default_for(8)).unwrap();
    assert!(matches!(Hnsw::build(&c, small_params()), Err(Error::Config(_))));
}

#[test]
fn deterministic_and_round_trips() {
    let ds = gaussian(500, 8, 10);
    let a = Hnsw::build(&fd(&ds), small_params()).unwrap();
    let b = Hnsw::build(&fd(&ds), small_params()).unwrap();
    assert_eq!(a, b);
    let bytes = a.to_bytes().unwrap();
    let back = Hnsw::read_from(bytes.as_slice()).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.to_bytes().unwrap(), bytes);
    let mut cut = bytes.clone();
    cut.truncate(bytes.len() - 3);
    assert!(Hnsw::read_from(cut.as_slice()).is_err());
}

#[test]
fn levels_follow_the_geometric_law() {
    let n = 100_000u32;
    let above: usize = (0..n).filter(|&i| level_for(5, i, 16) >= 1).count();
    let frac = above as f64 / n as f64;
    assert!((frac - 1.0 / 16.0).abs() < 0.005, "{frac}");
}

#[test]
fn incremental_matches_full_build_quality() {
    let ds = gaussian(3000, 16, 11);
    let full_cmp = fd(&ds);
    let full = Hnsw::build(&full_cmp, small_params()).unwrap();
    let mut cmp = fd(&ds.prefix(1800).unwrap());
    let mut inc = Hnsw::build(&cmp, small_params()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for id in 1800..3000 {
        inc.insert(&mut cmp, ds.row(id)).unwrap();
        if rng.gen_bool(0.002) {
            assert!(inc.audit().passed());
        }
    }
    assert!(inc.audit().passed());
    let qs = gaussian(50, 16, 12);
    let (mut rf, mut ri) = (0.0, 0.0);
    for q in qs.rows() {
        let truth = brute_force_knn(&ds, q, 10, Metric::Euclidean).unwrap();
        let p = SearchParams::hnsw(10, 40);
        rf += recall(&full.search(&full_cmp, &full_cmp.prepare(q, 10).unwrap(), &p).unwrap().result, &truth, 10).unwrap();
        ri += recall(&inc.search(&cmp, &cmp.prepare(q, 10).unwrap(), &p).unwrap().result, &truth, 10).unwrap();
    }
    assert!((rf - ri).abs() / 50.0 <= 0.03, "{rf} vs {ri}");
}
