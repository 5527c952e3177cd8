use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::quantize::train_pq;
use crate::transform::{fit_pca, random_orthogonal};
use crate::vector::Dataset;

fn gaussian(n: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dataset::new(dim, (0..n * dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()).unwrap()
}

fn sq64(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
}

fn spaces(ds: &Dataset) -> VectorSpaces {
    let art = Artifacts {
        pca: Some(Arc::new(fit_pca(ds).unwrap())),
        ortho: Some(Arc::new(random_orthogonal(ds.dim(), 7).unwrap())),
        ..Default::default()
    };
    VectorSpaces::new(ds.clone(), art).unwrap()
}

fn const_model(bias: f32, nfeat: usize) -> LinearModel {
    let mut m = LinearModel::always_accept(nfeat);
    m.bias = bias;
    m.fallback = false;
    m
}

fn model_set(dim: usize, k: usize, bias: f32) -> ModelSet {
    let mut set = ModelSet::default();
    for d in ScanSchedule::default().clamped(dim).depths(dim) {
        set.insert_pca(k, d, const_model(bias, 3));
    }
    set.insert_opq(k, const_model(bias, 2));
    set
}

#[test]
fn names_round_trip_and_unknown_lists_valid() {
    for k in StrategyKind::ALL {
        assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
    }
    assert_eq!("PDScanningPlus".parse::<StrategyKind>().unwrap(), StrategyKind::PdScanningPlus);
    let err = "Magic".parse::<StrategyKind>().unwrap_err().to_string();
    assert!(err.contains("DDCopq") && err.contains("FDScanning"), "{err}");
}

#[test]
fn schedule_depths() {
    assert_eq!(ScanSchedule::default().depths(128), vec![32, 64, 96, 128]);
    assert_eq!(ScanSchedule::default().depths(100), vec![32, 64, 96, 100]);
    assert_eq!(ScanSchedule::new(6, 10).unwrap().depths(16), vec![6, 16]);
    assert!(ScanSchedule::new(0, 4).is_err());
    assert!(ScanSchedule::default().validate(16).is_err());
    assert_eq!(ScanSchedule::default().clamped(8).depths(8), vec![8]);
}

#[test]
fn fd_boundaries() {
    let o = [1.0f32, 2.0, 3.0];
    let q = [0.0f32, 0.0, 0.0];
    assert_eq!(fd_scan(&o, &q, 14.0), DcoOutcome::Within { distance: 14.0, dims_scanned: 3 });
    assert_eq!(fd_scan(&o, &q, 0.0), DcoOutcome::Above { dims_scanned: 3 });
    assert_eq!(fd_scan(&o, &o, 0.0), DcoOutcome::Within { distance: 0.0, dims_scanned: 3 });
}

#[test]
fn worked_partial_scan_example() {
    // dis = 15, τ = 11; the first six coordinates already give 12² = 144 > 121.
    let o = [6.0f32, 6.0, 6.0, 6.0, 0.0, 0.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 0.0];
    let q = [0.0f32; 16];
    let sched = ScanSchedule::new(6, 10).unwrap();
    assert_eq!(pd_scan(&o, &q, 121.0, &sched), DcoOutcome::Above { dims_scanned: 6 });
    assert_eq!(pd_scan(&o, &q, 225.0, &sched), DcoOutcome::Within { distance: 225.0, dims_scanned: 16 });
}

#[test]
fn pd_matches_fd_bitwise() {
    let ds = gaussian(400, 100, 1);
    let sched = ScanSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for p in ds.as_slice().chunks_exact(200) {
        let (o, q) = p.split_at(100);
        let tau = sq64(o, q) as f32 * rng.gen_range(0.3f32..1.7);
        let fd = fd_scan(o, q, tau);
        let pd = pd_scan(o, q, tau, &sched);
        assert_eq!(fd.is_within(), pd.is_within());
        if let (Some(a), Some(b)) = (fd.distance(), pd.distance()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(pd.dims_scanned() <= 100);
    }
}

#[test]
fn first_block_over_threshold_stops_at_delta0() {
    let o = vec![10.0f32; 64];
    let q = vec![0.0f32; 64];
    assert_eq!(pd_scan(&o, &q, 1.0, &ScanSchedule::default()), DcoOutcome::Above { dims_scanned: 32 });
}

#[test]
fn ads_test_cases() {
    assert_eq!(ads_test(0.0, 5, 128, 1.0, 2.1).unwrap(), Verdict::Continue);
    assert!(ads_test(1.0, 0, 128, 1.0, 2.1).is_err());
    assert!(ads_test(1.0, 129, 128, 1.0, 2.1).is_err());
    // At d = D the estimate is the exact distance.
    let slack = (1.0f32 + 2.1 / 128f32.sqrt()).powi(2);
    assert_eq!(ads_test(10.0 * slack * 0.99, 128, 128, 10.0, 2.1).unwrap(), Verdict::Continue);
    assert_eq!(ads_test(10.0 * slack * 1.01, 128, 128, 10.0, 2.1).unwrap(), Verdict::Reject);
}

#[test]
fn context_tables_invariants() {
    let ds = gaussian(2000, 64, 3);
    let sp = spaces(&ds);
    let mut cfg = DcoConfig::default();
    let pca = sp.artifacts().pca.clone().unwrap();
    cfg.params.dade_eps =
        calibrate_dade(&sp.pca_store().unwrap(), &pca, &cfg.schedule, 0.05, 5000, 1).unwrap();
    let q = ds.row(5);
    let res = sp.dco(StrategyKind::DdcRes, &cfg).unwrap().prepare(q, 10).unwrap();
    let tv = res.tail_var();
    assert_eq!(tv.len(), 65);
    assert_eq!(tv[64], 0.0);
    assert!(tv.windows(2).all(|w| w[0] >= w[1]));
    let dade = sp.dco(StrategyKind::Dade, &cfg).unwrap().prepare(q, 10).unwrap();
    let sc = dade.scale();
    assert_eq!(sc[64], 1.0);
    assert!(sc[1..].iter().all(|&s| s >= 1.0));
    let prefix = pca.eigen_prefix();
    for d in 1..64 {
        assert!(((sc[d] as f64) - prefix[64] / prefix[d]).abs() < 1e-4 * sc[d] as f64);
    }
    // Sample eigenvalues of isotropic data spread out, so the top half carries a bit more.
    assert!(sc[32] > 1.5 && sc[32] <= 2.0, "{}", sc[32]);
}

#[test]
fn hypothesis_tests_are_exact_at_full_depth() {
    let ds = gaussian(500, 64, 4);
    let sp = spaces(&ds);
    let store = sp.pca_store().unwrap();
    let cfg = DcoConfig::default();
    let dco = sp.dco(StrategyKind::DdcRes, &cfg).unwrap();
    for i in 0..50 {
        let ctx = dco.prepare(ds.row(i), 10).unwrap();
        let o = store.row(i + 100);
        let exact = sq64(o, ctx.scan()) as f32;
        let cross: f32 = o.iter().zip(ctx.scan()).map(|(a, b)| a * b).sum();
        let norms = (o.iter().map(|x| x * x).sum(), ctx.scan().iter().map(|x| x * x).sum());
        let est = ddcres_partial_estimate(cross, norms.0, norms.1);
        assert!((est - exact).abs() <= 1e-3 * exact);
        assert_eq!(ddcres_test(cross, 64, &ctx, exact * 1.01, 3.0, norms).unwrap(), Verdict::Continue);
        assert_eq!(ddcres_test(cross, 64, &ctx, exact * 0.99, 3.0, norms).unwrap(), Verdict::Reject);
    }
}

#[test]
fn ddcres_huge_m_never_rejects_early() {
    let ds = gaussian(300, 64, 5);
    let sp = spaces(&ds);
    let mut cfg = DcoConfig::default();
    cfg.params.ddcres_m = 1e12;
    let dco = sp.dco(StrategyKind::DdcRes, &cfg).unwrap();
    let ctx = dco.prepare(ds.row(0), 10).unwrap();
    for id in 1..300 {
        let out = dco.compare(&ctx, id, 1e-3);
        assert_eq!(out.dims_scanned(), 64);
    }
}

#[test]
fn strategies_fail_fast_without_artifacts() {
    let ds = gaussian(50, 64, 6);
    let bare = VectorSpaces::new(ds.clone(), Artifacts::default()).unwrap();
    let cfg = DcoConfig::default();
    for k in StrategyKind::ALL {
        let r = bare.dco(k, &cfg);
        if matches!(k, StrategyKind::FdScanning | StrategyKind::PdScanning) {
            assert!(r.is_ok());
        } else {
            assert!(matches!(r, Err(Error::MissingArtifact(_))), "{k}");
        }
    }
    // DADE without calibrated tolerances.
    assert!(matches!(spaces(&ds).dco(StrategyKind::Dade, &cfg), Err(Error::MissingArtifact(_))));
}

#[test]
fn constant_classifiers() {
    let ds = gaussian(400, 64, 7);
    let pq = train_pq(&ds, 8, 4, 1).unwrap();
    let mut art = spaces(&ds).artifacts().clone();
    art.pq = Some(Arc::new(pq));
    let cfg = DcoConfig::default();
    let accept = VectorSpaces::new(
        ds.clone(),
        Artifacts { models: Some(Arc::new(model_set(64, 10, -1.0))), ..art.clone() },
    )
    .unwrap();
    let reject =
        VectorSpaces::new(ds.clone(), Artifacts { models: Some(Arc::new(model_set(64, 10, 1.0))), ..art }).unwrap();
    let q = ds.row(0);
    for kind in [StrategyKind::DdcPca, StrategyKind::DdcOpq] {
        let a = accept.dco(kind, &cfg).unwrap();
        let r = reject.dco(kind, &cfg).unwrap();
        let (ca, cr) = (a.prepare(q, 10).unwrap(), r.prepare(q, 10).unwrap());
        assert!(a.prepare(q, 20).is_err(), "no model for k = 20");
        for id in 1..400 {
            let tau = 100.0;
            let oa = a.compare(&ca, id, tau);
            assert_eq!(oa.is_within(), a.distance(&ca, id) <= tau);
            assert_eq!(oa.dims_scanned(), 64);
            let expect = if kind == StrategyKind::DdcPca { 32 } else { 0 };
            assert_eq!(r.compare(&cr, id, tau), DcoOutcome::Above { dims_scanned: expect });
        }
    }
    // The free-function forms agree.
    let models = model_set(64, 10, 1.0);
    let out = ddcpca_compare(ds.row(1), ds.row(2), 1.0, 10, &models, &ScanSchedule::default()).unwrap();
    assert_eq!(out, DcoOutcome::Above { dims_scanned: 32 });
    assert!(ddcpca_compare(ds.row(1), ds.row(2), 1.0, 99, &models, &ScanSchedule::default()).is_err());
}

#[test]
fn infinite_threshold_is_a_full_scan() {
    let ds = gaussian(100, 64, 8);
    let sp = spaces(&ds);
    let mut cfg = DcoConfig::default();
    cfg.params.dade_eps = calibrate_dade(
        &sp.pca_store().unwrap(),
        sp.artifacts().pca.as_ref().unwrap(),
        &cfg.schedule,
        0.05,
        2000,
        3,
    )
    .unwrap();
    for kind in [
        StrategyKind::FdScanning,
        StrategyKind::PdScanning,
        StrategyKind::PdScanningPlus,
        StrategyKind::AdSampling,
        StrategyKind::Dade,
        StrategyKind::DdcRes,
    ] {
        let dco = sp.dco(kind, &cfg).unwrap();
        let ctx = dco.prepare(ds.row(3), 5).unwrap();
        let out = dco.compare(&ctx, 9, f32::INFINITY);
        assert_eq!(out.dims_scanned(), 64);
        assert!((out.distance().unwrap() as f64 - sq64(ds.row(9), ds.row(3))).abs() < 1e-3 * sq64(ds.row(9), ds.row(3)));
    }
}

#[test]
fn pd_plus_prunes_rank_one_data_at_first_block() {
    // All variance sits on one direction, far from the query.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dir: Vec<f32> = (0..64).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    let rows: Vec<Vec<f32>> = (0..300)
        .map(|i| {
            let t = i as f32 - 150.0;
            dir.iter().map(|&u| t * u + rng.gen_range(-1e-3..1e-3)).collect()
        })
        .collect();
    let ds = Dataset::from_rows(&rows).unwrap();
    let sp = spaces(&ds);
    let dco = sp.dco(StrategyKind::PdScanningPlus, &DcoConfig::default()).unwrap();
    let ctx = dco.prepare(ds.row(0), 5).unwrap();
    let out = dco.compare(&ctx, 299, 1.0);
    assert_eq!(out, DcoOutcome::Above { dims_scanned: 32 });
}

#[test]
fn push_extends_every_store() {
    let ds = gaussian(200, 64, 10);
    let sp = spaces(&ds);
    let mut dco = sp.dco(StrategyKind::DdcRes, &DcoConfig::default()).unwrap();
    let v: Vec<f32> = ds.row(7).iter().map(|x| x + 0.01).collect();
    let id = dco.push(&v).unwrap();
    assert_eq!(id, 200);
    let ctx = dco.prepare(&v, 5).unwrap();
    let out = dco.compare(&ctx, id, f32::INFINITY);
    assert!(out.distance().unwrap() < 1e-6);
    let near = dco.compare(&ctx, 7, f32::INFINITY).distance().unwrap();
    assert!((near - 64.0 * 1e-4).abs() < 1e-4, "{near}");
    assert!(dco.push(&[1.0]).is_err());
    assert_eq!(sp.len(), 200, "shared spaces stay untouched");
}

#[test]
fn dade_calibration_controls_violation_rate() {
    let ds = gaussian(6000, 128, 11);
    let sp = spaces(&ds);
    let store = sp.pca_store().unwrap();
    let pca = sp.artifacts().pca.clone().unwrap();
    let sched = ScanSchedule::default();
    let tol = calibrate_dade(&store, &pca, &sched, 0.05, 20_000, 5).unwrap();
    assert_eq!(tol.depths(), &[32, 64, 96]);
    let scale = engine::dade_scale(&pca);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for (&d, &eps) in tol.depths().iter().zip(tol.values()) {
        let mut violations = 0;
        let trials = 5000;
        for _ in 0..trials {
            let (i, j) = (rng.gen_range(0..6000), rng.gen_range(0..6000));
            if i == j {
                continue;
            }
            let (a, b) = (store.row(i), store.row(j));
            let partial = sq64(&a[..d], &b[..d]);
            let full = sq64(a, b);
            if (scale[d] as f64 * partial).sqrt() > (1.0 + eps as f64) * full.sqrt() {
                violations += 1;
            }
        }
        assert!(violations as f64 / trials as f64 <= 0.06, "depth {d}: {violations}");
    }
}

/// Fraction of truly-within triples an approximate strategy rejects.
fn false_reject_rate(kind: StrategyKind, cfg: &DcoConfig, sp: &VectorSpaces, trials: usize) -> f64 {
    let dco = sp.dco(kind, cfg).unwrap();
    let raw = sp.raw();
    let n = raw.len();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut rejected = 0;
    for _ in 0..trials {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let ctx = dco.prepare(raw.row(i), 10).unwrap();
        let exact = dco.distance(&ctx, j as u32);
        let tau = exact * rng.gen_range(1.0f32..1.2) + 1e-6;
        if !dco.compare(&ctx, j as u32, tau).is_within() {
            rejected += 1;
        }
    }
    rejected as f64 / trials as f64
}

#[test]
fn hypothesis_false_reject_rates_on_gaussian_data() {
    let ds = gaussian(4000, 128, 12);
    let sp = spaces(&ds);
    let mut cfg = DcoConfig::default();
    let ads = false_reject_rate(StrategyKind::AdSampling, &cfg, &sp, 10_000);
    assert!(ads <= 0.01, "ADSampling {ads}");
    let res = false_reject_rate(StrategyKind::DdcRes, &cfg, &sp, 10_000);
    assert!(res <= 0.005, "DDCres {res}");
    cfg.params.dade_eps = calibrate_dade(
        &sp.pca_store().unwrap(),
        sp.artifacts().pca.as_ref().unwrap(),
        &cfg.schedule,
        0.05,
        DADE_CALIBRATION_PAIRS,
        2,
    )
    .unwrap();
    let dade = false_reject_rate(StrategyKind::Dade, &cfg, &sp, 10_000);
    assert!(dade <= 0.06, "DADE {dade}");
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn pair(dim: usize) -> impl Strategy<Value = (Vec<f32>, Vec<f32>, f32)> {
        (
            proptest::collection::vec(-50.0f32..50.0, dim),
            proptest::collection::vec(-50.0f32..50.0, dim),
            0.0f32..2.0,
        )
    }

    proptest! {
        #[test]
        fn exact_scans_agree_with_oracle((o, q, f) in pair(48)) {
            let exact = crate::vector::sq_dist(&o, &q);
            let tau = exact * f;
            let sched = ScanSchedule::new(8, 8).unwrap();
            let fd = fd_scan(&o, &q, tau);
            let pd = pd_scan(&o, &q, tau, &sched);
            prop_assert_eq!(fd.is_within(), exact <= tau);
            prop_assert_eq!(pd.is_within(), exact <= tau);
            prop_assert_eq!(fd.dims_scanned(), 48);
            prop_assert!(pd.dims_scanned() <= 48);
            if pd.is_within() {
                prop_assert_eq!(pd.dims_scanned(), 48);
                prop_assert_eq!(pd.distance(), Some(exact));
            }
        }

        #[test]
        fn within_is_monotone_in_threshold((o, q, f) in pair(40), g in 1.0f32..3.0) {
            let tau = crate::vector::sq_dist(&o, &q) * f;
            let sched = ScanSchedule::new(8, 16).unwrap();
            if pd_scan(&o, &q, tau, &sched).is_within() {
                prop_assert!(pd_scan(&o, &q, tau * g, &sched).is_within());
            }
        }

        #[test]
        fn partial_sums_never_decrease((o, q, _f) in pair(64)) {
            let mut acc = crate::vector::ScanAccumulator::new(0);
            let mut prev = 0.0f32;
            for d in (4..=64).step_by(4) {
                acc.advance(&o, &q, d);
                prop_assert!(acc.value() >= prev);
                prev = acc.value();
            }
        }
    }
}
