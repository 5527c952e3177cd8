//! Monte-Carlo calibration of the DADE tolerances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::engine::dade_scale;
use super::{DepthTolerances, ScanSchedule};
use crate::error::{Error, Result};
use crate::transform::PcaModel;
use crate::vector::{Dataset, ScanAccumulator};

pub const DADE_CALIBRATION_PAIRS: usize = 100_000;

/// Samples random pairs from the PCA store and sets `ε_d` so that, for a
/// fraction `1 - α` of pairs, `√(scale[d]·partial_d) / dis <= 1 + ε_d`.
///
/// Negative quantile offsets are clamped to zero.
pub fn calibrate_dade(
    pca_store: &Dataset,
    pca: &PcaModel,
    schedule: &ScanSchedule,
    alpha: f32,
    pairs: usize,
    seed: u64,
) -> Result<DepthTolerances> {
    let dim = pca_store.dim();
    if pca.dim() != dim {
        return Err(Error::DimensionMismatch { expected: pca.dim(), found: dim });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let n = pca_store.len();
    if n < 2 || pairs == 0 {
        return Err(Error::InvalidArgument("calibration needs at least two vectors and one pair".into()));
    }
    schedule.validate(dim)?;
    let all = schedule.depths(dim);
    let depths = all[..all.len() - 1].to_vec();
    let scale = dade_scale(pca);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios: Vec<Vec<f64>> = vec![Vec::with_capacity(pairs); depths.len()];
    let mut partials = vec![0.0f32; depths.len()];
    for _ in 0..pairs {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (pca_store.row(i), pca_store.row(j));
        let mut acc = ScanAccumulator::new(0);
        for (slot, &d) in partials.iter_mut().zip(&depths) {
            acc.advance(a, b, d);
            *slot = acc.value();
        }
        acc.advance(a, b, dim);
        let full = acc.value() as f64;
        if full <= 0.0 {
            continue;
        }
        for ((r, &p), &d) in ratios.iter_mut().zip(&partials).zip(&depths) {
            r.push((scale[d] as f64 * p as f64 / full).sqrt());
        }
    }

    let eps = ratios
        .into_iter()
        .map(|mut r| {
            if r.is_empty() {
                return 0.0;
            }
            let idx = (((1.0 - alpha as f64) * r.len() as f64).ceil() as usize).clamp(1, r.len()) - 1;
            let (_, q, _) = r.select_nth_unstable_by(idx, f64::total_cmp);
            (*q - 1.0).max(0.0) as f32
        })
        .collect();
    DepthTolerances::new(depths, eps)
}
