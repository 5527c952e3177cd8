//! Distance comparison operations.
//!
//! A DCO answers "is `dis(o, q) <= τ`?" and returns the exact distance only
//! when the answer is yes. Everything here works on squared distances, so
//! callers pass `τ²`.
//!
//! Eight strategies share one contract:
//!
//! | strategy | space scanned | early exit |
//! |---|---|---|
//! | FDScanning | raw | none |
//! | PDScanning | raw | partial sum exceeds `τ²` |
//! | PDScanning+ | PCA | partial sum exceeds `τ²` |
//! | ADSampling | random rotation | `(D/d)·partial > (1+ε₀/√d)²τ²` |
//! | DADE | PCA | `(Σλ/Σ_{≤d}λ)·partial > (1+ε_d)²τ²` |
//! | DDCres | PCA | cross-term lower bound exceeds `τ²` |
//! | DDCpca | PCA | per-depth linear classifier |
//! | DDCopq | raw + PQ codes | one classifier on the PQ distance |
//!
//! Tests fire only at the scheduled depths `Δ0, Δ0+Δd, ...`. At `d = D` every
//! strategy falls through to the exact comparison.

mod calibrate;
mod engine;

use std::fmt;
use std::str::FromStr;

pub use calibrate::{calibrate_dade, DADE_CALIBRATION_PAIRS};
pub use engine::{Artifacts, Comparator, Dco, DcoConfig, DcoStats, QueryContext, VectorSpaces};

use crate::error::{Error, Result};
use crate::quantize::LookupTable;
use crate::train::{LinearModel, ModelSet};
use crate::vector::{sq_dist, ScanAccumulator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    FdScanning,
    PdScanning,
    PdScanningPlus,
    AdSampling,
    Dade,
    DdcRes,
    DdcPca,
    DdcOpq,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 8] = [
        StrategyKind::FdScanning,
        StrategyKind::PdScanning,
        StrategyKind::PdScanningPlus,
        StrategyKind::AdSampling,
        StrategyKind::Dade,
        StrategyKind::DdcRes,
        StrategyKind::DdcPca,
        StrategyKind::DdcOpq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::FdScanning => "FDScanning",
            StrategyKind::PdScanning => "PDScanning",
            StrategyKind::PdScanningPlus => "PDScanning+",
            StrategyKind::AdSampling => "ADSampling",
            StrategyKind::Dade => "DADE",
            StrategyKind::DdcRes => "DDCres",
            StrategyKind::DdcPca => "DDCpca",
            StrategyKind::DdcOpq => "DDCopq",
        }
    }

    /// Decisions always equal the exact comparison.
    pub fn is_exact(self) -> bool {
        matches!(self, StrategyKind::FdScanning | StrategyKind::PdScanning | StrategyKind::PdScanningPlus)
    }

    /// Needs a trained linear model (and therefore an index to train on).
    pub fn is_classifier(self) -> bool {
        matches!(self, StrategyKind::DdcPca | StrategyKind::DdcOpq)
    }

    pub fn needs_pca(self) -> bool {
        matches!(
            self,
            StrategyKind::PdScanningPlus | StrategyKind::Dade | StrategyKind::DdcRes | StrategyKind::DdcPca
        )
    }

    pub fn needs_projection(self) -> bool {
        self == StrategyKind::AdSampling
    }

    pub fn needs_pq(self) -> bool {
        self == StrategyKind::DdcOpq
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        let kind = match norm.as_str() {
            "fdscanning" | "fd" => StrategyKind::FdScanning,
            "pdscanning" | "pd" => StrategyKind::PdScanning,
            "pdscanning+" | "pdscanningplus" | "pd+" => StrategyKind::PdScanningPlus,
            "adsampling" => StrategyKind::AdSampling,
            "dade" => StrategyKind::Dade,
            "ddcres" => StrategyKind::DdcRes,
            "ddcpca" => StrategyKind::DdcPca,
            "ddcopq" => StrategyKind::DdcOpq,
            _ => {
                return Err(Error::Config(format!(
                    "unknown strategy `{s}`; valid names: {}",
                    StrategyKind::valid_names()
                )))
            }
        };
        Ok(kind)
    }
}

/// Scan cadence: `Δ0` dimensions first, then `Δd` per round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScanSchedule {
    pub delta0: usize,
    pub delta_d: usize,
}

impl Default for ScanSchedule {
    fn default() -> Self {
        Self { delta0: 32, delta_d: 32 }
    }
}

impl ScanSchedule {
    pub fn new(delta0: usize, delta_d: usize) -> Result<Self> {
        if delta0 == 0 || delta_d == 0 {
            return Err(Error::Config(format!("scan steps must be >= 1 (delta0 = {delta0}, delta_d = {delta_d})")));
        }
        Ok(Self { delta0, delta_d })
    }

    /// Caps both steps at `dim`.
    pub fn clamped(self, dim: usize) -> Self {
        Self { delta0: self.delta0.clamp(1, dim), delta_d: self.delta_d.clamp(1, dim) }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.delta0 == 0 || self.delta_d == 0 || self.delta0 > dim || self.delta_d > dim {
            return Err(Error::Config(format!(
                "scan steps delta0 = {}, delta_d = {} must lie in 1..={dim}",
                self.delta0, self.delta_d
            )));
        }
        Ok(())
    }

    /// Test depths in ascending order; the last one is always `dim`.
    pub fn depths(&self, dim: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut d = self.delta0.max(1).min(dim);
        out.push(d);
        while d < dim {
            d = (d + self.delta_d.max(1)).min(dim);
            out.push(d);
        }
        out
    }
}

/// Per-depth tolerances `ε_d` for DADE, keyed by scheduled depth.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DepthTolerances {
    depths: Vec<usize>,
    eps: Vec<f32>,
}

impl DepthTolerances {
    pub fn new(depths: Vec<usize>, eps: Vec<f32>) -> Result<Self> {
        if depths.len() != eps.len() {
            return Err(Error::InvalidArgument("one tolerance per depth".into()));
        }
        if !depths.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("tolerance depths must be strictly increasing".into()));
        }
        if eps.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::InvalidArgument("tolerances must be finite and >= 0".into()));
        }
        Ok(Self { depths, eps })
    }

    pub fn get(&self, d: usize) -> Option<f32> {
        self.depths.binary_search(&d).ok().map(|i| self.eps[i])
    }

    pub fn depths(&self) -> &[usize] {
        &self.depths
    }

    pub fn values(&self) -> &[f32] {
        &self.eps
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisParams {
    /// ADSampling tolerance `ε_d = ε0 / √d`.
    pub ads_epsilon0: f32,
    /// DADE significance level α, used when calibrating `dade_eps`.
    pub dade_alpha: f32,
    pub dade_eps: DepthTolerances,
    /// DDCres deviation multiplier m.
    pub ddcres_m: f32,
}

impl Default for HypothesisParams {
    fn default() -> Self {
        Self { ads_epsilon0: 2.1, dade_alpha: 0.05, dade_eps: DepthTolerances::default(), ddcres_m: 3.0 }
    }
}

impl HypothesisParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ads_epsilon0 > 0.0 && self.ads_epsilon0.is_finite()) {
            return Err(Error::Config(format!("eps0 must be > 0, got {}", self.ads_epsilon0)));
        }
        if !(self.dade_alpha > 0.0 && self.dade_alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {}", self.dade_alpha)));
        }
        if !(self.ddcres_m > 0.0) {
            return Err(Error::Config(format!("m must be > 0, got {}", self.ddcres_m)));
        }
        Ok(())
    }
}

/// Result of a single comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DcoOutcome {
    /// `dis > τ` (or predicted so); no distance.
    Above { dims_scanned: usize },
    /// `dis <= τ`, with the fully scanned squared distance.
    Within { distance: f32, dims_scanned: usize },
}

impl DcoOutcome {
    #[inline]
    pub fn is_within(&self) -> bool {
        matches!(self, DcoOutcome::Within { .. })
    }

    #[inline]
    pub fn distance(&self) -> Option<f32> {
        match *self {
            DcoOutcome::Within { distance, .. } => Some(distance),
            DcoOutcome::Above { .. } => None,
        }
    }

    #[inline]
    pub fn dims_scanned(&self) -> usize {
        match *self {
            DcoOutcome::Above { dims_scanned } | DcoOutcome::Within { dims_scanned, .. } => dims_scanned,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Reject,
    Continue,
}

#[inline]
fn exact_outcome(distance: f32, tau_sq: f32, dim: usize) -> DcoOutcome {
    if distance <= tau_sq {
        DcoOutcome::Within { distance, dims_scanned: dim }
    } else {
        DcoOutcome::Above { dims_scanned: dim }
    }
}

/// Scans every dimension, then compares.
#[inline]
pub fn fd_scan(o: &[f32], q: &[f32], tau_sq: f32) -> DcoOutcome {
    exact_outcome(sq_dist(o, q), tau_sq, o.len())
}

/// Stops as soon as the running partial exceeds `τ²`.
#[inline]
pub fn pd_scan(o: &[f32], q: &[f32], tau_sq: f32, sched: &ScanSchedule) -> DcoOutcome {
    pd_scan_bounded(o, q, tau_sq, tau_sq, sched)
}

/// [`pd_scan`] over PCA-rotated, centered vectors.
#[inline]
pub fn pd_scan_plus(o_rot: &[f32], q_rot: &[f32], tau_sq: f32, sched: &ScanSchedule) -> DcoOutcome {
    pd_scan(o_rot, q_rot, tau_sq, sched)
}

/// Early exit when the partial exceeds `prune_sq`, terminal decision against `tau_sq`.
#[inline]
pub(crate) fn pd_scan_bounded(o: &[f32], q: &[f32], prune_sq: f32, tau_sq: f32, sched: &ScanSchedule) -> DcoOutcome {
    let dim = o.len();
    let mut acc = ScanAccumulator::new(0);
    let mut d = sched.delta0.min(dim);
    loop {
        acc.advance(o, q, d);
        if d == dim {
            return exact_outcome(acc.value(), tau_sq, dim);
        }
        if acc.value() > prune_sq {
            return DcoOutcome::Above { dims_scanned: d };
        }
        d = (d + sched.delta_d).min(dim);
    }
}

/// Runs a hypothesis-test driver: `reject(partial, d, depth_index)` is asked
/// at every scheduled depth below `dim`; `dim` itself is decided exactly.
#[inline(always)]
pub(crate) fn hypothesis_scan(
    o: &[f32],
    q: &[f32],
    tau_sq: f32,
    sched: &ScanSchedule,
    mut reject: impl FnMut(f32, usize, usize) -> bool,
) -> DcoOutcome {
    let dim = o.len();
    let mut acc = ScanAccumulator::new(0);
    let mut d = sched.delta0.min(dim);
    let mut step = 0;
    loop {
        acc.advance(o, q, d);
        if d == dim {
            return exact_outcome(acc.value(), tau_sq, dim);
        }
        if reject(acc.value(), d, step) {
            return DcoOutcome::Above { dims_scanned: d };
        }
        step += 1;
        d = (d + sched.delta_d).min(dim);
    }
}

/// ADSampling: reject when `(D/d)·partial > (1 + ε0/√d)² τ²`.
pub fn ads_test(partial_sq: f32, d: usize, dim: usize, tau_sq: f32, eps0: f32) -> Result<Verdict> {
    if d == 0 || d > dim {
        return Err(Error::OutOfRange(format!("test depth {d} outside 1..={dim}")));
    }
    Ok(verdict(ads_rejects(partial_sq, d, dim, tau_sq, eps0)))
}

#[inline(always)]
pub(crate) fn ads_rejects(partial_sq: f32, d: usize, dim: usize, tau_sq: f32, eps0: f32) -> bool {
    let estimate = dim as f32 / d as f32 * partial_sq;
    let slack = 1.0 + eps0 / (d as f32).sqrt();
    estimate > slack * slack * tau_sq
}

/// DADE: reject when `scale[d]·partial > (1 + ε_d)² τ²`, with
/// `scale[d] = Σλ / Σ_{k<=d} λ` from the query context.
pub fn dade_test(partial_sq: f32, d: usize, ctx: &QueryContext, tau_sq: f32, params: &HypothesisParams) -> Result<Verdict> {
    let dim = ctx.raw.len();
    if d == 0 || d > dim {
        return Err(Error::OutOfRange(format!("test depth {d} outside 1..={dim}")));
    }
    let scale = *ctx
        .scale
        .get(d)
        .ok_or_else(|| Error::MissingArtifact("DADE eigenvalue scale table (PCA model)".into()))?;
    let eps = if d == dim {
        0.0
    } else {
        params
            .dade_eps
            .get(d)
            .ok_or_else(|| Error::MissingArtifact(format!("DADE tolerance for depth {d}")))?
    };
    Ok(verdict(dade_rejects(partial_sq, scale, eps, tau_sq)))
}

#[inline(always)]
pub(crate) fn dade_rejects(partial_sq: f32, scale: f32, eps: f32, tau_sq: f32) -> bool {
    let slack = 1.0 + eps;
    scale * partial_sq > slack * slack * tau_sq
}

/// `dis'² = ‖o‖² + ‖q‖² - 2<o_d, q_d>`, the partial decomposition estimate.
pub fn ddcres_partial_estimate(cross_partial: f32, o_norm_sq: f32, q_norm_sq: f32) -> f32 {
    o_norm_sq + q_norm_sq - 2.0 * cross_partial
}

/// DDCres: reject when `dis'² - 2m·√tail_var[d] > τ²`, where `norms` holds
/// `(‖o‖², ‖q‖²)` and `cross_partial = <o_d, q_d>`.
pub fn ddcres_test(
    cross_partial: f32,
    d: usize,
    ctx: &QueryContext,
    tau_sq: f32,
    m: f32,
    norms: (f32, f32),
) -> Result<Verdict> {
    let tail = *ctx
        .tail_var
        .get(d)
        .ok_or_else(|| Error::MissingArtifact("DDCres variance table (PCA model)".into()))?;
    let estimate = ddcres_partial_estimate(cross_partial, norms.0, norms.1);
    Ok(verdict(ddcres_rejects(estimate, tail.sqrt(), tau_sq, m)))
}

#[inline(always)]
pub(crate) fn ddcres_rejects(partial_estimate_sq: f32, tail_std: f32, tau_sq: f32, m: f32) -> bool {
    partial_estimate_sq - 2.0 * m * tail_std > tau_sq
}

/// Features fed to `M_{k,d}`: `(dis'², τ², d/D)`.
#[inline(always)]
pub fn ddcpca_features(partial_sq: f32, tau_sq: f32, d: usize, dim: usize) -> [f32; 3] {
    [partial_sq, tau_sq, d as f32 / dim as f32]
}

/// Features fed to `M_k`: `(PQ distance, τ²)`.
#[inline(always)]
pub fn ddcopq_features(pq_distance: f32, tau_sq: f32) -> [f32; 2] {
    [pq_distance, tau_sq]
}

/// DDCpca over rotated vectors: the model for `(k, d)` may stop the scan.
pub fn ddcpca_compare(
    o_rot: &[f32],
    q_rot: &[f32],
    tau_sq: f32,
    k: usize,
    models: &ModelSet,
    sched: &ScanSchedule,
) -> Result<DcoOutcome> {
    let dim = o_rot.len();
    let depths = sched.depths(dim);
    let per_depth: Vec<&LinearModel> = depths[..depths.len() - 1]
        .iter()
        .map(|&d| models.pca(k, d).ok_or_else(|| Error::MissingArtifact(format!("DDCpca model for k={k}, d={d}"))))
        .collect::<Result<_>>()?;
    Ok(hypothesis_scan(o_rot, q_rot, tau_sq, sched, |partial, d, step| {
        per_depth[step].predicts_above(&ddcpca_features(partial, tau_sq, d, dim))
    }))
}

/// DDCopq: one prediction from the PQ distance; negatives are verified by a
/// full scan of the raw vectors.
pub fn ddcopq_compare(o_codes: &[u8], lut: &LookupTable, o: &[f32], q: &[f32], tau_sq: f32, model: &LinearModel) -> DcoOutcome {
    if model.predicts_above(&ddcopq_features(lut.distance(o_codes), tau_sq)) {
        DcoOutcome::Above { dims_scanned: 0 }
    } else {
        fd_scan(o, q, tau_sq)
    }
}

#[inline]
fn verdict(reject: bool) -> Verdict {
    if reject {
        Verdict::Reject
    } else {
        Verdict::Continue
    }
}

#[cfg(test)]
mod tests;
