//! Synthetic datasets, fvecs/ivecs files, and exact ground truth.

use dcokit::io::{gen_synthetic, read_fvecs, read_ivecs, write_fvecs, write_ivecs, Distribution, SyntheticSpec};
use dcokit::vector::{ground_truth, Metric};

fn main() -> dcokit::Result<()> {
    let dir = std::env::temp_dir().join("dcokit-vector-files");
    std::fs::create_dir_all(&dir)?;
    for (name, dist) in [
        ("gaussian", Distribution::IsotropicGaussian),
        ("low_rank", Distribution::LowRank { rank: 8 }),
        ("sift_like", Distribution::SiftLike { clusters: 16 }),
    ] {
        let base = gen_synthetic(&SyntheticSpec::new(3000, 64, dist.clone(), 61))?;
        let queries = gen_synthetic(&SyntheticSpec::new(3010, 64, dist, 61))?.subset(&(3000..3010).collect::<Vec<u32>>())?;
        let truth: Vec<Vec<u32>> = ground_truth(&base, &queries, 10, Metric::Euclidean)?.into_iter().map(|r| r.ids).collect();
        let (bp, tp) = (dir.join(format!("{name}_base.fvecs")), dir.join(format!("{name}_truth.ivecs")));
        write_fvecs(&base, &bp)?;
        write_ivecs(&truth, &tp)?;
        assert_eq!(read_fvecs(&bp)?, base);
        assert_eq!(read_ivecs(&tp)?, truth);
        println!("{name:<10} {} x {} written to {}", base.len(), base.dim(), bp.display());
    }
    Ok(())
}
