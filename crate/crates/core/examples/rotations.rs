//! PCA and random orthogonal rotations, their isometry, and sidecar round trips.

use dcokit::io::{gen_synthetic, Distribution, SyntheticSpec};
use dcokit::sidecar::Sidecar;
use dcokit::transform::{apply_rotation, fit_pca, random_orthogonal, OrthoProjection, PcaModel};
use dcokit::vector::sq_dist;

fn main() -> dcokit::Result<()> {
    let data = gen_synthetic(&SyntheticSpec::new(5000, 128, Distribution::LowRank { rank: 16 }, 2))?;
    let pca = fit_pca(&data)?;
    let ortho = random_orthogonal(128, 9)?;
    for d in [8, 16, 32, 64] {
        println!("variance in first {d:>3} PCA dims: {:.3}", pca.explained(d));
    }

    let (a, b) = (data.row(10), data.row(20));
    let pa = apply_rotation(&pca, a, true)?;
    let pb = apply_rotation(&pca, b, true)?;
    let oa = apply_rotation(&ortho, a, false)?;
    let ob = apply_rotation(&ortho, b, false)?;
    println!("raw {:.4}  pca {:.4}  ortho {:.4}", sq_dist(a, b), sq_dist(&pa, &pb), sq_dist(&oa, &ob));

    let dir = std::env::temp_dir().join("dcokit-rotations");
    std::fs::create_dir_all(&dir)?;
    pca.save(dir.join("pca.dcok"))?;
    ortho.save(dir.join("ortho.dcok"))?;
    assert_eq!(PcaModel::load(dir.join("pca.dcok"))?, pca);
    assert_eq!(OrthoProjection::load(dir.join("ortho.dcok"))?, ortho);
    println!("sidecars round-tripped under {}", dir.display());
    Ok(())
}
