//! Full and partial scans against a threshold, with the dimensions each one reads.

use dcokit::dco::{fd_scan, pd_scan, pd_scan_plus, ScanSchedule};
use dcokit::io::{gen_synthetic, Distribution, SyntheticSpec};
use dcokit::transform::{apply_rotation, fit_pca};

fn main() -> dcokit::Result<()> {
    let data = gen_synthetic(&SyntheticSpec::new(2000, 256, Distribution::LowRank { rank: 32 }, 1))?;
    let pca = fit_pca(&data)?;
    let sched = ScanSchedule::new(32, 32)?;
    let q = data.row(0);
    let q_rot = apply_rotation(&pca, q, true)?;
    let tau = 0.5 * dcokit::vector::sq_dist(q, data.row(1));

    let (mut fd, mut pd, mut plus) = (0, 0, 0);
    for id in 1..data.len() {
        let o = data.row(id);
        let a = fd_scan(o, q, tau);
        let b = pd_scan(o, q, tau, &sched);
        let c = pd_scan_plus(&apply_rotation(&pca, o, true)?, &q_rot, tau, &sched);
        assert_eq!(a.is_within(), b.is_within());
        assert_eq!(a.is_within(), c.is_within());
        fd += a.dims_scanned();
        pd += b.dims_scanned();
        plus += c.dims_scanned();
    }
    let total = ((data.len() - 1) * data.dim()) as f64;
    println!("scan fraction  FD {:.3}  PD {:.3}  PD+ {:.3}", fd as f64 / total, pd as f64 / total, plus as f64 / total);
    Ok(())
}
