//! Maximum inner product search on unit vectors through squared distances.

use dcokit::io::{gen_synthetic, Distribution, SyntheticSpec};
use dcokit::transform::{ip_from_sq_euclidean, normalize_dataset};
use dcokit::vector::{brute_force_knn, dot, Metric};

fn main() -> dcokit::Result<()> {
    let data = normalize_dataset(&gen_synthetic(&SyntheticSpec::new(5000, 48, Distribution::IsotropicGaussian, 71))?)?;
    let q = data.row(42);
    let by_l2 = brute_force_knn(&data, q, 5, Metric::Euclidean)?;
    let by_ip = brute_force_knn(&data, q, 5, Metric::InnerProduct)?;
    println!("euclidean ids {:?}\ninner-product ids {:?}", by_l2.ids, by_ip.ids);
    for (&id, &d) in by_l2.ids.iter().zip(&by_l2.dists) {
        println!("id {id:>4}: ip {:.5} from distance, {:.5} direct", ip_from_sq_euclidean(d)?, dot(q, data.row(id as usize)));
    }
    Ok(())
}
