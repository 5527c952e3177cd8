//! Product quantization: codebook training, asymmetric distances, reconstruction error.

use dcokit::io::{gen_synthetic, Distribution, SyntheticSpec};
use dcokit::quantize::{default_subspaces, train_pq};
use dcokit::vector::sq_dist;

fn main() -> dcokit::Result<()> {
    let data = gen_synthetic(&SyntheticSpec::new(5000, 96, Distribution::SiftLike { clusters: 32 }, 7))?;
    let m = default_subspaces(data.dim());
    for bits in [4, 8] {
        let cb = train_pq(&data, m, bits, 8)?;
        let codes = cb.encode_dataset(&data)?;
        let lut = cb.lookup_table(data.row(0))?;
        let (exact, approx) = (sq_dist(data.row(0), data.row(1)), lut.distance(codes.get(1)));
        println!(
            "M={m} bits={bits}: mean reconstruction error {:.1}, d(0,1) exact {exact:.0} vs PQ {approx:.0}",
            cb.reconstruction_error(&data)?
        );
    }
    Ok(())
}
