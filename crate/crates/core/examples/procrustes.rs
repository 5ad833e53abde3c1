//! Recovery metrics: orthogonal Procrustes distance, whitening and affine
//! equivalence.
//!
//! ```text
//! cargo run --release --example procrustes
//! ```

use kssl::dataio::gen_gaussian;
use kssl::evalkit::{affine_equivalent, procrustes, random_baseline, whiten, WhitenMode};
use nalgebra::DMatrix;

fn main() -> kssl::Result<()> {
    let f = gen_gaussian(3, 100, 1.0, 0)?.into_values();
    let (s, c) = 0.7f64.sin_cos();
    let q0 = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, -1.0]);
    let rotated = &q0 * &f;
    let rep = procrustes(&rotated, &f)?;
    println!("distance to rotated copy {:.3e}, recovered map error {:.3e}", rep.distance, (rep.q - q0).amax());

    let baseline = random_baseline(&f, 1);
    println!("distance to matched-covariance noise {:.3e}", procrustes(&baseline, &f)?.distance);

    let skewed = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.5, 0.0, 3.0]) * &f;
    let w = whiten(&skewed, WhitenMode::Covariance)?;
    println!("whitened covariance:\n{:.6}", kssl::matrixkit::sample_covariance(&w.fw));
    println!("skewed ~ original (affine): {}", affine_equivalent(&skewed, &f, 1e-8)?);
    println!("noise ~ original (affine):  {}", affine_equivalent(&baseline, &f, 1e-3)?);
    Ok(())
}
