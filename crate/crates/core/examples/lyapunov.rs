//! Solve `K B + B K = R` with the spectral solver and compare against the
//! dense Kronecker-product linear system.
//!
//! ```text
//! cargo run --release --example lyapunov
//! ```

use kssl::matrixkit::{lyapunov_solve, symmetrize};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> kssl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 6;
    let mut sample = || -> f64 { StandardNormal.sample(&mut rng) };
    let a = DMatrix::from_fn(n, n, |_, _| sample());
    let k = &a * a.transpose() + DMatrix::identity(n, n);
    let r = symmetrize(&DMatrix::from_fn(n, n, |_, _| sample()));

    let sol = lyapunov_solve(&k, &r)?;
    println!("spectral residual {:.3e}", sol.residual_norm);

    let eye = DMatrix::<f64>::identity(n, n);
    let system = eye.kronecker(&k) + k.transpose().kronecker(&eye);
    let vec_b = system.lu().solve(&DVector::from_column_slice(r.as_slice())).expect("K is positive definite");
    let dense = DMatrix::from_column_slice(n, n, vec_b.as_slice());
    println!("max difference from dense solve {:.3e}", (sol.b - dense).amax());
    Ok(())
}
