//! Map augmented feature-space points back to input space.
//!
//! ```text
//! cargo run --release --example preimage
//! ```

use kssl::dataio::{gen_gaussian, gen_target, TargetKind};
use kssl::kernels::{gram, KernelSpec};
use kssl::preimage::{PreimageConfig, PreimageSolver};
use kssl::synth::{augment_coefficients, build_vicreg_scl_operator, krr_fit};

fn main() -> kssl::Result<()> {
    let x = gen_gaussian(4, 60, 1.0, 0)?;
    let f = gen_target(&TargetKind::RandomLinear { d: 2, seed: 1 }, &x)?;
    let k = gram(&KernelSpec::rbf(3.0), &x)?;
    let c = krr_fit(&f, &k, 1.0)?;
    let op = build_vicreg_scl_operator(&c, &k)?;
    let theta = augment_coefficients(&op, &k, k.matrix())?;

    let solver = PreimageSolver::new(&x, &k, &PreimageConfig::default())?;
    let batch = solver.solve_batch(&theta.columns(0, 3).into_owned())?;
    for j in 0..3 {
        println!("x_{j}  = {:>7.3?}", x.values().column(j).as_slice());
        println!("x'_{j} = {:>7.3?}  residual {:.3e}", batch.points.column(j).as_slice(), batch.residuals[j]);
    }

    // With a linear kernel and no regularization the pre-image of Φθ is Xθ.
    let lin = gram(&KernelSpec::Linear, &gen_gaussian(6, 4, 1.0, 3)?)?;
    let xl = gen_gaussian(6, 4, 1.0, 3)?;
    let th = nalgebra::DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
    let p = PreimageSolver::new(&xl, &lin, &PreimageConfig::with_mu(0.0))?.solve(&th)?;
    println!("linear kernel: |x' − Xθ| = {:.3e}", (p.x - xl.values() * th).norm());
    Ok(())
}
