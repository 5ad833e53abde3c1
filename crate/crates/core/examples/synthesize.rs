//! Fit a target in the RKHS and build both augmentation operators.
//!
//! ```text
//! cargo run --release --example synthesize
//! ```

use kssl::dataio::{gen_gaussian, gen_target, TargetKind};
use kssl::kernels::{cross_gram, gram, KernelSpec};
use kssl::synth::{augment_coefficients, build_barlow_twins_operator, build_vicreg_scl_operator, krr_fit};

fn main() -> kssl::Result<()> {
    let kernel = KernelSpec::rbf(3.0);
    let x = gen_gaussian(20, 200, 1.0, 0)?;
    let f = gen_target(&TargetKind::RandomLinear { d: 8, seed: 1 }, &x)?;
    let k = gram(&kernel, &x)?;
    println!("Gram matrix: n = {}, eigenvalues in [{:.3e}, {:.3e}]", k.n(), k.min_eig(), k.max_eig());

    let c = krr_fit(&f, &k, 1.0)?;
    let vicreg = build_vicreg_scl_operator(&c, &k)?;
    let barlow = build_barlow_twins_operator(&c, &k)?;
    let (dv, db) = (vicreg.diagnostics(), barlow.diagnostics());
    println!("VICReg/SCL:   |MKM − M| {:.2e}, target residual {:.2e}", dv.mkm_residual, dv.target_residual);
    println!(
        "Barlow Twins: Lyapunov residual {:.2e}, target residual {:.2e}",
        db.lyapunov_residual.unwrap_or(0.0),
        db.target_residual
    );

    let spectrum = vicreg.rkhs_spectrum(&k)?;
    let ones = spectrum.iter().filter(|l| (*l - 1.0).abs() < 1e-6).count();
    println!("VICReg/SCL operator is a projection of rank {ones}");

    // New points are augmented through their kernel evaluations against the training set.
    let queries = gen_gaussian(20, 5, 1.0, 2)?;
    let theta = augment_coefficients(&vicreg, &k, &cross_gram(&kernel, &x, &queries)?)?;
    let before = c.matrix() * cross_gram(&kernel, &x, &queries)?;
    let after = c.matrix() * k.matrix() * &theta;
    println!(
        "target on 5 queries before/after augmentation differs by {:.3e}",
        (before - after).norm()
    );
    Ok(())
}
