//! Train a kernel model with VICReg under the synthesized augmentation and
//! watch it recover the whitened target.
//!
//! ```text
//! cargo run --release --example train_vicreg
//! ```

use kssl::dataio::{gen_gaussian, gen_target, TargetKind};
use kssl::kernels::{gram, KernelSpec};
use kssl::losses::{LossKind, VicregWeights};
use kssl::synth::{build_vicreg_scl_operator, krr_fit, AugmentationDistribution};
use kssl::trainer::{train, TrainConfig, ViewSampling};

fn main() -> kssl::Result<()> {
    let x = gen_gaussian(20, 200, 0.5, 0)?;
    let f = gen_target(&TargetKind::RandomLinear { d: 8, seed: 1 }, &x)?;
    let k = gram(&KernelSpec::rbf(1.0), &x)?;
    let c = krr_fit(&f, &k, 0.0)?;
    let dist = AugmentationDistribution::new(build_vicreg_scl_operator(&c, &k)?);

    for sampling in [ViewSampling::Paired, ViewSampling::IidSampled] {
        let mut cfg = TrainConfig::new(LossKind::Vicreg(VicregWeights::default()));
        cfg.sampling = sampling;
        cfg.eval_every = 1000;
        let (_, trace) = train(&k, &dist, &c.fitted(&k), &cfg)?;
        println!("{sampling:?}");
        println!("{:>6} {:>12} {:>12} {:>12}", "epoch", "loss", "procrustes", "baseline");
        for r in &trace.records {
            println!(
                "{:>6} {:>12.4e} {:>12.4e} {:>12.4e}",
                r.epoch, r.loss, r.procrustes_to_target, r.procrustes_random_baseline
            );
        }
    }
    Ok(())
}
