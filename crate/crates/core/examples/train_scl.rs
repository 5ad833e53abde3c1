//! Spectral contrastive loss: the learned representations approach the
//! correlation-whitened target and the loss approaches its bound `−d`.
//!
//! ```text
//! cargo run --release --example train_scl
//! ```

use kssl::dataio::{gen_gaussian, gen_target, TargetKind};
use kssl::kernels::{gram, KernelSpec};
use kssl::losses::LossKind;
use kssl::synth::{build_vicreg_scl_operator, krr_fit, AugmentationDistribution};
use kssl::trainer::{train, TrainConfig};

fn main() -> kssl::Result<()> {
    let d = 8;
    let x = gen_gaussian(20, 200, 0.5, 0)?;
    let f = gen_target(&TargetKind::RandomLinear { d, seed: 1 }, &x)?;
    let k = gram(&KernelSpec::rbf(1.0), &x)?;
    let c = krr_fit(&f, &k, 0.0)?;
    let dist = AugmentationDistribution::new(build_vicreg_scl_operator(&c, &k)?);

    let mut cfg = TrainConfig::new(LossKind::Scl);
    cfg.eval_every = 500;
    let (_, trace) = train(&k, &dist, &c.fitted(&k), &cfg)?;
    for r in &trace.records {
        println!(
            "epoch {:>5}  loss {:>10.6} (bound {})  procrustes {:.3e} / baseline {:.3e}",
            r.epoch, r.loss, -(d as f64), r.procrustes_to_target, r.procrustes_random_baseline
        );
    }
    Ok(())
}
