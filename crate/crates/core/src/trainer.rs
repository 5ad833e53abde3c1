//! Full-batch training of a kernel model `f = C_learn Φᵀ` under a binary
//! augmentation distribution.
//!
//! Representations are computed with the kernel trick: the identity view of
//! point `i` is `C_learn K[:, i]` and the augmented view is
//! `C_learn (K M K)[:, i]`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::{RecoveryReference, ReferenceKind};
use crate::kernels::GramMatrix;
use crate::losses::LossKind;
use crate::synth::{AugmentationDistribution, Pairing};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if !(unit(self.beta1) && unit(self.beta2)) {
            return Err(Error::InvalidConfig(format!(
                "Adam betas must lie in (0, 1), got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfig(format!("Adam eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// How views are produced each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewSampling {
    /// Every point contributes the fixed pair `(identity, T)`.
    #[default]
    Paired,
    /// A fresh draw per point and epoch, following the distribution's pairing.
    #[serde(alias = "iid")]
    IidSampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub sampling: ViewSampling,
    pub eval_every: usize,
    /// Weight `γ` of the RKHS-norm penalty `γ tr(C_learn K C_learnᵀ)`.
    /// A small positive value steers the optimizer towards the least-norm
    /// minimizer when the loss is flat along directions that leave the
    /// representations' correlation structure unchanged (Barlow Twins).
    #[serde(default)]
    pub norm_penalty: f64,
}

impl TrainConfig {
    pub fn new(loss: LossKind) -> Self {
        Self {
            loss,
            epochs: 5000,
            adam: AdamConfig::default(),
            seed: 0,
            sampling: ViewSampling::Paired,
            eval_every: 50,
            norm_penalty: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.adam.validate()?;
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be positive".into()));
        }
        if !(self.norm_penalty >= 0.0 && self.norm_penalty.is_finite()) {
            return Err(Error::InvalidConfig(format!("norm penalty must be >= 0, got {}", self.norm_penalty)));
        }
        Ok(())
    }
}

/// Reference the learned representations are compared against for a loss.
pub fn reference_kind_for(loss: &LossKind) -> ReferenceKind {
    match loss {
        LossKind::Vicreg(_) => ReferenceKind::CovarianceWhitened,
        LossKind::Scl => ReferenceKind::CorrelationWhitened,
        LossKind::BarlowTwins(_) => ReferenceKind::Raw,
    }
}

/// Which map each view of every point went through; `true` means `T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewDraw {
    pub first: Vec<bool>,
    pub second: Vec<bool>,
}

pub fn sample_draw(n: usize, sampling: ViewSampling, pairing: Pairing, rng: &mut impl Rng) -> ViewDraw {
    match (sampling, pairing) {
        (ViewSampling::Paired, _) => ViewDraw { first: vec![false; n], second: vec![true; n] },
        (ViewSampling::IidSampled, Pairing::IndependentPair) => {
            let first = (0..n).map(|_| rng.random_bool(0.5)).collect();
            let second = (0..n).map(|_| rng.random_bool(0.5)).collect();
            ViewDraw { first, second }
        }
        (ViewSampling::IidSampled, Pairing::ConditionedDistinct) => {
            let first: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            let second = first.iter().map(|&t| !t).collect();
            ViewDraw { first, second }
        }
    }
}

/// Gathers view columns from `K` (identity) or `K M K` (augmented).
pub fn assemble_views(k: &DMatrix<f64>, kmk: &DMatrix<f64>, draw: &ViewDraw) -> (DMatrix<f64>, DMatrix<f64>) {
    let pick = |flags: &[bool]| {
        let mut v = k.clone();
        for (i, &t) in flags.iter().enumerate() {
            if t {
                v.set_column(i, &kmk.column(i));
            }
        }
        v
    };
    (pick(&draw.first), pick(&draw.second))
}

pub fn make_views(
    gram: &GramMatrix,
    dist: &AugmentationDistribution,
    sampling: ViewSampling,
    rng: &mut impl Rng,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let kmk = dist.operator().augmented_training_view(gram)?;
    let draw = sample_draw(gram.n(), sampling, dist.pairing(), rng);
    Ok(assemble_views(gram.matrix(), &kmk, &draw))
}

/// `Z = C_learn V`.
pub fn forward(c_learn: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if c_learn.ncols() != v.nrows() {
        return Err(Error::dims(format!(
            "coefficients are {:?}, views are {:?}",
            c_learn.shape(),
            v.shape()
        )));
    }
    // (Vᵀ C_learnᵀ)ᵀ walks V column by column, which is much faster than the
    // row-major access of C_learn V when d is small.
    Ok(v.tr_mul(&c_learn.transpose()).transpose())
}

/// Loss and gradient with respect to `C_learn` for fixed views.
pub fn loss_and_coefficient_grad(
    loss: &LossKind,
    c_learn: &DMatrix<f64>,
    v: &DMatrix<f64>,
    vp: &DMatrix<f64>,
) -> Result<(f64, DMatrix<f64>)> {
    let z = forward(c_learn, v)?;
    let zp = forward(c_learn, vp)?;
    let g = loss.value_and_grad(&z, &zp)?;
    // (V dZᵀ)ᵀ avoids materializing the n × n transposes.
    let grad = (v * g.dz.transpose() + vp * g.dzp.transpose()).transpose();
    Ok((g.value, grad))
}

/// Largest relative deviation between the analytic coefficient gradient and
/// central differences with step 1e-5.
pub fn gradient_check(loss: &LossKind, c_learn: &DMatrix<f64>, v: &DMatrix<f64>, vp: &DMatrix<f64>) -> Result<f64> {
    let (_, analytic) = loss_and_coefficient_grad(loss, c_learn, v, vp)?;
    let h = 1e-5;
    let scale = analytic.amax().max(1e-12);
    let mut worst: f64 = 0.0;
    let mut c = c_learn.clone();
    for idx in 0..c.len() {
        let orig = c[idx];
        c[idx] = orig + h;
        let up = loss.value(&forward(&c, v)?, &forward(&c, vp)?)?;
        c[idx] = orig - h;
        let down = loss.value(&forward(&c, v)?, &forward(&c, vp)?)?;
        c[idx] = orig;
        let fd = (up - down) / (2.0 * h);
        let denom = fd.abs().max(analytic[idx].abs()).max(1e-3 * scale);
        worst = worst.max((fd - analytic[idx]).abs() / denom);
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub c_learn: DMatrix<f64>,
    m1: DMatrix<f64>,
    m2: DMatrix<f64>,
    pub epoch: usize,
    rng: ChaCha8Rng,
}

impl TrainState {
    /// Entries i.i.d. `N(0, 1/n)`, drawn from the run's seed.
    pub fn gaussian_init(d: usize, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = 1.0 / (n as f64).sqrt();
        let c = DMatrix::from_fn(d, n, |_, _| {
            let g: f64 = StandardNormal.sample(&mut rng);
            std * g
        });
        Self::from_coefficients(c, rng)
    }

    pub fn with_coefficients(c_learn: DMatrix<f64>, seed: u64) -> Self {
        Self::from_coefficients(c_learn, ChaCha8Rng::seed_from_u64(seed))
    }

    fn from_coefficients(c_learn: DMatrix<f64>, rng: ChaCha8Rng) -> Self {
        let (d, n) = c_learn.shape();
        Self { c_learn, m1: DMatrix::zeros(d, n), m2: DMatrix::zeros(d, n), epoch: 0, rng }
    }

    fn adam_step(&mut self, grad: &DMatrix<f64>, cfg: &AdamConfig) {
        let t = (self.epoch + 1) as i32;
        self.m1 = &self.m1 * cfg.beta1 + grad * (1.0 - cfg.beta1);
        self.m2 = &self.m2 * cfg.beta2 + grad.component_mul(grad) * (1.0 - cfg.beta2);
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for ((c, m), v) in self.c_learn.iter_mut().zip(self.m1.iter()).zip(self.m2.iter()) {
            *c -= cfg.learning_rate * (m / c1) / ((v / c2).sqrt() + cfg.eps);
        }
        self.epoch += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub loss: f64,
    pub procrustes_to_target: f64,
    pub procrustes_random_baseline: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub reference: ReferenceKind,
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

/// Trains from `N(0, 1/n)` coefficients.
///
/// `target` holds the `d × n` target representations of the training points;
/// recovery is measured against its whitened form (or the target itself for
/// Barlow Twins).
pub fn train(
    gram: &GramMatrix,
    dist: &AugmentationDistribution,
    target: &DMatrix<f64>,
    cfg: &TrainConfig,
) -> Result<(TrainState, TrainTrace)> {
    let state = TrainState::gaussian_init(target.nrows(), gram.n(), cfg.seed);
    train_from(gram, dist, target, cfg, state)
}

pub fn train_from(
    gram: &GramMatrix,
    dist: &AugmentationDistribution,
    target: &DMatrix<f64>,
    cfg: &TrainConfig,
    mut state: TrainState,
) -> Result<(TrainState, TrainTrace)> {
    cfg.validate()?;
    gram.require_full_rank()?;
    let n = gram.n();
    if target.ncols() != n || state.c_learn.shape() != target.shape() {
        return Err(Error::dims(format!(
            "target is {:?}, coefficients are {:?}, Gram is {n}x{n}",
            target.shape(),
            state.c_learn.shape()
        )));
    }
    let kmk = dist.operator().augmented_training_view(gram)?;
    let k = gram.matrix();
    let kind = reference_kind_for(&cfg.loss);
    let reference = RecoveryReference::new(target, kind, cfg.seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let baseline = reference.baseline_distance()?;

    let mut records = Vec::new();
    let mut last_good = None;
    let start = state.epoch;
    let end = start + cfg.epochs;
    loop {
        let epoch = state.epoch;
        let (loss, mut grad) = match cfg.sampling {
            ViewSampling::Paired => loss_and_coefficient_grad(&cfg.loss, &state.c_learn, k, &kmk)?,
            ViewSampling::IidSampled => {
                let draw = sample_draw(n, cfg.sampling, dist.pairing(), &mut state.rng);
                let (v, vp) = assemble_views(k, &kmk, &draw);
                loss_and_coefficient_grad(&cfg.loss, &state.c_learn, &v, &vp)?
            }
        };
        if cfg.norm_penalty > 0.0 {
            grad += &state.c_learn * k * (2.0 * cfg.norm_penalty);
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch, last_good_epoch: last_good });
        }
        last_good = Some(epoch);
        if (epoch - start).is_multiple_of(cfg.eval_every) || epoch == end {
            let z = forward(&state.c_learn, k)?;
            records.push(TraceRecord {
                epoch,
                loss,
                procrustes_to_target: reference.distance(&z)?,
                procrustes_random_baseline: baseline,
            });
        }
        if epoch == end {
            break;
        }
        state.adam_step(&grad, &cfg.adam);
    }
    Ok((state, TrainTrace { reference: kind, records }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalkit::{whiten, WhitenMode};
    use crate::kernels::{gram, KernelSpec};
    use crate::losses::{BarlowTwinsWeights, VicregWeights};
    use crate::matrixkit::testutil::gaussian;
    use crate::synth::{build_barlow_twins_operator, build_vicreg_scl_operator, krr_fit};
    use crate::DataMatrix;

    struct Setup {
        gram: GramMatrix,
        target: DMatrix<f64>,
        vicreg: AugmentationDistribution,
        barlow: AugmentationDistribution,
    }

    fn setup(seed: u64, m: usize, n: usize, d: usize) -> Setup {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DataMatrix::new(gaussian(&mut rng, m, n) * 0.5).unwrap();
        let g = gram(&KernelSpec::rbf(1.0), &x).unwrap();
        let f = gaussian(&mut rng, d, m) * x.values() / (m as f64).sqrt();
        let c = krr_fit(&f, &g, 0.0).unwrap();
        let vicreg = AugmentationDistribution::new(build_vicreg_scl_operator(&c, &g).unwrap());
        let barlow = AugmentationDistribution::new(build_barlow_twins_operator(&c, &g).unwrap());
        Setup { target: c.fitted(&g), gram: g, vicreg, barlow }
    }

    #[test]
    fn paired_views_are_fixed() {
        let s = setup(1, 3, 10, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (v, vp) = make_views(&s.gram, &s.vicreg, ViewSampling::Paired, &mut rng).unwrap();
        assert_eq!(&v, s.gram.matrix());
        assert_eq!(vp, s.vicreg.operator().augmented_training_view(&s.gram).unwrap());
    }

    #[test]
    fn conditioned_distinct_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 5;
        let mut counts = vec![0usize; n];
        let draws = 10_000;
        for _ in 0..draws {
            let d = sample_draw(n, ViewSampling::IidSampled, Pairing::ConditionedDistinct, &mut rng);
            for i in 0..n {
                assert_ne!(d.first[i], d.second[i]);
                if !d.first[i] {
                    counts[i] += 1;
                }
            }
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn independent_pair_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut combos = [0usize; 4];
        let draws = 10_000;
        for _ in 0..draws {
            let d = sample_draw(1, ViewSampling::IidSampled, Pairing::IndependentPair, &mut rng);
            combos[d.first[0] as usize * 2 + d.second[0] as usize] += 1;
        }
        for c in combos {
            assert!((c as f64 / draws as f64 - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn forward_cases() {
        let s = setup(4, 3, 8, 2);
        let k = s.gram.matrix();
        assert_eq!(forward(&DMatrix::zeros(2, 8), k).unwrap(), DMatrix::zeros(2, 8));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = gaussian(&mut rng, 2, 8);
        let z = forward(&c, k).unwrap();
        for i in 0..2 {
            for j in 0..8 {
                let e: f64 = (0..8).map(|l| c[(i, l)] * k[(l, j)]).sum();
                assert!((z[(i, j)] - e).abs() < 1e-12);
            }
        }
        assert!(forward(&c, &DMatrix::zeros(7, 7)).is_err());
    }

    #[test]
    fn coefficient_gradients_match_finite_differences() {
        let kinds = [
            LossKind::Vicreg(VicregWeights::default()),
            LossKind::Vicreg(VicregWeights::original()),
            LossKind::BarlowTwins(BarlowTwinsWeights::new(1.0)),
            LossKind::Scl,
        ];
        for seed in 0..3 {
            let s = setup(10 + seed, 3, 10, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (v, vp) = make_views(&s.gram, &s.vicreg, ViewSampling::IidSampled, &mut rng).unwrap();
            let c = gaussian(&mut rng, 3, 10);
            for kind in &kinds {
                let err = gradient_check(kind, &c, &v, &vp).unwrap();
                assert!(err < 1e-4, "{} error {err}", kind.name());
            }
        }
    }

    fn whitened_coefficients(s: &Setup, mode: WhitenMode) -> DMatrix<f64> {
        let w = whiten(&s.target, mode).unwrap();
        let kinv = s.gram.matrix().clone().try_inverse().unwrap();
        w.w * &s.target * kinv
    }

    #[test]
    fn starting_at_the_optimum_stays_there() {
        let s = setup(20, 4, 30, 3);
        let mut cfg = TrainConfig::new(LossKind::Vicreg(VicregWeights::default()));
        cfg.epochs = 20;
        cfg.eval_every = 5;
        let start = TrainState::with_coefficients(whitened_coefficients(&s, WhitenMode::Covariance), 0);
        let (_, trace) = train_from(&s.gram, &s.vicreg, &s.target, &cfg, start).unwrap();
        // Adam rescales the round-off gradient at the optimum to steps of
        // order lr, so the trace stays within that noise floor.
        assert!(trace.records[0].loss < 1e-8);
        assert!(trace.records[0].procrustes_to_target < 1e-8);
        assert!(trace.records.iter().all(|r| r.procrustes_to_target < 1e-2 * r.procrustes_random_baseline));

        cfg.loss = LossKind::Scl;
        let start = TrainState::with_coefficients(whitened_coefficients(&s, WhitenMode::Correlation), 0);
        let (_, trace) = train_from(&s.gram, &s.vicreg, &s.target, &cfg, start).unwrap();
        assert!((trace.records[0].loss + 3.0).abs() < 1e-8);
    }

    #[test]
    fn trace_epochs_and_determinism() {
        let s = setup(30, 4, 20, 2);
        let mut cfg = TrainConfig::new(LossKind::Vicreg(VicregWeights::default()));
        cfg.epochs = 23;
        cfg.eval_every = 5;
        cfg.sampling = ViewSampling::IidSampled;
        let (a, ta) = train(&s.gram, &s.vicreg, &s.target, &cfg).unwrap();
        let (b, tb) = train(&s.gram, &s.vicreg, &s.target, &cfg).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(a.c_learn, b.c_learn);
        let epochs: Vec<usize> = ta.records.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![0, 5, 10, 15, 20, 23]);
        assert_eq!(a.epoch, 23);
    }

    #[test]
    fn divergence_reports_last_good_epoch() {
        let s = setup(40, 4, 20, 2);
        let mut cfg = TrainConfig::new(LossKind::Vicreg(VicregWeights::default()));
        cfg.epochs = 10;
        let start = TrainState::with_coefficients(DMatrix::from_element(2, 20, f64::NAN), 0);
        let err = train_from(&s.gram, &s.vicreg, &s.target, &cfg, start).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 0, last_good_epoch: None }));

        cfg.adam.learning_rate = 1e300;
        cfg.loss = LossKind::Scl;
        match train(&s.gram, &s.vicreg, &s.target, &cfg) {
            Err(Error::NonFiniteLoss { epoch, last_good_epoch }) => {
                assert_eq!(last_good_epoch, Some(epoch - 1));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn short_vicreg_run_reduces_distance() {
        let s = setup(50, 10, 40, 2);
        let mut cfg = TrainConfig::new(LossKind::Vicreg(VicregWeights::default()));
        cfg.epochs = 1500;
        cfg.adam.learning_rate = 1e-2;
        cfg.eval_every = 100;
        let (_, trace) = train(&s.gram, &s.vicreg, &s.target, &cfg).unwrap();
        let first = trace.records.first().unwrap();
        let last = trace.last().unwrap();
        assert!(last.loss < first.loss);
        assert!(last.procrustes_to_target < 0.05 * last.procrustes_random_baseline, "{last:?}");
    }

    #[test]
    fn barlow_twins_optimum_is_the_raw_target() {
        let s = setup(60, 4, 25, 2);
        let mut cfg = TrainConfig::new(LossKind::BarlowTwins(BarlowTwinsWeights::squared(1.0)));
        cfg.epochs = 5;
        let c = s.target.clone() * s.gram.matrix().clone().try_inverse().unwrap();
        let (_, trace) = train_from(&s.gram, &s.barlow, &s.target, &cfg, TrainState::with_coefficients(c, 0)).unwrap();
        assert!(trace.records[0].loss < 1e-8);
        assert!(trace.records[0].procrustes_to_target < 1e-8);
    }
}
