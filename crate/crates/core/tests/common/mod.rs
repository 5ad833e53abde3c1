#![allow(dead_code)]

use kssl::dataio::{gen_gaussian, gen_target, TargetKind};
use kssl::kernels::{gram, GramMatrix, KernelSpec};
use kssl::synth::{krr_fit, CoefficientMatrix, CoefficientSource};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// SPD with eigenvalues bounded away from zero.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = gaussian(rng, n, n);
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * rng.random_range(0.05..1.0)
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = gaussian(rng, n, n);
    (&a + a.transpose()) * 0.5
}

pub fn gram_of(k: DMatrix<f64>) -> GramMatrix {
    GramMatrix::from_matrix(k, KernelSpec::Linear).unwrap()
}

/// Random full-rank coefficients against a random SPD Gram matrix.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (GramMatrix, CoefficientMatrix) {
    let g = gram_of(random_spd(rng, n));
    let c = CoefficientMatrix::new(gaussian(rng, d, n), CoefficientSource::Exact).unwrap();
    (g, c)
}

/// The desk-scale recovery instance: `n = 200`, `m = 20`, `d = 8`, RBF `σ = 1`,
/// exact fit of a random linear target.
pub fn recovery_instance(seed: u64) -> (GramMatrix, CoefficientMatrix) {
    let x = gen_gaussian(20, 200, 0.5, seed).unwrap();
    let f = gen_target(&TargetKind::RandomLinear { d: 8, seed: seed + 100 }, &x).unwrap();
    let g = gram(&KernelSpec::rbf(1.0), &x).unwrap();
    let c = krr_fit(&f, &g, 0.0).unwrap();
    (g, c)
}
