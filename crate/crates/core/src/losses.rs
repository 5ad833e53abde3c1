//! Joint-embedding losses on materialized representation pairs `(Z, Z')`.
//!
//! `Z` and `Z'` are `d × n` matrices whose column `i` holds the embeddings of
//! the two views of point `i`. Every loss comes with an analytic gradient
//! with respect to both arguments, used by the trainer.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixkit::{self, center_rows};

/// `d × n` matrix of embeddings, column `i` is `z_i`.
pub type RepresentationMatrix = DMatrix<f64>;

/// Absolute entrywise tolerance used by [`zero_loss_conditions`].
pub const ZERO_LOSS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum VarianceMode {
    /// `v(Z) = (1/d) Σ (1 − cov_ii)²`.
    Variance,
    /// `v(Z) = (1/d) Σ max(0, 1 − sqrt(cov_ii + ε))`, the original VICReg term.
    StdHinge { epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VicregWeights {
    /// Invariance weight.
    pub lambda: f64,
    /// Variance weight.
    pub mu: f64,
    /// Covariance weight.
    pub nu: f64,
    pub variance_mode: VarianceMode,
}

impl Default for VicregWeights {
    fn default() -> Self {
        Self {
            lambda: 5.0,
            mu: 5.0,
            nu: 1.0,
            variance_mode: VarianceMode::Variance,
        }
    }
}

impl VicregWeights {
    /// Hinge-on-standard-deviation variant with `ε = 1e-4`.
    pub fn original() -> Self {
        Self {
            variance_mode: VarianceMode::StdHinge { epsilon: 1e-4 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(self.lambda) && ok(self.mu) && ok(self.nu)) {
            return Err(Error::InvalidConfig(format!(
                "VICReg weights must be > 0, got λ={} μ={} ν={}",
                self.lambda, self.mu, self.nu
            )));
        }
        if let VarianceMode::StdHinge { epsilon } = self.variance_mode {
            if !ok(epsilon) {
                return Err(Error::InvalidConfig(format!("hinge epsilon must be > 0, got {epsilon}")));
            }
        }
        Ok(())
    }
}

/// Penalty applied to off-diagonal cross-correlation entries in Barlow Twins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffDiagonalPenalty {
    /// `λ Σ_{i≠j} (1 − 𝒞_ij)²`.
    #[default]
    OneMinus,
    /// `λ Σ_{i≠j} 𝒞_ij²`, the redundancy-reduction term of the original
    /// Barlow Twins objective. Its zero set is exactly `𝒞 = I`.
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarlowTwinsWeights {
    pub lambda: f64,
    #[serde(default)]
    pub off_diagonal: OffDiagonalPenalty,
}

impl BarlowTwinsWeights {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            off_diagonal: OffDiagonalPenalty::OneMinus,
        }
    }

    pub fn squared(lambda: f64) -> Self {
        Self {
            lambda,
            off_diagonal: OffDiagonalPenalty::Squared,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "snake_case")]
pub enum LossKind {
    Vicreg(VicregWeights),
    BarlowTwins(BarlowTwinsWeights),
    Scl,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Vicreg(w) => match w.variance_mode {
                VarianceMode::Variance => "vicreg",
                VarianceMode::StdHinge { .. } => "vicreg-original",
            },
            LossKind::BarlowTwins(_) => "barlow-twins",
            LossKind::Scl => "scl",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LossKind::Vicreg(w) => w.validate(),
            LossKind::BarlowTwins(w) if !(w.lambda > 0.0 && w.lambda.is_finite()) => Err(
                Error::InvalidConfig(format!("Barlow Twins λ must be > 0, got {}", w.lambda)),
            ),
            _ => Ok(()),
        }
    }

    pub fn value(&self, z: &DMatrix<f64>, zp: &DMatrix<f64>) -> Result<f64> {
        match self {
            LossKind::Vicreg(w) => loss_vicreg(z, zp, w),
            LossKind::BarlowTwins(w) => loss_barlow_twins_with(z, zp, w),
            LossKind::Scl => loss_scl(z, zp),
        }
    }

    pub fn value_and_grad(&self, z: &DMatrix<f64>, zp: &DMatrix<f64>) -> Result<LossGrad> {
        check_pair(z, zp)?;
        Ok(match self {
            LossKind::Vicreg(w) => vicreg_grad(z, zp, w),
            LossKind::BarlowTwins(w) => barlow_twins_grad(z, zp, w),
            LossKind::Scl => scl_grad(z, zp),
        })
    }
}

/// Loss value with gradients with respect to `Z` and `Z'`.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub value: f64,
    pub dz: DMatrix<f64>,
    pub dzp: DMatrix<f64>,
}

fn check_pair(z: &DMatrix<f64>, zp: &DMatrix<f64>) -> Result<()> {
    if z.shape() != zp.shape() {
        return Err(Error::dims(format!(
            "representation pair has shapes {:?} and {:?}",
            z.shape(),
            zp.shape()
        )));
    }
    if z.nrows() == 0 || z.ncols() == 0 {
        return Err(Error::dims("representations need d >= 1 and n >= 1"));
    }
    Ok(())
}

pub fn loss_vicreg(z: &DMatrix<f64>, zp: &DMatrix<f64>, w: &VicregWeights) -> Result<f64> {
    check_pair(z, zp)?;
    let n = z.ncols() as f64;
    let s = (z - zp).norm_squared() / n;
    let (v1, c1) = variance_covariance_terms(&matrixkit::sample_covariance(z), w.variance_mode);
    let (v2, c2) = variance_covariance_terms(&matrixkit::sample_covariance(zp), w.variance_mode);
    Ok(w.lambda * s + w.mu * (v1 + v2) + w.nu * (c1 + c2))
}

fn variance_covariance_terms(cov: &DMatrix<f64>, mode: VarianceMode) -> (f64, f64) {
    let d = cov.nrows();
    let mut v = 0.0;
    let mut c = 0.0;
    for j in 0..d {
        for i in 0..d {
            if i == j {
                v += match mode {
                    VarianceMode::Variance => (1.0 - cov[(i, i)]).powi(2),
                    VarianceMode::StdHinge { epsilon } => (1.0 - (cov[(i, i)] + epsilon).sqrt()).max(0.0),
                };
            } else {
                c += cov[(i, j)].powi(2);
            }
        }
    }
    (v / d as f64, c / d as f64)
}

/// `∂/∂cov` of `μ v + ν c`.
fn vicreg_cov_grad(cov: &DMatrix<f64>, w: &VicregWeights) -> DMatrix<f64> {
    let d = cov.nrows();
    let df = d as f64;
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            let dv = match w.variance_mode {
                VarianceMode::Variance => -2.0 * (1.0 - cov[(i, i)]) / df,
                VarianceMode::StdHinge { epsilon } => {
                    let sd = (cov[(i, i)] + epsilon).sqrt();
                    if sd < 1.0 {
                        -0.5 / (sd * df)
                    } else {
                        0.0
                    }
                }
            };
            w.mu * dv
        } else {
            w.nu * 2.0 * cov[(i, j)] / df
        }
    })
}

fn vicreg_grad(z: &DMatrix<f64>, zp: &DMatrix<f64>, w: &VicregWeights) -> LossGrad {
    let n = z.ncols() as f64;
    let diff = z - zp;
    let mut value = w.lambda * diff.norm_squared() / n;
    let mut grads = [diff * (2.0 * w.lambda / n), DMatrix::zeros(0, 0)];
    grads[1] = -&grads[0];
    for (m, g) in [z, zp].into_iter().zip(grads.iter_mut()) {
        let mc = center_rows(m);
        let cov = matrixkit::symmetrize(&(&mc * mc.transpose())) / n;
        let (v, c) = variance_covariance_terms(&cov, w.variance_mode);
        value += w.mu * v + w.nu * c;
        *g += vicreg_cov_grad(&cov, w) * mc * (2.0 / n);
    }
    let [dz, dzp] = grads;
    LossGrad { value, dz, dzp }
}

/// Symmetrized cross-correlation `𝒞 = (1/2n)(Z Z'ᵀ + Z' Zᵀ)`.
pub fn cross_correlation(z: &DMatrix<f64>, zp: &DMatrix<f64>) -> DMatrix<f64> {
    let zzp = z * zp.transpose();
    (&zzp + zzp.transpose()) / (2.0 * z.ncols() as f64)
}

/// Barlow Twins with the `λ Σ_{i≠j} (1 − 𝒞_ij)²` off-diagonal term.
pub fn loss_barlow_twins(z: &DMatrix<f64>, zp: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    loss_barlow_twins_with(z, zp, &BarlowTwinsWeights::new(lambda))
}

pub fn loss_barlow_twins_with(z: &DMatrix<f64>, zp: &DMatrix<f64>, w: &BarlowTwinsWeights) -> Result<f64> {
    check_pair(z, zp)?;
    Ok(barlow_twins_value(&cross_correlation(z, zp), w))
}

fn barlow_twins_value(c: &DMatrix<f64>, w: &BarlowTwinsWeights) -> f64 {
    let d = c.nrows();
    let mut diag = 0.0;
    let mut off = 0.0;
    for j in 0..d {
        for i in 0..d {
            if i == j {
                diag += (1.0 - c[(i, i)]).powi(2);
            } else {
                off += match w.off_diagonal {
                    OffDiagonalPenalty::OneMinus => (1.0 - c[(i, j)]).powi(2),
                    OffDiagonalPenalty::Squared => c[(i, j)].powi(2),
                };
            }
        }
    }
    diag + w.lambda * off
}

fn barlow_twins_grad(z: &DMatrix<f64>, zp: &DMatrix<f64>, w: &BarlowTwinsWeights) -> LossGrad {
    let n = z.ncols() as f64;
    let c = cross_correlation(z, zp);
    let d = c.nrows();
    let g = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            -2.0 * (1.0 - c[(i, i)])
        } else {
            match w.off_diagonal {
                OffDiagonalPenalty::OneMinus => -2.0 * w.lambda * (1.0 - c[(i, j)]),
                OffDiagonalPenalty::Squared => 2.0 * w.lambda * c[(i, j)],
            }
        }
    });
    LossGrad {
        value: barlow_twins_value(&c, w),
        dz: &g * zp / n,
        dzp: &g * z / n,
    }
}

/// Spectral contrastive loss with the quartic norm regularizer:
/// `(1/n²)‖ZᵀZ' − diag(ZᵀZ')‖_F² − (2/n) Tr(ZᵀZ') + (1/2n²) Σ (‖z_i‖⁴ + ‖z'_i‖⁴)`.
///
/// Bounded below by `−d`, with equality iff `Z = Z'` and `(1/n) Z Zᵀ = I`.
pub fn loss_scl(z: &DMatrix<f64>, zp: &DMatrix<f64>) -> Result<f64> {
    check_pair(z, zp)?;
    Ok(scl_parts(z, zp).0)
}

// Returns (value, per-column z_iᵀz'_i, ‖z_i‖², ‖z'_i‖²).
fn scl_parts(z: &DMatrix<f64>, zp: &DMatrix<f64>) -> (f64, DVector<f64>, DVector<f64>, DVector<f64>) {
    let n = z.ncols() as f64;
    let gz = z * z.transpose();
    let gzp = zp * zp.transpose();
    // ‖ZᵀZ'‖_F² = Tr(Z Zᵀ Z' Z'ᵀ)
    let full = gz.component_mul(&gzp).sum();
    let paired = DVector::from_iterator(z.ncols(), z.column_iter().zip(zp.column_iter()).map(|(a, b)| a.dot(&b)));
    let nz = DVector::from_iterator(z.ncols(), z.column_iter().map(|c| c.norm_squared()));
    let nzp = DVector::from_iterator(z.ncols(), zp.column_iter().map(|c| c.norm_squared()));
    let off = full - paired.norm_squared();
    let quartic: f64 = nz.iter().zip(nzp.iter()).map(|(a, b)| a * a + b * b).sum();
    let value = off / (n * n) - 2.0 * paired.sum() / n + quartic / (2.0 * n * n);
    (value, paired, nz, nzp)
}

fn scl_grad(z: &DMatrix<f64>, zp: &DMatrix<f64>) -> LossGrad {
    let n = z.ncols() as f64;
    let n2 = n * n;
    let (value, paired, nz, nzp) = scl_parts(z, zp);
    let side = |a: &DMatrix<f64>, b: &DMatrix<f64>, norms: &DVector<f64>| {
        let mut g = b * (b.transpose() * a) * (2.0 / n2) - b * (2.0 / n);
        for j in 0..a.ncols() {
            let coef_b = -2.0 * paired[j] / n2;
            let coef_a = 2.0 * norms[j] / n2;
            let mut col = g.column_mut(j);
            col.axpy(coef_b, &b.column(j), 1.0);
            col.axpy(coef_a, &a.column(j), 1.0);
        }
        g
    };
    LossGrad {
        value,
        dz: side(z, zp, &nz),
        dzp: side(zp, z, &nzp),
    }
}

/// Closed-form zero-loss (or, for SCL, lower-bound) characterization.
///
/// * VICReg, variance mode: `Z = Z'` and `cov(Z) = I`.
/// * VICReg, hinge mode: `Z = Z'`, `cov(Z)` diagonal and `cov_ii ≥ 1 − ε`.
/// * SCL (value `−d`): `Z = Z'` and `(1/n) Z Zᵀ = I`.
/// * Barlow Twins: `𝒞 = I` (the diagonal term vanishes; with the squared
///   off-diagonal penalty the whole loss vanishes).
///
/// Equalities are checked entrywise to [`ZERO_LOSS_TOL`].
pub fn zero_loss_conditions(kind: &LossKind, z: &DMatrix<f64>, zp: &DMatrix<f64>) -> Result<bool> {
    check_pair(z, zp)?;
    let tol = ZERO_LOSS_TOL;
    let same = (z - zp).amax() <= tol;
    let is_identity = |m: &DMatrix<f64>| (m - DMatrix::<f64>::identity(m.nrows(), m.ncols())).amax() <= tol;
    Ok(match kind {
        LossKind::Vicreg(w) => {
            let cov = matrixkit::sample_covariance(z);
            same && match w.variance_mode {
                VarianceMode::Variance => is_identity(&cov),
                VarianceMode::StdHinge { epsilon } => {
                    let d = cov.nrows();
                    (0..d).all(|i| {
                        cov[(i, i)] >= 1.0 - epsilon - tol && (0..d).all(|j| i == j || cov[(i, j)].abs() <= tol)
                    })
                }
            }
        }
        LossKind::Scl => same && is_identity(&matrixkit::second_moment(z)),
        LossKind::BarlowTwins(_) => is_identity(&cross_correlation(z, zp)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixkit::testutil::{gaussian, random_orthogonal};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn row(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, v.len(), v)
    }

    fn ones() -> VicregWeights {
        VicregWeights {
            lambda: 1.0,
            mu: 1.0,
            nu: 1.0,
            variance_mode: VarianceMode::Variance,
        }
    }

    /// `(1/n) Z Zᵀ = I` exactly up to round-off.
    fn correlation_white(rng: &mut ChaCha8Rng, d: usize, n: usize) -> DMatrix<f64> {
        let z = gaussian(rng, d, n);
        let w = matrixkit::matrix_power_sym(&matrixkit::second_moment(&z), -0.5, 1e-12).unwrap();
        w * z
    }

    fn covariance_white(rng: &mut ChaCha8Rng, d: usize, n: usize) -> DMatrix<f64> {
        let z = center_rows(&gaussian(rng, d, n));
        let w = matrixkit::matrix_power_sym(&matrixkit::sample_covariance(&z), -0.5, 1e-12).unwrap();
        w * z
    }

    #[test]
    fn vicreg_examples() {
        let z = row(&[1.0, -1.0]);
        assert_eq!(loss_vicreg(&z, &z, &ones()).unwrap(), 0.0);
        let zp = row(&[-1.0, 1.0]);
        assert!((loss_vicreg(&z, &zp, &ones()).unwrap() - 4.0).abs() < 1e-14);
        let zero = DMatrix::zeros(2, 3);
        assert!((loss_vicreg(&zero, &zero, &ones()).unwrap() - 2.0).abs() < 1e-14);
        assert!(loss_vicreg(&zero, &DMatrix::zeros(2, 4), &ones()).is_err());
    }

    #[test]
    fn vicreg_hinge_examples() {
        let w = VicregWeights {
            variance_mode: VarianceMode::StdHinge { epsilon: 1e-4 },
            ..ones()
        };
        let zero = DMatrix::zeros(1, 2);
        // v = max(0, 1 − sqrt(ε)) = 0.99 per view
        assert!((loss_vicreg(&zero, &zero, &w).unwrap() - 2.0 * 0.99).abs() < 1e-14);
        let z = row(&[2.0, -2.0]);
        assert_eq!(loss_vicreg(&z, &z, &w).unwrap(), 0.0);
        assert!(zero_loss_conditions(&LossKind::Vicreg(w), &z, &z).unwrap());
    }

    #[test]
    fn barlow_twins_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = 3;
        let z = correlation_white(&mut rng, d, 10);
        let lam = 0.7;
        let expect = lam * (d * (d - 1)) as f64;
        assert!((loss_barlow_twins(&z, &z, lam).unwrap() - expect).abs() < 1e-12);
        let sq = BarlowTwinsWeights::squared(lam);
        assert!(loss_barlow_twins_with(&z, &z, &sq).unwrap() < 1e-24);

        let z1 = row(&[1.0, 1.0]);
        assert_eq!(loss_barlow_twins(&z1, &z1, 3.0).unwrap(), 0.0);

        let zero = DMatrix::zeros(2, 4);
        assert!((loss_barlow_twins(&zero, &zero, 0.5).unwrap() - (2.0 + 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn scl_examples() {
        let one = DMatrix::from_element(1, 1, 1.0);
        assert_eq!(loss_scl(&one, &one).unwrap(), -1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = correlation_white(&mut rng, 3, 9);
        assert!((loss_scl(&z, &z).unwrap() + 3.0).abs() < 1e-12);
    }

    /// Direct transcription of the sum form, looping over every pair.
    fn scl_oracle(z: &DMatrix<f64>, zp: &DMatrix<f64>) -> f64 {
        let n = z.ncols();
        let nf = n as f64;
        let mut total = 0.0;
        for i in 0..n {
            total -= 2.0 / nf * z.column(i).dot(&zp.column(i));
            for j in 0..n {
                if i != j {
                    total += z.column(i).dot(&zp.column(j)).powi(2) / (nf * nf);
                }
            }
            total += (z.column(i).norm_squared().powi(2) + zp.column(i).norm_squared().powi(2)) / (2.0 * nf * nf);
        }
        total
    }

    #[test]
    fn scl_matches_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = gaussian(&mut rng, 2, 3);
        let zp = gaussian(&mut rng, 2, 3);
        let v = loss_scl(&z, &zp).unwrap();
        assert!(v >= -2.0);
        assert!((v - scl_oracle(&z, &zp)).abs() < 1e-12);
    }

    #[test]
    fn zero_loss_condition_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let kind = LossKind::Vicreg(VicregWeights::default());
        let z = covariance_white(&mut rng, 3, 12);
        assert!(zero_loss_conditions(&kind, &z, &z).unwrap());
        assert!(loss_vicreg(&z, &z, &VicregWeights::default()).unwrap() < 1e-10);

        let zp = &z + DMatrix::from_element(3, 12, 1e-3);
        assert!(!zero_loss_conditions(&kind, &z, &zp).unwrap());

        let scaled = &z * 2.0;
        assert!(!zero_loss_conditions(&kind, &scaled, &scaled).unwrap());
        assert!(loss_vicreg(&scaled, &scaled, &VicregWeights::default()).unwrap() > 0.0);
    }

    fn fd_check(kind: LossKind, z: &DMatrix<f64>, zp: &DMatrix<f64>) -> f64 {
        let g = kind.value_and_grad(z, zp).unwrap();
        assert!((g.value - kind.value(z, zp).unwrap()).abs() < 1e-10 * g.value.abs().max(1.0));
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for (which, analytic) in [(0, &g.dz), (1, &g.dzp)] {
            for idx in 0..z.len() {
                let (mut a, mut b) = (z.clone(), zp.clone());
                let target = if which == 0 { &mut a } else { &mut b };
                target[idx] += h;
                let up = kind.value(&a, &b).unwrap();
                let target = if which == 0 { &mut a } else { &mut b };
                target[idx] -= 2.0 * h;
                let down = kind.value(&a, &b).unwrap();
                let fd = (up - down) / (2.0 * h);
                let err = (fd - analytic[idx]).abs() / fd.abs().max(analytic[idx].abs()).max(1e-3);
                worst = worst.max(err);
            }
        }
        worst
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let kinds = [
            LossKind::Vicreg(VicregWeights::default()),
            LossKind::Vicreg(VicregWeights::original()),
            LossKind::BarlowTwins(BarlowTwinsWeights::new(0.3)),
            LossKind::BarlowTwins(BarlowTwinsWeights::squared(0.3)),
            LossKind::Scl,
        ];
        for kind in kinds {
            for _ in 0..5 {
                let z = gaussian(&mut rng, 3, 7) * 0.5;
                let zp = gaussian(&mut rng, 3, 7) * 0.5;
                let err = fd_check(kind, &z, &zp);
                assert!(err < 1e-5, "{} gradient error {err}", kind.name());
            }
        }
    }

    proptest! {
        #[test]
        fn scl_never_below_minus_d(seed in 0u64..10_000, d in 1usize..5, n in 1usize..9, scale in 0.01f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z = gaussian(&mut rng, d, n) * scale;
            let zp = gaussian(&mut rng, d, n) * scale;
            prop_assert!(loss_scl(&z, &zp).unwrap() >= -(d as f64) - 1e-9);
            prop_assert!(loss_scl(&z, &z).unwrap() >= -(d as f64) - 1e-9);
        }

        #[test]
        fn losses_ignore_batch_order(seed in 0u64..1000, d in 1usize..4, n in 2usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z = gaussian(&mut rng, d, n);
            let zp = gaussian(&mut rng, d, n);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let pz = DMatrix::from_fn(d, n, |i, j| z[(i, perm[j])]);
            let pzp = DMatrix::from_fn(d, n, |i, j| zp[(i, perm[j])]);
            for kind in [
                LossKind::Vicreg(VicregWeights::default()),
                LossKind::Vicreg(VicregWeights::original()),
                LossKind::BarlowTwins(BarlowTwinsWeights::new(0.5)),
                LossKind::Scl,
            ] {
                let a = kind.value(&z, &zp).unwrap();
                let b = kind.value(&pz, &pzp).unwrap();
                prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
            }
        }

        #[test]
        fn optima_are_rotation_invariant(seed in 0u64..1000, d in 1usize..5, extra in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = d + extra + 1;
            let q = random_orthogonal(&mut rng, d);
            let zc = covariance_white(&mut rng, d, n);
            let w = VicregWeights::default();
            let qz = &q * &zc;
            prop_assert!(loss_vicreg(&qz, &qz, &w).unwrap() < 1e-10);
            let zs = correlation_white(&mut rng, d, n);
            let qz = &q * &zs;
            prop_assert!((loss_scl(&qz, &qz).unwrap() + d as f64).abs() < 1e-10);
        }
    }
}
