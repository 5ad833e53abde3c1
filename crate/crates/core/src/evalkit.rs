//! Recovery metrics: orthogonal Procrustes distance, whitening, affine
//! equivalence, and matched-covariance random baselines.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixkit::{self, RANK_TOL};

/// Condition number above which a fitted affine map counts as singular.
pub const MAX_AFFINE_CONDITION: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct ProcrustesReport {
    /// `min_Q (1/n) ‖F − Q F*‖_F` over orthogonal `Q`.
    pub distance: f64,
    pub q: DMatrix<f64>,
}

/// Aligns `fstar` to `f` with the best orthogonal map (reflections allowed).
pub fn procrustes(f: &DMatrix<f64>, fstar: &DMatrix<f64>) -> Result<ProcrustesReport> {
    if f.shape() != fstar.shape() {
        return Err(Error::dims(format!(
            "procrustes: {:?} vs {:?}",
            f.shape(),
            fstar.shape()
        )));
    }
    let (d, n) = f.shape();
    if d == 0 || n == 0 {
        return Ok(ProcrustesReport { distance: 0.0, q: DMatrix::identity(d, d) });
    }
    let svd = (f * fstar.transpose()).svd(true, true);
    let q = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
    let distance = (f - &q * fstar).norm() / n as f64;
    Ok(ProcrustesReport { distance, q })
}

pub fn procrustes_distance(f: &DMatrix<f64>, fstar: &DMatrix<f64>) -> Result<f64> {
    procrustes(f, fstar).map(|r| r.distance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhitenMode {
    /// Centered: `cov(Fw) = I`.
    Covariance,
    /// Uncentered: `(1/n) Fw Fwᵀ = I`.
    Correlation,
}

#[derive(Debug, Clone)]
pub struct Whitening {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub fw: DMatrix<f64>,
}

/// Symmetric (ZCA) whitening `Fw = W (F − b 1ᵀ)`.
pub fn whiten(f: &DMatrix<f64>, mode: WhitenMode) -> Result<Whitening> {
    let d = f.nrows();
    let (b, moment) = match mode {
        WhitenMode::Covariance => (matrixkit::row_means(f), matrixkit::sample_covariance(f)),
        WhitenMode::Correlation => (DVector::zeros(d), matrixkit::second_moment(f)),
    };
    let w = matrixkit::matrix_power_sym(&moment, -0.5, RANK_TOL)
        .map_err(|_| Error::singular("representation covariance is singular; cannot whiten"))?;
    let mut shifted = f.clone();
    for mut col in shifted.column_iter_mut() {
        col -= &b;
    }
    let fw = &w * shifted;
    Ok(Whitening { w, b, fw })
}

/// Least-squares fit of `F ≈ A G + b 1ᵀ`.
#[derive(Debug, Clone)]
pub struct AffineFit {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// `(1/n) ‖F − (A G + b 1ᵀ)‖_F`.
    pub residual: f64,
    pub condition: f64,
}

pub fn affine_fit(f: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<AffineFit> {
    if f.shape() != g.shape() {
        return Err(Error::dims(format!("affine fit: {:?} vs {:?}", f.shape(), g.shape())));
    }
    let (d, n) = f.shape();
    if n <= d {
        return Err(Error::dims(format!("affine fit needs n > d, got n = {n}, d = {d}")));
    }
    let mut aug = DMatrix::from_element(d + 1, n, 1.0);
    aug.rows_mut(0, d).copy_from(g);
    let ab = f * matrixkit::pinv(&aug, RANK_TOL);
    let a = ab.columns(0, d).into_owned();
    let b = ab.column(d).into_owned();
    let residual = (f - &ab * &aug).norm() / n as f64;
    let s = matrixkit::singular_values(&a);
    let condition = match (s.iter().next(), s.iter().next_back()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    };
    Ok(AffineFit { a, b, residual, condition })
}

/// `true` iff `F = A G + b 1ᵀ` for an invertible `A`, up to `tol`.
pub fn affine_equivalent(f: &DMatrix<f64>, g: &DMatrix<f64>, tol: f64) -> Result<bool> {
    let fit = affine_fit(f, g)?;
    Ok(fit.residual <= tol && fit.condition < MAX_AFFINE_CONDITION)
}

/// `true` iff `W Γ Wᵀ = I` within 1e-8.
pub fn whitening_solution_set_check(gamma: &DMatrix<f64>, w: &DMatrix<f64>) -> bool {
    let d = gamma.nrows();
    if w.ncols() != d || gamma.ncols() != d {
        return false;
    }
    (w * gamma * w.transpose() - DMatrix::<f64>::identity(w.nrows(), w.nrows())).amax() <= 1e-8
}

/// `W = Q S^{-1/2} Uᵀ` for `Γ = U S Uᵀ`; every solution of `W Γ Wᵀ = I` has this form.
pub fn whitening_solution(gamma: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = matrixkit::sym_eig(gamma)?;
    if !eig.is_positive_definite(RANK_TOL) {
        return Err(Error::singular("Γ is not positive definite"));
    }
    if q.shape() != (eig.dim(), eig.dim()) {
        return Err(Error::dims(format!("Q is {:?}, Γ is {}x{}", q.shape(), eig.dim(), eig.dim())));
    }
    let s = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(q * s * eig.eigenvectors.transpose())
}

/// Gaussian sample with the same mean and covariance as the columns of `f`.
pub fn random_baseline(f: &DMatrix<f64>, seed: u64) -> DMatrix<f64> {
    let (d, n) = f.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(d, n, |_, _| StandardNormal.sample(&mut rng));
    let cov = matrixkit::sample_covariance(f);
    let factor = matrixkit::cholesky(&cov)
        .or_else(|_| matrixkit::matrix_power_sym(&cov, 0.5, RANK_TOL))
        .unwrap_or_else(|_| DMatrix::zeros(d, d));
    let mean = matrixkit::row_means(f);
    let mut out = factor * g;
    for mut col in out.column_iter_mut() {
        col += &mean;
    }
    out
}

/// What learned representations are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Whitened and centered target; learned representations are centered first.
    CovarianceWhitened,
    /// Correlation-whitened, uncentered target.
    CorrelationWhitened,
    /// The target itself.
    Raw,
}

/// A fixed reference for recovery distances, plus its random baseline.
#[derive(Debug, Clone)]
pub struct RecoveryReference {
    kind: ReferenceKind,
    reference: DMatrix<f64>,
    baseline: DMatrix<f64>,
}

impl RecoveryReference {
    pub fn new(target: &DMatrix<f64>, kind: ReferenceKind, baseline_seed: u64) -> Result<Self> {
        let reference = match kind {
            ReferenceKind::CovarianceWhitened => whiten(target, WhitenMode::Covariance)?.fw,
            ReferenceKind::CorrelationWhitened => whiten(target, WhitenMode::Correlation)?.fw,
            ReferenceKind::Raw => target.clone(),
        };
        let baseline = random_baseline(&reference, baseline_seed);
        Ok(Self { kind, reference, baseline })
    }

    pub fn kind(&self) -> ReferenceKind {
        self.kind
    }

    pub fn reference(&self) -> &DMatrix<f64> {
        &self.reference
    }

    pub fn baseline(&self) -> &DMatrix<f64> {
        &self.baseline
    }

    /// Procrustes distance from `z` (after centering, if the reference is centered).
    pub fn distance(&self, z: &DMatrix<f64>) -> Result<f64> {
        match self.kind {
            ReferenceKind::CovarianceWhitened => procrustes_distance(&matrixkit::center_rows(z), &self.reference),
            _ => procrustes_distance(z, &self.reference),
        }
    }

    pub fn baseline_distance(&self) -> Result<f64> {
        self.distance(&self.baseline)
    }
}
