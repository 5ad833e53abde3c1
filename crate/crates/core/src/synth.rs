//! Construction of the optimal augmentation operators.
//!
//! A target `f* = C Φᵀ` is represented by its `d × n` representer
//! coefficients `C`. The augmentation distribution draws either the identity
//! or a fixed map `T = Φ M Φᵀ` on the feature space, and everything downstream
//! only ever needs the `n × n` coefficient matrix `M`:
//!
//! * VICReg / SCL: `M = Cᵀ (C K Cᵀ)⁻¹ C`, which makes `T` a rank-`d`
//!   idempotent map fixing the target.
//! * Barlow Twins: `M = K^{-1/2} B K^{-1/2}` where `B` solves
//!   `K B + B K = 2n K^{1/2} Cᵀ (C K Cᵀ)⁻² C K^{1/2}`.
//!
//! A query point `x̂` is augmented to `Φ θ` with `θ = M k(X, x̂)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::GramMatrix;
use crate::matrixkit::{self, RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientSource {
    /// `C = F K⁻¹`, exact interpolation of the target on the training set.
    Exact,
    /// `C = F (K + λ I)⁻¹`.
    Ridge { lambda_ridge: f64 },
}

/// Representer coefficients `C ∈ R^{d×n}` of a model `f = C Φᵀ`.
#[derive(Debug, Clone)]
pub struct CoefficientMatrix {
    c: DMatrix<f64>,
    source: CoefficientSource,
}

impl CoefficientMatrix {
    /// Wraps explicit coefficients; fails unless `rank(C) = d`.
    pub fn new(c: DMatrix<f64>, source: CoefficientSource) -> Result<Self> {
        let (d, n) = c.shape();
        if d == 0 || n == 0 {
            return Err(Error::dims("coefficient matrix must be non-empty"));
        }
        let r = matrixkit::rank(&c, RANK_TOL);
        if r < d {
            return Err(Error::RankDeficientTarget(format!(
                "coefficient matrix has rank {r} < d = {d}"
            )));
        }
        Ok(Self { c, source })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn source(&self) -> CoefficientSource {
        self.source
    }

    pub fn d(&self) -> usize {
        self.c.nrows()
    }

    pub fn n(&self) -> usize {
        self.c.ncols()
    }

    /// Model outputs `C K` on the training points.
    pub fn fitted(&self, gram: &GramMatrix) -> DMatrix<f64> {
        &self.c * gram.matrix()
    }
}

/// Kernel ridge regression of the `d × n` targets `F` onto the RKHS.
pub fn krr_fit(f: &DMatrix<f64>, gram: &GramMatrix, lambda_ridge: f64) -> Result<CoefficientMatrix> {
    let (d, n) = f.shape();
    if n != gram.n() {
        return Err(Error::dims(format!("target has {n} columns, Gram matrix is {0}x{0}", gram.n())));
    }
    if d == 0 || d >= n {
        return Err(Error::InvalidConfig(format!(
            "target dimension d = {d} must satisfy 1 <= d < n = {n}"
        )));
    }
    if !(lambda_ridge >= 0.0 && lambda_ridge.is_finite()) {
        return Err(Error::InvalidConfig(format!("ridge parameter must be >= 0, got {lambda_ridge}")));
    }
    let source = if lambda_ridge == 0.0 {
        gram.require_full_rank()?;
        CoefficientSource::Exact
    } else {
        CoefficientSource::Ridge { lambda_ridge }
    };
    let system = gram.matrix() + DMatrix::identity(n, n) * lambda_ridge;
    let chol = system
        .cholesky()
        .ok_or_else(|| Error::singular("K + λI is not positive definite"))?;
    let c = chol.solve(&f.transpose()).transpose();
    CoefficientMatrix::new(c, source)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorFamily {
    VicregScl,
    BarlowTwins,
}

/// Numerical checks recorded when an operator is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorDiagnostics {
    /// `‖M K M − M‖_F / ‖M‖_F`.
    pub mkm_residual: f64,
    /// VICReg/SCL: `‖C K M K − C K‖_F / ‖C K‖_F` (target invariance).
    /// Barlow Twins: `‖C K Cᵀ (C K Cᵀ)⁻² C K Cᵀ − I‖_F` (zero-loss condition).
    pub target_residual: f64,
    /// Residual of the Lyapunov solve (Barlow Twins only).
    pub lyapunov_residual: Option<f64>,
}

/// The non-identity augmentation `T = Φ M Φᵀ`, stored as `M`.
#[derive(Debug, Clone)]
pub struct AugmentationOperator {
    m: DMatrix<f64>,
    family: OperatorFamily,
    gram_fingerprint: u64,
    diagnostics: OperatorDiagnostics,
}

impl AugmentationOperator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn family(&self) -> OperatorFamily {
        self.family
    }

    pub fn gram_fingerprint(&self) -> u64 {
        self.gram_fingerprint
    }

    pub fn diagnostics(&self) -> &OperatorDiagnostics {
        &self.diagnostics
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn check_gram(&self, gram: &GramMatrix) -> Result<()> {
        if gram.fingerprint() != self.gram_fingerprint {
            return Err(Error::GramMismatch);
        }
        Ok(())
    }

    /// `K M K`: column `i` holds `Φᵀ T φ(x_i)`, i.e. the kernel evaluations of
    /// the augmented training point against the training set. A model with
    /// coefficients `A` maps augmented point `i` to column `i` of `A K M K`.
    pub fn augmented_training_view(&self, gram: &GramMatrix) -> Result<DMatrix<f64>> {
        self.check_gram(gram)?;
        let k = gram.matrix();
        Ok(matrixkit::symmetrize(&(k * &self.m * k)))
    }

    /// Eigenvalues of `M K` (equivalently of `K^{1/2} M K^{1/2}`), descending.
    /// For the VICReg/SCL operator these are `d` ones and `n − d` zeros.
    pub fn rkhs_spectrum(&self, gram: &GramMatrix) -> Result<DVector<f64>> {
        self.check_gram(gram)?;
        let half = matrixkit::power_from_eig(gram.eig(), 0.5, RANK_TOL)?;
        Ok(matrixkit::sym_eig(&matrixkit::symmetrize(&(&half * &self.m * &half)))?.eigenvalues)
    }
}

fn check_inputs(c: &CoefficientMatrix, gram: &GramMatrix) -> Result<()> {
    if c.n() != gram.n() {
        return Err(Error::dims(format!(
            "coefficients have {} columns, Gram matrix is {1}x{1}",
            c.n(),
            gram.n()
        )));
    }
    gram.require_full_rank()?;
    let r = matrixkit::rank(c.matrix(), RANK_TOL);
    if r < c.d() {
        return Err(Error::RankDeficientTarget(format!("rank(C) = {r} < d = {}", c.d())));
    }
    Ok(())
}

/// `(C K Cᵀ)⁻¹`, failing if the `d × d` matrix is numerically singular.
fn inner_inverse(c: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ckc = matrixkit::symmetrize(&(c * k * c.transpose()));
    matrixkit::spd_inverse(&ckc, RANK_TOL)
        .map_err(|_| Error::singular("C K Cᵀ is numerically singular"))
}

/// VICReg / SCL operator `M = Cᵀ (C K Cᵀ)⁻¹ C`.
pub fn build_vicreg_scl_operator(c: &CoefficientMatrix, gram: &GramMatrix) -> Result<AugmentationOperator> {
    check_inputs(c, gram)?;
    let k = gram.matrix();
    let cm = c.matrix();
    let inv = inner_inverse(cm, k)?;
    let m = matrixkit::symmetrize(&(cm.transpose() * inv * cm));

    let mkm = &m * k * &m;
    let ck = cm * k;
    let diagnostics = OperatorDiagnostics {
        mkm_residual: (&mkm - &m).norm() / m.norm(),
        target_residual: (&ck * &m * k - &ck).norm() / ck.norm(),
        lyapunov_residual: None,
    };
    Ok(AugmentationOperator {
        m,
        family: OperatorFamily::VicregScl,
        gram_fingerprint: gram.fingerprint(),
        diagnostics,
    })
}

/// Barlow Twins operator `M = K^{-1/2} B K^{-1/2}` with `B` the symmetric
/// solution of `K B + B K = 2n K^{1/2} Cᵀ (C K Cᵀ)⁻² C K^{1/2}`.
pub fn build_barlow_twins_operator(c: &CoefficientMatrix, gram: &GramMatrix) -> Result<AugmentationOperator> {
    check_inputs(c, gram)?;
    let n = gram.n() as f64;
    let k = gram.matrix();
    let cm = c.matrix();
    let half = matrixkit::power_from_eig(gram.eig(), 0.5, RANK_TOL)?;
    let inv_half = matrixkit::power_from_eig(gram.eig(), -0.5, RANK_TOL)?;
    let inv = inner_inverse(cm, k)?;
    let inv2 = &inv * &inv;

    let rhs = matrixkit::symmetrize(&(&half * cm.transpose() * &inv2 * cm * &half * (2.0 * n)));
    let lyap = matrixkit::lyapunov_solve_with_eig(k, gram.eig(), &rhs)?;
    let m = matrixkit::symmetrize(&(&inv_half * &lyap.b * &inv_half));

    let ckc = cm * k * cm.transpose();
    let cond = &ckc * &inv2 * &ckc;
    let d = c.d();
    let diagnostics = OperatorDiagnostics {
        mkm_residual: (&m * k * &m - &m).norm() / m.norm(),
        target_residual: (cond - DMatrix::<f64>::identity(d, d)).norm(),
        lyapunov_residual: Some(lyap.residual_norm),
    };
    Ok(AugmentationOperator {
        m,
        family: OperatorFamily::BarlowTwins,
        gram_fingerprint: gram.fingerprint(),
        diagnostics,
    })
}

pub fn build_operator(
    family: OperatorFamily,
    c: &CoefficientMatrix,
    gram: &GramMatrix,
) -> Result<AugmentationOperator> {
    match family {
        OperatorFamily::VicregScl => build_vicreg_scl_operator(c, gram),
        OperatorFamily::BarlowTwins => build_barlow_twins_operator(c, gram),
    }
}

/// `M K_cross`: column `j` holds the coefficients `θ_j` of the augmented
/// feature-space point `Φ θ_j` for query `x̂_j`.
pub fn augment_coefficients(
    op: &AugmentationOperator,
    gram: &GramMatrix,
    k_cross: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    op.check_gram(gram)?;
    if k_cross.nrows() != op.n() {
        return Err(Error::dims(format!(
            "cross-Gram has {} rows, operator expects {}",
            k_cross.nrows(),
            op.n()
        )));
    }
    Ok(op.matrix() * k_cross)
}

/// `C_model K θ`: the model's output at the feature-space point `Φ θ`.
pub fn representation_of_augmented(
    c_model: &DMatrix<f64>,
    gram: &GramMatrix,
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    if c_model.ncols() != gram.n() || theta.len() != gram.n() {
        return Err(Error::dims(format!(
            "model has {} columns, θ has {} entries, Gram is {2}x{2}",
            c_model.ncols(),
            theta.len(),
            gram.n()
        )));
    }
    Ok(c_model * (gram.matrix() * theta))
}

/// How the two views of a point are drawn from `{identity, T}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// `(T_i, T'_i)` independent, each uniform over the two maps.
    IndependentPair,
    /// The ordered pair is uniform over `{(identity, T), (T, identity)}`.
    ConditionedDistinct,
}

/// Binary augmentation distribution: identity or `T`, each with probability ½.
#[derive(Debug, Clone)]
pub struct AugmentationDistribution {
    operator: AugmentationOperator,
    pairing: Pairing,
}

impl AugmentationDistribution {
    /// Uses the pairing each family is defined with: independent views for
    /// VICReg/SCL, distinct views for Barlow Twins.
    pub fn new(operator: AugmentationOperator) -> Self {
        let pairing = match operator.family {
            OperatorFamily::VicregScl => Pairing::IndependentPair,
            OperatorFamily::BarlowTwins => Pairing::ConditionedDistinct,
        };
        Self { operator, pairing }
    }

    pub fn with_pairing(operator: AugmentationOperator, pairing: Pairing) -> Result<Self> {
        if operator.family == OperatorFamily::BarlowTwins && pairing != Pairing::ConditionedDistinct {
            return Err(Error::InvalidConfig(
                "Barlow Twins augmentations must draw distinct views".into(),
            ));
        }
        Ok(Self { operator, pairing })
    }

    pub fn operator(&self) -> &AugmentationOperator {
        &self.operator
    }

    pub fn pairing(&self) -> Pairing {
        self.pairing
    }
}
