//! Kernel functions and Gram matrices.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataio::DataMatrix;
use crate::error::{Error, Result};
use crate::matrixkit::{self, SymEig, RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `exp(−‖x − y‖² / (2σ²))`.
    Rbf { sigma: f64 },
    /// `xᵀy`.
    Linear,
    /// `(xᵀy + offset)^degree`.
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    pub fn rbf(sigma: f64) -> Self {
        KernelSpec::Rbf { sigma }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::InvalidConfig(format!("RBF sigma must be > 0, got {sigma}")))
            }
            KernelSpec::Polynomial { degree, .. } if degree < 1 => {
                Err(Error::InvalidConfig("polynomial degree must be >= 1".into()))
            }
            KernelSpec::Polynomial { offset, .. } if !(offset >= 0.0 && offset.is_finite()) => {
                Err(Error::InvalidConfig(format!("polynomial offset must be >= 0, got {offset}")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Rbf { .. } => "rbf",
            KernelSpec::Linear => "linear",
            KernelSpec::Polynomial { .. } => "polynomial",
        }
    }

    // Fixed summation order per entry, so results do not depend on how
    // entries are scheduled.
    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Rbf { sigma } => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (2.0 * sigma * sigma)).exp()
            }
            KernelSpec::Linear => dot(x, y),
            KernelSpec::Polynomial { degree, offset } => (dot(x, y) + offset).powi(degree as i32),
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dims(format!(
            "kernel arguments have dimensions {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(spec.eval_unchecked(x, y))
}

/// Gram matrix `K = [κ(x_i, x_j)]` with its spectrum.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    k: DMatrix<f64>,
    eig: SymEig,
    spec: KernelSpec,
    jitter: f64,
    fingerprint: u64,
}

impl GramMatrix {
    /// Wraps an explicit symmetric PSD matrix. `spec` is recorded only for
    /// fingerprinting.
    pub fn from_matrix(k: DMatrix<f64>, spec: KernelSpec) -> Result<Self> {
        Self::assemble(k, spec, 0.0)
    }

    fn assemble(k: DMatrix<f64>, spec: KernelSpec, jitter: f64) -> Result<Self> {
        let k = matrixkit::symmetrize(&k);
        let eig = matrixkit::sym_eig(&k)?;
        let fingerprint = fingerprint(&k, &spec, jitter);
        Ok(Self {
            k,
            eig,
            spec,
            jitter,
            fingerprint,
        })
    }

    /// Adds `jitter · I` to the matrix (cumulative with any earlier jitter).
    pub fn with_jitter(self, jitter: f64) -> Result<Self> {
        if jitter == 0.0 {
            return Ok(self);
        }
        if !(jitter > 0.0 && jitter.is_finite()) {
            return Err(Error::InvalidConfig(format!("jitter must be >= 0, got {jitter}")));
        }
        let n = self.n();
        let k = self.k + DMatrix::identity(n, n) * jitter;
        Self::assemble(k, self.spec, self.jitter + jitter)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn eig(&self) -> &SymEig {
        &self.eig
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub fn min_eig(&self) -> f64 {
        self.eig.min_eigenvalue()
    }

    pub fn max_eig(&self) -> f64 {
        self.eig.max_eigenvalue()
    }

    /// Full-rank condition on the Gram matrix: `λ_min > RANK_TOL · λ_max`.
    pub fn full_rank(&self) -> bool {
        self.eig.is_positive_definite(RANK_TOL)
    }

    pub fn require_full_rank(&self) -> Result<()> {
        if self.full_rank() {
            Ok(())
        } else {
            Err(Error::singular(format!(
                "Gram matrix is rank deficient (eigenvalue range [{:.3e}, {:.3e}]); \
                 duplicate points or a low-rank kernel",
                self.min_eig(),
                self.max_eig()
            )))
        }
    }

    /// Identity of `(n, kernel, jitter, entries rounded to 1e-12)`.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

fn fingerprint(k: &DMatrix<f64>, spec: &KernelSpec, jitter: f64) -> u64 {
    let mut h = DefaultHasher::new();
    k.nrows().hash(&mut h);
    serde_json::to_string(spec).expect("kernel spec serializes").hash(&mut h);
    jitter.to_bits().hash(&mut h);
    for v in k.iter() {
        ((v * 1e12).round() as i64).hash(&mut h);
    }
    h.finish()
}

pub fn gram(spec: &KernelSpec, x: &DataMatrix) -> Result<GramMatrix> {
    spec.validate()?;
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = spec.eval_unchecked(x.point(i), x.point(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    GramMatrix::assemble(k, *spec, 0.0)
}

/// `n × k` matrix with entry `(i, j) = κ(x_i, x̂_j)`.
pub fn cross_gram(spec: &KernelSpec, x: &DataMatrix, xhat: &DataMatrix) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if !xhat.is_empty() && x.dim() != xhat.dim() {
        return Err(Error::dims(format!(
            "training points have dimension {}, queries {}",
            x.dim(),
            xhat.dim()
        )));
    }
    Ok(DMatrix::from_fn(x.len(), xhat.len(), |i, j| {
        spec.eval_unchecked(x.point(i), xhat.point(j))
    }))
}
