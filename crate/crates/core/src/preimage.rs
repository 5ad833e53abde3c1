//! Closed-form pre-images of feature-space points `Φ θ`.
//!
//! The input-space point is the least-squares solution
//! `x' = (Xᵀ)⁺ (Xᵀ X − μ_P K⁻¹) θ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataio::DataMatrix;
use crate::error::{Error, Result};
use crate::kernels::GramMatrix;
use crate::matrixkit::{self, RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreimageConfig {
    pub mu_p: f64,
    pub rank_tol: f64,
}

impl Default for PreimageConfig {
    fn default() -> Self {
        Self { mu_p: 1.0, rank_tol: RANK_TOL }
    }
}

impl PreimageConfig {
    pub fn with_mu(mu_p: f64) -> Self {
        Self { mu_p, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_p >= 0.0 && self.mu_p.is_finite()) {
            return Err(Error::InvalidConfig(format!("mu_p must be >= 0, got {}", self.mu_p)));
        }
        Ok(())
    }
}

/// Precomputed `(Xᵀ)⁺` and `Xᵀ X − μ_P K⁻¹` for repeated queries.
#[derive(Debug, Clone)]
pub struct PreimageSolver {
    x_t: DMatrix<f64>,
    x_t_pinv: DMatrix<f64>,
    system: DMatrix<f64>,
}

impl PreimageSolver {
    pub fn new(x: &DataMatrix, gram: &GramMatrix, cfg: &PreimageConfig) -> Result<Self> {
        cfg.validate()?;
        let xv = x.values();
        if xv.ncols() != gram.n() {
            return Err(Error::dims(format!("{} points but Gram matrix is {1}x{1}", xv.ncols(), gram.n())));
        }
        let mut system = xv.transpose() * xv;
        if cfg.mu_p > 0.0 {
            let kinv = matrixkit::power_from_eig(gram.eig(), -1.0, cfg.rank_tol)
                .map_err(|_| Error::singular("pre-image with mu_p > 0 needs an invertible Gram matrix"))?;
            system -= kinv * cfg.mu_p;
        }
        let x_t = xv.transpose();
        let x_t_pinv = matrixkit::pinv(&x_t, cfg.rank_tol);
        Ok(Self { x_t, x_t_pinv, system })
    }

    pub fn solve(&self, theta: &DVector<f64>) -> Result<Preimage> {
        let out = self.solve_batch(&DMatrix::from_column_slice(theta.len(), 1, theta.as_slice()))?;
        Ok(Preimage { x: out.points.column(0).into_owned(), residual: out.residuals[0] })
    }

    /// Maps every column of `theta` independently.
    pub fn solve_batch(&self, theta: &DMatrix<f64>) -> Result<PreimageBatch> {
        if theta.nrows() != self.system.nrows() {
            return Err(Error::dims(format!(
                "θ has {} rows, expected {}",
                theta.nrows(),
                self.system.nrows()
            )));
        }
        let rhs = &self.system * theta;
        let points = &self.x_t_pinv * &rhs;
        let resid = &self.x_t * &points - &rhs;
        let residuals = resid.column_iter().map(|c| c.norm()).collect();
        Ok(PreimageBatch { points, residuals })
    }
}

#[derive(Debug, Clone)]
pub struct Preimage {
    pub x: DVector<f64>,
    /// `‖Xᵀ x' − (Xᵀ X − μ_P K⁻¹) θ‖`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct PreimageBatch {
    /// `m × q`, one pre-image per column.
    pub points: DMatrix<f64>,
    pub residuals: Vec<f64>,
}

pub fn preimage(x: &DataMatrix, gram: &GramMatrix, theta: &DVector<f64>, cfg: &PreimageConfig) -> Result<Preimage> {
    PreimageSolver::new(x, gram, cfg)?.solve(theta)
}

pub fn preimage_batch(
    x: &DataMatrix,
    gram: &GramMatrix,
    theta: &DMatrix<f64>,
    cfg: &PreimageConfig,
) -> Result<PreimageBatch> {
    PreimageSolver::new(x, gram, cfg)?.solve_batch(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gram, KernelSpec};
    use crate::matrixkit::testutil::gaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64, m: usize, n: usize, spec: KernelSpec) -> (DataMatrix, GramMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DataMatrix::new(gaussian(&mut rng, m, n)).unwrap();
        let g = gram(&spec, &x).unwrap();
        (x, g)
    }

    #[test]
    fn linear_kernel_without_regularizer_returns_x_theta() {
        for seed in 0..10 {
            let (x, g) = setup(seed, 6, 4, KernelSpec::Linear);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let theta = gaussian(&mut rng, 4, 1).column(0).into_owned();
            let p = preimage(&x, &g, &theta, &PreimageConfig::with_mu(0.0)).unwrap();
            let expect = x.values() * &theta;
            assert!((p.x - &expect).norm() <= 1e-8 * expect.norm().max(1.0));
        }
    }

    #[test]
    fn zero_theta() {
        let (x, g) = setup(1, 3, 5, KernelSpec::rbf(1.0));
        let p = preimage(&x, &g, &DVector::zeros(5), &PreimageConfig::with_mu(0.0)).unwrap();
        assert_eq!(p.x.norm(), 0.0);
    }

    #[test]
    fn local_least_squares_optimality() {
        let (x, g) = setup(2, 3, 8, KernelSpec::rbf(1.0));
        let cfg = PreimageConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = gaussian(&mut rng, 8, 1).column(0).into_owned();
        let p = preimage(&x, &g, &theta, &cfg).unwrap();
        let kinv = g.matrix().clone().try_inverse().unwrap();
        let rhs = (x.values().transpose() * x.values() - kinv) * &theta;
        let r = |v: &DVector<f64>| (x.values().transpose() * v - &rhs).norm();
        let base = r(&p.x);
        assert!((base - p.residual).abs() < 1e-8 * base.max(1.0));
        for j in 0..3 {
            for s in [-1e-4, 1e-4] {
                let mut v = p.x.clone();
                v[j] += s;
                assert!(r(&v) >= base - 1e-12);
            }
        }
    }

    #[test]
    fn linear_in_theta() {
        let (x, g) = setup(4, 4, 10, KernelSpec::rbf(2.0));
        let solver = PreimageSolver::new(&x, &g, &PreimageConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = gaussian(&mut rng, 10, 1).column(0).into_owned();
        let b = gaussian(&mut rng, 10, 1).column(0).into_owned();
        let pa = solver.solve(&a).unwrap().x;
        let pb = solver.solve(&b).unwrap().x;
        let pab = solver.solve(&(&a + &b)).unwrap().x;
        let p3 = solver.solve(&(&a * 3.0)).unwrap().x;
        assert!((pab - (&pa + &pb)).amax() < 1e-10 * pa.amax().max(1.0));
        assert!((p3 - &pa * 3.0).amax() < 1e-10 * pa.amax().max(1.0));
    }

    #[test]
    fn normal_equations_hold() {
        let (x, g) = setup(6, 3, 9, KernelSpec::rbf(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let theta = gaussian(&mut rng, 9, 1).column(0).into_owned();
        let p = preimage(&x, &g, &theta, &PreimageConfig::with_mu(0.0)).unwrap();
        let xv = x.values();
        let lhs = xv * xv.transpose() * &p.x;
        let rhs = xv * (xv.transpose() * xv) * &theta;
        assert!((lhs - &rhs).norm() <= 1e-8 * rhs.norm().max(1.0));
    }

    #[test]
    fn batch_matches_columns() {
        let (x, g) = setup(8, 3, 6, KernelSpec::rbf(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let theta = gaussian(&mut rng, 6, 4);
        let cfg = PreimageConfig::default();
        let batch = preimage_batch(&x, &g, &theta, &cfg).unwrap();
        for j in 0..4 {
            let single = preimage(&x, &g, &theta.column(j).into_owned(), &cfg).unwrap();
            assert!((batch.points.column(j) - &single.x).amax() < 1e-12);
            assert!((batch.residuals[j] - single.residual).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_gram_with_regularizer() {
        let x = DataMatrix::new(DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 2.0])).unwrap();
        let g = gram(&KernelSpec::Linear, &x).unwrap();
        assert!(matches!(
            preimage(&x, &g, &DVector::zeros(3), &PreimageConfig::default()),
            Err(Error::SingularMatrix(_))
        ));
        assert!(preimage(&x, &g, &DVector::zeros(3), &PreimageConfig::with_mu(0.0)).is_ok());
    }
}
