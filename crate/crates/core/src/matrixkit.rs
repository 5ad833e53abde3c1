//! Dense linear-algebra primitives.
//!
//! Everything here operates on small-to-medium dense symmetric matrices
//! (Gram matrices, covariances). Eigen- and singular-value decompositions are
//! delegated to `nalgebra`; the Lyapunov solver, matrix functions and rank
//! decisions are built on top of them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative tolerance for every rank decision (eigenvalues or
/// singular values below `RANK_TOL * largest` count as zero).
pub const RANK_TOL: f64 = 1e-10;

/// Relative tolerance for accepting a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigendecomposition `A = U diag(λ) Uᵀ` of a symmetric matrix, eigenvalues
/// sorted in descending order.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SymEig {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `U diag(g(λ)) Uᵀ`.
    pub fn map(&self, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= g(self.eigenvalues[j]);
        }
        symmetrize(&(scaled * u.transpose()))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map(|l| l)
    }

    /// True when the smallest eigenvalue exceeds `rank_tol` times the largest.
    pub fn is_positive_definite(&self, rank_tol: f64) -> bool {
        let max = self.max_eigenvalue();
        max > 0.0 && self.min_eigenvalue() > rank_tol * max
    }
}

/// Continuous-time Lyapunov solution `K B + B Kᵀ = RHS`.
#[derive(Debug, Clone)]
pub struct LyapunovSolution {
    pub b: DMatrix<f64>,
    /// Frobenius norm of `K B + B Kᵀ − RHS`.
    pub residual_norm: f64,
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.norm()
}

/// `‖A − Aᵀ‖_F / ‖A‖_F`, zero for the zero matrix.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    if !a.is_square() {
        return f64::INFINITY;
    }
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / norm
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn check_square(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(Error::dims(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )))
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<SymEig> {
    check_square(a, "sym_eig input")?;
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(Error::NonSymmetric { asymmetry: asym });
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(SymEig {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = symmetrize(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

/// `A^p` for symmetric PSD `A` via its eigendecomposition.
///
/// Negative exponents require `A` to be numerically positive definite
/// (smallest eigenvalue above `rank_tol` times the largest). Tiny negative
/// eigenvalues from round-off are clamped to zero for non-negative `p`.
pub fn matrix_power_sym(a: &DMatrix<f64>, p: f64, rank_tol: f64) -> Result<DMatrix<f64>> {
    let eig = sym_eig(a)?;
    power_from_eig(&eig, p, rank_tol)
}

pub fn power_from_eig(eig: &SymEig, p: f64, rank_tol: f64) -> Result<DMatrix<f64>> {
    if eig.dim() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if p < 0.0 && !eig.is_positive_definite(rank_tol) {
        return Err(Error::singular(format!(
            "negative power {p} of a matrix with eigenvalue range [{:.3e}, {:.3e}]",
            eig.min_eigenvalue(),
            eig.max_eigenvalue()
        )));
    }
    Ok(eig.map(|l| if p == 0.0 { 1.0 } else { l.max(0.0).powf(p) }))
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(a: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>> {
    matrix_power_sym(a, -1.0, rank_tol)
}

/// Moore–Penrose pseudo-inverse. Singular values below `rank_tol · σ_max`
/// are treated as zero.
pub fn pinv(a: &DMatrix<f64>, rank_tol: f64) -> DMatrix<f64> {
    let (p, q) = a.shape();
    if p == 0 || q == 0 {
        return DMatrix::zeros(q, p);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DMatrix::zeros(q, p);
    }
    let cutoff = rank_tol * smax;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut v_scaled = v_t.transpose();
    for (j, mut col) in v_scaled.column_iter_mut().enumerate() {
        let s = svd.singular_values[j];
        col *= if s > cutoff { 1.0 / s } else { 0.0 };
    }
    v_scaled * u.transpose()
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    DVector::from_vec(s)
}

/// Numerical rank relative to the largest singular value.
pub fn rank(a: &DMatrix<f64>, rank_tol: f64) -> usize {
    let s = singular_values(a);
    match s.iter().next() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&x| x > rank_tol * smax).count(),
        _ => 0,
    }
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(a, "cholesky input")?;
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(Error::NonSymmetric { asymmetry: asym });
    }
    symmetrize(a)
        .cholesky()
        .map(|c| c.unpack())
        .ok_or_else(|| Error::singular("matrix is not positive definite"))
}

/// Solves `K B + B Kᵀ = RHS` for symmetric positive definite `K`.
///
/// `K = U Λ Uᵀ` turns the equation into `Λ B̃ + B̃ Λ = Uᵀ RHS U`, which is
/// solved entrywise as `B̃_ij = R̃_ij / (λ_i + λ_j)`.
pub fn lyapunov_solve(k: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<LyapunovSolution> {
    let eig = sym_eig(k)?;
    lyapunov_solve_with_eig(k, &eig, rhs)
}

/// Same as [`lyapunov_solve`] with a precomputed eigendecomposition of `K`.
pub fn lyapunov_solve_with_eig(
    k: &DMatrix<f64>,
    eig: &SymEig,
    rhs: &DMatrix<f64>,
) -> Result<LyapunovSolution> {
    check_square(rhs, "Lyapunov right-hand side")?;
    if rhs.nrows() != k.nrows() || eig.dim() != k.nrows() {
        return Err(Error::dims(format!(
            "Lyapunov: K is {}x{}, RHS is {}x{}",
            k.nrows(),
            k.ncols(),
            rhs.nrows(),
            rhs.ncols()
        )));
    }
    if !eig.is_positive_definite(RANK_TOL) {
        return Err(Error::singular(format!(
            "Lyapunov coefficient is not positive definite (eigenvalue range [{:.3e}, {:.3e}])",
            eig.min_eigenvalue(),
            eig.max_eigenvalue()
        )));
    }
    let u = &eig.eigenvectors;
    let lam = &eig.eigenvalues;
    let mut rt = u.transpose() * rhs * u;
    let n = rt.nrows();
    for j in 0..n {
        for i in 0..n {
            rt[(i, j)] /= lam[i] + lam[j];
        }
    }
    let mut b = u * rt * u.transpose();
    if asymmetry(rhs) <= SYMMETRY_TOL {
        b = symmetrize(&b);
    }
    let residual_norm = (k * &b + &b * k.transpose() - rhs).norm();
    Ok(LyapunovSolution { b, residual_norm })
}

/// `H_n = I − (1/n) 1 1ᵀ`.
pub fn centering_matrix(n: usize) -> DMatrix<f64> {
    let inv = 1.0 / n as f64;
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 - inv } else { -inv })
}

/// Row means of a `d × n` matrix.
pub fn row_means(z: &DMatrix<f64>) -> DVector<f64> {
    let n = z.ncols().max(1) as f64;
    DVector::from_iterator(z.nrows(), z.row_iter().map(|r| r.sum() / n))
}

/// `Z H`: every row shifted to zero mean.
pub fn center_rows(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = row_means(z);
    let mut out = z.clone();
    for mut col in out.column_iter_mut() {
        col -= &mean;
    }
    out
}

/// `cov(Z) = (1/n) (Z H)(Z H)ᵀ` for a `d × n` matrix of `n` samples.
pub fn sample_covariance(z: &DMatrix<f64>) -> DMatrix<f64> {
    let zc = center_rows(z);
    symmetrize(&(&zc * zc.transpose())) / z.ncols() as f64
}

/// Uncentered second moment `(1/n) Z Zᵀ`.
pub fn second_moment(z: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(z * z.transpose())) / z.ncols() as f64
}

#[cfg(test)]
pub(crate) mod testutil {
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = gaussian(rng, n, n);
        super::symmetrize(&(&a * a.transpose())) + DMatrix::identity(n, n) * (0.5 * n as f64).max(1.0)
    }

    pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        super::symmetrize(&gaussian(rng, n, n))
    }

    pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        gaussian(rng, n, n).qr().q()
    }

    pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }
}
