//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Designs whose equilibrated Gram matrix is worse conditioned than this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Two-sided normal multiplier for coverage level `level`, i.e. `z_{(1+level)/2}`.
pub fn z_for_level(level: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::Config(format!("coverage level {level} not in [0,1)")));
    }
    Ok(normal_quantile(0.5 * (1.0 + level)))
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Checks symmetry relative to the largest entry.
pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::LengthMismatch {
            what: "matrix columns",
            got: m.ncols(),
            expected: m.nrows(),
        });
    }
    let asym = max_asymmetry(m);
    if asym > 1e-12 * max_abs(m).max(1e-300) {
        return Err(Error::Asymmetric(asym));
    }
    Ok(())
}

pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenNonConvergence)
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    Ok(symmetric_eigen(m)?.eigenvalues.iter().copied().collect())
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// True when `m` admits a Cholesky factorization.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    nalgebra::Cholesky::new(m.clone()).is_some()
}

/// Symmetrizes `m` and clips negative eigenvalues at zero. Returns the
/// minimum eigenvalue observed before clipping.
pub fn symmetrize_and_clip(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let sym = (m + m.transpose()) * 0.5;
    if sym.nrows() == 0 {
        return Ok((sym, 0.0));
    }
    let eig = symmetric_eigen(&sym)?;
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        return Ok((sym, min));
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    out = (&out + out.transpose()) * 0.5;
    Ok((out, min))
}

/// Solves `G x = c` for a symmetric positive semidefinite Gram matrix,
/// rejecting designs whose equilibrated condition number exceeds [`MAX_CONDITION`].
pub fn solve_gram(g: &DMatrix<f64>, c: &DVector<f64>) -> Result<DVector<f64>> {
    let d = g.nrows();
    let mut scale = DVector::zeros(d);
    for j in 0..d {
        let gjj = g[(j, j)];
        if gjj.is_nan() || gjj <= 0.0 {
            return Err(Error::SingularDesign {
                condition: f64::INFINITY,
            });
        }
        scale[j] = 1.0 / gjj.sqrt();
    }
    let scaled = DMatrix::from_fn(d, d, |i, j| g[(i, j)] * scale[i] * scale[j]);
    let ev = eigenvalues(&scaled)?;
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::SingularDesign { condition });
    }
    let rhs = c.component_mul(&scale);
    let chol = nalgebra::Cholesky::new(scaled).ok_or(Error::SingularDesign { condition })?;
    Ok(chol.solve(&rhs).component_mul(&scale))
}
