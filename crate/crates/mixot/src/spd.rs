//! Symmetric positive definite kernel.
//!
//! Matrix square roots, the closed-form quadratic transport cost between
//! location-scatter measures,
//!
//! ```text
//! W₂²(a₀, a₁) = ‖m₀ − m₁‖² + Tr(Σ₀ + Σ₁ − 2(Σ₀^{1/2} Σ₁ Σ₀^{1/2})^{1/2}),
//! ```
//!
//! the optimal affine map `T(x) = m₁ + A(x − m₀)` with
//! `A = Σ₀^{-1/2}(Σ₀^{1/2} Σ₁ Σ₀^{1/2})^{1/2} Σ₀^{-1/2}`, and the barycenter
//! covariance fixed point `S = Σ_q t_q (S^{1/2} Σ_q S^{1/2})^{1/2}`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::util::normalize_weights;

/// Relative Frobenius tolerance for accepting a matrix as symmetric.
pub const SYMMETRY_REL_TOL: f64 = 1e-12;

/// Eigenvalues below `dim · EIGEN_CLAMP_FACTOR · λ_max` count as zero.
pub const EIGEN_CLAMP_FACTOR: f64 = 1e-14;

/// Relative residual demanded of the barycenter covariance fixed point.
pub const BARYCENTER_RESIDUAL_TOL: f64 = 1e-8;

/// Iteration cap for the barycenter covariance fixed point.
pub const BARYCENTER_MAX_ITER: usize = 200;

/// A validated symmetric positive (semi)definite matrix.
///
/// Strictly positive definite unless constructed through
/// [`SpdMatrix::new_degenerate`], which admits zero eigenvalues.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix {
    data: DMatrix<f64>,
    degenerate: bool,
}

impl SpdMatrix {
    /// Validate and wrap a strictly positive definite matrix.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        Self::build(data, false)
    }

    /// Validate and wrap a positive semidefinite matrix (zero eigenvalues allowed).
    pub fn new_degenerate(data: DMatrix<f64>) -> Result<Self> {
        Self::build(data, true)
    }

    fn build(data: DMatrix<f64>, degenerate: bool) -> Result<Self> {
        if data.nrows() != data.ncols() || data.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "expected a nonempty square matrix, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        let norm = data.norm();
        let asym = (&data - data.transpose()).norm();
        if asym > SYMMETRY_REL_TOL * norm.max(1e-300) {
            return Err(Error::NotSymmetric(asym / norm.max(1e-300)));
        }
        // Work with the symmetrized matrix from here on.
        let sym = (&data + data.transpose()) * 0.5;
        let eigen = sym.clone().symmetric_eigen();
        let lambda_max = eigen.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let lambda_min = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let clamp = sym.nrows() as f64 * EIGEN_CLAMP_FACTOR * lambda_max;
        if lambda_min < -clamp {
            return Err(Error::NotPositiveSemidefinite(lambda_min));
        }
        if !degenerate && lambda_min <= clamp {
            return Err(Error::SingularMatrix(lambda_min));
        }
        Ok(Self { data: sym, degenerate })
    }

    /// Identity matrix of the given dimension.
    pub fn identity(dim: usize) -> Self {
        Self {
            data: DMatrix::identity(dim, dim),
            degenerate: false,
        }
    }

    /// Diagonal matrix with the given strictly positive entries.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_row_slice(diag)))
    }

    /// 1x1 matrix holding a single variance.
    pub fn scalar(v: f64) -> Result<Self> {
        Self::from_diagonal(&[v])
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Principal square root by symmetric eigendecomposition, negative
    /// eigenvalues clamped to zero.
    pub fn sqrt(&self) -> SpdMatrix {
        SpdMatrix {
            data: matrix_power_psd(&self.data, 0.5),
            degenerate: self.degenerate,
        }
    }

    /// Inverse square root; fails on (near-)singular input.
    pub fn inv_sqrt(&self) -> Result<SpdMatrix> {
        let eigen = self.data.clone().symmetric_eigen();
        let lambda_max = eigen.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let clamp = self.dim() as f64 * EIGEN_CLAMP_FACTOR * lambda_max;
        let lambda_min = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if lambda_min <= clamp {
            return Err(Error::SingularMatrix(lambda_min));
        }
        let vals = eigen.eigenvalues.map(|l| 1.0 / l.sqrt());
        let m = &eigen.eigenvectors * DMatrix::from_diagonal(&vals) * eigen.eigenvectors.transpose();
        Ok(SpdMatrix {
            data: symmetrize(&m),
            degenerate: false,
        })
    }

    /// Largest eigenvalue (used for support bounding boxes).
    pub fn max_eigenvalue(&self) -> f64 {
        self.data
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(0.0, f64::max)
    }

    /// log(det Σ); zero eigenvalues make it -inf.
    pub fn log_det(&self) -> f64 {
        self.data
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|l| l.max(0.0).ln())
            .sum()
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `Mᵖ` for symmetric positive semidefinite `M`, eigenvalues clamped at zero.
fn matrix_power_psd(m: &DMatrix<f64>, p: f64) -> DMatrix<f64> {
    let eigen = m.clone().symmetric_eigen();
    let vals = eigen.eigenvalues.map(|l| l.max(0.0).powf(p));
    symmetrize(&(&eigen.eigenvectors * DMatrix::from_diagonal(&vals) * eigen.eigenvectors.transpose()))
}

/// Trace of the principal square root of a symmetric PSD matrix.
fn trace_sqrt_psd(m: &DMatrix<f64>) -> f64 {
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum()
}

/// Principal matrix square root of a validated SPD matrix.
pub fn sqrt_spd(m: &SpdMatrix) -> SpdMatrix {
    m.sqrt()
}

/// Squared quadratic Wasserstein distance between two location-scatter
/// measures identified by their first two moments.
pub fn gaussian_w2_squared(
    mean0: &DVector<f64>,
    scatter0: &SpdMatrix,
    mean1: &DVector<f64>,
    scatter1: &SpdMatrix,
) -> Result<f64> {
    let d = mean0.len();
    for (name, got) in [
        ("mean1", mean1.len()),
        ("scatter0", scatter0.dim()),
        ("scatter1", scatter1.dim()),
    ] {
        if got != d {
            let _ = name;
            return Err(Error::DimensionMismatch { expected: d, got });
        }
    }
    // Equal parameters give zero exactly; the eigendecomposition route would
    // leave round-off dust that a square root downstream amplifies.
    if mean0 == mean1 && scatter0.matrix() == scatter1.matrix() {
        return Ok(0.0);
    }
    let mean_term = (mean0 - mean1).norm_squared();
    let root0 = scatter0.sqrt();
    let cross = root0.matrix() * scatter1.matrix() * root0.matrix();
    let value = mean_term + scatter0.matrix().trace() + scatter1.matrix().trace()
        - 2.0 * trace_sqrt_psd(&cross);
    // Exact cancellation leaves ~1e-15 dust; anything below -1e-10 would be a bug
    // upstream, so the clamp only absorbs round-off.
    Ok(value.max(0.0))
}

/// Optimal affine transport map `T(x) = m₁ + A (x − m₀)` pushing
/// `(m₀, Σ₀)` onto `(m₁, Σ₁)`. Returns `(A, b)` with `b = m₁ − A m₀`.
pub fn affine_ot_map(
    mean0: &DVector<f64>,
    scatter0: &SpdMatrix,
    mean1: &DVector<f64>,
    scatter1: &SpdMatrix,
) -> Result<(SpdMatrix, DVector<f64>)> {
    let d = mean0.len();
    if mean1.len() != d || scatter0.dim() != d || scatter1.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: mean1.len().max(scatter1.dim()) });
    }
    let inv_root0 = scatter0.inv_sqrt().map_err(|_| Error::SingularSource)?;
    let root0 = scatter0.sqrt();
    let cross = matrix_power_psd(&(root0.matrix() * scatter1.matrix() * root0.matrix()), 0.5);
    let a = symmetrize(&(inv_root0.matrix() * cross * inv_root0.matrix()));
    let a = SpdMatrix::new_degenerate(a)?;
    let b = mean1 - a.matrix() * mean0;
    Ok((a, b))
}

/// Convergence statistics of the barycenter covariance fixed point.
#[derive(Clone, Copy, Debug)]
pub struct FixedPointStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Barycenter covariance: the unique SPD solution of
/// `S = Σ_q t_q (S^{1/2} Σ_q S^{1/2})^{1/2}`.
///
/// Iterates `S ← S^{-1/2} M² S^{-1/2}` with `M = Σ_q t_q (S^{1/2} Σ_q S^{1/2})^{1/2}`,
/// starting from the weighted arithmetic mean of the inputs.
pub fn barycenter_covariance(weights: &[f64], covs: &[SpdMatrix]) -> Result<SpdMatrix> {
    barycenter_covariance_with_stats(weights, covs).map(|(s, _)| s)
}

/// Same as [`barycenter_covariance`] but reports iteration count and the
/// final relative fixed-point residual.
pub fn barycenter_covariance_with_stats(
    weights: &[f64],
    covs: &[SpdMatrix],
) -> Result<(SpdMatrix, FixedPointStats)> {
    let weights = normalize_weights(weights)?;
    if covs.is_empty() || covs.len() != weights.len() {
        return Err(Error::InvalidInput(format!(
            "expected {} covariance matrices, got {}",
            weights.len(),
            covs.len()
        )));
    }
    let d = covs[0].dim();
    for c in covs {
        if c.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: c.dim() });
        }
        if c.is_degenerate() {
            return Err(Error::SingularSource);
        }
    }

    // Weighted arithmetic mean: SPD, and an exact fixed point for identical inputs.
    let mut s = DMatrix::<f64>::zeros(d, d);
    for (t, c) in weights.iter().zip(covs) {
        s += c.matrix() * *t;
    }

    let mut residual = f64::INFINITY;
    for iter in 0..BARYCENTER_MAX_ITER {
        let eigen = s.clone().symmetric_eigen();
        let lambda_max = eigen.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let clamp = d as f64 * EIGEN_CLAMP_FACTOR * lambda_max;
        let lambda_min = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if lambda_min <= clamp {
            return Err(Error::SingularMatrix(lambda_min));
        }
        let root_vals = eigen.eigenvalues.map(|l| l.sqrt());
        let inv_root_vals = eigen.eigenvalues.map(|l| 1.0 / l.sqrt());
        let root = &eigen.eigenvectors * DMatrix::from_diagonal(&root_vals) * eigen.eigenvectors.transpose();
        let inv_root =
            &eigen.eigenvectors * DMatrix::from_diagonal(&inv_root_vals) * eigen.eigenvectors.transpose();

        let mut mixed = DMatrix::<f64>::zeros(d, d);
        for (t, c) in weights.iter().zip(covs) {
            mixed += matrix_power_psd(&(&root * c.matrix() * &root), 0.5) * *t;
        }
        residual = (&s - &mixed).norm() / s.norm();
        if residual <= BARYCENTER_RESIDUAL_TOL {
            return Ok((
                SpdMatrix::new(symmetrize(&s))?,
                FixedPointStats { iterations: iter, residual },
            ));
        }
        s = symmetrize(&(&inv_root * &mixed * &mixed * &inv_root));
    }
    Err(Error::NoConvergence {
        iterations: BARYCENTER_MAX_ITER,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec1(x: f64) -> DVector<f64> {
        DVector::from_row_slice(&[x])
    }

    #[test]
    fn sqrt_identity() {
        let m = SpdMatrix::identity(3);
        assert_eq!(m.sqrt().matrix(), m.matrix());
    }

    #[test]
    fn sqrt_diagonal() {
        let m = SpdMatrix::from_diagonal(&[4.0, 9.0]).unwrap();
        let r = m.sqrt();
        assert!((r.matrix()[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((r.matrix()[(1, 1)] - 3.0).abs() < 1e-14);
        assert!(r.matrix()[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        assert!(matches!(SpdMatrix::new(m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            SpdMatrix::new(m),
            Err(Error::NotPositiveSemidefinite(_))
        ));
    }

    #[test]
    fn degenerate_flag_admits_psd() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(SpdMatrix::new(m.clone()).is_err());
        let s = SpdMatrix::new_degenerate(m).unwrap();
        assert!(s.is_degenerate());
    }

    #[test]
    fn w2_zero_for_equal_arguments() {
        let m = DVector::from_row_slice(&[1.0, -2.0]);
        let s = SpdMatrix::from_diagonal(&[2.0, 0.5]).unwrap();
        let v = gaussian_w2_squared(&m, &s, &m, &s).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn w2_scalar_case() {
        // means 0 and 3, standard deviations 1 and 2: 9 + (1-2)² = 10.
        let v = gaussian_w2_squared(
            &vec1(0.0),
            &SpdMatrix::scalar(1.0).unwrap(),
            &vec1(3.0),
            &SpdMatrix::scalar(4.0).unwrap(),
        )
        .unwrap();
        assert!((v - 10.0).abs() < 1e-12);
    }

    #[test]
    fn w2_commuting_case() {
        // Tr(I + 4I - 2·2I) = Tr(I) = 2 in dimension 2.
        let m = DVector::from_row_slice(&[0.0, 0.0]);
        let s0 = SpdMatrix::identity(2);
        let s1 = SpdMatrix::from_diagonal(&[4.0, 4.0]).unwrap();
        let v = gaussian_w2_squared(&m, &s0, &m, &s1).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn w2_symmetric_in_swap() {
        let m0 = DVector::from_row_slice(&[0.3, -1.0]);
        let m1 = DVector::from_row_slice(&[1.2, 0.4]);
        let s0 = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0])).unwrap();
        let s1 = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[0.8, -0.2, -0.2, 1.5])).unwrap();
        let a = gaussian_w2_squared(&m0, &s0, &m1, &s1).unwrap();
        let b = gaussian_w2_squared(&m1, &s1, &m0, &s0).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn w2_dimension_mismatch() {
        let v = gaussian_w2_squared(
            &DVector::from_row_slice(&[0.0, 0.0]),
            &SpdMatrix::identity(2),
            &vec1(0.0),
            &SpdMatrix::identity(1),
        );
        assert!(matches!(v, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn affine_map_equal_covariances() {
        let m0 = DVector::from_row_slice(&[1.0, 2.0]);
        let m1 = DVector::from_row_slice(&[-1.0, 5.0]);
        let s = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 0.9])).unwrap();
        let (a, b) = affine_ot_map(&m0, &s, &m1, &s).unwrap();
        assert!((a.matrix() - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
        assert!((b - (&m1 - &m0)).norm() < 1e-12);
    }

    #[test]
    fn affine_map_scalar_ratio() {
        let (a, b) = affine_ot_map(
            &vec1(0.0),
            &SpdMatrix::scalar(1.0).unwrap(),
            &vec1(0.0),
            &SpdMatrix::scalar(4.0).unwrap(),
        )
        .unwrap();
        assert!((a.matrix()[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(b[0].abs() < 1e-12);
    }

    #[test]
    fn affine_map_rejects_degenerate_source() {
        let s0 = SpdMatrix::new_degenerate(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]))
            .unwrap();
        let s1 = SpdMatrix::identity(2);
        let z = DVector::from_row_slice(&[0.0, 0.0]);
        assert!(matches!(
            affine_ot_map(&z, &s0, &z, &s1),
            Err(Error::SingularSource)
        ));
    }

    #[test]
    fn barycenter_identical_inputs() {
        let s = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let (out, stats) =
            barycenter_covariance_with_stats(&[0.25, 0.75], &[s.clone(), s.clone()]).unwrap();
        assert_eq!(stats.iterations, 0);
        assert!((out.matrix() - s.matrix()).norm() < 1e-14);
    }

    #[test]
    fn barycenter_scalar_rule() {
        // Variances σ_q², fixed point (Σ t_q σ_q)².
        let covs = [
            SpdMatrix::scalar(1.0).unwrap(),
            SpdMatrix::scalar(9.0).unwrap(),
        ];
        let out = barycenter_covariance(&[0.5, 0.5], &covs).unwrap();
        assert!((out.matrix()[(0, 0)] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn barycenter_commuting_rule() {
        // Simultaneously diagonal inputs: S^{1/2} = Σ t_q Σ_q^{1/2}.
        let covs = [
            SpdMatrix::from_diagonal(&[1.0, 4.0]).unwrap(),
            SpdMatrix::from_diagonal(&[9.0, 16.0]).unwrap(),
        ];
        let out = barycenter_covariance(&[0.3, 0.7], &covs).unwrap();
        let want0 = (0.3 * 1.0 + 0.7 * 3.0_f64).powi(2);
        let want1 = (0.3 * 2.0 + 0.7 * 4.0_f64).powi(2);
        assert!((out.matrix()[(0, 0)] - want0).abs() < 1e-7);
        assert!((out.matrix()[(1, 1)] - want1).abs() < 1e-7);
        assert!(out.matrix()[(0, 1)].abs() < 1e-8);
    }
}
