//! Location-scatter atom families.
//!
//! An atom is the push-forward of a fixed generator density (standardized to
//! zero mean and identity covariance) under `x ↦ Σ^{1/2} x + m`. Its mean is
//! then exactly `m` and its covariance exactly `Σ`, so quadratic Wasserstein
//! distances, transport maps and barycenters between atoms of one family
//! reduce to the moment formulas of [`crate::spd`].
//!
//! Supported generators:
//!
//! * `Gaussian` — radial profile `h(u) = e^{-u/2}`;
//! * `Slater` — `h(u) = e^{-α_d √u}` with `α_d = √(d+1)` so that the radial
//!   moment condition `∫ r^{d+1} h(r²) dr / ∫ r^{d-1} h(r²) dr = d` holds;
//! * `Wigner` — semicircle profile `h(u) = √(1 - α_d u)` on `u ≤ 1/α_d`,
//!   `α_d = 1/(d+3)`;
//! * `Gamma1d` — a gamma distribution standardized to zero mean and unit
//!   variance, then located and scaled (one-dimensional only; not elliptical).

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quad;
use crate::spd::{barycenter_covariance, gaussian_w2_squared, SpdMatrix};
use crate::util::normalize_weights;

/// Absolute parameter tolerance for treating two atoms as the same component.
pub const ATOM_MERGE_TOL: f64 = 1e-12;

/// Generator density family.
#[derive(Clone, Debug, PartialEq)]
pub enum GeneratorKind {
    Gaussian,
    Slater,
    Wigner,
    /// Gamma distribution with the given shape and rate, standardized to zero
    /// mean and unit variance before location-scatter. Any positive (shape,
    /// rate) pair is accepted; the standardization makes the atom moments
    /// independent of the raw parameters.
    Gamma1d { shape: f64, rate: f64 },
}

/// A generator family fixed to an ambient dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorProfile {
    kind: GeneratorKind,
    dim: usize,
}

impl GeneratorProfile {
    pub fn gaussian(dim: usize) -> Result<Self> {
        Self::elliptical(GeneratorKind::Gaussian, dim)
    }

    pub fn slater(dim: usize) -> Result<Self> {
        Self::elliptical(GeneratorKind::Slater, dim)
    }

    pub fn wigner(dim: usize) -> Result<Self> {
        Self::elliptical(GeneratorKind::Wigner, dim)
    }

    fn elliptical(kind: GeneratorKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        Ok(Self { kind, dim })
    }

    pub fn gamma1d(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "gamma parameters must be positive and finite, got shape {shape}, rate {rate}"
            )));
        }
        Ok(Self {
            kind: GeneratorKind::Gamma1d { shape, rate },
            dim: 1,
        })
    }

    pub fn kind(&self) -> &GeneratorKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Radial scale `α_d` of the elliptical profiles.
    pub fn radial_scale(&self) -> Option<f64> {
        match self.kind {
            GeneratorKind::Slater => Some(((self.dim + 1) as f64).sqrt()),
            GeneratorKind::Wigner => Some(1.0 / (self.dim + 3) as f64),
            _ => None,
        }
    }

    /// Radial profile `h(u)` evaluated at `u ≥ 0` (elliptical kinds only).
    fn radial_h(&self, u: f64) -> f64 {
        match self.kind {
            GeneratorKind::Gaussian => (-0.5 * u).exp(),
            GeneratorKind::Slater => {
                let alpha = self.radial_scale().unwrap();
                (-alpha * u.sqrt()).exp()
            }
            GeneratorKind::Wigner => {
                let alpha = self.radial_scale().unwrap();
                let t = 1.0 - alpha * u;
                if t > 0.0 {
                    t.sqrt()
                } else {
                    0.0
                }
            }
            GeneratorKind::Gamma1d { .. } => unreachable!("not an elliptical profile"),
        }
    }

    /// `ln Z₁`, normalization of the unit-scatter elliptical density
    /// `h((x)ᵀx) / Z₁` (closed form per family).
    fn log_norm_unit(&self) -> f64 {
        let d = self.dim as f64;
        let pi = std::f64::consts::PI;
        match self.kind {
            GeneratorKind::Gaussian => 0.5 * d * (2.0 * pi).ln(),
            GeneratorKind::Slater => {
                // 2 π^{d/2} Γ(d) / ((d+1)^{d/2} Γ(d/2))
                (2.0f64).ln() + 0.5 * d * pi.ln() + ln_gamma(d) - ln_gamma(0.5 * d)
                    - 0.5 * d * (d + 1.0).ln()
            }
            GeneratorKind::Wigner => {
                // π^{(d+1)/2} (d+3)^{d/2} / (2 Γ((d+3)/2))
                0.5 * (d + 1.0) * pi.ln() + 0.5 * d * (d + 3.0).ln() - (2.0f64).ln()
                    - ln_gamma(0.5 * (d + 3.0))
            }
            GeneratorKind::Gamma1d { .. } => 0.0,
        }
    }
}

/// Residual of the radial moment condition
/// `∫ r^{d+1} h(r²) dr / ∫ r^{d-1} h(r²) dr = d`, computed by adaptive
/// quadrature at relative tolerance 1e-10. Returns `|ratio − d|`.
pub fn check_h_condition(profile: &GeneratorProfile) -> Result<f64> {
    if matches!(profile.kind, GeneratorKind::Gamma1d { .. }) {
        return Err(Error::UnsupportedProfile(
            "gamma generator is not elliptical; the radial moment condition does not apply",
        ));
    }
    let d = profile.dim as f64;
    let upper = match profile.kind {
        GeneratorKind::Gaussian => 16.0 + d,
        GeneratorKind::Slater => 100.0,
        GeneratorKind::Wigner => (d + 3.0).sqrt(),
        GeneratorKind::Gamma1d { .. } => unreachable!(),
    };
    let num = quad::integrate(|r| r.powf(d + 1.0) * profile.radial_h(r * r), 0.0, upper, 1e-10);
    let den = quad::integrate(|r| r.powf(d - 1.0) * profile.radial_h(r * r), 0.0, upper, 1e-10);
    Ok((num / den - d).abs())
}

/// One location-scatter measure: generator + mean + SPD scatter.
#[derive(Clone, Debug)]
pub struct Atom {
    generator: GeneratorProfile,
    mean: DVector<f64>,
    scatter: SpdMatrix,
    // cached at construction so density evaluation is allocation-light
    scatter_inv: DMatrix<f64>,
    log_norm: f64,
    sigma_1d: f64,
}

impl Atom {
    pub fn new(generator: GeneratorProfile, mean: DVector<f64>, scatter: SpdMatrix) -> Result<Self> {
        let d = generator.dim();
        if mean.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: mean.len() });
        }
        if scatter.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: scatter.dim() });
        }
        if scatter.is_degenerate() {
            return Err(Error::InvalidInput(
                "atom scatter must be strictly positive definite".into(),
            ));
        }
        let inv_root = scatter.inv_sqrt()?;
        let scatter_inv = inv_root.matrix() * inv_root.matrix();
        let log_norm = generator.log_norm_unit() + 0.5 * scatter.log_det();
        let sigma_1d = if d == 1 { scatter.matrix()[(0, 0)].sqrt() } else { 0.0 };
        Ok(Self {
            generator,
            mean,
            scatter,
            scatter_inv,
            log_norm,
            sigma_1d,
        })
    }

    /// Convenience constructor for one-dimensional atoms.
    pub fn new_1d(generator: GeneratorProfile, mean: f64, variance: f64) -> Result<Self> {
        Self::new(
            generator,
            DVector::from_row_slice(&[mean]),
            SpdMatrix::scalar(variance)?,
        )
    }

    pub fn generator(&self) -> &GeneratorProfile {
        &self.generator
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn scatter(&self) -> &SpdMatrix {
        &self.scatter
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    /// Density at a point. Compactly supported families are exactly zero
    /// outside their support.
    pub fn density(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        match self.generator.kind {
            GeneratorKind::Gamma1d { shape, rate } => Ok(self.gamma_density(x[0], shape, rate)),
            _ => {
                let diff = x - &self.mean;
                let q = (&self.scatter_inv * &diff).dot(&diff);
                let value = match self.generator.kind {
                    GeneratorKind::Gaussian => (-0.5 * q - self.log_norm).exp(),
                    GeneratorKind::Slater => {
                        let alpha = self.generator.radial_scale().unwrap();
                        (-alpha * q.sqrt() - self.log_norm).exp()
                    }
                    GeneratorKind::Wigner => {
                        let alpha = self.generator.radial_scale().unwrap();
                        let t = 1.0 - alpha * q;
                        if t > 0.0 {
                            t.sqrt() * (-self.log_norm).exp()
                        } else {
                            0.0
                        }
                    }
                    GeneratorKind::Gamma1d { .. } => unreachable!(),
                };
                Ok(value)
            }
        }
    }

    /// Gamma atom density: the raw gamma density standardized by
    /// `y = (x - shape/rate) · rate/√shape`, then located and scaled.
    fn gamma_density(&self, x: f64, shape: f64, rate: f64) -> f64 {
        let sigma = self.sigma_1d;
        let y = (x - self.mean[0]) / sigma;
        // standardized support edge is y = -√shape
        let z = (shape + y * shape.sqrt()) / rate;
        if z < 0.0 {
            return 0.0;
        }
        let jac = shape.sqrt() / rate / sigma;
        if z == 0.0 {
            return if shape > 1.0 {
                0.0
            } else if shape == 1.0 {
                rate * jac
            } else {
                f64::INFINITY
            };
        }
        let log_pdf = shape * rate.ln() + (shape - 1.0) * z.ln() - rate * z - ln_gamma(shape);
        log_pdf.exp() * jac
    }

    /// Support edge of a gamma atom (`None` for full-support families; the
    /// Wigner support is an ellipsoid handled inside [`Atom::density`]).
    pub fn gamma_support_edge(&self) -> Option<f64> {
        match self.generator.kind {
            GeneratorKind::Gamma1d { shape, .. } => {
                Some(self.mean[0] - shape.sqrt() * self.sigma_1d)
            }
            _ => None,
        }
    }

    /// Quadratic Wasserstein distance between atoms of one family; the
    /// closed form reads only the first two moments.
    pub fn w2(&self, other: &Atom) -> Result<f64> {
        if self.generator != other.generator {
            return Err(Error::FamilyMismatch);
        }
        Ok(gaussian_w2_squared(&self.mean, &self.scatter, &other.mean, &other.scatter)?.sqrt())
    }

    /// Wasserstein barycenter within one family: mean combines linearly,
    /// the scatter solves the covariance fixed point.
    pub fn barycenter(weights: &[f64], atoms: &[&Atom]) -> Result<Atom> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("no atoms to combine".into()));
        }
        let generator = atoms[0].generator.clone();
        for a in atoms {
            if a.generator != generator {
                return Err(Error::FamilyMismatch);
            }
        }
        let weights = normalize_weights(weights)?;
        if weights.len() != atoms.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} weights, got {}",
                atoms.len(),
                weights.len()
            )));
        }
        let mut mean = DVector::zeros(atoms[0].dim());
        for (t, a) in weights.iter().zip(atoms) {
            mean += &a.mean * *t;
        }
        let covs: Vec<SpdMatrix> = atoms.iter().map(|a| a.scatter.clone()).collect();
        let scatter = barycenter_covariance(&weights, &covs)?;
        Atom::new(generator, mean, scatter)
    }

    /// Point on the constant-speed geodesic from `self` (t=0) to `other` (t=1).
    pub fn geodesic(&self, other: &Atom, t: f64) -> Result<Atom> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidInput(format!("interpolation parameter {t} outside [0,1]")));
        }
        Atom::barycenter(&[1.0 - t, t], &[self, other])
    }

    /// Flat parameter key: mean entries then scatter entries, row-major.
    pub fn parameter_key(&self) -> Vec<f64> {
        let mut key = Vec::with_capacity(self.dim() + self.dim() * self.dim());
        key.extend(self.mean.iter());
        key.extend(self.scatter.matrix().iter());
        key
    }

    /// Parameter equality at [`ATOM_MERGE_TOL`] within the same family.
    pub fn same_component(&self, other: &Atom) -> bool {
        self.generator == other.generator
            && self
                .mean
                .iter()
                .zip(other.mean.iter())
                .all(|(a, b)| (a - b).abs() <= ATOM_MERGE_TOL)
            && self
                .scatter
                .matrix()
                .iter()
                .zip(other.scatter.matrix().iter())
                .all(|(a, b)| (a - b).abs() <= ATOM_MERGE_TOL)
    }

    /// (center, standard-deviation) hints for automatic grid bounds.
    pub fn extent_hints(&self) -> Vec<(DVector<f64>, f64)> {
        vec![(self.mean.clone(), self.scatter.max_eigenvalue().sqrt())]
    }
}
