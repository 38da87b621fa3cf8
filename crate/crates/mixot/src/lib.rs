//! # mixot
//!
//! Wasserstein-type distances, geodesics and barycenters between finite
//! mixtures of location-scatter measures and of group-symmetrized measures,
//! together with a grid-based entropic transport oracle that validates every
//! closed form.
//!
//! ## Layers
//!
//! | Module | Provides |
//! |--------|----------|
//! | [`spd`] | SPD square roots, the moment form of `W₂²`, affine transport maps, the barycenter covariance fixed point |
//! | [`atoms`] | Location-scatter families (Gaussian, Slater, Wigner semicircle, standardized gamma): densities, distances, geodesics |
//! | [`discrete`] | Exact two- and multi-marginal transport LPs over mixture weights, plus a vertex-enumeration oracle |
//! | [`mixture`] | The mixture metric `(Σ w*_{jk} δ(a_j, b_k)^p)^{1/p}`, canonical forms, pair and multi-marginal barycenters |
//! | [`symmetry`] | Parity/permutation/SO(2) symmetrized atoms, quotient distances, squared Slater determinants |
//! | [`grid`] | Rasterization, log-domain Sinkhorn transport and barycenters, symmetry diagnostics |
//!
//! Mixture components never touch a spatial grid: distances and barycenters
//! cost a small linear program over component weights plus closed-form atom
//! operations, while the grid oracle pays the full quadratic-in-nodes
//! Sinkhorn price. The `parallel` feature (default) runs grid reductions and
//! rasterization data-parallel with rayon; disabling it yields a fully
//! sequential build with identical results.
//!
//! ## Quick start
//!
//! ```rust
//! use mixot::atoms::{Atom, GeneratorProfile};
//! use mixot::mixture::Mixture;
//!
//! let family = GeneratorProfile::slater(1)?;
//! let mu0 = Mixture::new(
//!     vec![0.5, 0.5],
//!     vec![
//!         Atom::new_1d(family.clone(), -3.0, 0.5)?,
//!         Atom::new_1d(family.clone(), 0.0, 1.0)?,
//!     ],
//! )?;
//! let mu1 = Mixture::new(
//!     vec![0.3, 0.7],
//!     vec![
//!         Atom::new_1d(family.clone(), 2.0, 0.8)?,
//!         Atom::new_1d(family.clone(), 4.0, 0.6)?,
//!     ],
//! )?;
//! let (distance, plan) = mu0.distance(&mu1, 2.0)?;
//! assert!(distance > 0.0 && plan.nonzero_count() <= 3);
//! let midpoint = mu0.barycenter_pair(&mu1, 0.5)?;
//! assert!(midpoint.len() <= 3);
//! # Ok::<(), mixot::Error>(())
//! ```

pub mod atoms;
pub mod discrete;
pub mod error;
pub mod grid;
pub mod mixture;
pub mod quad;
pub mod spd;
pub mod symmetry;
pub mod util;

mod parallel;

pub use error::{Error, Result};
