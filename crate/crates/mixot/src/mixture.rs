//! Mixtures of atoms and the mixture transport metric.
//!
//! A mixture pairs simplex weights with atoms from one family. The distance
//! between two mixtures is the optimal transport of their weight vectors
//! with atom-to-atom distances (raised to `p`) as the ground cost; for `p=2`
//! geodesics and barycenters follow by interpolating atoms along the optimal
//! plan. The construction is generic in the atom type through
//! [`MixtureAtom`], which location-scatter atoms, group-symmetrized atoms
//! and squared Slater determinants all implement.

use nalgebra::{DMatrix, DVector};

use crate::atoms::Atom;
use crate::discrete::{solve_multimarginal, solve_transport, DiscretePlan, MULTIMARGINAL_CAPACITY};
use crate::error::{Error, Result};
use crate::util::{lex_cmp, normalize_weights};

/// Atom interface required by the mixture layer.
pub trait MixtureAtom: Clone {
    /// Metric between atoms of a common family.
    fn distance(&self, other: &Self) -> Result<f64>;

    /// Weighted barycenter of atoms of a common family.
    fn barycenter(weights: &[f64], atoms: &[&Self]) -> Result<Self>;

    /// Constant-speed geodesic point from `self` (t=0) to `other` (t=1).
    fn geodesic_point(&self, other: &Self, t: f64) -> Result<Self> {
        Self::barycenter(&[1.0 - t, t], &[self, other])
    }

    /// Deterministic ordering key for the canonical form.
    fn canonical_key(&self) -> Vec<f64>;

    /// Whether two atoms are the same mixture component (parameter equality
    /// at merge tolerance, up to group action for symmetrized atoms).
    fn same_component(&self, other: &Self) -> bool;

    /// Multi-marginal barycentric cost `Σ_q t_q δ(a_q, bar)²` together with
    /// the barycenter it is evaluated at.
    fn barycentric_cost(weights: &[f64], atoms: &[&Self]) -> Result<(f64, Self)> {
        let bar = Self::barycenter(weights, atoms)?;
        let mut cost = 0.0;
        for (t, a) in weights.iter().zip(atoms) {
            cost += t * a.distance(&bar)?.powi(2);
        }
        Ok((cost, bar))
    }
}

impl MixtureAtom for Atom {
    fn distance(&self, other: &Self) -> Result<f64> {
        self.w2(other)
    }

    fn barycenter(weights: &[f64], atoms: &[&Self]) -> Result<Self> {
        Atom::barycenter(weights, atoms)
    }

    fn canonical_key(&self) -> Vec<f64> {
        self.parameter_key()
    }

    fn same_component(&self, other: &Self) -> bool {
        Atom::same_component(self, other)
    }
}

/// Pointwise-evaluatable density (everything rasterizable on a grid).
pub trait PointDensity {
    fn density_at(&self, x: &DVector<f64>) -> Result<f64>;

    /// (center, standard deviation) pairs used for automatic grid bounds.
    fn extent_hints(&self) -> Vec<(DVector<f64>, f64)>;
}

impl PointDensity for Atom {
    fn density_at(&self, x: &DVector<f64>) -> Result<f64> {
        self.density(x)
    }

    fn extent_hints(&self) -> Vec<(DVector<f64>, f64)> {
        Atom::extent_hints(self)
    }
}

/// A canonical finite mixture: strictly positive weights, pairwise distinct
/// atoms, deterministic component order.
#[derive(Clone, Debug)]
pub struct Mixture<A> {
    weights: Vec<f64>,
    atoms: Vec<A>,
}

impl<A: MixtureAtom> Mixture<A> {
    /// Validate weights, drop zero-weight components, merge duplicate atoms
    /// and sort components by their canonical key.
    ///
    /// Duplicates merge before the simplex normalization, so splitting a
    /// component into equal halves reproduces the original representation
    /// bit for bit.
    pub fn new(weights: Vec<f64>, atoms: Vec<A>) -> Result<Self> {
        if weights.len() != atoms.len() {
            return Err(Error::InvalidInput(format!(
                "{} weights for {} atoms",
                weights.len(),
                atoms.len()
            )));
        }
        if atoms.is_empty() {
            return Err(Error::EmptyMixture);
        }
        for &w in &weights {
            if !w.is_finite() || w < -1e-12 {
                return Err(Error::InvalidWeights(format!(
                    "entry {w} is negative or not finite"
                )));
            }
        }
        let mut merged: Vec<(f64, A)> = Vec::with_capacity(atoms.len());
        for (w, a) in weights.into_iter().zip(atoms) {
            if w <= 0.0 {
                continue;
            }
            match merged.iter_mut().find(|(_, b)| b.same_component(&a)) {
                Some((wm, _)) => *wm += w,
                None => merged.push((w, a)),
            }
        }
        if merged.is_empty() {
            return Err(Error::EmptyMixture);
        }
        let mut keyed: Vec<(Vec<f64>, f64, A)> = merged
            .into_iter()
            .map(|(w, a)| (a.canonical_key(), w, a))
            .collect();
        keyed.sort_by(|x, y| lex_cmp(&x.0, &y.0));
        let (weights, atoms): (Vec<f64>, Vec<A>) =
            keyed.into_iter().map(|(_, w, a)| (w, a)).unzip();
        let weights = normalize_weights(&weights)?;
        Ok(Self { weights, atoms })
    }

    /// Single-component mixture.
    pub fn single(atom: A) -> Result<Self> {
        Self::new(vec![1.0], vec![atom])
    }

    /// Re-canonicalize (idempotent: `new` already canonicalizes).
    pub fn canonicalize(&self) -> Result<Self> {
        Self::new(self.weights.clone(), self.atoms.clone())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> &[A] {
        &self.atoms
    }

    pub fn component(&self, k: usize) -> (f64, &A) {
        (self.weights[k], &self.atoms[k])
    }

    fn flat_key(&self) -> Vec<f64> {
        let mut key = Vec::new();
        for (w, a) in self.weights.iter().zip(&self.atoms) {
            key.push(*w);
            key.extend(a.canonical_key());
        }
        key
    }

    /// Mixture transport distance of order `p` together with the optimal
    /// plan over components.
    ///
    /// The ground cost is the atom metric raised to `p`; the value is
    /// `(Σ w*_{jk} δ(a_j, b_k)^p)^{1/p}`. Arguments are ordered canonically
    /// before solving, so the result is exactly symmetric under swapping.
    pub fn distance(&self, other: &Self, p: f64) -> Result<(f64, DiscretePlan)> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::InvalidInput(format!("order p must be finite and > 1, got {p}")));
        }
        let swap = lex_cmp(&self.flat_key(), &other.flat_key()) == std::cmp::Ordering::Greater;
        let (mu0, mu1) = if swap { (other, self) } else { (self, other) };
        let nj = mu0.len();
        let nk = mu1.len();
        let mut cost = DMatrix::<f64>::zeros(nj, nk);
        for j in 0..nj {
            for k in 0..nk {
                cost[(j, k)] = mu0.atoms[j].distance(&mu1.atoms[k])?.powf(p);
            }
        }
        let plan = solve_transport(&mu0.weights, &mu1.weights, &cost)?;
        let value = plan.value.max(0.0).powf(1.0 / p);
        Ok((value, if swap { plan.transposed() } else { plan }))
    }

    /// Displacement interpolation between two mixtures at time `t` (order 2).
    /// Endpoints reproduce the inputs exactly.
    pub fn barycenter_pair(&self, other: &Self, t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidInput(format!("interpolation parameter {t} outside [0,1]")));
        }
        if t == 0.0 {
            return Ok(self.clone());
        }
        if t == 1.0 {
            return Ok(other.clone());
        }
        let (_, plan) = self.distance(other, 2.0)?;
        let mut weights = Vec::with_capacity(plan.entries.len());
        let mut atoms = Vec::with_capacity(plan.entries.len());
        for (idx, w) in &plan.entries {
            weights.push(*w);
            atoms.push(self.atoms[idx[0]].geodesic_point(&other.atoms[idx[1]], t)?);
        }
        Self::new(weights, atoms)
    }

    /// Barycenter of `Q` mixtures with the given barycentric weights via the
    /// multi-marginal transport problem over component weights.
    pub fn barycenter_multi(mixtures: &[&Self], barycentric: &[f64]) -> Result<Self> {
        if mixtures.is_empty() {
            return Err(Error::InvalidInput("no mixtures given".into()));
        }
        let barycentric = normalize_weights(barycentric)?;
        if barycentric.len() != mixtures.len() {
            return Err(Error::InvalidInput(format!(
                "{} barycentric weights for {} mixtures",
                barycentric.len(),
                mixtures.len()
            )));
        }
        let shape: Vec<usize> = mixtures.iter().map(|m| m.len()).collect();
        let n_vars: usize = shape.iter().try_fold(1usize, |acc, &k| {
            acc.checked_mul(k).filter(|&n| n <= MULTIMARGINAL_CAPACITY)
        })
        .ok_or(Error::Capacity {
            size: usize::MAX,
            limit: MULTIMARGINAL_CAPACITY,
            hint: "decompose the barycenter into pairwise interpolations",
        })?;

        let gather = |flat: usize| -> Vec<&A> {
            let mut idx = flat;
            let mut tuple = vec![0usize; shape.len()];
            for q in (0..shape.len()).rev() {
                tuple[q] = idx % shape[q];
                idx /= shape[q];
            }
            tuple
                .iter()
                .enumerate()
                .map(|(q, &k)| &mixtures[q].atoms[k])
                .collect()
        };

        let mut cost = Vec::with_capacity(n_vars);
        for flat in 0..n_vars {
            let (c, _) = A::barycentric_cost(&barycentric, &gather(flat))?;
            cost.push(c);
        }
        let lambdas: Vec<Vec<f64>> = mixtures.iter().map(|m| m.weights.clone()).collect();
        let plan = solve_multimarginal(&lambdas, &cost)?;

        let mut weights = Vec::with_capacity(plan.entries.len());
        let mut atoms = Vec::with_capacity(plan.entries.len());
        for (idx, w) in &plan.entries {
            let selected: Vec<&A> = idx
                .iter()
                .enumerate()
                .map(|(q, &k)| &mixtures[q].atoms[k])
                .collect();
            weights.push(*w);
            atoms.push(A::barycenter(&barycentric, &selected)?);
        }
        Self::new(weights, atoms)
    }
}

impl<A: MixtureAtom + PointDensity> Mixture<A> {
    /// Mixture density `Σ_k λ^k ρ_k(x)`.
    pub fn density_at(&self, x: &DVector<f64>) -> Result<f64> {
        let mut total = 0.0;
        for (w, a) in self.weights.iter().zip(&self.atoms) {
            total += w * a.density_at(x)?;
        }
        Ok(total)
    }

    /// Extent hints of all components (for automatic grid bounds).
    pub fn extent_hints(&self) -> Vec<(DVector<f64>, f64)> {
        self.atoms.iter().flat_map(|a| a.extent_hints()).collect()
    }
}

/// Generic-order mixture distance from a user-supplied atom distance matrix
/// (`dist[(j,k)] = δ(a_j, b_k)`); the only route when no closed form exists
/// for the atom metric.
pub fn mixture_distance_from_matrix(
    weights0: &[f64],
    weights1: &[f64],
    dist: &DMatrix<f64>,
    p: f64,
) -> Result<(f64, DiscretePlan)> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidInput(format!("order p must be finite and > 1, got {p}")));
    }
    for &d in dist.iter() {
        if !d.is_finite() || d < 0.0 {
            return Err(Error::InvalidCost(d));
        }
    }
    let cost = dist.map(|d| d.powf(p));
    let plan = solve_transport(weights0, weights1, &cost)?;
    Ok((plan.value.max(0.0).powf(1.0 / p), plan))
}
