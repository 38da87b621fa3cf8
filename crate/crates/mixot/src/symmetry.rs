//! Group-invariant measures.
//!
//! A symmetrized atom is the group average `S(a) = (1/|G|) Σ_{g∈G} g·a` of a
//! location-scatter atom under a finite group of linear isometries (parity,
//! block permutations) or under SO(2). Distances between symmetrized atoms
//! quotient the atom metric by the group:
//!
//! ```text
//! d̄(S(a₀), S(a₁)) = min_{g ∈ G} W₂(a₀, g·a₁),
//! ```
//!
//! computed by enumeration for finite groups and by a scan-plus-refine angle
//! search for SO(2). Group elements act on atoms through their moments
//! (mean mapped, scatter conjugated), which is exact for elliptical
//! generators; the skewed gamma family is rejected because reflections leave
//! its location-scatter class.
//!
//! The module also hosts squared-Slater-determinant atoms and the
//! isomorphism onto permutation-symmetrized block-diagonal Gaussians that
//! transports the mixture metric to them.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::atoms::{Atom, GeneratorKind, GeneratorProfile};
use crate::error::{Error, Result};
use crate::mixture::{Mixture, MixtureAtom, PointDensity};
use crate::spd::SpdMatrix;
use crate::util::{lex_cmp, normalize_weights};

/// Hard guard on the number of alignment tuples `|G|^{Q-1}`.
pub const ALIGNMENT_CAPACITY: usize = 1_000_000;

/// Angle resolution of the SO(2) coarse scan.
const SO2_SCAN_POINTS: usize = 360;

/// Target width of the golden-section bracket.
const SO2_ANGLE_TOL: f64 = 1e-8;

/// A finite or one-parameter group of linear isometries acting on atoms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SymmetryGroup {
    /// `{Id, -Id}` on `R^dim`.
    Parity { dim: usize },
    /// Block permutations of `n` blocks of size `block_dim` on `R^{n·block_dim}`.
    Permutation { n: usize, block_dim: usize },
    /// Planar rotations on `R²`.
    SO2,
}

impl SymmetryGroup {
    pub fn parity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        Ok(Self::Parity { dim })
    }

    pub fn permutation(n: usize, block_dim: usize) -> Result<Self> {
        if n == 0 || block_dim == 0 {
            return Err(Error::InvalidInput("block count and dimension must be positive".into()));
        }
        let mut order = 1usize;
        for i in 1..=n {
            order = order
                .checked_mul(i)
                .filter(|&o| o <= ALIGNMENT_CAPACITY)
                .ok_or(Error::Capacity {
                    size: usize::MAX,
                    limit: ALIGNMENT_CAPACITY,
                    hint: "permutation group order n! exceeds the enumeration budget",
                })?;
        }
        Ok(Self::Permutation { n, block_dim })
    }

    pub fn so2() -> Self {
        Self::SO2
    }

    /// Dimension of the space the group acts on.
    pub fn space_dim(&self) -> usize {
        match *self {
            Self::Parity { dim } => dim,
            Self::Permutation { n, block_dim } => n * block_dim,
            Self::SO2 => 2,
        }
    }

    pub fn is_finite(&self) -> bool {
        !matches!(self, Self::SO2)
    }

    /// Group order for finite kinds.
    pub fn order(&self) -> Option<usize> {
        match *self {
            Self::Parity { .. } => Some(2),
            Self::Permutation { n, .. } => Some((1..=n).product()),
            Self::SO2 => None,
        }
    }

    /// Orthogonal matrices of a finite group in deterministic order
    /// (identity first; permutations lexicographic).
    pub fn elements(&self) -> Result<Vec<DMatrix<f64>>> {
        match *self {
            Self::Parity { dim } => Ok(vec![
                DMatrix::identity(dim, dim),
                -DMatrix::<f64>::identity(dim, dim),
            ]),
            Self::Permutation { n, block_dim } => {
                let mut out = Vec::with_capacity(self.order().unwrap());
                for perm in permutations_lex(n) {
                    let dim = n * block_dim;
                    let mut q = DMatrix::<f64>::zeros(dim, dim);
                    for (i, &pi) in perm.iter().enumerate() {
                        for r in 0..block_dim {
                            q[(i * block_dim + r, pi * block_dim + r)] = 1.0;
                        }
                    }
                    out.push(q);
                }
                Ok(out)
            }
            Self::SO2 => Err(Error::UnsupportedProfile(
                "SO(2) is continuous; enumerate-free operations only",
            )),
        }
    }
}

fn permutations_lex(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(n);
    let mut used = vec![false; n];
    fn rec(n: usize, current: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if current.len() == n {
            out.push(current.clone());
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                current.push(i);
                rec(n, current, used, out);
                current.pop();
                used[i] = false;
            }
        }
    }
    rec(n, &mut current, &mut used, &mut out);
    out
}

/// A concrete group element, either a member of a finite group or a planar
/// rotation angle.
#[derive(Clone, Debug)]
pub enum GroupElement {
    Finite { index: usize, matrix: DMatrix<f64> },
    Rotation { angle: f64 },
}

impl GroupElement {
    pub fn matrix(&self) -> DMatrix<f64> {
        match self {
            Self::Finite { matrix, .. } => matrix.clone(),
            Self::Rotation { angle } => rotation_matrix(*angle),
        }
    }

    /// Push an atom through the isometry (mean mapped, scatter conjugated).
    pub fn apply(&self, atom: &Atom) -> Result<Atom> {
        transform_atom(&self.matrix(), atom)
    }
}

pub fn rotation_matrix(angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Push-forward of a location-scatter atom by a linear isometry `Q`:
/// mean `↦ Q m`, scatter `↦ Q Σ Qᵀ`.
pub fn transform_atom(q: &DMatrix<f64>, atom: &Atom) -> Result<Atom> {
    let d = atom.dim();
    if q.nrows() != d || q.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: q.nrows() });
    }
    let mean = q * atom.mean();
    let scatter = SpdMatrix::new(q * atom.scatter().matrix() * q.transpose())?;
    Atom::new(atom.generator().clone(), mean, scatter)
}

/// Orbit `{g·a : g ∈ G}` of a finite group, duplicates merged
/// (first occurrence kept; element order is deterministic).
pub fn group_orbit(atom: &Atom, group: &SymmetryGroup) -> Result<Vec<Atom>> {
    let full = full_orbit(atom, group)?;
    let mut out: Vec<Atom> = Vec::new();
    for a in full {
        if !out.iter().any(|b| b.same_component(&a)) {
            out.push(a);
        }
    }
    Ok(out)
}

fn full_orbit(atom: &Atom, group: &SymmetryGroup) -> Result<Vec<Atom>> {
    group
        .elements()?
        .iter()
        .map(|q| transform_atom(q, atom))
        .collect()
}

fn require_symmetrizable(atom: &Atom) -> Result<()> {
    if matches!(atom.generator().kind(), GeneratorKind::Gamma1d { .. }) {
        return Err(Error::UnsupportedProfile(
            "symmetrization requires an elliptical generator (closed under linear isometries)",
        ));
    }
    Ok(())
}

/// The group average `S(a)` of an atom, stored through a representative.
///
/// Two symmetrized atoms are equal exactly when their representatives differ
/// by a group element; all operations canonicalize representatives first so
/// results do not depend on the chosen orbit point.
#[derive(Clone, Debug)]
pub struct SymmetrizedAtom {
    representative: Atom,
    group: SymmetryGroup,
    /// Full orbit indexed by group element (finite groups; empty for SO2).
    orbit: Vec<Atom>,
    /// Element index sending the representative to the orbit minimum.
    canon_index: usize,
}

impl SymmetrizedAtom {
    pub fn new(representative: Atom, group: SymmetryGroup) -> Result<Self> {
        require_symmetrizable(&representative)?;
        let d = group.space_dim();
        if representative.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: representative.dim() });
        }
        let (orbit, canon_index) = if group.is_finite() {
            let orbit = full_orbit(&representative, &group)?;
            let mut best = 0usize;
            let mut best_key = orbit[0].parameter_key();
            for (i, a) in orbit.iter().enumerate().skip(1) {
                let key = a.parameter_key();
                if lex_cmp(&key, &best_key) == std::cmp::Ordering::Less {
                    best = i;
                    best_key = key;
                }
            }
            (orbit, best)
        } else {
            (Vec::new(), 0)
        };
        Ok(Self { representative, group, orbit, canon_index })
    }

    pub fn representative(&self) -> &Atom {
        &self.representative
    }

    pub fn group(&self) -> &SymmetryGroup {
        &self.group
    }

    /// Distinct orbit atoms (finite groups).
    pub fn orbit(&self) -> Result<Vec<Atom>> {
        group_orbit(&self.representative, &self.group)
    }

    /// Orbit-canonical representative: lexicographically smallest parameter
    /// key over the orbit (finite), or a rotation-normal form (SO2).
    pub fn canonical_representative(&self) -> Atom {
        if self.group.is_finite() {
            self.orbit[self.canon_index].clone()
        } else {
            so2_canonical(&self.representative)
        }
    }

    /// Element index `p` with `elements[p] · representative = canonical`.
    fn canonical_element(&self) -> usize {
        self.canon_index
    }
}

/// Rotation-normal form used for ordering and merging SO(2)-symmetrized
/// atoms: the mean is rotated onto the positive x axis; centered atoms are
/// rotated to diagonal scatter with the larger eigenvalue first.
fn so2_canonical(atom: &Atom) -> Atom {
    let m = atom.mean();
    let norm = m.norm();
    if norm > 1e-12 {
        let theta = m[1].atan2(m[0]);
        let q = rotation_matrix(-theta);
        let scatter = SpdMatrix::new(&q * atom.scatter().matrix() * q.transpose())
            .expect("conjugation preserves positivity");
        Atom::new(
            atom.generator().clone(),
            DVector::from_row_slice(&[norm, 0.0]),
            scatter,
        )
        .expect("dimensions preserved")
    } else {
        let eigen = atom.scatter().matrix().clone().symmetric_eigen();
        let (i_max, i_min) = if eigen.eigenvalues[0] >= eigen.eigenvalues[1] {
            (0, 1)
        } else {
            (1, 0)
        };
        let scatter =
            SpdMatrix::from_diagonal(&[eigen.eigenvalues[i_max], eigen.eigenvalues[i_min]])
                .expect("eigenvalues of an SPD matrix are positive");
        Atom::new(
            atom.generator().clone(),
            DVector::from_row_slice(&[0.0, 0.0]),
            scatter,
        )
        .expect("dimensions preserved")
    }
}

/// Quotient distance `min_g W₂(a₀, g·a₁)` together with a minimizing group
/// element (expressed relative to the given representatives).
///
/// Representatives are canonicalized before the search, so the value is
/// exactly invariant under replacing either argument by any orbit point.
pub fn sym_distance(a0: &SymmetrizedAtom, a1: &SymmetrizedAtom) -> Result<(f64, GroupElement)> {
    if a0.group != a1.group {
        return Err(Error::GroupMismatch);
    }
    if !a0.group.is_finite() {
        let (angle, dist) = so2_align(&a0.representative, &a1.representative)?;
        return Ok((dist, GroupElement::Rotation { angle }));
    }
    let elements = a0.group.elements()?;
    let c0 = a0.canonical_representative();
    let c1 = a1.canonical_representative();
    let mut best = f64::INFINITY;
    let mut best_idx = 0usize;
    for (i, g) in elements.iter().enumerate() {
        let d = c0.w2(&transform_atom(g, &c1)?)?;
        if d < best {
            best = d;
            best_idx = i;
        }
    }
    // Translate back to the original representatives:
    // c₀ = P₀ a₀, c₁ = P₁ a₁ and W₂(c₀, G c₁) = W₂(a₀, P₀ᵀ G P₁ a₁).
    let p0 = &elements[a0.canonical_element()];
    let p1 = &elements[a1.canonical_element()];
    let matrix = p0.transpose() * &elements[best_idx] * p1;
    let index = elements
        .iter()
        .position(|e| (e - &matrix).amax() <= 1e-12)
        .ok_or_else(|| Error::InvalidInput("group is not closed under composition".into()))?;
    Ok((best, GroupElement::Finite { index, matrix }))
}

/// Best rotation aligning two planar atoms: minimizes
/// `θ ↦ W₂(a₀, R_θ·a₁)` by a 360-point scan refined by golden-section
/// search to an angle tolerance of 1e-8. Returns `(angle, distance)`.
pub fn so2_align(a0: &Atom, a1: &Atom) -> Result<(f64, f64)> {
    if a0.dim() != 2 {
        return Err(Error::UnsupportedDimension { expected: 2, got: a0.dim() });
    }
    if a1.dim() != 2 {
        return Err(Error::UnsupportedDimension { expected: 2, got: a1.dim() });
    }
    let objective = |theta: f64| -> Result<f64> {
        a0.w2(&transform_atom(&rotation_matrix(theta), a1)?)
    };
    let two_pi = 2.0 * std::f64::consts::PI;
    let step = two_pi / SO2_SCAN_POINTS as f64;
    let mut best_theta = 0.0;
    let mut best = objective(0.0)?;
    for k in 1..SO2_SCAN_POINTS {
        let theta = k as f64 * step;
        let d = objective(theta)?;
        if d < best {
            best = d;
            best_theta = theta;
        }
    }
    // Golden-section refinement inside the winning bracket.
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut lo = best_theta - step;
    let mut hi = best_theta + step;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    while hi - lo > SO2_ANGLE_TOL {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2)?;
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = objective(mid)?;
    let (mut theta, value) = if fm <= best { (mid, fm) } else { (best_theta, best) };
    theta = theta.rem_euclid(two_pi);
    Ok((theta, value))
}

/// Symmetric multi-marginal alignment: minimizes over `(g₁,…,g_Q) ∈ G^Q`
/// (first element gauged to the identity) the barycentric cost
/// `Σ_q t_q W₂(g_q·a_q, bar)²`. Returns the cost square root and the
/// minimizing elements relative to the given representatives.
pub fn sym_multimarginal(
    atoms: &[SymmetrizedAtom],
    weights: &[f64],
) -> Result<(f64, Vec<GroupElement>)> {
    if atoms.is_empty() {
        return Err(Error::InvalidInput("no atoms given".into()));
    }
    let group = atoms[0].group.clone();
    for a in atoms {
        if a.group != group {
            return Err(Error::GroupMismatch);
        }
    }
    let weights = normalize_weights(weights)?;
    if weights.len() != atoms.len() {
        return Err(Error::InvalidInput(format!(
            "{} weights for {} atoms",
            weights.len(),
            atoms.len()
        )));
    }
    let q_count = atoms.len();

    if !group.is_finite() {
        return match q_count {
            1 => Ok((0.0, vec![GroupElement::Rotation { angle: 0.0 }])),
            2 => {
                let (angle, dist) = so2_align(&atoms[0].representative, &atoms[1].representative)?;
                // On a geodesic space the two-point barycentric value is
                // t₀ t₁ d²; its square root is √(t₀t₁)·d.
                let value = (weights[0] * weights[1]).sqrt() * dist;
                Ok((value, vec![
                    GroupElement::Rotation { angle: 0.0 },
                    GroupElement::Rotation { angle },
                ]))
            }
            _ => Err(Error::Capacity {
                size: q_count,
                limit: 2,
                hint: "SO(2) alignment is available for two marginals only",
            }),
        };
    }

    let elements = group.elements()?;
    let order = elements.len();
    let mut tuples = 1usize;
    for _ in 1..q_count {
        tuples = tuples
            .checked_mul(order)
            .filter(|&t| t <= ALIGNMENT_CAPACITY)
            .ok_or(Error::Capacity {
                size: usize::MAX,
                limit: ALIGNMENT_CAPACITY,
                hint: "|G|^(Q-1) alignment tuples exceed the enumeration budget",
            })?;
    }

    let canonicals: Vec<Atom> = atoms.iter().map(|a| a.canonical_representative()).collect();
    let mut best_cost = f64::INFINITY;
    let mut best_tuple = vec![0usize; q_count];
    let mut aligned: Vec<Atom> = canonicals.clone();
    for flat in 0..tuples {
        let mut idx = flat;
        let mut tuple = vec![0usize; q_count];
        for q in (1..q_count).rev() {
            tuple[q] = idx % order;
            idx /= order;
        }
        for q in 1..q_count {
            aligned[q] = transform_atom(&elements[tuple[q]], &canonicals[q])?;
        }
        let refs: Vec<&Atom> = aligned.iter().collect();
        let bar = Atom::barycenter(&weights, &refs)?;
        let mut cost = 0.0;
        for (t, a) in weights.iter().zip(&refs) {
            cost += t * a.w2(&bar)?.powi(2);
        }
        if cost < best_cost {
            best_cost = cost;
            best_tuple = tuple;
        }
    }

    // Element for the original representative q: E_q = G_q P_q, then a global
    // left action makes the first element the identity exactly.
    let raw: Vec<DMatrix<f64>> = atoms
        .iter()
        .zip(&best_tuple)
        .map(|(a, &g)| &elements[g] * &elements[a.canonical_element()])
        .collect();
    let gauge = raw[0].transpose();
    let mut out = Vec::with_capacity(q_count);
    for m in &raw {
        let matrix = &gauge * m;
        let index = elements
            .iter()
            .position(|e| (e - &matrix).amax() <= 1e-12)
            .ok_or_else(|| Error::InvalidInput("group is not closed under composition".into()))?;
        out.push(GroupElement::Finite { index, matrix });
    }
    Ok((best_cost.max(0.0).sqrt(), out))
}

/// Barycenter of symmetrized atoms: align representatives by
/// [`sym_multimarginal`], take the location-scatter barycenter, symmetrize.
pub fn sym_barycenter(atoms: &[SymmetrizedAtom], weights: &[f64]) -> Result<SymmetrizedAtom> {
    let (_, elements) = sym_multimarginal(atoms, weights)?;
    let weights = normalize_weights(weights)?;
    let aligned: Vec<Atom> = atoms
        .iter()
        .zip(&elements)
        .map(|(a, g)| g.apply(&a.representative))
        .collect::<Result<_>>()?;
    let refs: Vec<&Atom> = aligned.iter().collect();
    let bar = Atom::barycenter(&weights, &refs)?;
    SymmetrizedAtom::new(bar, atoms[0].group.clone())
}

impl MixtureAtom for SymmetrizedAtom {
    fn distance(&self, other: &Self) -> Result<f64> {
        sym_distance(self, other).map(|(d, _)| d)
    }

    fn barycenter(weights: &[f64], atoms: &[&Self]) -> Result<Self> {
        let owned: Vec<SymmetrizedAtom> = atoms.iter().map(|a| (*a).clone()).collect();
        sym_barycenter(&owned, weights)
    }

    fn canonical_key(&self) -> Vec<f64> {
        self.canonical_representative().parameter_key()
    }

    fn same_component(&self, other: &Self) -> bool {
        self.group == other.group
            && self
                .canonical_representative()
                .same_component(&other.canonical_representative())
    }

    fn barycentric_cost(weights: &[f64], atoms: &[&Self]) -> Result<(f64, Self)> {
        let owned: Vec<SymmetrizedAtom> = atoms.iter().map(|a| (*a).clone()).collect();
        let (value, elements) = sym_multimarginal(&owned, weights)?;
        let weights = normalize_weights(weights)?;
        let aligned: Vec<Atom> = owned
            .iter()
            .zip(&elements)
            .map(|(a, g)| g.apply(&a.representative))
            .collect::<Result<_>>()?;
        let refs: Vec<&Atom> = aligned.iter().collect();
        let bar = Atom::barycenter(&weights, &refs)?;
        Ok((value * value, SymmetrizedAtom::new(bar, owned[0].group.clone())?))
    }
}

impl PointDensity for SymmetrizedAtom {
    fn density_at(&self, x: &DVector<f64>) -> Result<f64> {
        if self.group.is_finite() {
            let mut total = 0.0;
            for a in &self.orbit {
                total += a.density(x)?;
            }
            Ok(total / self.orbit.len() as f64)
        } else {
            // (R_θ·a)(x) = a(R_{-θ} x); the trapezoid rule on a periodic
            // integrand converges spectrally.
            let n = 720;
            let two_pi = 2.0 * std::f64::consts::PI;
            let mut total = 0.0;
            for k in 0..n {
                let theta = k as f64 / n as f64 * two_pi;
                let rx = rotation_matrix(-theta) * x;
                total += self.representative.density(&rx)?;
            }
            Ok(total / n as f64)
        }
    }

    fn extent_hints(&self) -> Vec<(DVector<f64>, f64)> {
        if self.group.is_finite() {
            self.orbit.iter().flat_map(|a| a.extent_hints()).collect()
        } else {
            let r = self.representative.mean().norm();
            let sigma = self.representative.scatter().max_eigenvalue().sqrt();
            [(r, 0.0), (-r, 0.0), (0.0, r), (0.0, -r)]
                .iter()
                .map(|&(x, y)| (DVector::from_row_slice(&[x, y]), sigma))
                .collect()
        }
    }
}

// ---------------------------------------------------------------------------
// Squared Slater determinants
// ---------------------------------------------------------------------------

/// A squared Slater determinant built from Gaussian orbitals: the normalized
/// density `|det(G_{m_i,Σ_i}(x_j))|² / Y` on `R^{n·d}`. It vanishes on every
/// coincidence hyperplane `x_i = x_j` and is invariant under permutations of
/// the coordinate blocks.
#[derive(Clone, Debug)]
pub struct SdAtom {
    orbitals: Vec<Atom>,
    n: usize,
    d: usize,
    log_norm: f64,
}

impl SdAtom {
    /// Build from orbital means and scatters. The normalization
    /// `Y = n! · det(B)` with Gram matrix `B_ij = ∫ G_i G_j` is closed-form
    /// for Gaussian orbitals.
    pub fn new(means: Vec<DVector<f64>>, scatters: Vec<SpdMatrix>) -> Result<Self> {
        let n = means.len();
        if n == 0 || scatters.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} orbital means for {} scatters",
                n,
                scatters.len()
            )));
        }
        let d = means[0].len();
        let profile = GeneratorProfile::gaussian(d)?;
        let mut orbitals = Vec::with_capacity(n);
        for (m, s) in means.into_iter().zip(scatters) {
            orbitals.push(Atom::new(profile.clone(), m, s)?);
        }
        for i in 0..n {
            for j in i + 1..n {
                if orbitals[i].same_component(&orbitals[j]) {
                    return Err(Error::DegenerateDeterminant);
                }
            }
        }
        let mut gram = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                gram[(i, j)] = gaussian_overlap(&orbitals[i], &orbitals[j])?;
            }
        }
        let det = gram.clone().lu().determinant();
        let diag_product: f64 = (0..n).map(|i| gram[(i, i)]).product();
        if det <= 1e-12 * diag_product {
            return Err(Error::DegenerateDeterminant);
        }
        let log_norm = ln_gamma(n as f64 + 1.0) + det.ln();
        Ok(Self { orbitals, n, d, log_norm })
    }

    pub fn orbital_count(&self) -> usize {
        self.n
    }

    pub fn orbital_dim(&self) -> usize {
        self.d
    }

    pub fn orbitals(&self) -> &[Atom] {
        &self.orbitals
    }

    /// Density at `x ∈ R^{n·d}`.
    pub fn density(&self, x: &DVector<f64>) -> Result<f64> {
        let dim = self.n * self.d;
        if x.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
        }
        let n = self.n;
        let mut m = DMatrix::<f64>::zeros(n, n);
        let mut block = DVector::<f64>::zeros(self.d);
        for j in 0..n {
            for r in 0..self.d {
                block[r] = x[j * self.d + r];
            }
            for i in 0..n {
                m[(i, j)] = self.orbitals[i].density(&block)?;
            }
        }
        let det = match n {
            1 => m[(0, 0)],
            2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
            3 => {
                m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                    - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                    + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
            }
            _ => m.lu().determinant(),
        };
        Ok(det * det * (-self.log_norm).exp())
    }

    /// Image under the isomorphism onto permutation-symmetrized
    /// block-diagonal Gaussians on `R^{n·d}`.
    pub fn to_block_gaussian(&self) -> Result<SymmetrizedAtom> {
        let dim = self.n * self.d;
        let mut mean = DVector::<f64>::zeros(dim);
        let mut scatter = DMatrix::<f64>::zeros(dim, dim);
        for (i, orb) in self.orbitals.iter().enumerate() {
            for r in 0..self.d {
                mean[i * self.d + r] = orb.mean()[r];
                for c in 0..self.d {
                    scatter[(i * self.d + r, i * self.d + c)] = orb.scatter().matrix()[(r, c)];
                }
            }
        }
        let atom = Atom::new(
            GeneratorProfile::gaussian(dim)?,
            mean,
            SpdMatrix::new(scatter)?,
        )?;
        SymmetrizedAtom::new(atom, SymmetryGroup::permutation(self.n, self.d)?)
    }

    /// Pull a block-diagonal Gaussian back to its Slater-determinant
    /// preimage. Off-block scatter entries must vanish (tolerance absorbs
    /// fixed-point round-off from barycenters).
    pub fn from_block_gaussian(atom: &Atom, n: usize, d: usize) -> Result<Self> {
        let dim = n * d;
        if atom.dim() != dim {
            return Err(Error::BlockShapeMismatch(format!(
                "atom dimension {} does not factor as {}x{}",
                atom.dim(),
                n,
                d
            )));
        }
        let scatter = atom.scatter().matrix();
        let scale = scatter.amax();
        let mut means = Vec::with_capacity(n);
        let mut scatters = Vec::with_capacity(n);
        for i in 0..n {
            let mut m = DVector::<f64>::zeros(d);
            let mut s = DMatrix::<f64>::zeros(d, d);
            for r in 0..d {
                m[r] = atom.mean()[i * d + r];
                for c in 0..d {
                    s[(r, c)] = scatter[(i * d + r, i * d + c)];
                }
            }
            means.push(m);
            scatters.push(SpdMatrix::new(s)?);
        }
        for r in 0..dim {
            for c in 0..dim {
                if r / d != c / d && scatter[(r, c)].abs() > 1e-9 * scale.max(1.0) {
                    return Err(Error::BlockShapeMismatch(format!(
                        "scatter is not block-diagonal at ({r},{c})"
                    )));
                }
            }
        }
        Self::new(means, scatters)
    }
}

/// `∫ G_0 G_1` for two Gaussian densities: a Gaussian in the mean difference.
fn gaussian_overlap(a: &Atom, b: &Atom) -> Result<f64> {
    let d = a.dim() as f64;
    let sum = SpdMatrix::new(a.scatter().matrix() + b.scatter().matrix())?;
    let diff = a.mean() - b.mean();
    let inv_root = sum.inv_sqrt()?;
    let q = (inv_root.matrix() * diff).norm_squared();
    let log_val = -0.5 * q - 0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * sum.log_det();
    Ok(log_val.exp())
}

/// Free-function form of the squared-Slater-determinant density.
pub fn slater_det_density(
    means: &[DVector<f64>],
    scatters: &[SpdMatrix],
    x: &DVector<f64>,
) -> Result<f64> {
    SdAtom::new(means.to_vec(), scatters.to_vec())?.density(x)
}

/// Mixture distance between squared-Slater-determinant mixtures through the
/// isomorphism onto permutation-symmetrized block-diagonal Gaussians.
pub fn sd_mixture_distance(
    mu0: &Mixture<SdAtom>,
    mu1: &Mixture<SdAtom>,
) -> Result<(f64, crate::discrete::DiscretePlan)> {
    let (n0, d0) = (mu0.atoms()[0].n, mu0.atoms()[0].d);
    let (n1, d1) = (mu1.atoms()[0].n, mu1.atoms()[0].d);
    if (n0, d0) != (n1, d1) {
        return Err(Error::BlockShapeMismatch(format!(
            "{n0} orbitals of dimension {d0} vs {n1} of dimension {d1}"
        )));
    }
    mu0.distance(mu1, 2.0)
}

impl MixtureAtom for SdAtom {
    fn distance(&self, other: &Self) -> Result<f64> {
        if (self.n, self.d) != (other.n, other.d) {
            return Err(Error::BlockShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.n, self.d, other.n, other.d
            )));
        }
        sym_distance(&self.to_block_gaussian()?, &other.to_block_gaussian()?).map(|(d, _)| d)
    }

    fn barycenter(weights: &[f64], atoms: &[&Self]) -> Result<Self> {
        let images: Vec<SymmetrizedAtom> = atoms
            .iter()
            .map(|a| a.to_block_gaussian())
            .collect::<Result<_>>()?;
        let bar = sym_barycenter(&images, weights)?;
        Self::from_block_gaussian(&bar.representative, atoms[0].n, atoms[0].d)
    }

    fn canonical_key(&self) -> Vec<f64> {
        self.to_block_gaussian()
            .map(|s| s.canonical_key())
            .unwrap_or_default()
    }

    fn same_component(&self, other: &Self) -> bool {
        match (self.to_block_gaussian(), other.to_block_gaussian()) {
            (Ok(a), Ok(b)) => a.same_component(&b),
            _ => false,
        }
    }

    fn barycentric_cost(weights: &[f64], atoms: &[&Self]) -> Result<(f64, Self)> {
        let images: Vec<SymmetrizedAtom> = atoms
            .iter()
            .map(|a| a.to_block_gaussian())
            .collect::<Result<_>>()?;
        let refs: Vec<&SymmetrizedAtom> = images.iter().collect();
        let (cost, bar) = SymmetrizedAtom::barycentric_cost(weights, &refs)?;
        Ok((
            cost,
            Self::from_block_gaussian(&bar.representative, atoms[0].n, atoms[0].d)?,
        ))
    }
}

impl PointDensity for SdAtom {
    fn density_at(&self, x: &DVector<f64>) -> Result<f64> {
        self.density(x)
    }

    fn extent_hints(&self) -> Vec<(DVector<f64>, f64)> {
        self.to_block_gaussian()
            .map(|s| s.extent_hints())
            .unwrap_or_default()
    }
}
