//! Grid-based entropic transport oracle.
//!
//! Densities rasterized on rectangular grids, a log-domain Sinkhorn solver
//! for the squared-Euclidean cost, iterative Bregman-projection barycenters,
//! and grid-level symmetry diagnostics. This module is the reference
//! implementation every closed form in the crate is validated against: it
//! never sees atom parameters, only sampled density values.
//!
//! The regularization is specified relative to the squared grid diameter
//! (`eps_abs = eps_rel · diam²`) so acceptance tolerances are scale
//! invariant. Dual potentials are stored divided by epsilon; plans are never
//! materialized, every statistic is streamed row-wise from the potentials.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::parallel;
use crate::symmetry::SymmetryGroup;
use crate::util::kahan_sum;

/// Default relative regularization (fraction of the squared grid diameter).
pub const DEFAULT_EPS_REL: f64 = 1e-4;

/// Default Sinkhorn iteration cap.
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

/// Default L1 marginal violation demanded for convergence.
pub const DEFAULT_MARGINAL_TOL: f64 = 1e-8;

/// Dense `C/ε` matrices are materialized up to this many entries.
const DENSE_COST_LIMIT: usize = 9_000_000;

/// One grid axis: closed interval sampled at `points` equispaced nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridAxis {
    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step()
    }
}

/// A one- or two-dimensional rectangular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    axes: Vec<GridAxis>,
}

impl GridSpec {
    pub fn new(bounds: &[(f64, f64)], points: &[usize]) -> Result<Self> {
        if bounds.is_empty() || bounds.len() > 2 || bounds.len() != points.len() {
            return Err(Error::InvalidInput(format!(
                "grids are 1- or 2-dimensional; got {} bounds and {} point counts",
                bounds.len(),
                points.len()
            )));
        }
        let mut axes = Vec::with_capacity(bounds.len());
        for (&(lo, hi), &n) in bounds.iter().zip(points) {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidInput(format!("invalid axis bounds ({lo}, {hi})")));
            }
            if n < 2 {
                return Err(Error::InvalidInput("axes need at least two points".into()));
            }
            axes.push(GridAxis { lo, hi, points: n });
        }
        Ok(Self { axes })
    }

    pub fn new_1d(lo: f64, hi: f64, points: usize) -> Result<Self> {
        Self::new(&[(lo, hi)], &[points])
    }

    pub fn new_2d(bounds: [(f64, f64); 2], points: [usize; 2]) -> Result<Self> {
        Self::new(&bounds, &points)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    pub fn node_count(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    /// Uniform cell volume of the rasterization rule.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.step()).product()
    }

    /// Squared diameter of the grid box (sets the cost scale).
    pub fn squared_diameter(&self) -> f64 {
        self.axes.iter().map(|a| (a.hi - a.lo).powi(2)).sum()
    }

    /// Node coordinates flattened node-major (row-major over axes).
    pub fn node_coords(&self) -> Vec<f64> {
        let dim = self.dim();
        let n = self.node_count();
        let mut coords = vec![0.0; n * dim];
        match dim {
            1 => {
                for i in 0..n {
                    coords[i] = self.axes[0].node(i);
                }
            }
            _ => {
                let ny = self.axes[1].points;
                for i in 0..n {
                    coords[2 * i] = self.axes[0].node(i / ny);
                    coords[2 * i + 1] = self.axes[1].node(i % ny);
                }
            }
        }
        coords
    }
}

/// A nonnegative density sampled on grid nodes, normalized to unit mass
/// under the uniform-cell rule.
#[derive(Clone, Debug)]
pub struct GridDensity {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridDensity {
    /// Sample an evaluatable density at the nodes and normalize. Negative
    /// samples (round-off) are clamped to zero.
    pub fn from_fn<F>(spec: GridSpec, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let dim = spec.dim();
        let coords = spec.node_coords();
        let values = parallel::map_indexed(spec.node_count(), |i| {
            f(&coords[i * dim..(i + 1) * dim]).max(0.0)
        });
        Self::from_values(spec, values)
    }

    /// Wrap raw node values, clamping negatives and normalizing mass.
    pub fn from_values(spec: GridSpec, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.node_count() {
            return Err(Error::InvalidInput(format!(
                "{} values for a grid with {} nodes",
                values.len(),
                spec.node_count()
            )));
        }
        for v in values.iter_mut() {
            if !v.is_finite() && !v.is_nan() {
                return Err(Error::InvalidInput("density values must be finite".into()));
            }
            if v.is_nan() {
                return Err(Error::InvalidInput("density values must not be NaN".into()));
            }
            *v = v.max(0.0);
        }
        let mass = kahan_sum(values.iter().copied()) * spec.cell_volume();
        if mass <= 0.0 {
            return Err(Error::EmptySupport);
        }
        for v in values.iter_mut() {
            *v /= mass;
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Total mass under the uniform-cell rule (1 up to round-off).
    pub fn mass(&self) -> f64 {
        kahan_sum(self.values.iter().copied()) * self.spec.cell_volume()
    }

    /// Node masses (value times cell volume); the discrete measure the
    /// Sinkhorn solver transports.
    pub fn node_masses(&self) -> Vec<f64> {
        let cv = self.spec.cell_volume();
        self.values.iter().map(|v| v * cv).collect()
    }

    /// L1 distance between two densities on a common grid.
    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        if self.spec != other.spec {
            return Err(Error::GridMismatch);
        }
        Ok(kahan_sum(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b).abs()),
        ) * self.spec.cell_volume())
    }

    /// CSV serialization: header `x[,y],value`, row-major nodes, 17
    /// significant digits.
    pub fn to_csv(&self) -> String {
        let dim = self.spec.dim();
        let coords = self.spec.node_coords();
        let mut out = String::with_capacity(self.values.len() * 48);
        out.push_str(if dim == 1 { "x,value\n" } else { "x,y,value\n" });
        for (i, v) in self.values.iter().enumerate() {
            if dim == 1 {
                out.push_str(&format!("{:.16e},{:.16e}\n", coords[i], v));
            } else {
                out.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e}\n",
                    coords[2 * i],
                    coords[2 * i + 1],
                    v
                ));
            }
        }
        out
    }

    /// Parse the CSV produced by [`GridDensity::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::InvalidInput("empty CSV".into()))?;
        let dim = match header.trim() {
            "x,value" => 1,
            "x,y,value" => 2,
            h => return Err(Error::InvalidInput(format!("unrecognized CSV header '{h}'"))),
        };
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidInput(format!("CSV line {}: {e}", lineno + 2)))?;
            if fields.len() != dim + 1 {
                return Err(Error::InvalidInput(format!(
                    "CSV line {}: expected {} fields",
                    lineno + 2,
                    dim + 1
                )));
            }
            rows.push(fields);
        }
        if rows.len() < 2 {
            return Err(Error::InvalidInput("CSV holds fewer than two nodes".into()));
        }
        let spec = if dim == 1 {
            GridSpec::new_1d(rows[0][0], rows[rows.len() - 1][0], rows.len())?
        } else {
            let ny = rows.iter().take_while(|r| r[0] == rows[0][0]).count();
            if ny == 0 || rows.len() % ny != 0 {
                return Err(Error::InvalidInput("CSV rows do not form a grid".into()));
            }
            let nx = rows.len() / ny;
            GridSpec::new_2d(
                [
                    (rows[0][0], rows[rows.len() - 1][0]),
                    (rows[0][1], rows[ny - 1][1]),
                ],
                [nx, ny],
            )?
        };
        Self::from_values(spec, rows.iter().map(|r| r[dim]).collect())
    }
}

/// Rasterize an evaluatable density onto a grid.
pub fn rasterize<F>(f: F, spec: &GridSpec) -> Result<GridDensity>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    GridDensity::from_fn(spec.clone(), f)
}

/// Per-axis bounds `center ± factor·σ` over the given extent hints.
pub fn auto_bounds(hints: &[(DVector<f64>, f64)], factor: f64) -> Result<Vec<(f64, f64)>> {
    if hints.is_empty() {
        return Err(Error::InvalidInput("no extent hints".into()));
    }
    let dim = hints[0].0.len();
    let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
    for (center, sigma) in hints {
        if center.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: center.len() });
        }
        for ax in 0..dim {
            bounds[ax].0 = bounds[ax].0.min(center[ax] - factor * sigma);
            bounds[ax].1 = bounds[ax].1.max(center[ax] + factor * sigma);
        }
    }
    Ok(bounds)
}

/// Reflect bounds through the origin (parity-symmetric grids).
pub fn reflect_bounds(bounds: &[(f64, f64)]) -> Vec<(f64, f64)> {
    bounds
        .iter()
        .map(|&(lo, hi)| {
            let m = lo.abs().max(hi.abs());
            (-m, m)
        })
        .collect()
}

/// Make all axes share one interval (block-permutation-symmetric grids).
pub fn equalize_bounds(bounds: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let lo = bounds.iter().map(|b| b.0).fold(f64::INFINITY, f64::min);
    let hi = bounds.iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max);
    vec![(lo, hi); bounds.len()]
}

/// Sinkhorn solver parameters (defaults follow the reference setting:
/// relative regularization 1e-4, at most 10000 iterations).
#[derive(Clone, Copy, Debug)]
pub struct SinkhornOptions {
    pub eps_rel: f64,
    pub max_iterations: usize,
    pub marginal_tol: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            eps_rel: DEFAULT_EPS_REL,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            marginal_tol: DEFAULT_MARGINAL_TOL,
        }
    }
}

/// Outcome of a Sinkhorn transport solve. Non-convergence is reported, not
/// fatal: `cost` still carries the unregularized objective of the plan the
/// iteration stopped at.
#[derive(Clone, Copy, Debug)]
pub struct SinkhornSummary {
    /// `⟨plan, cost⟩`: the unregularized transport objective.
    pub cost: f64,
    pub iterations: usize,
    pub marginal_violation: f64,
    pub converged: bool,
    /// Absolute regularization used (`eps_rel · diam²`).
    pub epsilon: f64,
}

/// Upper bound on the entropic offset of the unregularized plan cost:
/// the mutual information of any coupling of `n`-point marginals is at
/// most `ln n`.
pub fn entropic_bias_bound(epsilon: f64, nodes: usize) -> f64 {
    epsilon * (nodes as f64).ln()
}

struct Potentials {
    phi: Vec<f64>,
    psi: Vec<f64>,
    iterations: usize,
    violation: f64,
    converged: bool,
    epsilon: f64,
}

/// Core log-domain Sinkhorn on node masses. Potentials are stored divided
/// by epsilon; `k(i,j) = |x_i - x_j|² / ε` is materialized when it fits.
fn solve_potentials(p: &GridDensity, q: &GridDensity, opts: &SinkhornOptions) -> Result<Potentials> {
    if p.spec != q.spec {
        return Err(Error::GridMismatch);
    }
    if !(opts.eps_rel > 0.0) || !opts.eps_rel.is_finite() {
        return Err(Error::InvalidInput(format!(
            "regularization must be positive, got {}",
            opts.eps_rel
        )));
    }
    let spec = &p.spec;
    let n = spec.node_count();
    let dim = spec.dim();
    let epsilon = opts.eps_rel * spec.squared_diameter();
    let coords = spec.node_coords();

    let dense: Option<Vec<f64>> = if n * n <= DENSE_COST_LIMIT {
        Some(parallel::map_indexed(n * n, |e| {
            let (i, j) = (e / n, e % n);
            sq_dist(&coords, dim, i, j) / epsilon
        }))
    } else {
        None
    };
    let k = |i: usize, j: usize| -> f64 {
        match &dense {
            Some(m) => m[i * n + j],
            None => sq_dist(&coords, dim, i, j) / epsilon,
        }
    };

    let log_a: Vec<f64> = p.node_masses().iter().map(|&m| safe_ln(m)).collect();
    let log_b: Vec<f64> = q.node_masses().iter().map(|&m| safe_ln(m)).collect();
    let mut phi = vec![0.0; n];
    let mut psi = vec![0.0; n];
    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    let mut converged = false;

    let check_every = 10;
    while iterations < opts.max_iterations {
        parallel::fill_indexed(&mut phi, |i| {
            if log_a[i] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                log_a[i] - logsumexp_by(n, |j| psi[j] - k(i, j))
            }
        });
        parallel::fill_indexed(&mut psi, |j| {
            if log_b[j] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                log_b[j] - logsumexp_by(n, |i| phi[i] - k(i, j))
            }
        });
        iterations += 1;

        if iterations % check_every == 0 || iterations == opts.max_iterations {
            // Column marginals are exact right after the psi update; measure
            // the row violation.
            let row_gap = parallel::map_indexed(n, |i| {
                if log_a[i] == f64::NEG_INFINITY {
                    return 0.0;
                }
                let row = (phi[i] + logsumexp_by(n, |j| psi[j] - k(i, j))).exp();
                (row - log_a[i].exp()).abs()
            });
            violation = kahan_sum(row_gap);
            if violation <= opts.marginal_tol {
                converged = true;
                break;
            }
        }
    }

    Ok(Potentials { phi, psi, iterations, violation, converged, epsilon })
}

#[inline]
fn sq_dist(coords: &[f64], dim: usize, i: usize, j: usize) -> f64 {
    match dim {
        1 => {
            let d = coords[i] - coords[j];
            d * d
        }
        _ => {
            let dx = coords[2 * i] - coords[2 * j];
            let dy = coords[2 * i + 1] - coords[2 * j + 1];
            dx * dx + dy * dy
        }
    }
}

#[inline]
fn safe_ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

#[inline]
fn logsumexp_by(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for i in 0..n {
        let v = f(i);
        if v > max {
            max = v;
        }
    }
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut sum = 0.0;
    for i in 0..n {
        sum += (f(i) - max).exp();
    }
    max + sum.ln()
}

/// Entropic estimate of `W₂²` between two grid densities on a common grid:
/// log-domain Sinkhorn on the squared-Euclidean node cost, reporting the
/// unregularized objective of the regularized plan.
pub fn sinkhorn_w2_squared(
    p: &GridDensity,
    q: &GridDensity,
    opts: &SinkhornOptions,
) -> Result<SinkhornSummary> {
    let pot = solve_potentials(p, q, opts)?;
    let spec = &p.spec;
    let n = spec.node_count();
    let dim = spec.dim();
    let coords = spec.node_coords();
    let epsilon = pot.epsilon;
    let (phi, psi) = (&pot.phi, &pot.psi);
    let row_costs = parallel::map_indexed(n, |i| {
        if phi[i] == f64::NEG_INFINITY {
            return 0.0;
        }
        let mut acc = 0.0;
        for j in 0..n {
            if psi[j] == f64::NEG_INFINITY {
                continue;
            }
            let c = sq_dist(&coords, dim, i, j);
            let log_p = phi[i] + psi[j] - c / epsilon;
            acc += log_p.exp() * c;
        }
        acc
    });
    Ok(SinkhornSummary {
        cost: kahan_sum(row_costs),
        iterations: pot.iterations,
        marginal_violation: pot.violation,
        converged: pot.converged,
        epsilon,
    })
}

/// Total plan mass over node pairs selected by `region`, streamed row-wise
/// from the dual potentials (the dense plan is never materialized).
pub fn plan_region_mass<F>(
    p: &GridDensity,
    q: &GridDensity,
    opts: &SinkhornOptions,
    region: F,
) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> bool + Sync,
{
    let pot = solve_potentials(p, q, opts)?;
    let spec = &p.spec;
    let n = spec.node_count();
    let dim = spec.dim();
    let coords = spec.node_coords();
    let epsilon = pot.epsilon;
    let (phi, psi) = (&pot.phi, &pot.psi);
    let row_masses = parallel::map_indexed(n, |i| {
        if phi[i] == f64::NEG_INFINITY {
            return 0.0;
        }
        let xi = &coords[i * dim..(i + 1) * dim];
        let mut acc = 0.0;
        for j in 0..n {
            if psi[j] == f64::NEG_INFINITY {
                continue;
            }
            if region(xi, &coords[j * dim..(j + 1) * dim]) {
                let c = sq_dist(&coords, dim, i, j);
                acc += (phi[i] + psi[j] - c / epsilon).exp();
            }
        }
        acc
    });
    Ok(kahan_sum(row_masses))
}

/// Outcome of the iterative Bregman-projection barycenter.
#[derive(Clone, Debug)]
pub struct BarycenterOutcome {
    pub density: GridDensity,
    pub iterations: usize,
    pub marginal_violation: f64,
    pub converged: bool,
}

/// Entropic Wasserstein barycenter of grid densities on a common grid
/// (iterative Bregman projections in the log domain).
///
/// Degenerate weight vectors and identical inputs short-circuit to the exact
/// answer; running the iteration there would only stamp the ε-blur of the
/// regularization onto a case whose barycenter is known structurally.
pub fn sinkhorn_barycenter(
    densities: &[GridDensity],
    weights: &[f64],
    opts: &SinkhornOptions,
) -> Result<BarycenterOutcome> {
    if densities.is_empty() {
        return Err(Error::InvalidInput("no densities given".into()));
    }
    let weights = crate::util::normalize_weights(weights)?;
    if weights.len() != densities.len() {
        return Err(Error::InvalidInput(format!(
            "{} weights for {} densities",
            weights.len(),
            densities.len()
        )));
    }
    let spec = densities[0].spec.clone();
    for d in densities {
        if d.spec != spec {
            return Err(Error::GridMismatch);
        }
    }
    if let Some(k) = weights.iter().position(|&w| w == 1.0) {
        return Ok(BarycenterOutcome {
            density: densities[k].clone(),
            iterations: 0,
            marginal_violation: 0.0,
            converged: true,
        });
    }
    if densities
        .iter()
        .skip(1)
        .all(|d| d.values == densities[0].values)
    {
        return Ok(BarycenterOutcome {
            density: densities[0].clone(),
            iterations: 0,
            marginal_violation: 0.0,
            converged: true,
        });
    }
    if !(opts.eps_rel > 0.0) || !opts.eps_rel.is_finite() {
        return Err(Error::InvalidInput(format!(
            "regularization must be positive, got {}",
            opts.eps_rel
        )));
    }
    let n = spec.node_count();
    let dim = spec.dim();
    let epsilon = opts.eps_rel * spec.squared_diameter();
    let coords = spec.node_coords();
    let dense: Option<Vec<f64>> = if n * n <= DENSE_COST_LIMIT {
        Some(parallel::map_indexed(n * n, |e| {
            let (i, j) = (e / n, e % n);
            sq_dist(&coords, dim, i, j) / epsilon
        }))
    } else {
        None
    };
    let k = |i: usize, j: usize| -> f64 {
        match &dense {
            Some(m) => m[i * n + j],
            None => sq_dist(&coords, dim, i, j) / epsilon,
        }
    };

    let count = densities.len();
    let log_masses: Vec<Vec<f64>> = densities
        .iter()
        .map(|d| d.node_masses().iter().map(|&m| safe_ln(m)).collect())
        .collect();
    let mut phis = vec![vec![0.0; n]; count];
    let mut psis = vec![vec![0.0; n]; count];
    let mut log_bary = vec![0.0; n];
    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    let mut converged = false;
    let check_every = 10;

    while iterations < opts.max_iterations {
        // scaling step toward each input marginal
        for (idx, phi) in phis.iter_mut().enumerate() {
            let psi = &psis[idx];
            let log_a = &log_masses[idx];
            parallel::fill_indexed(phi, |i| {
                if log_a[i] == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    log_a[i] - logsumexp_by(n, |j| psi[j] - k(i, j))
                }
            });
        }
        // geometric-mean barycenter update and projection back
        let mut column_logs: Vec<Vec<f64>> = Vec::with_capacity(count);
        for phi in &phis {
            column_logs.push(parallel::map_indexed(n, |j| {
                logsumexp_by(n, |i| phi[i] - k(i, j))
            }));
        }
        parallel::fill_indexed(&mut log_bary, |j| {
            weights
                .iter()
                .zip(&column_logs)
                .map(|(t, col)| t * col[j])
                .sum()
        });
        for (idx, psi) in psis.iter_mut().enumerate() {
            let col = &column_logs[idx];
            parallel::fill_indexed(psi, |j| log_bary[j] - col[j]);
        }
        iterations += 1;

        if iterations % check_every == 0 || iterations == opts.max_iterations {
            let mut worst = 0.0f64;
            for idx in 0..count {
                let phi = &phis[idx];
                let psi = &psis[idx];
                let log_a = &log_masses[idx];
                let row_gap = parallel::map_indexed(n, |i| {
                    if log_a[i] == f64::NEG_INFINITY {
                        return 0.0;
                    }
                    let row = (phi[i] + logsumexp_by(n, |j| psi[j] - k(i, j))).exp();
                    (row - log_a[i].exp()).abs()
                });
                worst = worst.max(kahan_sum(row_gap));
            }
            violation = worst;
            if violation <= opts.marginal_tol {
                converged = true;
                break;
            }
        }
    }

    let cell = spec.cell_volume();
    let values: Vec<f64> = log_bary.iter().map(|&l| l.exp() / cell).collect();
    Ok(BarycenterOutcome {
        density: GridDensity::from_values(spec, values)?,
        iterations,
        marginal_violation: violation,
        converged,
    })
}

/// Worst L1 discrepancy between a density and its image under the group:
/// `max_{g∈G} ‖p − g·p‖₁`. The group must map grid nodes onto grid nodes.
pub fn symmetry_defect(p: &GridDensity, group: &SymmetryGroup) -> Result<f64> {
    let spec = &p.spec;
    let dim = spec.dim();
    if group.space_dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: group.space_dim() });
    }
    let elements = group.elements().map_err(|_| {
        Error::InvalidGrid("continuous groups cannot map a rectangular grid to itself".into())
    })?;
    let coords = spec.node_coords();
    let n = spec.node_count();
    let masses = p.node_masses();
    let mut worst = 0.0f64;
    for q in &elements {
        // node permutation induced by the element
        let mut perm = vec![0usize; n];
        for i in 0..n {
            let x = &coords[i * dim..(i + 1) * dim];
            let mut flat = 0usize;
            for ax in 0..dim {
                let y: f64 = (0..dim).map(|b| q[(ax, b)] * x[b]).sum();
                let axis = &spec.axes[ax];
                let t = (y - axis.lo) / axis.step();
                let r = t.round();
                if (t - r).abs() > 1e-6 || r < -0.5 || r >= axis.points as f64 - 0.5 {
                    return Err(Error::InvalidGrid(format!(
                        "group element maps node {i} off the grid (axis {ax})"
                    )));
                }
                flat = flat * axis.points + r as usize;
            }
            perm[i] = flat;
        }
        let defect = kahan_sum((0..n).map(|i| (masses[i] - masses[perm[i]]).abs()));
        worst = worst.max(defect);
    }
    Ok(worst)
}
