//! Exact solvers for the discrete transport problems over mixture weights.
//!
//! Two-marginal problems are solved by a transportation (network) simplex on
//! the bipartite graph; multi-marginal problems by a dense two-phase revised
//! simplex on the tensor formulation. Both use Bland's rule with row-major
//! (lexicographically smallest) entering variables, so plans are
//! reproducible across platforms and cycling is impossible. A vertex
//! enumeration oracle over spanning-tree supports backs them in tests.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::util::{kahan_sum, normalize_weights};

/// Hard guard on the number of multi-marginal LP variables.
pub const MULTIMARGINAL_CAPACITY: usize = 1_000_000;

/// Hard guard on marginal sizes accepted by the brute-force oracle.
pub const BRUTE_FORCE_CAPACITY: usize = 4;

/// A sparse coupling of mixture weights together with its objective value.
#[derive(Clone, Debug)]
pub struct DiscretePlan {
    /// Marginal sizes `(J, K)` or `(K_1, …, K_Q)`.
    pub shape: Vec<usize>,
    /// Strictly positive entries as `(index tuple, weight)`, sorted
    /// lexicographically by index tuple.
    pub entries: Vec<(Vec<usize>, f64)>,
    /// Objective value `Σ w·cost` of the plan.
    pub value: f64,
    /// Dual potentials per marginal when the solver produces them.
    pub duals: Option<Vec<Vec<f64>>>,
}

impl DiscretePlan {
    /// Marginal of the plan along the given axis.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.shape[axis]];
        for (idx, w) in &self.entries {
            out[idx[axis]] += w;
        }
        out
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.len()
    }

    /// Swap the two marginals of a two-marginal plan.
    pub fn transposed(&self) -> DiscretePlan {
        assert_eq!(self.shape.len(), 2, "transpose is defined for two-marginal plans");
        let mut entries: Vec<(Vec<usize>, f64)> = self
            .entries
            .iter()
            .map(|(idx, w)| (vec![idx[1], idx[0]], *w))
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        DiscretePlan {
            shape: vec![self.shape[1], self.shape[0]],
            entries,
            value: self.value,
            duals: self.duals.as_ref().map(|d| vec![d[1].clone(), d[0].clone()]),
        }
    }

    /// Dense weight lookup (test helper; plans are small).
    pub fn weight(&self, idx: &[usize]) -> f64 {
        self.entries
            .iter()
            .find(|(i, _)| i.as_slice() == idx)
            .map(|(_, w)| *w)
            .unwrap_or(0.0)
    }
}

fn validate_cost(cost: &DMatrix<f64>) -> Result<()> {
    for &c in cost.iter() {
        if !c.is_finite() || c < 0.0 {
            return Err(Error::InvalidCost(c));
        }
    }
    Ok(())
}

/// Exact optimum of the transportation problem
/// `min Σ w_{jk} c_{jk}` over nonnegative `w` with row sums `lambda0` and
/// column sums `lambda1` (network simplex, lexicographic Bland pivoting).
pub fn solve_transport(
    lambda0: &[f64],
    lambda1: &[f64],
    cost: &DMatrix<f64>,
) -> Result<DiscretePlan> {
    validate_cost(cost)?;
    let a = normalize_weights(lambda0)?;
    let b = normalize_weights(lambda1)?;
    let (nj, nk) = (a.len(), b.len());
    if cost.nrows() != nj || cost.ncols() != nk {
        return Err(Error::InvalidInput(format!(
            "cost matrix is {}x{}, weights demand {}x{}",
            cost.nrows(),
            cost.ncols(),
            nj,
            nk
        )));
    }

    // Northwest-corner staircase: a spanning-tree basis with J+K-1 cells,
    // degenerate zero-flow cells included.
    let mut basis: Vec<(usize, usize, f64)> = Vec::with_capacity(nj + nk - 1);
    {
        let mut ra = a.clone();
        let mut rb = b.clone();
        let (mut j, mut k) = (0usize, 0usize);
        loop {
            let f = ra[j].min(rb[k]).max(0.0);
            basis.push((j, k, f));
            ra[j] -= f;
            rb[k] -= f;
            if j == nj - 1 && k == nk - 1 {
                break;
            }
            if k == nk - 1 {
                j += 1;
            } else if j == nj - 1 {
                k += 1;
            } else if ra[j] <= rb[k] {
                j += 1;
            } else {
                k += 1;
            }
        }
    }

    let max_cost = cost.iter().cloned().fold(0.0, f64::max);
    let enter_tol = 1e-12 * (1.0 + max_cost);
    let nodes = nj + nk; // rows 0..nj, columns nj..nj+nk
    let mut in_basis = vec![false; nj * nk];
    for &(j, k, _) in &basis {
        in_basis[j * nk + k] = true;
    }

    let mut u = vec![0.0; nj];
    let mut v = vec![0.0; nk];
    // Bland's rule terminates, but cap pivots defensively.
    let pivot_cap = 1000 * (nj + nk) * (nj + nk) + 10_000;
    for _pivot in 0..pivot_cap {
        // Dual potentials from the basis tree, rooted at row 0.
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes];
        for (idx, &(j, k, _)) in basis.iter().enumerate() {
            adj[j].push((nj + k, idx));
            adj[nj + k].push((j, idx));
        }
        let mut known = vec![false; nodes];
        let mut stack = vec![0usize];
        u[0] = 0.0;
        known[0] = true;
        while let Some(node) = stack.pop() {
            for &(next, bidx) in &adj[node] {
                if known[next] {
                    continue;
                }
                let (j, k, _) = basis[bidx];
                if next >= nj {
                    v[next - nj] = cost[(j, k)] - u[j];
                } else {
                    u[next] = cost[(j, k)] - v[k];
                }
                known[next] = true;
                stack.push(next);
            }
        }

        // Entering variable: first cell in row-major order with negative
        // reduced cost.
        let mut entering = None;
        'scan: for j in 0..nj {
            for k in 0..nk {
                if !in_basis[j * nk + k] && cost[(j, k)] - u[j] - v[k] < -enter_tol {
                    entering = Some((j, k));
                    break 'scan;
                }
            }
        }
        let Some((je, ke)) = entering else {
            // Optimal: collect strictly positive basis flows.
            let mut entries: Vec<(Vec<usize>, f64)> = basis
                .iter()
                .filter(|&&(_, _, f)| f > 0.0)
                .map(|&(j, k, f)| (vec![j, k], f))
                .collect();
            entries.sort_by(|x, y| x.0.cmp(&y.0));
            let value = kahan_sum(entries.iter().map(|(idx, w)| w * cost[(idx[0], idx[1])]));
            return Ok(DiscretePlan {
                shape: vec![nj, nk],
                entries,
                value,
                duals: Some(vec![u.clone(), v.clone()]),
            });
        };

        // Unique tree path from column node ke back to row node je; together
        // with the entering cell it closes the pivot cycle.
        let target = nj + ke;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; nodes];
        let mut seen = vec![false; nodes];
        seen[je] = true;
        let mut queue = std::collections::VecDeque::from([je]);
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(next, bidx) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, bidx));
                    queue.push_back(next);
                }
            }
        }
        let mut path = Vec::new(); // basis indices from ke side back to je
        let mut node = target;
        while let Some((prev, bidx)) = parent[node] {
            path.push(bidx);
            node = prev;
        }

        // Signs alternate around the cycle; the entering cell takes +θ, so
        // path positions 0, 2, 4, … (adjacent to the entering column) take -θ.
        // Ties break to the lexicographically smallest cell (Bland).
        let mut theta = f64::INFINITY;
        let mut leave_bidx = usize::MAX;
        let mut leave_cell = (usize::MAX, usize::MAX);
        for (pos, &bidx) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let (j, k, f) = basis[bidx];
                if f < theta || (f == theta && (j, k) < leave_cell) {
                    theta = f;
                    leave_bidx = bidx;
                    leave_cell = (j, k);
                }
            }
        }
        debug_assert!(theta.is_finite());

        for (pos, &bidx) in path.iter().enumerate() {
            if pos % 2 == 0 {
                basis[bidx].2 -= theta;
            } else {
                basis[bidx].2 += theta;
            }
        }
        let (lj, lk, _) = basis[leave_bidx];
        in_basis[lj * nk + lk] = false;
        in_basis[je * nk + ke] = true;
        basis[leave_bidx] = (je, ke, theta);
    }
    Err(Error::NoConvergence {
        iterations: pivot_cap,
        residual: f64::NAN,
    })
}

/// Row-major linear index of a tuple in a tensor with the given shape.
fn tuple_index(tuple: &[usize], shape: &[usize]) -> usize {
    let mut idx = 0;
    for (t, s) in tuple.iter().zip(shape) {
        idx = idx * s + t;
    }
    idx
}

fn index_tuple(mut idx: usize, shape: &[usize]) -> Vec<usize> {
    let mut tuple = vec![0; shape.len()];
    for q in (0..shape.len()).rev() {
        tuple[q] = idx % shape[q];
        idx /= shape[q];
    }
    tuple
}

/// Exact optimum of the multi-marginal transport linear program
/// `min Σ_k w_k c_k` over nonnegative tensors with the prescribed marginals.
///
/// The LP has `Σ K_q − Q + 1` independent constraints, so the returned basic
/// solution carries at most that many nonzero entries.
pub fn solve_multimarginal(lambdas: &[Vec<f64>], cost: &[f64]) -> Result<DiscretePlan> {
    if lambdas.is_empty() {
        return Err(Error::InvalidInput("no marginals given".into()));
    }
    let shape: Vec<usize> = lambdas.iter().map(|l| l.len()).collect();
    let n_vars: usize = shape.iter().try_fold(1usize, |acc, &k| {
        acc.checked_mul(k).filter(|&n| n <= MULTIMARGINAL_CAPACITY)
    })
    .ok_or(Error::Capacity {
        size: usize::MAX,
        limit: MULTIMARGINAL_CAPACITY,
        hint: "decompose the barycenter into pairwise transports",
    })?;
    if cost.len() != n_vars {
        return Err(Error::InvalidInput(format!(
            "cost tensor has {} entries, shape demands {}",
            cost.len(),
            n_vars
        )));
    }
    for &c in cost {
        if !c.is_finite() || c < 0.0 {
            return Err(Error::InvalidCost(c));
        }
    }
    let marginals: Vec<Vec<f64>> = lambdas
        .iter()
        .map(|l| normalize_weights(l))
        .collect::<Result<_>>()?;

    let q_count = shape.len();
    // Full-rank constraint rows: all of marginal 0, all but the last row of
    // each further marginal (those are implied by total mass one).
    let mut row_offset = vec![0usize; q_count];
    let mut n_rows = shape[0];
    for q in 1..q_count {
        row_offset[q] = n_rows;
        n_rows += shape[q] - 1;
    }
    let mut rhs = DMatrix::<f64>::zeros(n_rows, 1);
    for k in 0..shape[0] {
        rhs[(k, 0)] = marginals[0][k];
    }
    for q in 1..q_count {
        for k in 0..shape[q] - 1 {
            rhs[(row_offset[q] + k, 0)] = marginals[q][k];
        }
    }

    // Sparse column of variable `idx` (rows with coefficient one).
    let column_rows = |tuple: &[usize]| -> Vec<usize> {
        let mut rows = Vec::with_capacity(q_count);
        rows.push(tuple[0]);
        for q in 1..q_count {
            if tuple[q] < shape[q] - 1 {
                rows.push(row_offset[q] + tuple[q]);
            }
        }
        rows
    };

    let max_cost = cost.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-12 * (1.0 + max_cost);

    // Two-phase revised simplex; artificial variables carry indices
    // n_vars..n_vars+n_rows.
    let mut basis: Vec<usize> = (n_vars..n_vars + n_rows).collect();
    let mut tuple_buf = vec![0usize; q_count];

    let basis_matrix = |basis: &[usize]| -> DMatrix<f64> {
        let mut bm = DMatrix::<f64>::zeros(n_rows, n_rows);
        for (col, &var) in basis.iter().enumerate() {
            if var >= n_vars {
                bm[(var - n_vars, col)] = 1.0;
            } else {
                for r in column_rows(&index_tuple(var, &shape)) {
                    bm[(r, col)] = 1.0;
                }
            }
        }
        bm
    };

    for phase in 0..2 {
        let var_cost = |var: usize| -> f64 {
            if phase == 0 {
                if var >= n_vars {
                    1.0
                } else {
                    0.0
                }
            } else if var >= n_vars {
                0.0
            } else {
                cost[var]
            }
        };
        let pivot_cap = 200 * (n_rows + 1) * (n_rows + 1) + 20_000;
        let mut done = false;
        for _ in 0..pivot_cap {
            let bm = basis_matrix(&basis);
            let lu = bm.clone().lu();
            let x_b = lu
                .solve(&rhs)
                .ok_or_else(|| Error::InvalidInput("singular LP basis".into()))?;
            let c_b = DMatrix::<f64>::from_iterator(n_rows, 1, basis.iter().map(|&v| var_cost(v)));
            let y = bm
                .transpose()
                .lu()
                .solve(&c_b)
                .ok_or_else(|| Error::InvalidInput("singular LP basis".into()))?;

            let mut in_basis = vec![false; n_vars];
            for &var in &basis {
                if var < n_vars {
                    in_basis[var] = true;
                }
            }
            // Bland: smallest-index variable with negative reduced cost.
            let mut entering = None;
            for var in 0..n_vars {
                if in_basis[var] {
                    continue;
                }
                let mut idx = var;
                for q in (0..q_count).rev() {
                    tuple_buf[q] = idx % shape[q];
                    idx /= shape[q];
                }
                let mut reduced = var_cost(var) - y[(tuple_buf[0], 0)];
                for q in 1..q_count {
                    if tuple_buf[q] < shape[q] - 1 {
                        reduced -= y[(row_offset[q] + tuple_buf[q], 0)];
                    }
                }
                if reduced < -tol {
                    entering = Some(var);
                    break;
                }
            }
            let Some(entering) = entering else {
                done = true;
                break;
            };

            let mut col = DMatrix::<f64>::zeros(n_rows, 1);
            for r in column_rows(&index_tuple(entering, &shape)) {
                col[(r, 0)] = 1.0;
            }
            let dir = lu
                .solve(&col)
                .ok_or_else(|| Error::InvalidInput("singular LP basis".into()))?;
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..n_rows {
                if dir[(i, 0)] > 1e-11 {
                    let ratio = x_b[(i, 0)].max(0.0) / dir[(i, 0)];
                    let tie = (ratio - best_ratio).abs() <= 1e-12 * (1.0 + best_ratio.abs());
                    if ratio < best_ratio - 1e-12 || (tie && basis[i] < basis[leave.unwrap()]) {
                        best_ratio = ratio;
                        leave = Some(i);
                    }
                }
            }
            let leave = leave.ok_or_else(|| {
                Error::InvalidInput("unbounded transport LP (inconsistent marginals)".into())
            })?;
            basis[leave] = entering;
        }
        if !done {
            return Err(Error::NoConvergence { iterations: 0, residual: f64::NAN });
        }

        if phase == 0 {
            // Drive remaining zero-level artificials out of the basis.
            let bm = basis_matrix(&basis);
            let x_b = bm
                .clone()
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::InvalidInput("singular LP basis".into()))?;
            let infeasibility: f64 = basis
                .iter()
                .zip(x_b.iter())
                .filter(|(&v, _)| v >= n_vars)
                .map(|(_, &x)| x.abs())
                .sum();
            if infeasibility > 1e-9 {
                return Err(Error::InvalidWeights(
                    "marginals admit no common coupling".into(),
                ));
            }
            for pos in 0..n_rows {
                if basis[pos] < n_vars {
                    continue;
                }
                let lu = basis_matrix(&basis).lu();
                let mut replaced = false;
                for var in 0..n_vars {
                    if basis.contains(&var) {
                        continue;
                    }
                    let mut col = DMatrix::<f64>::zeros(n_rows, 1);
                    for r in column_rows(&index_tuple(var, &shape)) {
                        col[(r, 0)] = 1.0;
                    }
                    let dir = lu
                        .solve(&col)
                        .ok_or_else(|| Error::InvalidInput("singular LP basis".into()))?;
                    if dir[(pos, 0)].abs() > 1e-9 {
                        basis[pos] = var;
                        replaced = true;
                        break;
                    }
                }
                if !replaced {
                    return Err(Error::InvalidInput(
                        "redundant constraint row survived phase one".into(),
                    ));
                }
            }
        }
    }

    let bm = basis_matrix(&basis);
    let lu = bm.clone().lu();
    let x_b = lu
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidInput("singular LP basis".into()))?;
    let c_b = DMatrix::<f64>::from_iterator(
        n_rows,
        1,
        basis.iter().map(|&v| if v < n_vars { cost[v] } else { 0.0 }),
    );
    let y = bm
        .transpose()
        .lu()
        .solve(&c_b)
        .ok_or_else(|| Error::InvalidInput("singular LP basis".into()))?;

    let mut entries: Vec<(Vec<usize>, f64)> = basis
        .iter()
        .zip(x_b.iter())
        .filter(|(&var, &x)| var < n_vars && x > 1e-14)
        .map(|(&var, &x)| (index_tuple(var, &shape), x))
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let value = kahan_sum(entries.iter().map(|(idx, w)| w * cost[tuple_index(idx, &shape)]));

    let mut duals = Vec::with_capacity(q_count);
    let mut pot0 = vec![0.0; shape[0]];
    for k in 0..shape[0] {
        pot0[k] = y[(k, 0)];
    }
    duals.push(pot0);
    for q in 1..q_count {
        let mut pot = vec![0.0; shape[q]];
        for k in 0..shape[q] - 1 {
            pot[k] = y[(row_offset[q] + k, 0)];
        }
        duals.push(pot);
    }

    Ok(DiscretePlan { shape, entries, value, duals: Some(duals) })
}

/// Brute-force transportation oracle: enumerate every vertex of the
/// transportation polytope (spanning-tree supports) and return the best.
/// Test oracle only; marginal sizes are capped at [`BRUTE_FORCE_CAPACITY`].
pub fn brute_force_transport(
    lambda0: &[f64],
    lambda1: &[f64],
    cost: &DMatrix<f64>,
) -> Result<DiscretePlan> {
    validate_cost(cost)?;
    let a = normalize_weights(lambda0)?;
    let b = normalize_weights(lambda1)?;
    let (nj, nk) = (a.len(), b.len());
    if nj > BRUTE_FORCE_CAPACITY || nk > BRUTE_FORCE_CAPACITY {
        return Err(Error::Capacity {
            size: nj.max(nk),
            limit: BRUTE_FORCE_CAPACITY,
            hint: "the vertex enumeration oracle targets test-size problems",
        });
    }
    if cost.nrows() != nj || cost.ncols() != nk {
        return Err(Error::InvalidInput(format!(
            "cost matrix is {}x{}, weights demand {}x{}",
            cost.nrows(),
            cost.ncols(),
            nj,
            nk
        )));
    }

    let n_edges = nj * nk;
    let tree_size = nj + nk - 1;
    let nodes = nj + nk;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut chosen = Vec::with_capacity(tree_size);
    let mut flows = vec![0.0; n_edges];

    // All edge subsets of size J+K-1, acyclicity checked by union-find.
    fn recurse(
        start: usize,
        chosen: &mut Vec<usize>,
        ctx: &mut dyn FnMut(&[usize]),
        n_edges: usize,
        tree_size: usize,
    ) {
        if chosen.len() == tree_size {
            ctx(chosen);
            return;
        }
        let needed = tree_size - chosen.len();
        for e in start..=(n_edges.saturating_sub(needed)) {
            chosen.push(e);
            recurse(e + 1, chosen, ctx, n_edges, tree_size);
            chosen.pop();
        }
    }

    let mut consider = |edges: &[usize]| {
        // acyclic with nodes-1 edges ⇒ spanning tree
        let mut parent: Vec<usize> = (0..nodes).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while parent[r] != r {
                r = parent[r];
            }
            let mut c = x;
            while parent[c] != r {
                let next = parent[c];
                parent[c] = r;
                c = next;
            }
            r
        }
        for &e in edges {
            let (j, k) = (e / nk, nj + e % nk);
            let (rj, rk) = (find(&mut parent, j), find(&mut parent, k));
            if rj == rk {
                return;
            }
            parent[rj] = rk;
        }

        // Unique flow on the tree by leaf elimination.
        let mut degree = vec![0usize; nodes];
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes];
        for &e in edges {
            let (j, k) = (e / nk, nj + e % nk);
            degree[j] += 1;
            degree[k] += 1;
            adj[j].push((k, e));
            adj[k].push((j, e));
        }
        let mut residual = vec![0.0; nodes];
        residual[..nj].copy_from_slice(&a);
        residual[nj..].copy_from_slice(&b);
        let mut removed_edge = vec![false; n_edges];
        let mut removed_node = vec![false; nodes];
        for f in flows.iter_mut() {
            *f = 0.0;
        }
        for _ in 0..nodes - 1 {
            let leaf = (0..nodes)
                .find(|&n| !removed_node[n] && degree[n] == 1)
                .expect("a tree always has a leaf");
            let &(other, e) = adj[leaf]
                .iter()
                .find(|&&(_, e)| !removed_edge[e])
                .expect("leaf has one live edge");
            let f = residual[leaf];
            if f < -1e-12 {
                return; // infeasible vertex
            }
            flows[e] = f.max(0.0);
            residual[leaf] = 0.0;
            residual[other] -= f;
            removed_edge[e] = true;
            removed_node[leaf] = true;
            degree[leaf] -= 1;
            degree[other] -= 1;
        }
        if residual.iter().any(|r| r.abs() > 1e-9) {
            return;
        }
        let value = kahan_sum(edges.iter().map(|&e| flows[e] * cost[(e / nk, e % nk)]));
        if best.as_ref().map_or(true, |(bv, _)| value < *bv) {
            best = Some((value, flows.clone()));
        }
    };
    recurse(0, &mut chosen, &mut consider, n_edges, tree_size);

    let (value, flows) = best.ok_or_else(|| {
        Error::InvalidInput("no feasible vertex found (inconsistent marginals)".into())
    })?;
    let mut entries: Vec<(Vec<usize>, f64)> = flows
        .iter()
        .enumerate()
        .filter(|(_, &f)| f > 0.0)
        .map(|(e, &f)| (vec![e / nk, e % nk], f))
        .collect();
    entries.sort_by(|x, y| x.0.cmp(&y.0));
    Ok(DiscretePlan { shape: vec![nj, nk], entries, value, duals: None })
}
