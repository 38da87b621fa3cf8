//! Small numeric helpers shared across modules.

use crate::error::{Error, Result};

/// Tolerance for accepting a weight vector as a point of the simplex.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Validate a weight vector (nonnegative, sums to 1 within [`WEIGHT_SUM_TOL`])
/// and renormalize it exactly before use.
pub fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::InvalidWeights("empty weight vector".into()));
    }
    for &w in weights {
        if !w.is_finite() || w < -1e-12 {
            return Err(Error::InvalidWeights(format!("entry {w} is negative or not finite")));
        }
    }
    let sum = kahan_sum(weights.iter().copied());
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidWeights(format!(
            "weights sum to {sum}, expected 1 within {WEIGHT_SUM_TOL:e}"
        )));
    }
    Ok(weights.iter().map(|&w| (w / sum).max(0.0)).collect())
}

/// Compensated summation; keeps mass bookkeeping at machine precision even
/// for grids with thousands of cells.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Total lexicographic order on finite float keys.
pub fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(ord) => return ord,
        }
    }
    a.len().cmp(&b.len())
}
