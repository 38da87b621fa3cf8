//! Adaptive one-dimensional quadrature.
//!
//! Used for the radial moment condition of elliptical generators and as a
//! fallback for normalization constants; integration tests also lean on it
//! as an independent oracle for densities and moments.

/// Adaptive Simpson integration of `f` over `[a, b]` to relative tolerance
/// `rel_tol` (with an absolute floor for integrals near zero).
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // Coarse estimate over a few panels to set the absolute tolerance scale.
    let panels = 16;
    let h = (b - a) / panels as f64;
    let mut coarse = 0.0;
    for i in 0..panels {
        let lo = a + i as f64 * h;
        coarse += simpson(&f, lo, lo + h);
    }
    let abs_tol = (coarse.abs() * rel_tol).max(1e-300);
    let mut total = 0.0;
    for i in 0..panels {
        let lo = a + i as f64 * h;
        let hi = lo + h;
        let whole = simpson(&f, lo, hi);
        total += adaptive(&f, lo, hi, whole, abs_tol / panels as f64, 60);
    }
    total
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
}

fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = simpson(f, a, m);
    let right = simpson(f, m, b);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, left, 0.5 * tol, depth - 1) + adaptive(f, m, b, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomial_exactly() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-12);
        assert!((v - 9.0).abs() < 1e-12);
    }

    #[test]
    fn integrates_gaussian_tail() {
        // ∫_0^20 e^{-x²/2} dx = √(π/2)
        let v = integrate(|x| (-0.5 * x * x).exp(), 0.0, 20.0, 1e-12);
        assert!((v - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-11);
    }

    #[test]
    fn handles_sqrt_endpoint() {
        // ∫_0^1 √(1-x) dx = 2/3, integrand has an unbounded derivative at 1.
        let v = integrate(|x| (1.0 - x).max(0.0).sqrt(), 0.0, 1.0, 1e-10);
        assert!((v - 2.0 / 3.0).abs() < 1e-9);
    }
}
