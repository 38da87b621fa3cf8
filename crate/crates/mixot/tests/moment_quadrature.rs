//! Quadrature and Monte-Carlo oracles for densities, moments and maps.
//!
//! Everything here checks closed-form parameters against independent numeric
//! integration of the density values; no moment formula is trusted on its
//! own word.

use mixot::atoms::{Atom, GeneratorProfile};
use mixot::grid::{rasterize, GridSpec};
use mixot::quad::integrate;
use mixot::spd::{affine_ot_map, SpdMatrix};
use mixot::mixture::PointDensity;
use mixot::symmetry::{SdAtom, SymmetrizedAtom, SymmetryGroup};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn density1(atom: &Atom, x: f64) -> f64 {
    atom.density(&DVector::from_row_slice(&[x])).unwrap()
}

fn families_1d() -> Vec<(&'static str, GeneratorProfile)> {
    vec![
        ("gaussian", GeneratorProfile::gaussian(1).unwrap()),
        ("slater", GeneratorProfile::slater(1).unwrap()),
        ("wigner", GeneratorProfile::wigner(1).unwrap()),
        ("gamma(3,9)", GeneratorProfile::gamma1d(3.0, 9.0).unwrap()),
        ("gamma(2,3)", GeneratorProfile::gamma1d(2.0, 3.0).unwrap()),
    ]
}

#[test]
fn densities_integrate_to_one_1d() {
    for (name, family) in families_1d() {
        let atom = Atom::new_1d(family, 0.7, 1.8).unwrap();
        let mass = integrate(|x| density1(&atom, x), -40.0, 40.0, 1e-9);
        assert!((mass - 1.0).abs() <= 1e-6, "{name}: mass {mass}");
    }
}

#[test]
fn moments_match_parameters_1d() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for (name, family) in families_1d() {
        let mean = rng.random_range(-2.0..2.0);
        let var = rng.random_range(0.4..2.0);
        let atom = Atom::new_1d(family, mean, var).unwrap();
        let m1 = integrate(|x| x * density1(&atom, x), -40.0, 40.0, 1e-9);
        let m2 = integrate(|x| (x - mean).powi(2) * density1(&atom, x), -40.0, 40.0, 1e-9);
        assert!((m1 - mean).abs() <= 1e-5, "{name}: mean {m1} vs {mean}");
        assert!((m2 - var).abs() <= 1e-5, "{name}: var {m2} vs {var}");
    }
}

#[test]
fn slater_2d_mass_by_iterated_quadrature() {
    let atom = Atom::new(
        GeneratorProfile::slater(2).unwrap(),
        DVector::from_row_slice(&[0.0, 0.0]),
        SpdMatrix::identity(2),
    )
    .unwrap();
    let inner = |x: f64| {
        integrate(
            |y| atom.density(&DVector::from_row_slice(&[x, y])).unwrap(),
            -20.0,
            20.0,
            1e-8,
        )
    };
    let mass = integrate(inner, -20.0, 20.0, 1e-8);
    assert!((mass - 1.0).abs() <= 1e-6, "mass {mass}");
}

#[test]
fn moments_match_parameters_2d_grid() {
    // 50 points per axis, tolerance 1e-3 on integrated mean and covariance
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for family in [
        GeneratorProfile::gaussian(2).unwrap(),
        GeneratorProfile::slater(2).unwrap(),
        GeneratorProfile::wigner(2).unwrap(),
    ] {
        let mean = DVector::from_row_slice(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
        let a = rng.random_range(0.6..1.4);
        let b = rng.random_range(0.6..1.4);
        let c = rng.random_range(-0.3..0.3);
        let scatter = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[a, c, c, b])).unwrap();
        let atom = Atom::new(family.clone(), mean.clone(), scatter.clone()).unwrap();

        let sigma = scatter.max_eigenvalue().sqrt();
        let lo0 = mean[0] - 8.0 * sigma;
        let hi0 = mean[0] + 8.0 * sigma;
        let lo1 = mean[1] - 8.0 * sigma;
        let hi1 = mean[1] + 8.0 * sigma;
        let spec = GridSpec::new_2d([(lo0, hi0), (lo1, hi1)], [50, 50]).unwrap();
        let grid = rasterize(
            |x| atom.density(&DVector::from_row_slice(x)).unwrap(),
            &spec,
        )
        .unwrap();

        let coords = spec.node_coords();
        let cv = spec.cell_volume();
        let mut m = [0.0f64; 2];
        let mut cov = [[0.0f64; 2]; 2];
        for (i, v) in grid.values().iter().enumerate() {
            let x = [coords[2 * i], coords[2 * i + 1]];
            m[0] += v * cv * x[0];
            m[1] += v * cv * x[1];
        }
        for (i, v) in grid.values().iter().enumerate() {
            let x = [coords[2 * i] - m[0], coords[2 * i + 1] - m[1]];
            for r in 0..2 {
                for s in 0..2 {
                    cov[r][s] += v * cv * x[r] * x[s];
                }
            }
        }
        assert!((m[0] - mean[0]).abs() <= 1e-3, "{family:?} mean0");
        assert!((m[1] - mean[1]).abs() <= 1e-3, "{family:?} mean1");
        for r in 0..2 {
            for s in 0..2 {
                assert!(
                    (cov[r][s] - scatter.matrix()[(r, s)]).abs() <= 1e-3,
                    "{family:?} cov[{r}][{s}]: {} vs {}",
                    cov[r][s],
                    scatter.matrix()[(r, s)]
                );
            }
        }
    }
}

#[test]
fn affine_map_pushes_moments_monte_carlo() {
    // 1e5 samples of N(m0, S0) pushed through the optimal map land within 5%
    // of the target moments
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let m0 = DVector::from_row_slice(&[1.0, -0.5]);
    let s0 = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.2, 0.4, 0.4, 0.8])).unwrap();
    let m1 = DVector::from_row_slice(&[-2.0, 1.5]);
    let s1 = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[0.7, -0.2, -0.2, 1.6])).unwrap();
    let (a, b) = affine_ot_map(&m0, &s0, &m1, &s1).unwrap();

    let root0 = s0.sqrt();
    let n = 100_000;
    let mut sum = DVector::<f64>::zeros(2);
    let mut outer = DMatrix::<f64>::zeros(2, 2);
    let mut pushed = Vec::with_capacity(n);
    for _ in 0..n {
        let z = DVector::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
        let x = &m0 + root0.matrix() * z;
        let y = a.matrix() * &x + &b;
        sum += &y;
        pushed.push(y);
    }
    let mean = sum / n as f64;
    for y in &pushed {
        let d = y - &mean;
        outer += &d * d.transpose();
    }
    let cov = outer / (n - 1) as f64;
    assert!((mean[0] - m1[0]).abs() <= 0.05 * (1.0 + m1[0].abs()));
    assert!((mean[1] - m1[1]).abs() <= 0.05 * (1.0 + m1[1].abs()));
    for r in 0..2 {
        for s in 0..2 {
            let want = s1.matrix()[(r, s)];
            assert!(
                (cov[(r, s)] - want).abs() <= 0.05 * (1.0 + want.abs()),
                "cov[{r}][{s}]: {} vs {}",
                cov[(r, s)],
                want
            );
        }
    }
}

#[test]
fn symmetrized_parity_density_integrates_to_one() {
    let group = SymmetryGroup::parity(1).unwrap();
    let atom = Atom::new_1d(GeneratorProfile::slater(1).unwrap(), 2.0, 0.8).unwrap();
    let sym = SymmetrizedAtom::new(atom, group).unwrap();
    let mass = integrate(
        |x| sym.density_at(&DVector::from_row_slice(&[x])).unwrap(),
        -40.0,
        40.0,
        1e-9,
    );
    assert!((mass - 1.0).abs() <= 1e-6, "mass {mass}");
}

#[test]
fn so2_density_is_rotation_invariant_with_unit_mass() {
    let atom = Atom::new(
        GeneratorProfile::gaussian(2).unwrap(),
        DVector::from_row_slice(&[1.5, 0.0]),
        SpdMatrix::from_diagonal(&[0.5, 1.0]).unwrap(),
    )
    .unwrap();
    let sym = SymmetrizedAtom::new(atom, SymmetryGroup::so2()).unwrap();
    // rotation invariance at sample points
    let p = DVector::from_row_slice(&[1.2, 0.4]);
    let angle: f64 = 0.9;
    let q = DVector::from_row_slice(&[
        angle.cos() * p[0] - angle.sin() * p[1],
        angle.sin() * p[0] + angle.cos() * p[1],
    ]);
    let dp = sym.density_at(&p).unwrap();
    let dq = sym.density_at(&q).unwrap();
    assert!((dp - dq).abs() <= 1e-10 * (1.0 + dp));
    // unit mass in polar coordinates: ∫ ρ(r) 2πr dr
    let radial = |r: f64| sym.density_at(&DVector::from_row_slice(&[r, 0.0])).unwrap();
    let mass = integrate(
        |r| 2.0 * std::f64::consts::PI * r * radial(r),
        0.0,
        12.0,
        1e-8,
    );
    assert!((mass - 1.0).abs() <= 1e-5, "mass {mass}");
}

#[test]
fn sd_density_normalized_by_iterated_quadrature() {
    // n=2, d=1 with distinct orbitals; quadrature over [-10,10]²
    let atom = SdAtom::new(
        vec![DVector::from_row_slice(&[0.0]), DVector::from_row_slice(&[4.0])],
        vec![SpdMatrix::scalar(1.0).unwrap(), SpdMatrix::scalar(1.0).unwrap()],
    )
    .unwrap();
    let inner = |x: f64| {
        integrate(
            |y| atom.density(&DVector::from_row_slice(&[x, y])).unwrap(),
            -10.0,
            10.0,
            1e-8,
        )
    };
    let mass = integrate(inner, -10.0, 10.0, 1e-8);
    assert!((mass - 1.0).abs() <= 1e-5, "mass {mass}");
}
