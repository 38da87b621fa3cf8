//! Cross-checks between the grid Sinkhorn oracle and the closed forms.

use mixot::atoms::{Atom, GeneratorProfile};
use mixot::grid::{
    auto_bounds, entropic_bias_bound, plan_region_mass, rasterize, sinkhorn_w2_squared,
    GridSpec, SinkhornOptions,
};
use mixot::mixture::Mixture;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid_of(mix: &Mixture<Atom>, points: usize) -> (GridSpec, mixot::grid::GridDensity) {
    let bounds = auto_bounds(&mix.extent_hints(), 5.0).unwrap();
    let spec = GridSpec::new(&bounds, &[points]).unwrap();
    let density = rasterize(
        |x| mix.density_at(&DVector::from_row_slice(x)).unwrap(),
        &spec,
    )
    .unwrap();
    (spec, density)
}

fn shared_grid(
    a: &Mixture<Atom>,
    b: &Mixture<Atom>,
    points: usize,
) -> (mixot::grid::GridDensity, mixot::grid::GridDensity) {
    let mut hints = a.extent_hints();
    hints.extend(b.extent_hints());
    let bounds = auto_bounds(&hints, 5.0).unwrap();
    let spec = GridSpec::new(&bounds, &[points]).unwrap();
    let da = rasterize(|x| a.density_at(&DVector::from_row_slice(x)).unwrap(), &spec).unwrap();
    let db = rasterize(|x| b.density_at(&DVector::from_row_slice(x)).unwrap(), &spec).unwrap();
    (da, db)
}

#[test]
fn gamma_atoms_match_closed_form_within_two_percent() {
    let family = GeneratorProfile::gamma1d(3.0, 9.0).unwrap();
    let a = Atom::new_1d(family.clone(), -1.2, 0.8).unwrap();
    let b = Atom::new_1d(family, 1.6, 1.7).unwrap();
    let closed = a.w2(&b).unwrap().powi(2);
    let ma = Mixture::single(a).unwrap();
    let mb = Mixture::single(b).unwrap();
    let (da, db) = shared_grid(&ma, &mb, 200);
    let s = sinkhorn_w2_squared(&da, &db, &SinkhornOptions::default()).unwrap();
    let rel = (s.cost - closed).abs() / closed;
    assert!(rel <= 0.02, "relative gap {rel} (grid {} vs closed {closed})", s.cost);
}

#[test]
fn sinkhorn_reports_converged_marginals() {
    let family = GeneratorProfile::gaussian(1).unwrap();
    let ma = Mixture::single(Atom::new_1d(family.clone(), -1.0, 1.0).unwrap()).unwrap();
    let mb = Mixture::single(Atom::new_1d(family, 1.5, 0.7).unwrap()).unwrap();
    let (da, db) = shared_grid(&ma, &mb, 200);
    let s = sinkhorn_w2_squared(&da, &db, &SinkhornOptions::default()).unwrap();
    assert!(s.converged, "violation {}", s.marginal_violation);
    assert!(s.marginal_violation <= 1e-8);
    assert!(s.iterations <= 10_000);
}

#[test]
fn oracle_sandwich_on_two_component_mixtures() {
    // the continuous problem relaxes the mixture-restricted one, so up to
    // discretization and entropic bias the grid value sits below δ²
    let mut rng = ChaCha8Rng::seed_from_u64(211);
    let family = GeneratorProfile::slater(1).unwrap();
    for trial in 0..3 {
        let mk = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
            let w = rng.random_range(0.3..0.7);
            Mixture::new(
                vec![w, 1.0 - w],
                vec![
                    Atom::new_1d(family.clone(), rng.random_range(lo..lo + 1.0), rng.random_range(0.5..1.5))
                        .unwrap(),
                    Atom::new_1d(family.clone(), rng.random_range(hi - 1.0..hi), rng.random_range(0.5..1.5))
                        .unwrap(),
                ],
            )
            .unwrap()
        };
        let a = mk(&mut rng, -3.0, 0.5);
        let b = mk(&mut rng, 0.5, 4.0);
        let (delta, _) = a.distance(&b, 2.0).unwrap();
        let (da, db) = shared_grid(&a, &b, 200);
        let s = sinkhorn_w2_squared(&da, &db, &SinkhornOptions::default()).unwrap();
        let bias = entropic_bias_bound(s.epsilon, da.spec().node_count());
        assert!(
            s.cost <= delta * delta * 1.02 + bias,
            "trial {trial}: grid {} vs δ² {} (bias {bias})",
            s.cost,
            delta * delta
        );
    }
}

#[test]
fn plan_concentrates_on_monotone_map_graph() {
    // single 1D atoms: the optimal map is the monotone rearrangement
    // T(x) = m1 + (σ1/σ0)(x - m0); at least 99% of the plan mass lies
    // within a 5-cell band of its graph
    let family = GeneratorProfile::gaussian(1).unwrap();
    let (m0, v0) = (0.0, 1.0);
    let (m1, v1) = (2.0, 2.25);
    let ma = Mixture::single(Atom::new_1d(family.clone(), m0, v0).unwrap()).unwrap();
    let mb = Mixture::single(Atom::new_1d(family, m1, v1).unwrap()).unwrap();
    let (da, db) = shared_grid(&ma, &mb, 200);
    let step = da.spec().axes()[0].step();
    let slope = (v1 / v0).sqrt();
    let band = plan_region_mass(&da, &db, &SinkhornOptions::default(), |x, y| {
        let t = m1 + slope * (x[0] - m0);
        (y[0] - t).abs() <= 5.0 * step
    })
    .unwrap();
    assert!(band >= 0.99, "band mass {band}");
}

#[test]
fn cross_region_mass_vanishes_for_parity_symmetric_self_transport() {
    // a parity-symmetric mixture transported to itself keeps its plan out of
    // the mixed-sign quadrants up to entropic leakage
    let family = GeneratorProfile::slater(1).unwrap();
    let sym_mix = Mixture::new(
        vec![0.5, 0.5],
        vec![
            Atom::new_1d(family.clone(), 2.5, 0.5).unwrap(),
            Atom::new_1d(family, -2.5, 0.5).unwrap(),
        ],
    )
    .unwrap();
    let bounds = vec![(-8.0, 8.0)];
    let spec = GridSpec::new(&bounds, &[200]).unwrap();
    let d = rasterize(
        |x| sym_mix.density_at(&DVector::from_row_slice(x)).unwrap(),
        &spec,
    )
    .unwrap();
    let total = plan_region_mass(&d, &d, &SinkhornOptions::default(), |_, _| true).unwrap();
    assert!((total - 1.0).abs() <= 1e-8);
    let cross = plan_region_mass(&d, &d, &SinkhornOptions::default(), |x, y| {
        (x[0] < 0.0 && y[0] > 0.0) || (x[0] > 0.0 && y[0] < 0.0)
    })
    .unwrap();
    assert!(cross <= 1e-3, "cross-region mass {cross}");
}

#[test]
fn auto_bounds_cover_five_sigma() {
    let family = GeneratorProfile::gaussian(1).unwrap();
    let mix = Mixture::new(
        vec![0.5, 0.5],
        vec![
            Atom::new_1d(family.clone(), -2.0, 4.0).unwrap(),
            Atom::new_1d(family, 3.0, 1.0).unwrap(),
        ],
    )
    .unwrap();
    let (_, density) = grid_of(&mix, 200);
    // truncated mass loss below 1e-6 keeps normalization honest
    assert!((density.mass() - 1.0).abs() <= 1e-12);
    let bounds = auto_bounds(&mix.extent_hints(), 5.0).unwrap();
    assert!(bounds[0].0 <= -2.0 - 5.0 * 2.0 + 1e-12);
    assert!(bounds[0].1 >= 3.0 + 5.0 * 1.0 - 1e-12);
}
