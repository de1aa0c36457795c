mod common;

use msa_core::geometry::{
    phase_difference_matrix, steering_vector, transform_matrix, ArrayGeometry, Direction, DirectionGrid,
};
use msa_core::reflection::{array_scatter, beampattern, ElementPattern, SurfaceConfig};
use msa_core::seeds::rng_for;
use msa_core::channel::complex_gaussian;
use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn small_surface(rows: usize, cols: usize) -> (ArrayGeometry, DirectionGrid) {
    (ArrayGeometry::new(rows, cols, 0.5, 1.0).unwrap(), DirectionGrid::hemisphere(6, 12).unwrap())
}

fn random_field(m: usize, seed: u64) -> DVector<Complex64> {
    let mut rng = rng_for(seed, &[]);
    DVector::from_iterator(m, (0..m).map(|_| complex_gaussian(&mut rng, 1.0)))
}

#[test]
fn phase_matrix_has_unit_entries_and_matches_steering_vectors() {
    let (geom, grid) = small_surface(3, 5);
    let u = phase_difference_matrix(&geom, &grid);
    assert!(u.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    let positions = geom.positions();
    for (m, d) in grid.directions().iter().enumerate() {
        let a = steering_vector(&positions, d);
        assert!((u.column(m) - a).norm() < 1e-12);
    }
}

#[test]
fn unit_pattern_gives_identity_transform_and_nulls_zero_columns() {
    let (geom, grid) = small_surface(2, 3);
    let u = phase_difference_matrix(&geom, &grid);
    let ones = ElementPattern::isotropic(grid.len());
    assert_eq!(transform_matrix(&u, &ones).unwrap(), u);
    let mut values = vec![Complex64::new(1.0, 0.0); grid.len()];
    values[4] = Complex64::new(0.0, 0.0);
    let w = transform_matrix(&u, &ElementPattern::new(values).unwrap()).unwrap();
    assert!(w.column(4).iter().all(|z| *z == Complex64::new(0.0, 0.0)));
}

#[test]
fn uniform_magnitudes_decouple_time_from_direction() {
    let (geom, grid) = small_surface(4, 4);
    let w = transform_matrix(&phase_difference_matrix(&geom, &grid), &ElementPattern::cosine(&grid, 1.0).unwrap())
        .unwrap();
    let mut rng = rng_for(9, &[]);
    let series: Vec<f64> = (0..50).map(|_| rng.random_range(0.05..1.0)).collect();
    let cfg = SurfaceConfig::uniform(series, common::random_phases(16, &mut rng)).unwrap();
    let out = array_scatter(&w, &cfg, &[random_field(grid.len(), 2)]).unwrap();
    let g = &out[0];
    let a0 = cfg.magnitudes()[0][0];
    for (t, e) in out.iter().enumerate() {
        let scale = cfg.magnitudes()[0][t] / a0;
        for m in 0..grid.len() {
            if g[m].norm() > 1e-9 * g.norm() {
                assert!((e[m] / g[m] - scale).norm() < 1e-10);
            }
        }
    }
}

#[test]
fn beam_direction_is_unchanged_by_uniform_scaling() {
    let (geom, grid) = small_surface(4, 4);
    let w = transform_matrix(&phase_difference_matrix(&geom, &grid), &ElementPattern::cosine(&grid, 1.0).unwrap())
        .unwrap();
    let mut rng = rng_for(4, &[]);
    let phases = common::random_phases(16, &mut rng);
    let incident = random_field(grid.len(), 5);
    let pattern = beampattern(&w, &phases, &incident).unwrap();
    let argmax = |p: &[f64]| p.iter().enumerate().fold((0, f64::MIN), |b, (i, &x)| if x > b.1 { (i, x) } else { b }).0;
    for scale in [0.1, 0.5, 0.9] {
        let cfg = SurfaceConfig::uniform(vec![scale], phases.clone()).unwrap();
        let out = array_scatter(&w, &cfg, &[incident.clone()]).unwrap();
        let scaled: Vec<f64> = out[0].iter().map(|z| z.norm_sqr()).collect();
        assert_eq!(argmax(&scaled), argmax(&pattern));
    }
}

#[test]
fn beampattern_matches_direct_sum() {
    let (geom, grid) = small_surface(2, 2);
    let u = phase_difference_matrix(&geom, &grid);
    let w = transform_matrix(&u, &ElementPattern::cosine(&grid, 1.0).unwrap()).unwrap();
    let mut rng = rng_for(6, &[]);
    let phases = common::random_phases(4, &mut rng);
    let incident = random_field(grid.len(), 7);
    let p = beampattern(&w, &phases, &incident).unwrap();
    for (mo, value) in p.iter().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (mi, e) in incident.iter().enumerate() {
            for k in 0..4 {
                acc += w[(k, mo)].conj() * Complex64::from_polar(1.0, phases[k]) * w[(k, mi)] * e;
            }
        }
        assert!((acc.norm_sqr() - value).abs() < 1e-9 * (1.0 + value));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unit_vectors_have_unit_norm(theta in 0.0f64..1.5707, phi in 0.0f64..6.2831) {
        let u = Direction::new(theta, phi).unwrap().unit_vector();
        prop_assert!(((u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transform_is_linear_in_the_pattern(seed in 0u64..1000) {
        let (geom, grid) = small_surface(2, 3);
        let u = phase_difference_matrix(&geom, &grid);
        let mut rng = rng_for(seed, &[3]);
        let mut bounded = || DVector::from_iterator(grid.len(), (0..grid.len()).map(|_| Complex64::from_polar(rng.random_range(0.0..0.5), rng.random_range(0.0..6.28))));
        let f1 = bounded();
        let f2 = bounded();
        let w = |f: &DVector<Complex64>| transform_matrix(&u, &ElementPattern::new(f.iter().copied().collect()).unwrap()).unwrap();
        prop_assert!((w(&(&f1 + &f2)) - w(&f1) - w(&f2)).norm() < 1e-10);
    }

    #[test]
    fn scatter_is_linear_in_field_and_magnitudes(seed in 0u64..1000, a in 0.0f64..0.5) {
        let (geom, grid) = small_surface(2, 2);
        let w = transform_matrix(&phase_difference_matrix(&geom, &grid), &ElementPattern::isotropic(grid.len())).unwrap();
        let mut rng = rng_for(seed, &[1]);
        let phases = common::random_phases(4, &mut rng);
        let mags: Vec<Vec<f64>> = (0..4).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
        let half: Vec<Vec<f64>> = mags.iter().map(|m| vec![m[0] * a]).collect();
        let e1 = random_field(grid.len(), seed);
        let e2 = random_field(grid.len(), seed + 7);
        let cfg = SurfaceConfig::new(mags, phases.clone()).unwrap();
        let cfg_a = SurfaceConfig::new(half, phases).unwrap();
        let y = |c: &SurfaceConfig, e: &DVector<Complex64>| array_scatter(&w, c, &[e.clone()]).unwrap().remove(0);
        prop_assert!((y(&cfg, &(&e1 + &e2)) - y(&cfg, &e1) - y(&cfg, &e2)).norm() < 1e-9);
        prop_assert!((y(&cfg_a, &e1) - y(&cfg, &e1) * Complex64::new(a, 0.0)).norm() < 1e-9);
    }
}
