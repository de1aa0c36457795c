mod common;

use msa_core::channel::{
    add_noise, channel_surface_to_rx, channel_tx_to_surface, effective_channels, rayleigh_matrix, selection_vector,
    PathComponent, TerminalArray,
};
use msa_core::geometry::{phase_difference_matrix, transform_matrix, ArrayGeometry, Direction, DirectionGrid};
use msa_core::reflection::ElementPattern;
use msa_core::seeds::rng_for;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

const FC: f64 = 5.8e9;

fn grid() -> DirectionGrid {
    DirectionGrid::hemisphere(8, 16).unwrap()
}

fn random_path(rng: &mut impl Rng) -> PathComponent {
    PathComponent::new(
        Complex64::from_polar(rng.random_range(0.1..1.0), rng.random_range(0.0..6.28)),
        rng.random_range(0.0..1e-7),
        common::random_direction(rng),
        common::random_direction(rng),
    )
    .unwrap()
}

#[test]
fn channels_add_over_paths() {
    let g = grid();
    let rx = TerminalArray::ula(3, 0.5, 1.0).unwrap();
    let mut rng = rng_for(1, &[]);
    let paths: Vec<PathComponent> = (0..5).map(|_| random_path(&mut rng)).collect();
    let total = channel_surface_to_rx(&paths, &rx, &g, FC);
    let parts = paths
        .iter()
        .map(|p| channel_surface_to_rx(std::slice::from_ref(p), &rx, &g, FC))
        .fold(DMatrix::zeros(3, g.len()), |a, b| a + b);
    assert!((total - parts).norm() < 1e-12);

    let tx = TerminalArray::ula(2, 0.5, 1.0).unwrap();
    let total = channel_tx_to_surface(&paths, &tx, &g, FC);
    let parts = paths
        .iter()
        .map(|p| channel_tx_to_surface(std::slice::from_ref(p), &tx, &g, FC))
        .fold(DMatrix::zeros(g.len(), 2), |a, b| a + b);
    assert!((total - parts).norm() < 1e-12);
}

#[test]
fn single_path_cascade_is_rank_one() {
    let g = grid();
    let geom = ArrayGeometry::new(3, 3, 0.5, 1.0).unwrap();
    let w = transform_matrix(&phase_difference_matrix(&geom, &g), &ElementPattern::cosine(&g, 1.0).unwrap()).unwrap();
    let tx = TerminalArray::ula(2, 0.5, 1.0).unwrap();
    let rx = TerminalArray::ula(2, 0.5, 1.0).unwrap();
    let d_in = *g.get(20).unwrap();
    let d_out = *g.get(70).unwrap();
    let p_in = PathComponent::new(Complex64::new(0.7, 0.2), 3e-9, d_in, Direction::new(0.3, 1.0).unwrap()).unwrap();
    let p_out = PathComponent::new(Complex64::new(-0.4, 0.5), 7e-9, d_out, Direction::new(0.6, 2.0).unwrap()).unwrap();
    let h_tx = channel_tx_to_surface(std::slice::from_ref(&p_in), &tx, &g, FC);
    let h_rx = channel_surface_to_rx(std::slice::from_ref(&p_out), &rx, &g, FC);
    let beam = DVector::from_element(2, Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
    let ch = effective_channels(&w, &h_tx, &h_rx, &beam).unwrap();
    let mut rng = rng_for(2, &[]);
    let phi = DVector::from_iterator(9, common::random_phases(9, &mut rng).into_iter().map(|a| Complex64::from_polar(1.0, a)));
    let cascade = &ch.h_o * DMatrix::from_diagonal(&phi) * &ch.h_i;
    let sv = cascade.clone().svd(false, false).singular_values;
    assert!(sv[1] < 1e-12 * sv[0]);

    let pattern = ElementPattern::cosine(&g, 1.0).unwrap();
    let (f_in, f_out) = (pattern.values()[20], pattern.values()[70]);
    let u = phase_difference_matrix(&geom, &g);
    let a_in = u.column(20);
    let a_out = u.column(70);
    let inner: Complex64 = (0..9).map(|k| a_out[k].conj() * phi[k] * a_in[k]).sum();
    let a_r = rx.response(&p_out.at_terminal);
    let a_t = tx.response(&p_in.at_terminal);
    let scalar = f_out.conj() * f_in * p_in.phasor(FC) * p_out.phasor(FC) * inner;
    let closed = a_r * a_t.transpose() * scalar;
    assert!((cascade - closed).norm() < 1e-10);
}

#[test]
fn effective_channels_are_linear() {
    let g = grid();
    let geom = ArrayGeometry::new(2, 2, 0.5, 1.0).unwrap();
    let w = transform_matrix(&phase_difference_matrix(&geom, &g), &ElementPattern::isotropic(g.len())).unwrap();
    let mut rng = rng_for(5, &[]);
    let a = rayleigh_matrix(g.len(), 2, 1.0, &mut rng);
    let b = rayleigh_matrix(g.len(), 2, 1.0, &mut rng);
    let r = rayleigh_matrix(1, g.len(), 1.0, &mut rng);
    let beam = DVector::from_element(2, Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
    let sum = effective_channels(&w, &(&a + &b), &r, &beam).unwrap();
    let ea = effective_channels(&w, &a, &r, &beam).unwrap();
    let eb = effective_channels(&w, &b, &r, &beam).unwrap();
    assert!((sum.h_i - ea.h_i - eb.h_i).norm() < 1e-10);
    assert!((sum.h_eff - ea.h_eff - eb.h_eff).norm() < 1e-10);
}

#[test]
fn first_basis_beam_selects_first_column() {
    let g = grid();
    let geom = ArrayGeometry::new(2, 2, 0.5, 1.0).unwrap();
    let w = transform_matrix(&phase_difference_matrix(&geom, &g), &ElementPattern::isotropic(g.len())).unwrap();
    let mut rng = rng_for(6, &[]);
    let h_tx = rayleigh_matrix(g.len(), 3, 1.0, &mut rng);
    let h_rx = rayleigh_matrix(1, g.len(), 1.0, &mut rng);
    let mut e1 = DVector::zeros(3);
    e1[0] = Complex64::new(1.0, 0.0);
    let ch = effective_channels(&w, &h_tx, &h_rx, &e1).unwrap();
    assert_eq!(ch.h_eff, ch.h_i.column(0).into_owned());
}

#[test]
fn noise_is_reproducible() {
    let y = vec![DVector::from_element(2, Complex64::new(1.0, -1.0)); 10];
    assert_eq!(add_noise(&y, 0.0, 3).unwrap(), y);
    assert_eq!(add_noise(&y, 0.5, 3).unwrap(), add_noise(&y, 0.5, 3).unwrap());
    assert_ne!(add_noise(&y, 0.5, 3).unwrap(), add_noise(&y, 0.5, 4).unwrap());
    assert!(add_noise(&y, -1.0, 3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selection_kernel_has_unit_sum(theta in 0.0f64..1.5707, phi in 0.0f64..6.2831) {
        let g = grid();
        let v = selection_vector(&g, &Direction::new(theta, phi).unwrap());
        prop_assert!((v.sum() - 1.0).abs() < 1e-12);
        let (nearest, _) = g.nearest(&Direction::new(theta, phi).unwrap());
        prop_assert!(v[nearest] > 0.0);
    }
}
