#![allow(dead_code)]

use std::f64::consts::TAU;

use msa_core::channel::{PathComponent, TerminalArray, DEFAULT_CARRIER_HZ, SPEED_OF_LIGHT};
use msa_core::geometry::{ArrayGeometry, Direction, DirectionGrid};
use msa_core::mixer::DiodeModel;
use msa_core::reflection::ElementPattern;
use msa_core::seeds::rng_for;
use msa_core::simulator::{ModemSettings, Scenario};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use statrs::function::erf::erfc;

pub fn random_direction(rng: &mut impl Rng) -> Direction {
    Direction::new(rng.random_range(0.0..0.45 * std::f64::consts::PI), rng.random_range(0.0..TAU)).unwrap()
}

/// Half-wavelength `rows x cols` surface with a few random paths on each side.
pub fn scenario(rows: usize, cols: usize, n_tx: usize, n_rx: usize, seed: u64) -> Scenario {
    let lambda = SPEED_OF_LIGHT / DEFAULT_CARRIER_HZ;
    let grid = DirectionGrid::hemisphere(8, 16).unwrap();
    let mut rng = rng_for(seed, &[99]);
    let paths = |count: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<PathComponent> {
        (0..count)
            .map(|_| {
                let g = Complex64::from_polar(rng.random_range(0.3..1.0), rng.random_range(0.0..TAU));
                let delay = rng.random_range(0.0..50e-9);
                PathComponent::new(g, delay, random_direction(rng), random_direction(rng)).unwrap()
            })
            .collect()
    };
    let tx_paths = paths(3, &mut rng);
    let rx_paths = paths(3, &mut rng);
    let beam = DVector::from_element(n_tx, Complex64::new(1.0 / (n_tx as f64).sqrt(), 0.0));
    Scenario {
        geometry: ArrayGeometry::new(rows, cols, lambda / 2.0, lambda).unwrap(),
        pattern: ElementPattern::cosine(&grid, 1.0).unwrap(),
        grid,
        carrier_hz: DEFAULT_CARRIER_HZ,
        tx: TerminalArray::ula(n_tx, lambda / 2.0, lambda).unwrap(),
        rx: TerminalArray::ula(n_rx, lambda / 2.0, lambda).unwrap(),
        tx_paths,
        rx_paths,
        tx_beam: beam,
        carrier_envelope: Complex64::new(1.0, 0.0),
        modem: ModemSettings::default(),
        diode: DiodeModel::default(),
        sigma2: 0.0,
        seed,
    }
}

/// Probes spread over the visible hemisphere.
pub fn probe_directions(count: usize) -> Vec<Direction> {
    (0..count)
        .map(|i| Direction::new(0.15 + 1.1 * i as f64 / count as f64, (i as f64 * 2.4) % TAU).unwrap())
        .collect()
}

pub fn random_phases(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(0.0..TAU)).collect()
}

/// Exact bit error probability of Gray-coded square M-QAM in AWGN at the
/// given symbol SNR `Es/N0`.
pub fn gray_qam_ber(order: usize, es_n0: f64) -> f64 {
    let sqrt_m = (order as f64).sqrt();
    let levels = sqrt_m as usize;
    let bits_per_dim = (levels as f64).log2().round() as u32;
    let scale = (3.0 * es_n0 / (2.0 * (order as f64 - 1.0))).sqrt();
    let mut total = 0.0;
    for k in 1..=bits_per_dim {
        let w = 2f64.powi(k as i32 - 1);
        let upper = ((1.0 - 2f64.powi(-(k as i32))) * sqrt_m) as usize;
        let mut pk = 0.0;
        for i in 0..upper {
            let x = i as f64 * w / sqrt_m;
            let sign = if (x.floor() as i64) % 2 == 0 { 1.0 } else { -1.0 };
            pk += sign * (w - (x + 0.5).floor()) * erfc((2.0 * i as f64 + 1.0) * scale);
        }
        total += pk / sqrt_m;
    }
    total / bits_per_dim as f64
}

/// Central finite difference of `f` along the complex direction `dir` at `x`.
pub fn directional_derivative(
    f: impl Fn(&DVector<Complex64>) -> f64,
    x: &DVector<Complex64>,
    dir: &DVector<Complex64>,
    h: f64,
) -> f64 {
    let plus = x + dir * Complex64::new(h, 0.0);
    let minus = x - dir * Complex64::new(h, 0.0);
    (f(&plus) - f(&minus)) / (2.0 * h)
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}
