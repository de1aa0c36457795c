//! Multipath channels on both sides of the surface and receiver noise.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{steering_vector, Direction, DirectionGrid, GridLayout};

/// Default carrier, Hz.
pub const DEFAULT_CARRIER_HZ: f64 = 5.8e9;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Half-width, in grid cells, of the angular selection kernel.
const KERNEL_SUPPORT: i64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathComponent {
    pub gain: Complex64,
    pub delay_s: f64,
    pub at_surface: Direction,
    pub at_terminal: Direction,
}

impl PathComponent {
    pub fn new(gain: Complex64, delay_s: f64, at_surface: Direction, at_terminal: Direction) -> Result<Self> {
        if !(gain.re.is_finite() && gain.im.is_finite()) {
            return Err(Error::param("path.gain", "must be finite"));
        }
        if !(delay_s >= 0.0 && delay_s.is_finite()) {
            return Err(Error::param("path.delay_s", "must be finite and >= 0"));
        }
        Ok(Self {
            gain,
            delay_s,
            at_surface,
            at_terminal,
        })
    }

    /// `gain * exp(-j 2 pi f_c delay)`.
    pub fn phasor(&self, carrier_hz: f64) -> Complex64 {
        self.gain * Complex64::from_polar(1.0, -TAU * carrier_hz * self.delay_s)
    }
}

/// Antenna array of a base station, described by electrical positions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminalArray {
    positions: Vec<[f64; 3]>,
}

impl TerminalArray {
    pub fn new(positions: Vec<[f64; 3]>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::param("terminal", "at least one antenna required"));
        }
        Ok(Self { positions })
    }

    /// Uniform linear array along x with the first antenna at the origin.
    pub fn ula(count: usize, spacing_m: f64, wavelength_m: f64) -> Result<Self> {
        if !(spacing_m >= 0.0 && wavelength_m > 0.0) {
            return Err(Error::param("terminal.spacing_m", "must be >= 0"));
        }
        let scale = TAU * spacing_m / wavelength_m;
        Self::new((0..count).map(|n| [scale * n as f64, 0.0, 0.0]).collect())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn response(&self, dir: &Direction) -> DVector<Complex64> {
        steering_vector(&self.positions, dir)
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Interpolating periodic kernel on `n` equispaced points; `x` in cells.
fn periodic_dirichlet(x: f64, n: usize) -> f64 {
    let delta = TAU * x / n as f64;
    let half = delta / 2.0;
    if half.sin().abs() < 1e-12 {
        // at a multiple of the period
        return 1.0;
    }
    let num = (n as f64 * half).sin();
    if n % 2 == 1 {
        num / (n as f64 * half.sin())
    } else {
        num / (n as f64 * half.tan())
    }
}

fn axis_weights(x: f64, n: usize, periodic: bool) -> Vec<(usize, f64)> {
    let centre = x.round();
    if (x - centre).abs() < 1e-9 {
        let idx = if periodic {
            (centre as i64).rem_euclid(n as i64) as usize
        } else {
            (centre.max(0.0) as usize).min(n - 1)
        };
        return vec![(idx, 1.0)];
    }
    let c = centre as i64;
    if periodic {
        if (2 * KERNEL_SUPPORT + 1) as usize >= n {
            return (0..n).map(|j| (j, periodic_dirichlet(x - j as f64, n))).collect();
        }
        (c - KERNEL_SUPPORT..=c + KERNEL_SUPPORT)
            .map(|j| ((j.rem_euclid(n as i64)) as usize, periodic_dirichlet(x - j as f64, n)))
            .collect()
    } else {
        (c - KERNEL_SUPPORT..=c + KERNEL_SUPPORT)
            .filter(|i| (0..n as i64).contains(i))
            .map(|i| (i as usize, sinc(x - i as f64)))
            .collect()
    }
}

/// Angular selection vector `v(dir)` on `grid`, normalized to unit sum.
///
/// On a hemisphere grid this is a separable sinc (in `cos theta`) times
/// periodic Dirichlet (in azimuth) kernel truncated to a few cells; an
/// on-grid direction yields a one-hot vector. Custom grids snap to the
/// nearest direction and warn when the direction is off-grid.
pub fn selection_vector(grid: &DirectionGrid, dir: &Direction) -> DVector<f64> {
    let mut v = DVector::zeros(grid.len());
    match grid.layout() {
        GridLayout::Hemisphere { n_cos, n_phi } => {
            let x_ring = (1.0 - dir.theta().cos()) * n_cos as f64 - 0.5;
            let x_az = dir.phi() * n_phi as f64 / TAU;
            let rings = axis_weights(x_ring, n_cos, false);
            let azimuths = axis_weights(x_az, n_phi, true);
            for &(i, wi) in &rings {
                for &(j, wj) in &azimuths {
                    v[i * n_phi + j] += wi * wj;
                }
            }
            let total: f64 = v.sum();
            if total.abs() > 1e-12 {
                v /= total;
            } else {
                let (m, _) = grid.nearest(dir);
                v.fill(0.0);
                v[m] = 1.0;
            }
        }
        GridLayout::Custom => {
            let (m, dist) = grid.nearest(dir);
            if dist > 1e-9 {
                log::warn!(
                    "direction (theta={:.4}, phi={:.4}) is {:.3e} rad off the grid; snapping to index {m}",
                    dir.theta(),
                    dir.phi(),
                    dist
                );
            }
            v[m] = 1.0;
        }
    }
    v
}

fn real_to_complex(v: &DVector<f64>) -> DVector<Complex64> {
    v.map(|x| Complex64::new(x, 0.0))
}

/// `H_rx = sum_l g_l exp(-j 2 pi f_c tau_l) a_r(dir_l^r) v(dir_l^o)^T`, `N_r x M`.
pub fn channel_surface_to_rx(
    paths: &[PathComponent],
    rx: &TerminalArray,
    grid: &DirectionGrid,
    carrier_hz: f64,
) -> DMatrix<Complex64> {
    let mut h = DMatrix::zeros(rx.len(), grid.len());
    for path in paths {
        let a = rx.response(&path.at_terminal) * path.phasor(carrier_hz);
        let v = real_to_complex(&selection_vector(grid, &path.at_surface));
        h += a * v.transpose();
    }
    h
}

/// `H_tx = sum_q g_q exp(-j 2 pi f_c zeta_q) v(dir_q^i) a_t(dir_q^t)^T`, `M x N_t`.
pub fn channel_tx_to_surface(
    paths: &[PathComponent],
    tx: &TerminalArray,
    grid: &DirectionGrid,
    carrier_hz: f64,
) -> DMatrix<Complex64> {
    let mut h = DMatrix::zeros(grid.len(), tx.len());
    for path in paths {
        let v = real_to_complex(&selection_vector(grid, &path.at_surface)) * path.phasor(carrier_hz);
        let a = tx.response(&path.at_terminal);
        h += v * a.transpose();
    }
    h
}

/// Channels folded through the static surface transform.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannels {
    /// `K x N_t`
    pub h_i: DMatrix<Complex64>,
    /// `N_r x K`
    pub h_o: DMatrix<Complex64>,
    /// `H_i w_t`
    pub h_eff: DVector<Complex64>,
}

impl EffectiveChannels {
    pub fn num_elements(&self) -> usize {
        self.h_eff.len()
    }
}

/// `H_i = W H_tx`, `H_o = H_rx W^H`, `h_eff = H_i w_t`.
pub fn effective_channels(
    w: &DMatrix<Complex64>,
    h_tx_surface: &DMatrix<Complex64>,
    h_surface_rx: &DMatrix<Complex64>,
    w_t: &DVector<Complex64>,
) -> Result<EffectiveChannels> {
    let (_k, m) = w.shape();
    if h_tx_surface.nrows() != m {
        return Err(Error::dim("effective_channels tx rows", m, h_tx_surface.nrows()));
    }
    if h_surface_rx.ncols() != m {
        return Err(Error::dim("effective_channels rx cols", m, h_surface_rx.ncols()));
    }
    if w_t.len() != h_tx_surface.ncols() {
        return Err(Error::dim("effective_channels tx beam", h_tx_surface.ncols(), w_t.len()));
    }
    let h_i = w * h_tx_surface;
    let h_o = h_surface_rx * w.adjoint();
    let h_eff = &h_i * w_t;
    Ok(EffectiveChannels { h_i, h_o, h_eff })
}

/// One circularly-symmetric complex Gaussian draw with `E|z|^2 = variance`.
pub fn complex_gaussian(rng: &mut impl Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Adds `CN(0, sigma2 I)` noise to every sample; deterministic in `seed`.
pub fn add_noise(y: &[DVector<Complex64>], sigma2: f64, seed: u64) -> Result<Vec<DVector<Complex64>>> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::param("sigma2", format!("{sigma2} must be finite and >= 0")));
    }
    if sigma2 == 0.0 {
        return Ok(y.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(y.iter()
        .map(|v| v.map(|z| z + complex_gaussian(&mut rng, sigma2)))
        .collect())
}

/// i.i.d. `CN(0, variance)` matrix.
pub fn rayleigh_matrix(rows: usize, cols: usize, variance: f64, rng: &mut impl Rng) -> DMatrix<Complex64> {
    // column-major fill keeps the draw order stable across nalgebra versions
    let mut h = DMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            h[(r, c)] = complex_gaussian(rng, variance);
        }
    }
    h
}

pub fn rayleigh_vector(len: usize, variance: f64, rng: &mut impl Rng) -> DVector<Complex64> {
    DVector::from_iterator(len, (0..len).map(|_| complex_gaussian(rng, variance)))
}
