//! Directions, array layout and the far-field phase matrices of the surface.
//!
//! Element `(i, j)` (1-based row `i`, column `j`) is stored at the 0-based
//! linear index `k = (i - 1) * cols + (j - 1)`, i.e. row-major.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::reflection::ElementPattern;

/// A direction on the front hemisphere, `theta` from the surface normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Direction {
    theta: f64,
    phi: f64,
}

impl Direction {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !theta.is_finite() || !(0.0..FRAC_PI_2).contains(&theta) {
            return Err(Error::Domain(format!(
                "zenith angle {theta} outside [0, pi/2)"
            )));
        }
        if !phi.is_finite() || !(0.0..TAU).contains(&phi) {
            return Err(Error::Domain(format!("azimuth {phi} outside [0, 2pi)")));
        }
        Ok(Self { theta, phi })
    }

    /// Like [`Direction::new`] but wraps the azimuth into `[0, 2pi)` first.
    pub fn wrapped(theta: f64, phi: f64) -> Result<Self> {
        let mut p = phi.rem_euclid(TAU);
        if p >= TAU {
            p = 0.0;
        }
        Self::new(theta, p)
    }

    pub fn broadside() -> Self {
        Self {
            theta: 0.0,
            phi: 0.0,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        unit_vector(self)
    }

    /// Great-circle angle to another direction, radians.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        let a = self.unit_vector();
        let b = other.unit_vector();
        let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0);
        dot.acos()
    }
}

/// `[sin t cos p, sin t sin p, cos t]`.
pub fn unit_vector(dir: &Direction) -> [f64; 3] {
    let (st, ct) = dir.theta.sin_cos();
    let (sp, cp) = dir.phi.sin_cos();
    [st * cp, st * sp, ct]
}

/// How a [`DirectionGrid`] was laid out; the selection kernel exploits it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GridLayout {
    /// `n_cos` rings uniform in `cos(theta)` (cell midpoints) times `n_phi`
    /// uniform azimuths starting at 0. Index `m = ring * n_phi + az`.
    Hemisphere { n_cos: usize, n_phi: usize },
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionGrid {
    directions: Vec<Direction>,
    layout: GridLayout,
}

impl DirectionGrid {
    pub fn new(directions: Vec<Direction>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::param("grid", "at least one direction required"));
        }
        let units: Vec<[f64; 3]> = directions.iter().map(unit_vector).collect();
        for a in 0..units.len() {
            for b in (a + 1)..units.len() {
                let d2: f64 = (0..3).map(|i| (units[a][i] - units[b][i]).powi(2)).sum();
                if d2 < 1e-24 {
                    return Err(Error::param(
                        "grid",
                        format!("directions {a} and {b} coincide"),
                    ));
                }
            }
        }
        Ok(Self {
            directions,
            layout: GridLayout::Custom,
        })
    }

    /// Grid uniform in `(cos theta, phi)`, so every cell subtends the same
    /// solid angle.
    pub fn hemisphere(n_cos: usize, n_phi: usize) -> Result<Self> {
        if n_cos == 0 || n_phi == 0 {
            return Err(Error::param("grid", "n_cos and n_phi must be >= 1"));
        }
        let mut directions = Vec::with_capacity(n_cos * n_phi);
        for ring in 0..n_cos {
            let c = 1.0 - (ring as f64 + 0.5) / n_cos as f64;
            let theta = c.acos();
            for az in 0..n_phi {
                let phi = TAU * az as f64 / n_phi as f64;
                directions.push(Direction::new(theta, phi)?);
            }
        }
        Ok(Self {
            directions,
            layout: GridLayout::Hemisphere { n_cos, n_phi },
        })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn layout(&self) -> GridLayout {
        self.layout
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn get(&self, m: usize) -> Option<&Direction> {
        self.directions.get(m)
    }

    /// Index of the closest grid direction and its angular distance.
    pub fn nearest(&self, dir: &Direction) -> (usize, f64) {
        self.directions
            .iter()
            .enumerate()
            .map(|(m, d)| (m, d.angle_to(dir)))
            .fold((0, f64::INFINITY), |best, cur| {
                if cur.1 < best.1 {
                    cur
                } else {
                    best
                }
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArrayGeometry {
    rows: usize,
    cols: usize,
    spacing_m: f64,
    wavelength_m: f64,
}

impl ArrayGeometry {
    pub fn new(rows: usize, cols: usize, spacing_m: f64, wavelength_m: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::param("rows/cols", "must be >= 1"));
        }
        if !(spacing_m > 0.0 && spacing_m.is_finite()) {
            return Err(Error::param("spacing_m", "must be positive"));
        }
        if !(wavelength_m > 0.0 && wavelength_m.is_finite()) {
            return Err(Error::param("wavelength_m", "must be positive"));
        }
        Ok(Self {
            rows,
            cols,
            spacing_m,
            wavelength_m,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn spacing_m(&self) -> f64 {
        self.spacing_m
    }

    pub fn wavelength_m(&self) -> f64 {
        self.wavelength_m
    }

    /// Number of elements `K = rows * cols`.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `2 pi spacing / lambda`.
    pub fn electrical_spacing(&self) -> f64 {
        TAU * self.spacing_m / self.wavelength_m
    }

    /// 0-based storage index of 1-based element `(i, j)`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!((1..=self.rows).contains(&i) && (1..=self.cols).contains(&j));
        (i - 1) * self.cols + (j - 1)
    }

    /// 1-based `(i, j)` of storage index `k`.
    pub fn row_col(&self, k: usize) -> (usize, usize) {
        (k / self.cols + 1, k % self.cols + 1)
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        element_positions(self)
    }
}

/// Electrical positions `p_k = (2 pi spacing / lambda) [i, j, 0]`.
pub fn element_positions(geom: &ArrayGeometry) -> Vec<[f64; 3]> {
    let scale = geom.electrical_spacing();
    (0..geom.len())
        .map(|k| {
            let (i, j) = geom.row_col(k);
            [scale * i as f64, scale * j as f64, 0.0]
        })
        .collect()
}

/// Array response `[exp(-j u(dir) . p_n)]_n` for arbitrary electrical positions.
pub fn steering_vector(positions: &[[f64; 3]], dir: &Direction) -> DVector<Complex64> {
    let u = dir.unit_vector();
    DVector::from_iterator(
        positions.len(),
        positions.iter().map(|p| {
            let phase = u[0] * p[0] + u[1] * p[1] + u[2] * p[2];
            Complex64::from_polar(1.0, -phase)
        }),
    )
}

/// `U[k, m] = exp(-j u(dir_m) . p_k)`.
pub fn phase_difference_matrix(geom: &ArrayGeometry, grid: &DirectionGrid) -> DMatrix<Complex64> {
    let positions = geom.positions();
    let mut u = DMatrix::zeros(positions.len(), grid.len());
    for (m, dir) in grid.directions().iter().enumerate() {
        u.set_column(m, &steering_vector(&positions, dir));
    }
    u
}

/// `W = U diag(f)`.
pub fn transform_matrix(u: &DMatrix<Complex64>, pattern: &ElementPattern) -> Result<DMatrix<Complex64>> {
    let f = pattern.values();
    if f.len() != u.ncols() {
        return Err(Error::dim("transform_matrix pattern", u.ncols(), f.len()));
    }
    let mut w = u.clone();
    for (m, mut col) in w.column_iter_mut().enumerate() {
        col *= f[m];
    }
    Ok(w)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = (a + PI).rem_euclid(TAU) - PI;
    if x <= -PI {
        x += TAU;
    }
    x
}
