//! Unit-cell and array reflection models.
//!
//! A unit's reflection coefficient factors into a static angular part
//! `F(in) F(out)` and a dynamic part `alpha(t) exp(j beta(t))`. Across the
//! array the scattered angular field is `W^H Lambda(t) Phi W e_in(t)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, DirectionGrid};

const MODULUS_TOL: f64 = 1e-12;

/// Element pattern sampled on a direction grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElementPattern {
    values: Vec<Complex64>,
}

impl ElementPattern {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if let Some(m) = values.iter().position(|f| !(f.norm() <= 1.0 + MODULUS_TOL)) {
            return Err(Error::param(
                "pattern",
                format!("|f[{m}]| = {} exceeds 1", values[m].norm()),
            ));
        }
        Ok(Self { values })
    }

    /// `F = cos^q(theta)`.
    pub fn cosine(grid: &DirectionGrid, exponent: f64) -> Result<Self> {
        if !(exponent >= 0.0 && exponent.is_finite()) {
            return Err(Error::param("pattern_exponent", "must be finite and >= 0"));
        }
        Self::new(
            grid.directions()
                .iter()
                .map(|d| Complex64::new(d.theta().cos().powf(exponent), 0.0))
                .collect(),
        )
    }

    pub fn isotropic(len: usize) -> Self {
        Self {
            values: vec![Complex64::new(1.0, 0.0); len],
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reflection of a single unit: static gain times `alpha(t) exp(j beta(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitReflection {
    pub static_gain: Complex64,
    magnitude: Vec<f64>,
    phase: Vec<f64>,
}

impl UnitReflection {
    pub fn new(static_gain: Complex64, magnitude: Vec<f64>, phase: Vec<f64>) -> Result<Self> {
        if magnitude.len() != phase.len() {
            return Err(Error::dim("unit reflection phase", magnitude.len(), phase.len()));
        }
        check_magnitudes(&magnitude, 0)?;
        Ok(Self {
            static_gain,
            magnitude,
            phase,
        })
    }

    pub fn len(&self) -> usize {
        self.magnitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitude.is_empty()
    }

    pub fn dynamic(&self, t: usize) -> Complex64 {
        Complex64::from_polar(self.magnitude[t], self.phase[t])
    }

    pub fn coefficient(&self, t: usize) -> Complex64 {
        self.static_gain * self.dynamic(t)
    }
}

/// `dynamic * F(in) * F(out)`.
pub fn unit_scatter(pattern_in: Complex64, pattern_out: Complex64, dynamic: Complex64) -> Complex64 {
    dynamic * pattern_in * pattern_out
}

fn check_magnitudes(series: &[f64], element: usize) -> Result<()> {
    if let Some(t) = series.iter().position(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::State(format!(
            "magnitude of element {element} at sample {t} is {} (outside [0, 1])",
            series[t]
        )));
    }
    Ok(())
}

/// Programmable state of the surface: per-element magnitude series and
/// per-element phases held over a coherence block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceConfig {
    magnitudes: Vec<Vec<f64>>,
    phases: Vec<f64>,
    palette: Option<Vec<f64>>,
    sample_rate_hz: Option<f64>,
}

impl SurfaceConfig {
    /// `magnitudes[k]` is the series of element `k`; all series share a length.
    pub fn new(magnitudes: Vec<Vec<f64>>, phases: Vec<f64>) -> Result<Self> {
        if magnitudes.len() != phases.len() {
            return Err(Error::dim("surface magnitudes", phases.len(), magnitudes.len()));
        }
        if phases.is_empty() {
            return Err(Error::param("surface", "at least one element required"));
        }
        let t = magnitudes[0].len();
        for (k, series) in magnitudes.iter().enumerate() {
            if series.len() != t {
                return Err(Error::dim("surface magnitude series", t, series.len()));
            }
            check_magnitudes(series, k)?;
        }
        if let Some(k) = phases.iter().position(|p| !p.is_finite()) {
            return Err(Error::State(format!("phase of element {k} is not finite")));
        }
        Ok(Self {
            magnitudes,
            phases,
            palette: None,
            sample_rate_hz: None,
        })
    }

    /// Every element follows the same magnitude series.
    pub fn uniform(series: Vec<f64>, phases: Vec<f64>) -> Result<Self> {
        let k = phases.len();
        Self::new(vec![series; k], phases)
    }

    /// Unit magnitudes for a single sample (pure beamforming state).
    pub fn phase_only(phases: Vec<f64>) -> Result<Self> {
        Self::uniform(vec![1.0], phases)
    }

    /// Restricts phases to a hardware palette; fails if any phase is off-palette.
    pub fn with_palette(mut self, palette: Vec<f64>) -> Result<Self> {
        if palette.is_empty() {
            return Err(Error::param("palette", "must not be empty"));
        }
        for (k, p) in self.phases.iter().enumerate() {
            if !palette.iter().any(|s| wrap_angle(p - s).abs() < 1e-9) {
                return Err(Error::State(format!(
                    "phase {p} of element {k} is not in the palette"
                )));
            }
        }
        self.palette = Some(palette);
        Ok(self)
    }

    pub fn with_sample_rate(mut self, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::param("sample_rate_hz", "must be positive"));
        }
        self.sample_rate_hz = Some(sample_rate_hz);
        Ok(self)
    }

    pub fn num_elements(&self) -> usize {
        self.phases.len()
    }

    pub fn num_samples(&self) -> usize {
        self.magnitudes[0].len()
    }

    pub fn magnitudes(&self) -> &[Vec<f64>] {
        &self.magnitudes
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn palette(&self) -> Option<&[f64]> {
        self.palette.as_deref()
    }

    pub fn sample_rate_hz(&self) -> Option<f64> {
        self.sample_rate_hz
    }

    /// `exp(j phi_k)`.
    pub fn phase_factors(&self) -> Vec<Complex64> {
        self.phases.iter().map(|p| Complex64::from_polar(1.0, *p)).collect()
    }

    /// Diagonal of `Lambda(t) Phi`.
    pub fn gains_at(&self, t: usize) -> DVector<Complex64> {
        DVector::from_iterator(
            self.num_elements(),
            self.magnitudes
                .iter()
                .zip(&self.phases)
                .map(|(a, p)| Complex64::from_polar(a[t], *p)),
        )
    }

    /// True when all elements share one magnitude series.
    pub fn has_uniform_magnitudes(&self) -> bool {
        self.magnitudes.iter().all(|s| s == &self.magnitudes[0])
    }
}

/// Per-sample scattered angular field `W^H diag(alpha_k(t) e^{j phi_k}) W e_in(t)`.
///
/// `e_in` holds one M-vector per sample; a single vector is broadcast as a
/// static incident field.
pub fn array_scatter(
    w: &DMatrix<Complex64>,
    cfg: &SurfaceConfig,
    e_in: &[DVector<Complex64>],
) -> Result<Vec<DVector<Complex64>>> {
    let (k, m) = w.shape();
    if cfg.num_elements() != k {
        return Err(Error::dim("array_scatter elements", k, cfg.num_elements()));
    }
    let t_len = cfg.num_samples();
    if e_in.len() != t_len && e_in.len() != 1 {
        return Err(Error::Clock(format!(
            "incident field has {} samples, surface has {t_len}",
            e_in.len()
        )));
    }
    if let Some(bad) = e_in.iter().find(|e| e.len() != m) {
        return Err(Error::dim("array_scatter incident field", m, bad.len()));
    }
    let wh = w.adjoint();
    let static_in = (e_in.len() == 1).then(|| w * &e_in[0]);
    let out = (0..t_len)
        .map(|t| {
            let mut at_elements = match &static_in {
                Some(s) => s.clone(),
                None => w * &e_in[t],
            };
            at_elements.component_mul_assign(&cfg.gains_at(t));
            &wh * at_elements
        })
        .collect();
    Ok(out)
}

/// Power per grid direction with all magnitudes frozen at 1.
pub fn beampattern(
    w: &DMatrix<Complex64>,
    phases: &[f64],
    incident: &DVector<Complex64>,
) -> Result<Vec<f64>> {
    let (k, m) = w.shape();
    if phases.len() != k {
        return Err(Error::dim("beampattern phases", k, phases.len()));
    }
    if incident.len() != m {
        return Err(Error::dim("beampattern incident field", m, incident.len()));
    }
    let gains = DVector::from_iterator(k, phases.iter().map(|p| Complex64::from_polar(1.0, *p)));
    let mut at_elements = w * incident;
    at_elements.component_mul_assign(&gains);
    let out = w.adjoint() * at_elements;
    Ok(out.iter().map(|z| z.norm_sqr()).collect())
}
