//! Single-diode small-signal mixer and bias-to-magnitude curves.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modem::{evm_db, IfWaveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiodeMode {
    Exact,
    Taylor2,
}

/// Diode expanded around a bias voltage.
///
/// Voltages passed to [`diode_current`] are excursions about `v_bias`;
/// the linear region is expressed the same way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiodeModel {
    pub saturation_current: f64,
    pub alpha_d: f64,
    pub v_bias: f64,
}

impl Default for DiodeModel {
    /// Generic small-signal Schottky values; placeholders, not measured.
    fn default() -> Self {
        Self {
            saturation_current: 5e-8,
            alpha_d: 38.0,
            v_bias: 0.15,
        }
    }
}

impl DiodeModel {
    pub fn new(saturation_current: f64, alpha_d: f64, v_bias: f64) -> Result<Self> {
        let m = Self {
            saturation_current,
            alpha_d,
            v_bias,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.saturation_current > 0.0 && self.saturation_current.is_finite()) {
            return Err(Error::param("diode.saturation_current", "must be > 0"));
        }
        if !(self.alpha_d > 0.0 && self.alpha_d.is_finite()) {
            return Err(Error::param("diode.alpha_d", "must be > 0"));
        }
        if !self.v_bias.is_finite() {
            return Err(Error::param("diode.v_bias", "must be finite"));
        }
        Ok(())
    }

    fn bias_exp(&self) -> f64 {
        (self.alpha_d * self.v_bias).exp()
    }

    pub fn bias_current(&self) -> f64 {
        self.saturation_current * (self.bias_exp() - 1.0)
    }

    pub fn dynamic_resistance(&self) -> f64 {
        1.0 / (self.alpha_d * self.saturation_current * self.bias_exp())
    }

    /// `R_d'` with `1/R_d' = d^2 I / dV^2` at the bias point.
    pub fn second_order_resistance(&self) -> f64 {
        1.0 / (self.alpha_d * self.alpha_d * self.saturation_current * self.bias_exp())
    }

    /// Excursion range over which `R_d'` stays within 10% of its bias value.
    pub fn linear_region(&self) -> (f64, f64) {
        (-(1.1f64).ln() / self.alpha_d, -(0.9f64).ln() / self.alpha_d)
    }
}

/// Diode current for an excursion `v` about the bias.
///
/// `Exact` is `I_s (exp(alpha_d (V_bias + v)) - 1)`; `Taylor2` is
/// `I_0 + v/R_d + v^2/(2 R_d')`.
pub fn diode_current(v: f64, model: &DiodeModel, mode: DiodeMode) -> f64 {
    match mode {
        DiodeMode::Exact => model.saturation_current * ((model.alpha_d * (model.v_bias + v)).exp() - 1.0),
        DiodeMode::Taylor2 => {
            model.bias_current()
                + v / model.dynamic_resistance()
                + v * v / (2.0 * model.second_order_resistance())
        }
    }
}

/// Cross-product term `i_ac = v_rf v_if / R_d'`.
pub fn mix(v_rf: &IfWaveform, v_if: &IfWaveform, model: &DiodeModel) -> Result<IfWaveform> {
    if !v_rf.same_clock(v_if) {
        return Err(Error::Clock(format!(
            "rf ({} Hz, origin {}, {} samples) vs if ({} Hz, origin {}, {} samples)",
            v_rf.sample_rate_hz,
            v_rf.origin_s,
            v_rf.len(),
            v_if.sample_rate_hz,
            v_if.origin_s,
            v_if.len()
        )));
    }
    let g = 1.0 / model.second_order_resistance();
    Ok(IfWaveform {
        samples: v_rf.samples.iter().zip(&v_if.samples).map(|(a, b)| a * b * g).collect(),
        sample_rate_hz: v_rf.sample_rate_hz,
        origin_s: v_rf.origin_s,
    })
}

/// Tabulated bias-voltage to reflection-magnitude map with monotone cubic
/// (Fritsch-Carlson) interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeCurve {
    volts: Vec<f64>,
    magnitudes: Vec<f64>,
    #[serde(skip)]
    slopes: Vec<f64>,
}

/// Placeholder bias span used by the default curves.
pub const DEFAULT_BIAS_SPAN: (f64, f64) = (0.6, 0.8);

impl MagnitudeCurve {
    /// Knots must have strictly increasing voltages and magnitudes in [0, 1].
    pub fn new(volts: Vec<f64>, magnitudes: Vec<f64>) -> Result<Self> {
        if volts.len() != magnitudes.len() {
            return Err(Error::dim("magnitude curve knots", volts.len(), magnitudes.len()));
        }
        if volts.len() < 2 {
            return Err(Error::param("curve", "at least two knots required"));
        }
        if volts.windows(2).any(|w| !(w[1] > w[0])) || volts.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("curve.volts", "must be finite and strictly increasing"));
        }
        if magnitudes.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(Error::param("curve.magnitudes", "must lie in [0, 1]"));
        }
        let slopes = fritsch_carlson(&volts, &magnitudes);
        Ok(Self {
            volts,
            magnitudes,
            slopes,
        })
    }

    /// Two-knot curve for hardware phase state 0 or 1.
    pub fn default_state(state: usize) -> Result<Self> {
        let (lo, hi) = DEFAULT_BIAS_SPAN;
        match state {
            0 => Self::new(vec![lo, hi], vec![0.8, 0.1]),
            1 => Self::new(vec![lo, hi], vec![1.0, 0.2]),
            _ => Err(Error::param("state", format!("{state} is not 0 or 1"))),
        }
    }

    /// Curve with an exponential bias dependence between two endpoints.
    pub fn exponential(v_lo: f64, v_hi: f64, m_lo: f64, m_hi: f64, alpha_d: f64, knots: usize) -> Result<Self> {
        if knots < 2 || !(v_hi > v_lo) || !(alpha_d > 0.0) {
            return Err(Error::param("curve", "need >= 2 knots, v_hi > v_lo and alpha_d > 0"));
        }
        let e_lo = (alpha_d * v_lo).exp();
        let e_hi = (alpha_d * v_hi).exp();
        let volts: Vec<f64> = (0..knots)
            .map(|i| v_lo + (v_hi - v_lo) * i as f64 / (knots - 1) as f64)
            .collect();
        let mags = volts
            .iter()
            .map(|v| m_lo + (m_hi - m_lo) * ((alpha_d * v).exp() - e_lo) / (e_hi - e_lo))
            .collect();
        Self::new(volts, mags)
    }

    /// Rebuilds interpolation slopes after deserialization.
    pub fn rebuild(self) -> Result<Self> {
        Self::new(self.volts, self.magnitudes)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.volts[0], *self.volts.last().unwrap())
    }

    pub fn range(&self) -> (f64, f64) {
        let a = self.magnitudes[0];
        let b = *self.magnitudes.last().unwrap();
        (a.min(b), a.max(b))
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.volts.iter().copied().zip(self.magnitudes.iter().copied())
    }

    pub fn is_strictly_monotone(&self) -> bool {
        let d: Vec<f64> = self.magnitudes.windows(2).map(|w| w[1] - w[0]).collect();
        d.iter().all(|x| *x > 0.0) || d.iter().all(|x| *x < 0.0)
    }

    fn eval_unchecked(&self, v: f64) -> f64 {
        let n = self.volts.len();
        let i = match self.volts.partition_point(|x| *x <= v) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.volts[i + 1] - self.volts[i];
        let t = (v - self.volts[i]) / h;
        let (y0, y1) = (self.magnitudes[i], self.magnitudes[i + 1]);
        let (m0, m1) = (self.slopes[i], self.slopes[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * h * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * h * m1
    }
}

fn fritsch_carlson(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        m[i] = if delta[i - 1] * delta[i] <= 0.0 {
            0.0
        } else {
            (delta[i - 1] + delta[i]) / 2.0
        };
    }
    for i in 0..n - 1 {
        if delta[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let a = m[i] / delta[i];
        let b = m[i + 1] / delta[i];
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[i] = tau * a * delta[i];
            m[i + 1] = tau * b * delta[i];
        }
    }
    m
}

/// Interpolated magnitude at `v_bias`; out-of-domain bias is an error.
pub fn reflect_magnitude(v_bias: f64, curve: &MagnitudeCurve) -> Result<f64> {
    let (lo, hi) = curve.domain();
    if !(v_bias >= lo && v_bias <= hi) {
        return Err(Error::Domain(format!("bias {v_bias} V outside curve domain [{lo}, {hi}]")));
    }
    Ok(curve.eval_unchecked(v_bias).clamp(0.0, 1.0))
}

/// Inverse of a strictly monotone [`MagnitudeCurve`].
#[derive(Debug, Clone, PartialEq)]
pub struct Predistortion {
    curve: MagnitudeCurve,
    increasing: bool,
}

impl Predistortion {
    /// Bias producing `magnitude`.
    pub fn bias_for(&self, magnitude: f64) -> Result<f64> {
        let (mlo, mhi) = self.curve.range();
        let tol = 1e-12;
        if !(magnitude >= mlo - tol && magnitude <= mhi + tol) {
            return Err(Error::Domain(format!("magnitude {magnitude} outside [{mlo}, {mhi}]")));
        }
        let (mut a, mut b) = self.curve.domain();
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            let above = self.curve.eval_unchecked(mid) > magnitude;
            if above == self.increasing {
                b = mid;
            } else {
                a = mid;
            }
            if b - a < 1e-15 * (1.0 + a.abs()) {
                break;
            }
        }
        Ok(0.5 * (a + b))
    }

    pub fn curve(&self) -> &MagnitudeCurve {
        &self.curve
    }
}

pub fn calibrate_predistortion(curve: &MagnitudeCurve) -> Result<Predistortion> {
    if !curve.is_strictly_monotone() {
        return Err(Error::Calibration("magnitude curve is not strictly monotone".into()));
    }
    let increasing = curve.magnitudes.last().unwrap() > &curve.magnitudes[0];
    Ok(Predistortion {
        curve: curve.clone(),
        increasing,
    })
}

/// Bias voltages that drive `curve` toward the `target` magnitudes.
///
/// With a predistortion the inverse map is used; without one the endpoints
/// of the curve are joined by a straight line, as a naive driver would.
pub fn bias_drive(target: &[f64], curve: &MagnitudeCurve, calibration: Option<&Predistortion>) -> Result<Vec<f64>> {
    match calibration {
        Some(p) => target.iter().map(|m| p.bias_for(*m)).collect(),
        None => {
            let (v_lo, v_hi) = curve.domain();
            let m_lo = curve.magnitudes[0];
            let m_hi = *curve.magnitudes.last().unwrap();
            if m_hi == m_lo {
                return Err(Error::Calibration("curve endpoints coincide".into()));
            }
            target
                .iter()
                .map(|m| {
                    let v = v_lo + (m - m_lo) / (m_hi - m_lo) * (v_hi - v_lo);
                    if (v_lo - 1e-12..=v_hi + 1e-12).contains(&v) {
                        Ok(v.clamp(v_lo, v_hi))
                    } else {
                        Err(Error::Domain(format!("magnitude {m} outside the curve endpoints")))
                    }
                })
                .collect()
        }
    }
}

/// Magnitudes realized by applying `volts` to `curve`.
pub fn realized_magnitudes(volts: &[f64], curve: &MagnitudeCurve) -> Result<Vec<f64>> {
    volts.iter().map(|v| reflect_magnitude(*v, curve)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionMetrics {
    pub evm_db: f64,
    pub worst_cluster_spread: f64,
    pub clusters: usize,
}

/// EVM and per-constellation-point spread after removing the global phase.
pub fn distortion_metrics(reference: &[Complex64], observed: &[Complex64]) -> Result<DistortionMetrics> {
    if reference.is_empty() {
        return Err(Error::param("symbols", "empty input"));
    }
    if reference.len() != observed.len() {
        return Err(Error::dim("distortion_metrics", reference.len(), observed.len()));
    }
    let corr: Complex64 = reference.iter().zip(observed).map(|(r, o)| r.conj() * o).sum();
    let derot = if corr.norm() > 0.0 {
        Complex64::from_polar(1.0, -corr.arg())
    } else {
        Complex64::new(1.0, 0.0)
    };
    let aligned: Vec<Complex64> = observed.iter().map(|o| o * derot).collect();
    let evm = evm_db(&aligned, reference)?;

    let key = |z: &Complex64| ((z.re * 1e9).round() as i64, (z.im * 1e9).round() as i64);
    let mut groups: BTreeMap<(i64, i64), Vec<Complex64>> = BTreeMap::new();
    for (r, o) in reference.iter().zip(&aligned) {
        groups.entry(key(r)).or_default().push(*o);
    }
    let worst = groups
        .values()
        .map(|g| {
            let c = g.iter().sum::<Complex64>() / g.len() as f64;
            (g.iter().map(|z| (z - c).norm_sqr()).sum::<f64>() / g.len() as f64).sqrt()
        })
        .fold(0.0, f64::max);
    Ok(DistortionMetrics {
        evm_db: evm,
        worst_cluster_spread: worst,
        clusters: groups.len(),
    })
}
