//! Micro-Doppler signature synthesis via STFT / inverse STFT.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::rng_for;

pub const DEFAULT_REFINE_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Periodic Hann.
    Hann,
    /// Square root of the periodic Hann; power-complementary at 50% hop.
    SqrtHann,
}

impl Window {
    pub fn values(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let h = 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos();
                match self {
                    Window::Hann => h,
                    Window::SqrtHann => h.sqrt(),
                }
            })
            .collect()
    }

    /// Exponent `p` such that `sum_m w^p[n - mH]` must be constant.
    fn cola_power(&self) -> i32 {
        match self {
            Window::Hann => 1,
            Window::SqrtHann => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window: Window,
    pub window_len: usize,
    pub hop: usize,
    pub sample_rate_hz: f64,
}

impl StftConfig {
    pub fn hann(window_len: usize, hop: usize, sample_rate_hz: f64) -> Self {
        Self {
            window: Window::Hann,
            window_len,
            hop,
            sample_rate_hz,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.hop == 0 {
            return Err(Error::param("stft", "window length and hop must be positive"));
        }
        if self.hop > self.window_len {
            return Err(Error::param(
                "stft.hop",
                format!("hop {} exceeds window length {}", self.hop, self.window_len),
            ));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::param("stft.sample_rate_hz", "must be positive"));
        }
        Ok(())
    }

    /// Maximum relative deviation of the overlap-add sum from its mean.
    pub fn cola_deviation(&self) -> f64 {
        let w = self.window.values(self.window_len);
        let p = self.window.cola_power();
        let sums: Vec<f64> = (0..self.hop)
            .map(|n| w.iter().skip(n).step_by(self.hop).map(|x| x.powi(p)).sum())
            .collect();
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        if mean == 0.0 {
            return f64::INFINITY;
        }
        sums.iter().map(|s| (s / mean - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn is_cola(&self) -> bool {
        self.cola_deviation() < 1e-10
    }

    /// Number of frames covering `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        (len + self.window_len - self.hop - 1) / self.hop + 1
    }

    fn pad(&self) -> usize {
        self.window_len - self.hop
    }

    /// Bin frequencies in natural FFT order, Hz.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.window_len;
        (0..n)
            .map(|k| {
                let k = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
                k * self.sample_rate_hz / n as f64
            })
            .collect()
    }

    pub fn window_sum(&self) -> f64 {
        self.window.values(self.window_len).iter().sum()
    }
}

/// Complex short-time transform; `frames[time][bin]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexSpectrogram {
    pub frames: Vec<Vec<Complex64>>,
    pub config: StftConfig,
    pub signal_len: usize,
}

/// Non-negative magnitude grid; `magnitudes[time][bin]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    pub magnitudes: Vec<Vec<f64>>,
    pub config: StftConfig,
    pub signal_len: usize,
}

impl Spectrogram {
    pub fn shape(&self) -> (usize, usize) {
        (self.magnitudes.len(), self.magnitudes.first().map_or(0, Vec::len))
    }

    /// Index of the strongest bin in each frame.
    pub fn ridge(&self) -> Vec<usize> {
        self.magnitudes
            .iter()
            .map(|row| row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |x| x.0))
            .collect()
    }
}

impl ComplexSpectrogram {
    /// `|X| / sum(w)`, so a unit-amplitude tone on a bin reads 1.
    pub fn magnitude(&self) -> Spectrogram {
        let s = self.config.window_sum();
        Spectrogram {
            magnitudes: self.frames.iter().map(|f| f.iter().map(|z| z.norm() / s).collect()).collect(),
            config: self.config,
            signal_len: self.signal_len,
        }
    }

    pub fn energy(&self) -> f64 {
        self.frames.iter().flatten().map(|z| z.norm_sqr()).sum()
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            forward: p.plan_fft_forward(n),
            inverse: p.plan_fft_inverse(n),
        }
    }
}

fn stft_with(x: &[Complex64], cfg: &StftConfig, plans: &Plans) -> ComplexSpectrogram {
    let n = cfg.window_len;
    let w = cfg.window.values(n);
    let frames = cfg.frames_for(x.len());
    let pad = cfg.pad() as isize;
    let out = (0..frames)
        .map(|m| {
            let start = (m * cfg.hop) as isize - pad;
            let mut buf: Vec<Complex64> = (0..n)
                .map(|k| {
                    let i = start + k as isize;
                    if i >= 0 && (i as usize) < x.len() {
                        x[i as usize] * w[k]
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            plans.forward.process(&mut buf);
            buf
        })
        .collect();
    ComplexSpectrogram {
        frames: out,
        config: *cfg,
        signal_len: x.len(),
    }
}

/// Windowed short-time transform. Frames start `window_len - hop` samples
/// before the signal so every sample is covered by the same number of frames.
pub fn stft(x: &[Complex64], cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    if x.len() < cfg.window_len {
        return Err(Error::param("waveform", "shorter than the analysis window"));
    }
    Ok(stft_with(x, cfg, &Plans::new(cfg.window_len)))
}

pub fn stft_real(x: &[f64], cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    let z: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    stft(&z, cfg)
}

fn istft_with(spec: &ComplexSpectrogram, plans: &Plans) -> Vec<Complex64> {
    let cfg = &spec.config;
    let n = cfg.window_len;
    let w = cfg.window.values(n);
    let pad = cfg.pad() as isize;
    let len = spec.signal_len;
    let mut acc = vec![Complex64::new(0.0, 0.0); len];
    let mut norm = vec![0.0; len];
    for (m, frame) in spec.frames.iter().enumerate() {
        let mut buf = frame.clone();
        plans.inverse.process(&mut buf);
        let start = (m * cfg.hop) as isize - pad;
        for k in 0..n {
            let i = start + k as isize;
            if i >= 0 && (i as usize) < len {
                acc[i as usize] += buf[k] * (w[k] / n as f64);
                norm[i as usize] += w[k] * w[k];
            }
        }
    }
    acc.iter()
        .zip(&norm)
        .map(|(a, &d)| if d > 1e-12 { a / d } else { Complex64::new(0.0, 0.0) })
        .collect()
}

/// Least-squares overlap-add inverse of [`stft`].
pub fn istft(spec: &ComplexSpectrogram) -> Result<Vec<Complex64>> {
    spec.config.validate()?;
    if !spec.config.is_cola() {
        return Err(Error::param(
            "stft",
            format!(
                "window {:?}/{} with hop {} is not COLA",
                spec.config.window, spec.config.window_len, spec.config.hop
            ),
        ));
    }
    if let Some(f) = spec.frames.iter().find(|f| f.len() != spec.config.window_len) {
        return Err(Error::Shape(format!("frame has {} bins, expected {}", f.len(), spec.config.window_len)));
    }
    Ok(istft_with(spec, &Plans::new(spec.config.window_len)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhasePolicy {
    /// Phases from a complex spectrogram of the same shape.
    Given(ComplexSpectrogram),
    /// Uniform random phases.
    Random(u64),
    /// Random start followed by alternating-projection refinement.
    RandomRefined { seed: u64, iterations: usize },
}

/// Waveform whose short-time magnitude approximates `spec`.
pub fn istft_synthesize(spec: &Spectrogram, policy: &PhasePolicy) -> Result<Vec<Complex64>> {
    let cfg = spec.config;
    cfg.validate()?;
    if !cfg.is_cola() {
        return Err(Error::param("stft", "window/hop pair is not COLA"));
    }
    let (frames, bins) = spec.shape();
    if bins != cfg.window_len || frames != cfg.frames_for(spec.signal_len) {
        return Err(Error::Shape(format!(
            "grid {frames}x{bins} does not match {} frames x {} bins",
            cfg.frames_for(spec.signal_len),
            cfg.window_len
        )));
    }
    if spec.magnitudes.iter().flatten().any(|m| !(*m >= 0.0)) {
        return Err(Error::param("spectrogram", "magnitudes must be non-negative"));
    }
    let scale = cfg.window_sum();
    let with_phase = |phase: &dyn Fn(usize, usize) -> Complex64| ComplexSpectrogram {
        frames: spec
            .magnitudes
            .iter()
            .enumerate()
            .map(|(m, row)| row.iter().enumerate().map(|(k, &a)| phase(m, k) * (a * scale)).collect())
            .collect(),
        config: cfg,
        signal_len: spec.signal_len,
    };
    let plans = Plans::new(cfg.window_len);
    let (seed, iterations) = match policy {
        PhasePolicy::Given(c) => {
            if c.frames.len() != frames || c.frames.iter().any(|f| f.len() != bins) {
                return Err(Error::Shape("phase source grid differs from magnitude grid".into()));
            }
            let x = with_phase(&|m, k| {
                let z = c.frames[m][k];
                if z.norm() > 0.0 { z / z.norm() } else { Complex64::new(1.0, 0.0) }
            });
            return Ok(istft_with(&x, &plans));
        }
        PhasePolicy::Random(seed) => (*seed, 0),
        PhasePolicy::RandomRefined { seed, iterations } => (*seed, *iterations),
    };
    let mut rng = rng_for(seed, &[]);
    let phases: Vec<Vec<f64>> = (0..frames)
        .map(|_| (0..bins).map(|_| rng.random_range(0.0..TAU)).collect())
        .collect();
    let mut current = with_phase(&|m, k| Complex64::from_polar(1.0, phases[m][k]));
    for _ in 0..iterations {
        let x = istft_with(&current, &plans);
        let y = stft_with(&x, &cfg, &plans);
        current = with_phase(&|m, k| {
            let z = y.frames[m][k];
            if z.norm() > 0.0 { z / z.norm() } else { Complex64::new(1.0, 0.0) }
        });
    }
    Ok(istft_with(&current, &plans))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotor {
    pub rate_hz: f64,
    pub blades: usize,
    pub max_doppler_hz: f64,
    pub phase_rad: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureParams {
    pub rotors: Vec<Rotor>,
    pub body_doppler_hz: f64,
    pub duration_s: f64,
    pub stft: StftConfig,
}

impl SignatureParams {
    /// Two-rotor helicopter-like template.
    pub fn dual_rotor() -> Self {
        Self {
            rotors: vec![
                Rotor {
                    rate_hz: 4.0,
                    blades: 2,
                    max_doppler_hz: 700.0,
                    phase_rad: 0.0,
                    amplitude: 0.5,
                },
                Rotor {
                    rate_hz: 6.5,
                    blades: 3,
                    max_doppler_hz: 400.0,
                    phase_rad: 1.0,
                    amplitude: 0.5,
                },
            ],
            body_doppler_hz: 0.0,
            duration_s: 1.0,
            stft: StftConfig::hann(128, 64, 8192.0),
        }
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.stft.sample_rate_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        let nyq = self.stft.sample_rate_hz / 2.0;
        for (i, r) in self.rotors.iter().enumerate() {
            if !(r.rate_hz >= 0.0 && r.max_doppler_hz >= 0.0 && r.blades > 0 && r.amplitude >= 0.0) {
                return Err(Error::param(format!("rotors[{i}]"), "rate, Doppler and amplitude must be >= 0, blades > 0"));
            }
            if r.max_doppler_hz + self.body_doppler_hz.abs() >= nyq {
                return Err(Error::param(
                    format!("rotors[{i}].max_doppler_hz"),
                    format!("{} Hz reaches the Nyquist limit {nyq} Hz", r.max_doppler_hz + self.body_doppler_hz.abs()),
                ));
            }
        }
        if self.num_samples() < self.stft.window_len {
            return Err(Error::param("duration_s", "shorter than one analysis window"));
        }
        Ok(())
    }
}

/// Complex baseband return of one rotor: blades as sinusoidal FM tones.
pub fn rotor_waveform(rotor: &Rotor, body_doppler_hz: f64, fs: f64, len: usize) -> Vec<Complex64> {
    (0..len)
        .map(|i| {
            let t = i as f64 / fs;
            let body = Complex64::from_polar(1.0, TAU * body_doppler_hz * t);
            if rotor.rate_hz == 0.0 {
                return body * rotor.amplitude;
            }
            let beta = rotor.max_doppler_hz / rotor.rate_hz;
            let sum: Complex64 = (0..rotor.blades)
                .map(|b| {
                    let arg = TAU * rotor.rate_hz * t + TAU * b as f64 / rotor.blades as f64 + rotor.phase_rad;
                    Complex64::from_polar(1.0, -beta * arg.cos())
                })
                .sum();
            body * sum * (rotor.amplitude / rotor.blades as f64)
        })
        .collect()
}

/// Per-rotor complex spectrograms.
pub fn doppler_components(params: &SignatureParams) -> Result<Vec<ComplexSpectrogram>> {
    params.validate()?;
    let len = params.num_samples();
    let plans = Plans::new(params.stft.window_len);
    Ok(params
        .rotors
        .iter()
        .map(|r| {
            let x = rotor_waveform(r, params.body_doppler_hz, params.stft.sample_rate_hz, len);
            stft_with(&x, &params.stft, &plans)
        })
        .collect())
}

/// Target spectrogram: complex rotor components summed, then `|.|/sum(w)`
/// clipped to `[0, 1]`.
pub fn doppler_signature(params: &SignatureParams) -> Result<Spectrogram> {
    let comps = doppler_components(params)?;
    let len = params.num_samples();
    let frames = params.stft.frames_for(len);
    let bins = params.stft.window_len;
    let mut total = ComplexSpectrogram {
        frames: vec![vec![Complex64::new(0.0, 0.0); bins]; frames],
        config: params.stft,
        signal_len: len,
    };
    for c in &comps {
        for (acc, f) in total.frames.iter_mut().zip(&c.frames) {
            for (a, z) in acc.iter_mut().zip(f) {
                *a += z;
            }
        }
    }
    let mut s = total.magnitude();
    s.magnitudes.iter_mut().flatten().for_each(|m| *m = m.clamp(0.0, 1.0));
    Ok(s)
}

/// Zero-lag normalized (mean-removed) cross-correlation of two grids.
pub fn signature_fidelity(target: &Spectrogram, recovered: &Spectrogram) -> Result<f64> {
    if target.shape() != recovered.shape() {
        return Err(Error::Shape(format!(
            "target {:?} vs recovered {:?}",
            target.shape(),
            recovered.shape()
        )));
    }
    let a: Vec<f64> = target.magnitudes.iter().flatten().copied().collect();
    let b: Vec<f64> = recovered.magnitudes.iter().flatten().copied().collect();
    if a.is_empty() {
        return Ok(0.0);
    }
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Complex tone `exp(j 2 pi f t)`.
pub fn tone(freq_hz: f64, fs: f64, len: usize) -> Vec<Complex64> {
    (0..len).map(|i| Complex64::from_polar(1.0, 2.0 * PI * freq_hz * i as f64 / fs)).collect()
}
