//! QAM mapping, digital up/down conversion to IF, DAC quantization and
//! link-quality metrics.

mod filter;
mod pulse;
mod qam;

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use filter::{bessel_i0, convolve_same_at, kaiser_lowpass};
pub use pulse::{raised_cosine, Pulse, DEFAULT_ROLLOFF, DEFAULT_SPAN_SYMBOLS};
pub use qam::{qam_demap, qam_map, random_bits, QamConstellation, SUPPORTED_ORDERS};

pub const EVM_FLOOR_DB: f64 = -120.0;
pub const DEFAULT_DAC_BITS: u32 = 14;
const LOWPASS_ATTENUATION_DB: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IfParams {
    pub f_if_hz: f64,
    pub sample_rate_hz: f64,
    pub samples_per_symbol: usize,
}

impl Default for IfParams {
    fn default() -> Self {
        Self {
            f_if_hz: 0.5e6,
            sample_rate_hz: 2.0e6,
            samples_per_symbol: 10,
        }
    }
}

impl IfParams {
    pub fn new(f_if_hz: f64, sample_rate_hz: f64, samples_per_symbol: usize) -> Result<Self> {
        let p = Self {
            f_if_hz,
            sample_rate_hz,
            samples_per_symbol,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::param("sample_rate_hz", "must be positive"));
        }
        if !(self.f_if_hz > 0.0 && self.f_if_hz < self.sample_rate_hz / 2.0) {
            return Err(Error::param(
                "f_if_hz",
                format!("{} must lie in (0, {})", self.f_if_hz, self.sample_rate_hz / 2.0),
            ));
        }
        if self.samples_per_symbol < 2 {
            return Err(Error::param("samples_per_symbol", "must be >= 2"));
        }
        Ok(())
    }

    pub fn symbol_duration(&self) -> f64 {
        self.samples_per_symbol as f64 / self.sample_rate_hz
    }

    pub fn omega(&self) -> f64 {
        TAU * self.f_if_hz
    }
}

/// Real IF samples on the clock `t_i = origin + i / sample_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfWaveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub origin_s: f64,
}

impl IfWaveform {
    pub fn time(&self, i: usize) -> f64 {
        self.origin_s + i as f64 / self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn same_clock(&self, other: &IfWaveform) -> bool {
        self.sample_rate_hz == other.sample_rate_hz
            && self.origin_s == other.origin_s
            && self.samples.len() == other.samples.len()
    }
}

/// Pulse-shaped complex baseband `sum_n s_n g(t - n T_s)` and its time origin.
pub fn baseband(symbols: &[Complex64], params: &IfParams, pulse: &Pulse) -> Result<(Vec<Complex64>, f64)> {
    params.validate()?;
    pulse.validate()?;
    let sps = params.samples_per_symbol;
    let (taps, centre) = pulse.taps(sps);
    let len = pulse.waveform_len(symbols.len(), sps);
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    let lead = pulse.lead_symbols() * sps;
    for (n, &s) in symbols.iter().enumerate() {
        // tap `centre` of symbol n lands on sample n*sps + lead
        let start = n * sps + lead - centre;
        for (k, &g) in taps.iter().enumerate() {
            out[start + k] += s * g;
        }
    }
    let origin = -(pulse.lead_symbols() as f64) * params.symbol_duration();
    Ok((out, origin))
}

/// Up-converts symbols to a real IF waveform,
/// `x(t) = sum_n [a_n cos(w t) - b_n sin(w t)] g(t - n T_s)`.
pub fn duc(symbols: &[Complex64], params: &IfParams, pulse: &Pulse) -> Result<IfWaveform> {
    let (bb, origin) = baseband(symbols, params, pulse)?;
    let w = params.omega();
    let fs = params.sample_rate_hz;
    let samples = bb
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let t = origin + i as f64 / fs;
            b.re * (w * t).cos() - b.im * (w * t).sin()
        })
        .collect();
    Ok(IfWaveform {
        samples,
        sample_rate_hz: fs,
        origin_s: origin,
    })
}

#[derive(Debug, Clone)]
enum Detector {
    /// Per-symbol least-squares weights for the `exp(+jwt)` coefficient.
    Gate { row: Vec<Complex64> },
    /// Lowpass taps after the `exp(-jwt)` shift, and the pulse peak.
    Lowpass { taps: Vec<f64>, peak: f64 },
}

/// Digital down-converter with known symbol timing.
///
/// The output is twice the `exp(+j w t)` baseband coefficient, so a real
/// input `Re{s exp(jwt)}` returns `s` and a DC offset is rejected.
#[derive(Debug, Clone)]
pub struct Downconverter {
    params: IfParams,
    pulse: Pulse,
    detector: Detector,
}

impl Downconverter {
    pub fn new(params: &IfParams, pulse: &Pulse) -> Result<Self> {
        params.validate()?;
        pulse.validate()?;
        let sps = params.samples_per_symbol;
        let fs = params.sample_rate_hz;
        let w = params.omega();
        let detector = match *pulse {
            Pulse::Rectangular => {
                let with_dc = gate_row(sps, w, fs, true);
                let row = match with_dc {
                    Some(r) => r,
                    None => gate_row(sps, w, fs, false).ok_or_else(|| {
                        Error::Degenerate("IF tone is not resolvable within one symbol".into())
                    })?,
                };
                Detector::Gate { row }
            }
            Pulse::RaisedCosine { rolloff, .. } => {
                let band = (1.0 + rolloff) / (2.0 * params.symbol_duration());
                if band >= params.f_if_hz {
                    return Err(Error::param(
                        "f_if_hz",
                        format!("IF {} Hz must exceed the baseband bandwidth {band} Hz", params.f_if_hz),
                    ));
                }
                let cutoff = (band + params.f_if_hz) / 2.0 / fs;
                let transition = (params.f_if_hz - band) / fs;
                Detector::Lowpass {
                    taps: kaiser_lowpass(cutoff, transition, LOWPASS_ATTENUATION_DB),
                    peak: pulse.peak(sps),
                }
            }
        };
        Ok(Self {
            params: *params,
            pulse: *pulse,
            detector,
        })
    }

    pub fn params(&self) -> &IfParams {
        &self.params
    }

    /// Output noise variance per unit input noise variance (white noise).
    pub fn noise_gain(&self) -> f64 {
        match &self.detector {
            Detector::Gate { row } => 4.0 * row.iter().map(|r| r.norm_sqr()).sum::<f64>(),
            Detector::Lowpass { taps, peak } => 4.0 * taps.iter().map(|h| h * h).sum::<f64>() / (peak * peak),
        }
    }

    /// Recovers symbols from complex samples on the clock `origin + i/fs`.
    pub fn run(&self, samples: &[Complex64], origin_s: f64) -> Result<Vec<Complex64>> {
        let sps = self.params.samples_per_symbol;
        let fs = self.params.sample_rate_hz;
        let ts = self.params.symbol_duration();
        let w = self.params.omega();
        let n_sym = self
            .pulse
            .symbols_in(samples.len(), sps)
            .ok_or_else(|| Error::param("waveform", "shorter than one symbol"))?;
        let index_of = |t: f64| ((t - origin_s) * fs).round() as isize;
        let mut out = Vec::with_capacity(n_sym);
        match &self.detector {
            Detector::Gate { row } => {
                for n in 0..n_sym {
                    let i0 = index_of(n as f64 * ts);
                    if i0 < 0 || i0 as usize + sps > samples.len() {
                        return Err(Error::Clock(format!("symbol {n} falls outside the waveform")));
                    }
                    let i0 = i0 as usize;
                    let acc: Complex64 = row.iter().zip(&samples[i0..i0 + sps]).map(|(r, x)| r * x).sum();
                    let t0 = origin_s + i0 as f64 / fs;
                    out.push(2.0 * acc * Complex64::from_polar(1.0, -w * t0));
                }
            }
            Detector::Lowpass { taps, peak } => {
                let shifted: Vec<Complex64> = samples
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x * Complex64::from_polar(1.0, -w * (origin_s + i as f64 / fs)))
                    .collect();
                for n in 0..n_sym {
                    let c = index_of(n as f64 * ts);
                    if c < 0 || c as usize >= samples.len() {
                        return Err(Error::Clock(format!("symbol {n} falls outside the waveform")));
                    }
                    out.push(2.0 * convolve_same_at(&shifted, taps, c as usize) / *peak);
                }
            }
        }
        Ok(out)
    }
}

/// Least-squares weights extracting the `exp(+j w tau)` coefficient from
/// `sps` samples, `tau = k/fs`; `None` when the basis is ill-conditioned.
fn gate_row(sps: usize, w: f64, fs: f64, with_dc: bool) -> Option<Vec<Complex64>> {
    let cols = if with_dc { 3 } else { 2 };
    let b = DMatrix::from_fn(sps, cols, |k, c| {
        let tau = k as f64 / fs;
        match (with_dc, c) {
            (true, 0) => Complex64::new(1.0, 0.0),
            (true, 1) | (false, 0) => Complex64::from_polar(1.0, w * tau),
            _ => Complex64::from_polar(1.0, -w * tau),
        }
    });
    if sps < cols {
        return None;
    }
    let svd = b.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-8 * smax {
        return None;
    }
    let pinv = svd.pseudo_inverse(1e-12 * smax).ok()?;
    let r = if with_dc { 1 } else { 0 };
    Some(pinv.row(r).iter().copied().collect())
}

/// Down-converts a real IF waveform.
pub fn ddc(waveform: &IfWaveform, params: &IfParams, pulse: &Pulse) -> Result<Vec<Complex64>> {
    if waveform.sample_rate_hz != params.sample_rate_hz {
        return Err(Error::Clock(format!(
            "waveform rate {} Hz differs from modem rate {} Hz",
            waveform.sample_rate_hz, params.sample_rate_hz
        )));
    }
    let samples: Vec<Complex64> = waveform.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    Downconverter::new(params, pulse)?.run(&samples, waveform.origin_s)
}

/// Down-converts complex samples (e.g. a received field) on `origin + i/fs`.
pub fn ddc_complex(samples: &[Complex64], origin_s: f64, params: &IfParams, pulse: &Pulse) -> Result<Vec<Complex64>> {
    Downconverter::new(params, pulse)?.run(samples, origin_s)
}

/// Continuous (every-sample) down-conversion of a band-limited signal
/// centred at `f_if_hz` with one-sided bandwidth `band_hz`.
///
/// Returns twice the `exp(+j w t)` baseband component, like [`Downconverter`].
pub fn downconvert_stream(
    samples: &[Complex64],
    origin_s: f64,
    sample_rate_hz: f64,
    f_if_hz: f64,
    band_hz: f64,
) -> Result<Vec<Complex64>> {
    if !(sample_rate_hz > 0.0 && f_if_hz > 0.0 && f_if_hz < sample_rate_hz / 2.0) {
        return Err(Error::param("f_if_hz", "must lie strictly between 0 and Nyquist"));
    }
    if !(band_hz > 0.0 && band_hz < f_if_hz) {
        return Err(Error::param("band_hz", format!("{band_hz} must lie in (0, {f_if_hz})")));
    }
    let cutoff = (band_hz + f_if_hz) / 2.0 / sample_rate_hz;
    let transition = (f_if_hz - band_hz) / sample_rate_hz;
    let taps = kaiser_lowpass(cutoff, transition, LOWPASS_ATTENUATION_DB);
    let w = TAU * f_if_hz;
    let shifted: Vec<Complex64> = samples
        .iter()
        .enumerate()
        .map(|(i, x)| x * Complex64::from_polar(1.0, -w * (origin_s + i as f64 / sample_rate_hz)))
        .collect();
    Ok((0..samples.len()).map(|i| 2.0 * convolve_same_at(&shifted, &taps, i)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub waveform: IfWaveform,
    pub clipped: usize,
}

/// Uniform mid-rise quantizer with `2^bits` levels on `[-full_scale, full_scale]`.
/// `bits = None` means infinite resolution. Out-of-range samples saturate
/// and are counted.
pub fn quantize(waveform: &IfWaveform, bits: Option<u32>, full_scale: f64) -> Result<Quantized> {
    if !(full_scale > 0.0 && full_scale.is_finite()) {
        return Err(Error::param("full_scale", "must be positive"));
    }
    let clipped = waveform.samples.iter().filter(|x| x.abs() > full_scale).count();
    let Some(bits) = bits else {
        return Ok(Quantized {
            waveform: waveform.clone(),
            clipped,
        });
    };
    if bits == 0 || bits > 52 {
        return Err(Error::param("bits", format!("{bits} outside [1, 52]")));
    }
    let levels = 2f64.powi(bits as i32);
    let step = 2.0 * full_scale / levels;
    let top = full_scale - step / 2.0;
    let samples = waveform
        .samples
        .iter()
        .map(|&x| (step * ((x / step).floor() + 0.5)).clamp(-top, top))
        .collect();
    Ok(Quantized {
        waveform: IfWaveform {
            samples,
            sample_rate_hz: waveform.sample_rate_hz,
            origin_s: waveform.origin_s,
        },
        clipped,
    })
}

/// `10 log10(mean|rx - ref|^2 / mean|ref|^2)`, floored at [`EVM_FLOOR_DB`].
pub fn evm_db(rx: &[Complex64], reference: &[Complex64]) -> Result<f64> {
    if rx.is_empty() {
        return Err(Error::param("symbols", "empty input"));
    }
    if rx.len() != reference.len() {
        return Err(Error::dim("evm_db", reference.len(), rx.len()));
    }
    let err: f64 = rx.iter().zip(reference).map(|(a, b)| (a - b).norm_sqr()).sum();
    let pow: f64 = reference.iter().map(|b| b.norm_sqr()).sum();
    if pow == 0.0 {
        return Err(Error::Degenerate("reference has zero power".into()));
    }
    if err == 0.0 {
        return Ok(EVM_FLOOR_DB);
    }
    Ok((10.0 * (err / pow).log10()).max(EVM_FLOOR_DB))
}

pub fn bit_errors(tx: &[u8], rx: &[u8]) -> Result<usize> {
    if tx.len() != rx.len() {
        return Err(Error::dim("ber", tx.len(), rx.len()));
    }
    Ok(tx.iter().zip(rx).filter(|(a, b)| (*a & 1) != (*b & 1)).count())
}

pub fn ber(tx: &[u8], rx: &[u8]) -> Result<f64> {
    if tx.is_empty() {
        return Err(Error::param("bits", "empty input"));
    }
    Ok(bit_errors(tx, rx)? as f64 / tx.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateParams {
    pub symbol_rate: f64,
    pub data_rate: f64,
}

pub fn rate_params(sample_rate: f64, samples_per_symbol: usize, order: usize) -> Result<RateParams> {
    if samples_per_symbol == 0 {
        return Err(Error::param("samples_per_symbol", "must be >= 1"));
    }
    if order < 2 || !order.is_power_of_two() {
        return Err(Error::param("order", format!("{order} is not a power of two")));
    }
    let symbol_rate = sample_rate / samples_per_symbol as f64;
    Ok(RateParams {
        symbol_rate,
        data_rate: symbol_rate * order.trailing_zeros() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_real_symbol_is_a_cosine_burst() {
        let p = IfParams::default();
        let w = duc(&[c(1.0, 0.0)], &p, &Pulse::Rectangular).unwrap();
        assert_eq!(w.len(), 10);
        for (i, x) in w.samples.iter().enumerate() {
            let t = i as f64 / p.sample_rate_hz;
            assert!((x - (p.omega() * t).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn single_imaginary_symbol_is_a_negative_sine() {
        let p = IfParams::default();
        let w = duc(&[c(0.0, 1.0)], &p, &Pulse::Rectangular).unwrap();
        for (i, x) in w.samples.iter().enumerate() {
            let t = i as f64 / p.sample_rate_hz;
            assert!((x + (p.omega() * t).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn rectangular_round_trip_is_exact() {
        let p = IfParams::new(0.5e6, 2e6, 8).unwrap();
        let s = vec![c(1.0, -1.0), c(-0.3, 0.7), c(0.0, 0.0), c(0.2, 0.2)];
        let r = ddc(&duc(&s, &p, &Pulse::Rectangular).unwrap(), &p, &Pulse::Rectangular).unwrap();
        for (a, b) in r.iter().zip(&s) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn rectangular_round_trip_with_fractional_cycles() {
        // 2.5 IF cycles per symbol
        let p = IfParams::default();
        let s = vec![c(0.4, -0.9), c(-1.0, 0.1), c(0.6, 0.6)];
        let r = ddc(&duc(&s, &p, &Pulse::Rectangular).unwrap(), &p, &Pulse::Rectangular).unwrap();
        for (a, b) in r.iter().zip(&s) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_waveform_gives_zero_symbols() {
        let p = IfParams::default();
        for pulse in [Pulse::Rectangular, Pulse::default()] {
            let len = pulse.waveform_len(5, 10);
            let w = IfWaveform {
                samples: vec![0.0; len],
                sample_rate_hz: p.sample_rate_hz,
                origin_s: -(pulse.lead_symbols() as f64) * p.symbol_duration(),
            };
            let r = ddc(&w, &p, &pulse).unwrap();
            assert_eq!(r.len(), 5);
            assert!(r.iter().all(|z| z.norm() == 0.0));
        }
    }

    #[test]
    fn raised_cosine_round_trip_evm() {
        let p = IfParams::default();
        let qam = QamConstellation::new(64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = qam.map(&random_bits(6 * 2000, &mut rng)).unwrap();
        let pulse = Pulse::default();
        let r = ddc(&duc(&s, &p, &pulse).unwrap(), &p, &pulse).unwrap();
        let evm = evm_db(&r, &s).unwrap();
        assert!(evm < -40.0, "EVM {evm} dB");
    }

    #[test]
    fn dc_offset_is_rejected() {
        let p = IfParams::default();
        let s = vec![c(0.3, 0.5); 20];
        for pulse in [Pulse::Rectangular, Pulse::default()] {
            let mut w = duc(&s, &p, &pulse).unwrap();
            w.samples.iter_mut().for_each(|x| *x = 0.7 + 0.4 * *x);
            let r = ddc(&w, &p, &pulse).unwrap();
            for z in &r[4..16] {
                assert!((z - 0.4 * s[0]).norm() < 1e-3, "{pulse:?}: {z}");
            }
        }
    }

    #[test]
    fn rate_mismatch_is_a_clock_error() {
        let p = IfParams::default();
        let mut w = duc(&[c(1.0, 0.0)], &p, &Pulse::Rectangular).unwrap();
        w.sample_rate_hz = 4e6;
        assert!(matches!(ddc(&w, &p, &Pulse::Rectangular), Err(Error::Clock(_))));
    }

    #[test]
    fn if_above_nyquist_rejected() {
        assert!(IfParams::new(1.2e6, 2e6, 10).is_err());
    }

    #[test]
    fn quantizer_bounds() {
        let w = IfWaveform {
            samples: (0..1000).map(|i| (i as f64 * 0.01).sin() * 0.99).collect(),
            sample_rate_hz: 1.0,
            origin_s: 0.0,
        };
        assert_eq!(quantize(&w, None, 1.0).unwrap().waveform, w);
        for bits in [1, 4, 8, 14] {
            let q = quantize(&w, Some(bits), 1.0).unwrap();
            assert_eq!(q.clipped, 0);
            let max_err = q
                .waveform
                .samples
                .iter()
                .zip(&w.samples)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(max_err <= 1.0 / 2f64.powi(bits as i32) + 1e-15);
        }
        let loud = IfWaveform {
            samples: vec![2.0, -3.0, 0.1],
            ..w
        };
        assert_eq!(quantize(&loud, Some(8), 1.0).unwrap().clipped, 2);
    }

    #[test]
    fn metric_edge_cases() {
        let s = vec![c(1.0, 0.0), c(0.0, -1.0)];
        assert_eq!(evm_db(&s, &s).unwrap(), EVM_FLOOR_DB);
        let eps = c(0.01, 0.02);
        let shifted: Vec<_> = s.iter().map(|z| z + eps).collect();
        assert!((evm_db(&shifted, &s).unwrap() - 20.0 * eps.norm().log10()).abs() < 1e-9);
        assert!(evm_db(&[], &[]).is_err());
        assert_eq!(ber(&[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap(), 0.0);
        assert_eq!(ber(&[0, 1, 1, 0], &[1, 0, 0, 1]).unwrap(), 1.0);
        assert!(ber(&[], &[]).is_err());
    }

    #[test]
    fn rate_table_rows() {
        let r = rate_params(2e6, 10, 256).unwrap();
        assert!((r.symbol_rate - 0.2e6).abs() < 1e-6);
        assert!((r.data_rate - 1.6e6).abs() < 1e-6);
        let r = rate_params(20e6, 8, 256).unwrap();
        assert!((r.symbol_rate - 2.5e6).abs() < 1e-6);
        assert!((r.data_rate - 20e6).abs() < 1e-6);
        let r = rate_params(123.0, 1, 2).unwrap();
        assert_eq!((r.symbol_rate, r.data_rate), (123.0, 123.0));
        assert!(rate_params(1.0, 1, 12).is_err());
    }
}
