use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ROLLOFF: f64 = 0.35;
pub const DEFAULT_SPAN_SYMBOLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pulse {
    /// Gate `u(t) - u(t - T_s)`.
    Rectangular,
    /// Nyquist raised cosine truncated to `span` symbols.
    RaisedCosine { rolloff: f64, span: usize },
}

impl Default for Pulse {
    fn default() -> Self {
        Pulse::RaisedCosine {
            rolloff: DEFAULT_ROLLOFF,
            span: DEFAULT_SPAN_SYMBOLS,
        }
    }
}

/// Unnormalized raised cosine with `p(0) = 1`; `x = t / T_s`.
pub fn raised_cosine(x: f64, rolloff: f64) -> f64 {
    let sinc = if x.abs() < 1e-12 { 1.0 } else { (PI * x).sin() / (PI * x) };
    if rolloff == 0.0 {
        return sinc;
    }
    let d = 2.0 * rolloff * x;
    if (d.abs() - 1.0).abs() < 1e-9 {
        let s = 1.0 / (2.0 * rolloff);
        return PI / 4.0 * (PI * s).sin() / (PI * s);
    }
    sinc * (PI * rolloff * x).cos() / (1.0 - d * d)
}

impl Pulse {
    pub fn validate(&self) -> Result<()> {
        if let Pulse::RaisedCosine { rolloff, span } = *self {
            if !(0.0..=1.0).contains(&rolloff) {
                return Err(Error::param("pulse.rolloff", format!("{rolloff} outside [0, 1]")));
            }
            if span == 0 || span % 2 != 0 {
                return Err(Error::param("pulse.span", "must be a positive even number of symbols"));
            }
        }
        Ok(())
    }

    /// Symbols of delay before the first peak.
    pub fn lead_symbols(&self) -> usize {
        match *self {
            Pulse::Rectangular => 0,
            Pulse::RaisedCosine { span, .. } => span / 2,
        }
    }

    /// Sampled taps and the index of `t = 0` within them.
    ///
    /// Raised-cosine taps are scaled so that their energy equals `sps`,
    /// matching the rectangular gate.
    pub fn taps(&self, sps: usize) -> (Vec<f64>, usize) {
        match *self {
            Pulse::Rectangular => (vec![1.0; sps], 0),
            Pulse::RaisedCosine { rolloff, span } => {
                let half = span / 2 * sps;
                let raw: Vec<f64> = (0..=2 * half)
                    .map(|i| raised_cosine((i as f64 - half as f64) / sps as f64, rolloff))
                    .collect();
                let energy: f64 = raw.iter().map(|x| x * x).sum();
                let c = (sps as f64 / energy).sqrt();
                (raw.into_iter().map(|x| x * c).collect(), half)
            }
        }
    }

    /// Tap value at `t = 0`.
    pub fn peak(&self, sps: usize) -> f64 {
        let (taps, centre) = self.taps(sps);
        taps[centre]
    }

    /// Waveform length in samples for `n` symbols.
    pub fn waveform_len(&self, n: usize, sps: usize) -> usize {
        if n == 0 {
            return 0;
        }
        match *self {
            Pulse::Rectangular => n * sps,
            Pulse::RaisedCosine { span, .. } => (n - 1 + span) * sps + 1,
        }
    }

    /// Inverse of [`Pulse::waveform_len`]; `None` if no symbol fits.
    pub fn symbols_in(&self, len: usize, sps: usize) -> Option<usize> {
        let n = match *self {
            Pulse::Rectangular => len / sps,
            Pulse::RaisedCosine { span, .. } => {
                if len < span * sps + 1 {
                    0
                } else {
                    (len - 1) / sps + 1 - span
                }
            }
        };
        (n > 0).then_some(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raised_cosine_is_nyquist() {
        for beta in [0.0, 0.25, 0.35, 0.5, 1.0] {
            assert!((raised_cosine(0.0, beta) - 1.0).abs() < 1e-15);
            for k in 1..6 {
                assert!(raised_cosine(k as f64, beta).abs() < 1e-9, "beta {beta} k {k}");
                assert!(raised_cosine(-(k as f64), beta).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn singular_point_is_continuous() {
        let beta = 0.25;
        let x = 1.0 / (2.0 * beta);
        let a = raised_cosine(x, beta);
        let b = raised_cosine(x + 1e-6, beta);
        assert!((a - b).abs() < 1e-5);
    }

    #[test]
    fn taps_have_gate_energy() {
        let p = Pulse::default();
        let (taps, c) = p.taps(10);
        assert_eq!(taps.len(), 81);
        assert_eq!(c, 40);
        let e: f64 = taps.iter().map(|x| x * x).sum();
        assert!((e - 10.0).abs() < 1e-12);
    }

    #[test]
    fn length_round_trip() {
        for p in [Pulse::Rectangular, Pulse::default()] {
            for n in 1..20 {
                assert_eq!(p.symbols_in(p.waveform_len(n, 7), 7), Some(n));
            }
        }
    }

    #[test]
    fn invalid_rolloff_rejected() {
        assert!(Pulse::RaisedCosine { rolloff: 1.5, span: 8 }.validate().is_err());
        assert!(Pulse::RaisedCosine { rolloff: 0.2, span: 3 }.validate().is_err());
    }
}
