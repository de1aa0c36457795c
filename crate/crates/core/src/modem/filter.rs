use std::f64::consts::PI;

use num_complex::Complex64;

/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Kaiser-window lowpass FIR with unit DC gain.
///
/// `cutoff` and `transition` are in cycles per sample. The tap count is
/// always odd so the filter has an integer group delay.
pub fn kaiser_lowpass(cutoff: f64, transition: f64, attenuation_db: f64) -> Vec<f64> {
    let a = attenuation_db;
    let beta = if a > 50.0 {
        0.1102 * (a - 8.7)
    } else if a >= 21.0 {
        0.5842 * (a - 21.0).powf(0.4) + 0.07886 * (a - 21.0)
    } else {
        0.0
    };
    let dw = 2.0 * PI * transition;
    let mut n = ((a - 8.0) / (2.285 * dw)).ceil() as usize + 1;
    if n % 2 == 0 {
        n += 1;
    }
    let m = (n - 1) as f64 / 2.0;
    let i0b = bessel_i0(beta);
    let mut h: Vec<f64> = (0..n)
        .map(|i| {
            let x = i as f64 - m;
            let ideal = if x == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * x).sin() / (PI * x)
            };
            let r = x / m;
            let w = if m == 0.0 {
                1.0
            } else {
                bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b
            };
            ideal * w
        })
        .collect();
    let dc: f64 = h.iter().sum();
    h.iter_mut().for_each(|t| *t /= dc);
    h
}

/// Filter output at index `i` of a "same"-mode convolution (odd-length taps).
pub fn convolve_same_at(signal: &[Complex64], taps: &[f64], i: usize) -> Complex64 {
    let half = taps.len() / 2;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &h) in taps.iter().enumerate() {
        let j = i as isize + half as isize - k as isize;
        if j >= 0 && (j as usize) < signal.len() {
            acc += signal[j as usize] * h;
        }
    }
    acc
}
