use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use super::{drive_series, received_samples, NOISE_STREAM};
use crate::channel::{add_noise, rayleigh_matrix, rayleigh_vector};
use crate::error::{Error, Result};
use crate::modem::{duc, evm_db, random_bits, Downconverter, IfParams, Pulse, QamConstellation};
use crate::precoder::{
    alternating_optimize, angles_of, dominant_left_singular, sinr_terms, AoInit, AoOptions, TwoStreamChannels,
};
use crate::reflection::SurfaceConfig;
use crate::seeds::{derive_seed, rng_for};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStreamConfig {
    /// Total element count, split evenly between the two sub-surfaces.
    pub elements: usize,
    pub rx_antennas: usize,
    pub orders: [usize; 2],
    pub snr_db: f64,
    pub symbols: usize,
    pub if_params: IfParams,
    pub pulse: Pulse,
    /// Magnitude bias and peak excursion of the drive `alpha0 + m x_IF(t)`.
    pub alpha0: f64,
    pub peak_depth: f64,
    pub ao: AoOptions,
    /// Removes the cross channels (each receiver sees only its sub-surface).
    pub zero_cross: bool,
    pub seed: u64,
}

impl Default for TwoStreamConfig {
    fn default() -> Self {
        Self {
            elements: 64,
            rx_antennas: 1,
            orders: [16, 64],
            snr_db: 25.0,
            symbols: 5000,
            if_params: IfParams::default(),
            pulse: Pulse::default(),
            alpha0: 0.5,
            peak_depth: 0.45,
            ao: AoOptions {
                init: AoInit::MultiStart { seed: 0, starts: 8 },
                ..AoOptions::default()
            },
            zero_cross: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamReport {
    pub order: usize,
    pub sinr_before_db: f64,
    pub sinr_after_db: f64,
    /// Interference-free optimum `(sum |desired|)^2 / sigma^2`.
    pub single_stream_snr_db: f64,
    pub evm_before_db: f64,
    pub evm_after_db: f64,
    pub ber_before: f64,
    pub ber_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStreamReport {
    pub streams: [StreamReport; 2],
    pub sum_sinr_before: f64,
    pub sum_sinr_after: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Symbol-domain noise variance.
    pub sigma2: f64,
}

struct Link {
    h_eff: DVector<Complex64>,
    h_o: [DMatrix<Complex64>; 2],
    combiners: [DVector<Complex64>; 2],
    channels: TwoStreamChannels,
}

fn scalar_channel(u: &DVector<Complex64>, h_o: &DMatrix<Complex64>, h: &DVector<Complex64>, range: std::ops::Range<usize>) -> DVector<Complex64> {
    let n = range.len();
    let sub = h_o.columns(range.start, n);
    let row = u.adjoint() * sub;
    DVector::from_iterator(n, row.iter().zip(h.rows(range.start, n).iter()).map(|(a, b)| a * b))
}

fn draw_link(cfg: &TwoStreamConfig, sigma2: f64) -> Result<Link> {
    let k = cfg.elements;
    let half = k / 2;
    let mut rng = rng_for(cfg.seed, &[0]);
    let h_eff = rayleigh_vector(k, 1.0, &mut rng);
    let mut h1 = rayleigh_matrix(cfg.rx_antennas, k, 1.0, &mut rng);
    let mut h2 = rayleigh_matrix(cfg.rx_antennas, k, 1.0, &mut rng);
    if cfg.zero_cross {
        h1.columns_mut(half, half).fill(Complex64::new(0.0, 0.0));
        h2.columns_mut(0, half).fill(Complex64::new(0.0, 0.0));
    }
    let combiner = |h: &DMatrix<Complex64>, range: std::ops::Range<usize>| -> DVector<Complex64> {
        if cfg.rx_antennas == 1 {
            return DVector::from_element(1, Complex64::new(1.0, 0.0));
        }
        let n = range.len();
        let mut m = h.columns(range.start, n).into_owned();
        for (j, mut col) in m.column_iter_mut().enumerate() {
            col *= h_eff[range.start + j];
        }
        dominant_left_singular(&m).1
    };
    let u1 = combiner(&h1, 0..half);
    let u2 = combiner(&h2, half..k);
    let channels = TwoStreamChannels::new(
        scalar_channel(&u1, &h1, &h_eff, 0..half),
        scalar_channel(&u1, &h1, &h_eff, half..k),
        scalar_channel(&u2, &h2, &h_eff, 0..half),
        scalar_channel(&u2, &h2, &h_eff, half..k),
        sigma2,
    )?;
    Ok(Link {
        h_eff,
        h_o: [h1, h2],
        combiners: [u1, u2],
        channels,
    })
}

struct Measured {
    evm_db: [f64; 2],
    ber: [f64; 2],
}

/// Runs both streams through the surface at waveform level and measures
/// each receiver after down-conversion and equalization.
fn measure(
    cfg: &TwoStreamConfig,
    link: &Link,
    phi: [&DVector<Complex64>; 2],
    sigma2: f64,
    tag: u64,
) -> Result<Measured> {
    let qam = [QamConstellation::new(cfg.orders[0])?, QamConstellation::new(cfg.orders[1])?];
    let mut rng = rng_for(cfg.seed, &[1]);
    let bits: Vec<Vec<u8>> = qam
        .iter()
        .map(|q| random_bits(cfg.symbols * q.bits_per_symbol(), &mut rng))
        .collect();
    let symbols = [qam[0].map(&bits[0])?, qam[1].map(&bits[1])?];
    let x = [
        duc(&symbols[0], &cfg.if_params, &cfg.pulse)?,
        duc(&symbols[1], &cfg.if_params, &cfg.pulse)?,
    ];
    let peak = x[0].peak().max(x[1].peak());
    if peak == 0.0 {
        return Err(Error::Degenerate("IF drive is identically zero".into()));
    }
    let depth = cfg.peak_depth / peak;
    let series = [
        drive_series(&x[0], cfg.alpha0, depth)?,
        drive_series(&x[1], cfg.alpha0, depth)?,
    ];
    let half = cfg.elements / 2;
    let mut magnitudes = Vec::with_capacity(cfg.elements);
    magnitudes.extend(std::iter::repeat_n(series[0].clone(), half));
    magnitudes.extend(std::iter::repeat_n(series[1].clone(), half));
    let mut phases = angles_of(phi[0]);
    phases.extend(angles_of(phi[1]));
    let surface = SurfaceConfig::new(magnitudes, phases)?.with_sample_rate(cfg.if_params.sample_rate_hz)?;

    let ddc = Downconverter::new(&cfg.if_params, &cfg.pulse)?;
    let sample_sigma2 = depth * depth * sigma2 / ddc.noise_gain();
    let ch = &link.channels;
    let desired = [
        ch.b1.iter().zip(phi[0].iter()).map(|(a, b)| a * b).sum::<Complex64>() * depth,
        ch.c2.iter().zip(phi[1].iter()).map(|(a, b)| a * b).sum::<Complex64>() * depth,
    ];
    let mut evm = [0.0; 2];
    let mut ber = [0.0; 2];
    for r in 0..2 {
        let y = received_samples(&link.h_o[r], &link.h_eff, Complex64::new(1.0, 0.0), &surface)?;
        let y = add_noise(&y, sample_sigma2, derive_seed(cfg.seed, &[NOISE_STREAM, tag, r as u64]))?;
        let u = &link.combiners[r];
        let z: Vec<Complex64> = y.iter().map(|v| u.dotc(v)).collect();
        if desired[r].norm() == 0.0 {
            return Err(Error::Degenerate(format!("receiver {r} has no desired signal")));
        }
        let est: Vec<Complex64> = ddc.run(&z, x[r].origin_s)?.into_iter().map(|s| s / desired[r]).collect();
        evm[r] = evm_db(&est, &symbols[r])?;
        let rx_bits = qam[r].demap(&est);
        ber[r] = crate::modem::ber(&bits[r], &rx_bits)?;
    }
    Ok(Measured { evm_db: evm, ber })
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Random phases versus AO-optimized phases for two streams sharing the
/// surface. The SNR reference is the mean desired power under random phases
/// (`K/2` for unit-variance scalar channels) over the noise variance.
pub fn two_stream_experiment(cfg: &TwoStreamConfig) -> Result<TwoStreamReport> {
    if cfg.elements < 2 || cfg.elements % 2 != 0 {
        return Err(Error::param("elements", format!("{} cannot be split into two equal sub-surfaces", cfg.elements)));
    }
    if cfg.rx_antennas == 0 || cfg.symbols == 0 {
        return Err(Error::param("two_stream", "rx_antennas and symbols must be positive"));
    }
    let half = cfg.elements / 2;
    let sigma2 = half as f64 / 10f64.powf(cfg.snr_db / 10.0);
    let link = draw_link(cfg, sigma2)?;

    let mut rng = rng_for(cfg.seed, &[2]);
    let mut random = || {
        DVector::from_iterator(half, (0..half).map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))))
    };
    let before = [random(), random()];
    let (b1, b2) = sinr_terms(&before[0], &before[1], &link.channels)?;

    let solution = alternating_optimize(&link.channels, &cfg.ao)?;
    let after = [&solution.phases[0], &solution.phases[1]];
    let (a1, a2) = sinr_terms(after[0], after[1], &link.channels)?;

    let m_before = measure(cfg, &link, [&before[0], &before[1]], sigma2, 0)?;
    let m_after = measure(cfg, &link, after, sigma2, 1)?;
    let l1 = |v: &DVector<Complex64>| v.iter().map(|z| z.norm()).sum::<f64>();
    let single = [
        l1(&link.channels.b1).powi(2) / sigma2,
        l1(&link.channels.c2).powi(2) / sigma2,
    ];
    let stream = |r: usize, sb: f64, sa: f64| StreamReport {
        order: cfg.orders[r],
        sinr_before_db: db(sb),
        sinr_after_db: db(sa),
        single_stream_snr_db: db(single[r]),
        evm_before_db: m_before.evm_db[r],
        evm_after_db: m_after.evm_db[r],
        ber_before: m_before.ber[r],
        ber_after: m_after.ber[r],
    };
    Ok(TwoStreamReport {
        streams: [stream(0, b1, a1), stream(1, b2, a2)],
        sum_sinr_before: b1 + b2,
        sum_sinr_after: a1 + a2,
        iterations: solution.iterations,
        converged: solution.converged,
        sigma2,
    })
}
