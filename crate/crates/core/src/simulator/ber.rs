use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::sweep::{wilson_interval, SweepPoint, SweepResult};
use crate::channel::{complex_gaussian, rayleigh_matrix, rayleigh_vector};
use crate::error::{Error, Result};
use crate::modem::{random_bits, QamConstellation};
use crate::precoder::closed_form_phases;
use crate::seeds::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Precoding {
    /// Uniformly random phases.
    None,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BerChannel {
    /// Unit-gain single-antenna link.
    Awgn,
    /// i.i.d. Rayleigh `h_eff` and `H_o`, scaled so that the mean received
    /// power with random phases is 1.
    Rayleigh { elements: usize, rx_antennas: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BerSweepConfig {
    pub snr_db: Vec<f64>,
    pub order: usize,
    pub precoding: Precoding,
    pub channel: BerChannel,
    /// Channel realizations in the first round.
    pub realizations: usize,
    pub min_bits: u64,
    pub target_errors: u64,
    pub max_bits: u64,
    /// Noise variance is `noise_scale * 10^(-snr/10)`; zero disables noise.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for BerSweepConfig {
    fn default() -> Self {
        Self {
            snr_db: (0..=20).step_by(2).map(f64::from).collect(),
            order: 16,
            precoding: Precoding::None,
            channel: BerChannel::Awgn,
            realizations: 200,
            min_bits: 100_000,
            target_errors: 200,
            max_bits: 10_000_000,
            noise_scale: 1.0,
            seed: 0,
        }
    }
}

impl BerSweepConfig {
    fn validate(&self) -> Result<()> {
        if self.snr_db.is_empty() {
            return Err(Error::param("snr_db", "at least one SNR point required"));
        }
        if self.realizations == 0 {
            return Err(Error::param("realizations", "must be positive"));
        }
        if self.min_bits == 0 || self.max_bits < self.min_bits {
            return Err(Error::param("min_bits", "need 0 < min_bits <= max_bits"));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::param("noise_scale", "must be >= 0"));
        }
        if let BerChannel::Rayleigh { elements, rx_antennas } = self.channel {
            if elements == 0 || rx_antennas == 0 {
                return Err(Error::param("channel", "elements and rx_antennas must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    bits: u64,
    errors: u64,
}

/// Composite gain vector `H_o diag(phi) h_eff` of one realization.
fn realization_gain(cfg: &BerSweepConfig, rng: &mut impl Rng) -> Result<DVector<Complex64>> {
    match cfg.channel {
        BerChannel::Awgn => Ok(DVector::from_element(1, Complex64::new(1.0, 0.0))),
        BerChannel::Rayleigh { elements, rx_antennas } => {
            let h = rayleigh_vector(elements, 1.0 / elements as f64, rng);
            let h_o: DMatrix<Complex64> = rayleigh_matrix(rx_antennas, elements, 1.0 / rx_antennas as f64, rng);
            let phi = match cfg.precoding {
                Precoding::None => DVector::from_iterator(
                    elements,
                    (0..elements).map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..TAU))),
                ),
                Precoding::ClosedForm => closed_form_phases(&h_o, &h)?.phases.remove(0),
            };
            Ok(&h_o * phi.component_mul(&h))
        }
    }
}

fn run_block(
    cfg: &BerSweepConfig,
    qam: &QamConstellation,
    sigma2: f64,
    symbols: usize,
    seed: u64,
) -> Result<Tally> {
    let mut rng = rng_for(seed, &[]);
    let g = realization_gain(cfg, &mut rng)?;
    let gn = g.norm_squared();
    let bits = random_bits(symbols * qam.bits_per_symbol(), &mut rng);
    let tx = qam.map(&bits)?;
    let rx: Vec<Complex64> = tx
        .iter()
        .map(|&s| {
            if gn == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            // maximum-ratio combining of y = g s + n
            let mut acc = Complex64::new(0.0, 0.0);
            for gi in g.iter() {
                let n = if sigma2 > 0.0 { complex_gaussian(&mut rng, sigma2) } else { Complex64::new(0.0, 0.0) };
                acc += gi.conj() * (gi * s + n);
            }
            acc / gn
        })
        .collect();
    let errors = bits.iter().zip(qam.demap(&rx)).filter(|(a, b)| **a != *b).count() as u64;
    Ok(Tally {
        bits: bits.len() as u64,
        errors,
    })
}

/// Symbol-level Monte-Carlo BER versus SNR with Wilson intervals.
///
/// Rounds of channel realizations run until the bit budget reaches
/// `min_bits` and either `target_errors` errors or `max_bits` bits have
/// accumulated. Points that stop short of `target_errors` are flagged.
pub fn ber_sweep(cfg: &BerSweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let qam = QamConstellation::new(cfg.order)?;
    let bps = qam.bits_per_symbol() as u64;
    let symbols_per_block =
        (cfg.min_bits.div_ceil(cfg.realizations as u64 * bps)).max(1) as usize;
    let bits_per_round = cfg.realizations as u64 * symbols_per_block as u64 * bps;

    let mut points = Vec::with_capacity(cfg.snr_db.len());
    for (pi, &snr) in cfg.snr_db.iter().enumerate() {
        let sigma2 = cfg.noise_scale * 10f64.powf(-snr / 10.0);
        let mut total = Tally::default();
        let mut per_block = Vec::new();
        let mut round = 0u64;
        loop {
            let tallies: Vec<Result<Tally>> = (0..cfg.realizations)
                .into_par_iter()
                .map(|b| {
                    let seed = derive_seed(cfg.seed, &[pi as u64, round, b as u64]);
                    run_block(cfg, &qam, sigma2, symbols_per_block, seed)
                })
                .collect();
            for t in tallies {
                let t = t?;
                total.bits += t.bits;
                total.errors += t.errors;
                per_block.push(t.errors as f64 / t.bits as f64);
            }
            round += 1;
            let enough_bits = total.bits >= cfg.min_bits;
            let done = sigma2 == 0.0
                || total.errors >= cfg.target_errors
                || total.bits + bits_per_round > cfg.max_bits;
            if enough_bits && done {
                break;
            }
        }
        let ber = total.errors as f64 / total.bits as f64;
        let (lo, hi) = wilson_interval(total.errors, total.bits);
        per_block.sort_by(f64::total_cmp);
        let median = if per_block.len() % 2 == 1 {
            per_block[per_block.len() / 2]
        } else {
            0.5 * (per_block[per_block.len() / 2 - 1] + per_block[per_block.len() / 2])
        };
        points.push(SweepPoint {
            axis: snr,
            metric: ber,
            ci_low: lo,
            ci_high: hi,
            extras: BTreeMap::from([
                ("bits".to_string(), total.bits as f64),
                ("errors".to_string(), total.errors as f64),
                ("median_ber".to_string(), median),
            ]),
            flagged: sigma2 > 0.0 && total.errors < cfg.target_errors,
        });
    }
    Ok(SweepResult {
        axis_name: "snr_db".into(),
        metric_name: "ber".into(),
        points,
        seeds: vec![cfg.seed],
        summary: BTreeMap::new(),
    })
}
