use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::mean_ci;
use super::sweep::{loglog_slope, SweepPoint, SweepResult};
use crate::channel::{rayleigh_matrix, rayleigh_vector};
use crate::error::{Error, Result};
use crate::precoder::closed_form_phases;
use crate::seeds::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityConfig {
    pub elements: Vec<usize>,
    pub realizations: usize,
    pub rx_antennas: usize,
    pub seed: u64,
}

impl Default for DiversityConfig {
    fn default() -> Self {
        Self {
            elements: vec![8, 16, 32, 64, 128],
            realizations: 200,
            rx_antennas: 1,
            seed: 0,
        }
    }
}

/// Mean closed-form received power versus element count.
///
/// `h_eff` entries are `CN(0, 1/K)` so the total incident power stays fixed
/// as the surface grows; `H_o` entries are `CN(0, 1)`. The fitted log-log
/// slope is stored in the summary under `slope`.
pub fn diversity_sweep(cfg: &DiversityConfig) -> Result<SweepResult> {
    if cfg.elements.is_empty() || cfg.elements.contains(&0) {
        return Err(Error::param("elements", "need a non-empty list of positive sizes"));
    }
    if cfg.realizations == 0 || cfg.rx_antennas == 0 {
        return Err(Error::param("realizations", "realizations and rx_antennas must be positive"));
    }
    let mut points = Vec::new();
    for &k in &cfg.elements {
        let powers: Vec<f64> = (0..cfg.realizations)
            .into_par_iter()
            .map(|r| {
                let mut rng = rng_for(cfg.seed, &[k as u64, r as u64]);
                let h = rayleigh_vector(k, 1.0 / k as f64, &mut rng);
                let h_o = rayleigh_matrix(cfg.rx_antennas, k, 1.0, &mut rng);
                closed_form_phases(&h_o, &h).map(|s| s.objective)
            })
            .collect::<Result<Vec<_>>>()?;
        let (mean, half) = mean_ci(&powers);
        points.push(SweepPoint {
            axis: k as f64,
            metric: mean,
            ci_low: mean - half,
            ci_high: mean + half,
            extras: BTreeMap::from([("realizations".to_string(), cfg.realizations as f64)]),
            flagged: false,
        });
    }
    let mut summary = BTreeMap::new();
    if points.len() >= 2 {
        let x: Vec<f64> = points.iter().map(|p| p.axis).collect();
        let y: Vec<f64> = points.iter().map(|p| p.metric).collect();
        summary.insert("slope".to_string(), loglog_slope(&x, &y));
    }
    Ok(SweepResult {
        axis_name: "elements".into(),
        metric_name: "mean_power".into(),
        points,
        seeds: vec![cfg.seed],
        summary,
    })
}
