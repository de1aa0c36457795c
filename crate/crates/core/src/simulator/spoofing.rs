use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use super::{drive_series, probe_rows, Scenario};
use crate::error::{Error, Result};
use crate::geometry::Direction;
use crate::modem::{downconvert_stream, IfWaveform};
use crate::reflection::SurfaceConfig;
use crate::seeds::rng_for;
use crate::sensing::{
    doppler_signature, istft_synthesize, signature_fidelity, stft, PhasePolicy, SignatureParams, Spectrogram,
    DEFAULT_REFINE_ITERATIONS,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpoofingConfig {
    pub signature: SignatureParams,
    pub refine_iterations: usize,
    /// Defaults to a quarter of the synthesis rate.
    pub f_if_hz: Option<f64>,
    pub alpha0: f64,
    pub peak_depth: f64,
    pub probes: Vec<Direction>,
    /// Surface phases; random (seeded) when absent.
    pub phases: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for SpoofingConfig {
    fn default() -> Self {
        Self {
            signature: SignatureParams::dual_rotor(),
            refine_iterations: DEFAULT_REFINE_ITERATIONS,
            f_if_hz: None,
            alpha0: 0.5,
            peak_depth: 0.45,
            probes: vec![
                Direction::new(0.3, 0.5).expect("valid probe"),
                Direction::new(0.9, 3.5).expect("valid probe"),
            ],
            phases: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpoofingReport {
    pub target: Spectrogram,
    /// Real IF drive applied to every element.
    pub drive: IfWaveform,
    pub recovered: Vec<Spectrogram>,
    pub fidelity: Vec<f64>,
    /// Smallest pairwise correlation between recovered probe signatures.
    pub cross_probe: f64,
}

/// Target signature -> waveform -> surface drive -> probes -> recovered signatures.
pub fn spoofing_chain(scenario: &Scenario, cfg: &SpoofingConfig) -> Result<SpoofingReport> {
    scenario.validate()?;
    let params = &cfg.signature;
    params.validate()?;
    if cfg.probes.is_empty() {
        return Err(Error::param("probes", "at least one probe direction required"));
    }
    let stft_cfg = params.stft;
    let fs = stft_cfg.sample_rate_hz;
    let f_if = cfg.f_if_hz.unwrap_or(fs / 4.0);
    let max_doppler = params.rotors.iter().map(|r| r.max_doppler_hz).fold(0.0, f64::max) + params.body_doppler_hz.abs();
    let band = max_doppler + 2.0 * fs / stft_cfg.window_len as f64;

    let target = doppler_signature(params)?;
    let baseband = istft_synthesize(
        &target,
        &PhasePolicy::RandomRefined {
            seed: cfg.seed,
            iterations: cfg.refine_iterations,
        },
    )?;
    let x_if: Vec<f64> = baseband
        .iter()
        .enumerate()
        .map(|(i, z)| (z * Complex64::from_polar(1.0, TAU * f_if * i as f64 / fs)).re)
        .collect();
    let drive = IfWaveform {
        samples: x_if,
        sample_rate_hz: fs,
        origin_s: 0.0,
    };
    let peak = drive.peak();
    if peak == 0.0 {
        return Err(Error::Degenerate("target signature is empty".into()));
    }
    let series = drive_series(&drive, cfg.alpha0, cfg.peak_depth / peak)?;

    let k = scenario.num_elements();
    let phases = match &cfg.phases {
        Some(p) => p.clone(),
        None => {
            let mut rng = rng_for(cfg.seed, &[3]);
            (0..k).map(|_| rng.random_range(0.0..TAU)).collect()
        }
    };
    let surface = SurfaceConfig::uniform(series, phases)?;
    if surface.num_elements() != k {
        return Err(Error::dim("spoofing phases", k, surface.num_elements()));
    }

    let w = scenario.transform()?;
    let a = &w * scenario.incident_field()? * scenario.carrier_envelope;
    let rows = probe_rows(&w, &scenario.grid, &cfg.probes);
    let mut recovered = Vec::with_capacity(rows.len());
    for (p, r) in rows.iter().enumerate() {
        let z: Vec<Complex64> = (0..surface.num_samples())
            .map(|t| {
                let g = surface.gains_at(t);
                r.iter().zip(g.iter()).zip(a.iter()).map(|((r, g), a)| r * g * a).sum()
            })
            .collect();
        if z.iter().all(|v| v.norm() == 0.0) {
            return Err(Error::Degenerate(format!("probe {p} sees no field")));
        }
        let bb = downconvert_stream(&z, 0.0, fs, f_if, band)?;
        recovered.push(stft(&bb, &stft_cfg)?.magnitude());
    }
    let fidelity = recovered
        .iter()
        .map(|s| signature_fidelity(&target, s))
        .collect::<Result<Vec<_>>>()?;
    let mut cross_probe: f64 = 1.0;
    for i in 0..recovered.len() {
        for j in i + 1..recovered.len() {
            cross_probe = cross_probe.min(signature_fidelity(&recovered[i], &recovered[j])?);
        }
    }
    Ok(SpoofingReport {
        target,
        drive,
        recovered,
        fidelity,
        cross_probe,
    })
}
