//! End-to-end received signal `y(t) = H_o Lambda(t) Phi H_i x(t) + n(t)` and
//! the experiments built on it.

mod ber;
mod diversity;
mod isotropy;
mod spoofing;
mod sweep;
mod two_stream;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::channel::{
    add_noise, channel_surface_to_rx, channel_tx_to_surface, effective_channels, EffectiveChannels, PathComponent,
    TerminalArray,
};
use crate::error::{Error, Result};
use crate::geometry::{phase_difference_matrix, transform_matrix, ArrayGeometry, DirectionGrid};
use crate::mixer::DiodeModel;
use crate::modem::{IfParams, IfWaveform, Pulse, DEFAULT_DAC_BITS};
use crate::reflection::{ElementPattern, SurfaceConfig};
use crate::seeds::derive_seed;

pub use ber::{ber_sweep, BerChannel, BerSweepConfig, Precoding};
pub use diversity::{diversity_sweep, DiversityConfig};
pub use isotropy::{isotropy_check, probe_rows, IsotropyReport};
pub use spoofing::{spoofing_chain, SpoofingConfig, SpoofingReport};
pub use sweep::{loglog_slope, wilson_interval, SweepPoint, SweepResult};
pub use two_stream::{two_stream_experiment, StreamReport, TwoStreamConfig, TwoStreamReport};

/// Stream identifiers mixed into the scenario seed.
pub(crate) const NOISE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModemSettings {
    pub if_params: IfParams,
    pub pulse: Pulse,
    pub order: usize,
    pub dac_bits: Option<u32>,
    pub full_scale: f64,
}

impl Default for ModemSettings {
    fn default() -> Self {
        Self {
            if_params: IfParams::default(),
            pulse: Pulse::default(),
            order: 16,
            dac_bits: Some(DEFAULT_DAC_BITS),
            full_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub grid: DirectionGrid,
    pub pattern: ElementPattern,
    pub carrier_hz: f64,
    pub tx: TerminalArray,
    pub rx: TerminalArray,
    pub tx_paths: Vec<PathComponent>,
    pub rx_paths: Vec<PathComponent>,
    /// Unit-norm transmit beam `w_t`.
    pub tx_beam: DVector<Complex64>,
    /// Constant carrier envelope `s_c`.
    pub carrier_envelope: Complex64,
    pub modem: ModemSettings,
    pub diode: DiodeModel,
    pub sigma2: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.pattern.len() != self.grid.len() {
            return Err(Error::dim("scenario pattern", self.grid.len(), self.pattern.len()));
        }
        if self.tx_beam.len() != self.tx.len() {
            return Err(Error::dim("scenario tx_beam", self.tx.len(), self.tx_beam.len()));
        }
        if (self.tx_beam.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::param("tx_beam", format!("norm {} is not 1", self.tx_beam.norm())));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::param("sigma2", format!("{} must be finite and >= 0", self.sigma2)));
        }
        if !(self.carrier_hz > 0.0) {
            return Err(Error::param("carrier_hz", "must be positive"));
        }
        self.modem.if_params.validate()?;
        self.modem.pulse.validate()?;
        self.diode.validate()?;
        Ok(())
    }

    pub fn num_elements(&self) -> usize {
        self.geometry.len()
    }

    /// Surface transform `W = U diag(F)`, `K x M`.
    pub fn transform(&self) -> Result<DMatrix<Complex64>> {
        transform_matrix(&phase_difference_matrix(&self.geometry, &self.grid), &self.pattern)
    }

    pub fn channels(&self) -> Result<EffectiveChannels> {
        self.validate()?;
        let w = self.transform()?;
        let h_tx = channel_tx_to_surface(&self.tx_paths, &self.tx, &self.grid, self.carrier_hz);
        let h_rx = channel_surface_to_rx(&self.rx_paths, &self.rx, &self.grid, self.carrier_hz);
        effective_channels(&w, &h_tx, &h_rx, &self.tx_beam)
    }

    /// Incident angular field `H_tx w_t` on the grid.
    pub fn incident_field(&self) -> Result<DVector<Complex64>> {
        let h_tx = channel_tx_to_surface(&self.tx_paths, &self.tx, &self.grid, self.carrier_hz);
        Ok(h_tx * &self.tx_beam)
    }
}

/// Noiseless `H_o diag(g(t)) h_eff s_c` for every surface sample.
pub fn received_samples(
    h_o: &DMatrix<Complex64>,
    h_eff: &DVector<Complex64>,
    carrier_envelope: Complex64,
    surface: &SurfaceConfig,
) -> Result<Vec<DVector<Complex64>>> {
    let k = h_eff.len();
    if h_o.ncols() != k {
        return Err(Error::dim("received_samples H_o", k, h_o.ncols()));
    }
    if surface.num_elements() != k {
        return Err(Error::dim("received_samples surface", k, surface.num_elements()));
    }
    let driven = h_eff * carrier_envelope;
    Ok((0..surface.num_samples())
        .map(|t| h_o * surface.gains_at(t).component_mul(&driven))
        .collect())
}

/// `y(t) = H_o Lambda(t) Phi H_i x(t) + n(t)` on the surface clock.
pub fn simulate_rx(scenario: &Scenario, surface: &SurfaceConfig) -> Result<Vec<DVector<Complex64>>> {
    if let Some(rate) = surface.sample_rate_hz() {
        let modem_rate = scenario.modem.if_params.sample_rate_hz;
        if rate != modem_rate {
            return Err(Error::Clock(format!(
                "surface sampled at {rate} Hz, modem clock is {modem_rate} Hz"
            )));
        }
    }
    let ch = scenario.channels()?;
    let y = received_samples(&ch.h_o, &ch.h_eff, scenario.carrier_envelope, surface)?;
    add_noise(&y, scenario.sigma2, derive_seed(scenario.seed, &[NOISE_STREAM]))
}

/// Magnitude series `alpha0 + depth * x(t)`; fails if it leaves `[0, 1]`.
pub fn drive_series(x_if: &IfWaveform, alpha0: f64, depth: f64) -> Result<Vec<f64>> {
    let out: Vec<f64> = x_if.samples.iter().map(|x| alpha0 + depth * x).collect();
    if let Some(i) = out.iter().position(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::State(format!(
            "drive magnitude {} at sample {i} leaves [0, 1]; lower the modulation depth",
            out[i]
        )));
    }
    Ok(out)
}

/// Mean and 95% normal-approximation half-width.
pub(crate) fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}
