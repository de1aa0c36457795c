use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use super::Scenario;
use crate::channel::selection_vector;
use crate::error::{Error, Result};
use crate::geometry::{Direction, DirectionGrid};
use crate::modem::Downconverter;
use crate::reflection::SurfaceConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsotropyReport {
    /// Largest `||z_p - c z_q|| / ||z_p||` over probe pairs, `c` fitted.
    pub deviation: f64,
    /// Probes that entered the comparison.
    pub used: Vec<usize>,
    /// Probes in a pattern null.
    pub excluded: Vec<usize>,
    /// Whether the streams were compared after down-conversion.
    pub symbol_domain: bool,
}

/// Rows `v(dir)^T W^H` mapping element outputs to single-antenna probes.
pub fn probe_rows(w: &DMatrix<Complex64>, grid: &DirectionGrid, probes: &[Direction]) -> Vec<DVector<Complex64>> {
    let wh = w.adjoint();
    probes
        .iter()
        .map(|d| {
            let v = selection_vector(grid, d).map(|x| Complex64::new(x, 0.0));
            wh.transpose() * v
        })
        .collect()
}

/// Compares the noiseless streams seen by single-antenna probes.
///
/// Streams are down-converted to symbols when the surface series holds at
/// least one symbol on the modem clock and compared sample-wise otherwise.
pub fn isotropy_check(scenario: &Scenario, surface: &SurfaceConfig, probes: &[Direction]) -> Result<IsotropyReport> {
    scenario.validate()?;
    if probes.is_empty() {
        return Err(Error::param("probes", "at least one probe direction required"));
    }
    let w = scenario.transform()?;
    if surface.num_elements() != w.nrows() {
        return Err(Error::dim("isotropy surface", w.nrows(), surface.num_elements()));
    }
    let a = &w * scenario.incident_field()? * scenario.carrier_envelope;
    let rows = probe_rows(&w, &scenario.grid, probes);
    let streams: Vec<Vec<Complex64>> = rows
        .iter()
        .map(|r| {
            (0..surface.num_samples())
                .map(|t| {
                    let g = surface.gains_at(t);
                    r.iter().zip(g.iter()).zip(a.iter()).map(|((r, g), a)| r * g * a).sum()
                })
                .collect()
        })
        .collect();

    let modem = &scenario.modem;
    let fits = modem
        .pulse
        .symbols_in(surface.num_samples(), modem.if_params.samples_per_symbol)
        .is_some();
    let streams = if fits {
        let ddc = Downconverter::new(&modem.if_params, &modem.pulse)?;
        let origin = -(modem.pulse.lead_symbols() as f64) * modem.if_params.symbol_duration();
        streams
            .iter()
            .map(|z| ddc.run(z, origin))
            .collect::<Result<Vec<_>>>()?
    } else {
        streams
    };

    let norms: Vec<f64> = streams.iter().map(|z| z.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()).collect();
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    let (mut used, mut excluded) = (Vec::new(), Vec::new());
    for (p, &n) in norms.iter().enumerate() {
        if n <= 1e-12 * max_norm || n == 0.0 {
            log::warn!("probe {p} lies in a pattern null (|z| = {n:.3e}); excluded from the isotropy check");
            excluded.push(p);
        } else {
            used.push(p);
        }
    }
    let mut deviation: f64 = 0.0;
    for &p in &used {
        for &q in &used {
            if p == q {
                continue;
            }
            let (zp, zq) = (&streams[p], &streams[q]);
            let num: Complex64 = zq.iter().zip(zp).map(|(a, b)| a.conj() * b).sum();
            let c = num / (norms[q] * norms[q]);
            let resid: f64 = zp.iter().zip(zq).map(|(b, a)| (b - c * a).norm_sqr()).sum::<f64>().sqrt();
            deviation = deviation.max(resid / norms[p]);
        }
    }
    Ok(IsotropyReport {
        deviation,
        used,
        excluded,
        symbol_domain: fits,
    })
}
