//! Subcommand execution. Every experiment returns its artifacts in memory;
//! nothing touches the disk here.

use std::fmt;
use std::fmt::Write as _;

use anyhow::{bail, Context};
use msa_core::modem::{bit_errors, ddc_complex, duc, evm_db, quantize, random_bits, QamConstellation};
use msa_core::precoder::{
    angles_of, closed_form_phases, quantize_phases, received_power, unit_phasors, PhaseObjective,
};
use msa_core::reflection::SurfaceConfig;
use msa_core::seeds::rng_for;
use msa_core::sensing::Spectrogram;
use msa_core::simulator::{
    ber_sweep, diversity_sweep, drive_series, isotropy_check, simulate_rx, spoofing_chain, two_stream_experiment,
    TwoStreamReport,
};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ScenarioConfig;

const SIMULATE_BITS: u64 = 11;
const PRECODE_BASELINE: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Precode,
    BerSweep,
    DiversitySweep,
    TwoStream,
    Sense,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Experiment::Simulate => "simulate",
            Experiment::Precode => "precode",
            Experiment::BerSweep => "ber-sweep",
            Experiment::DiversitySweep => "diversity-sweep",
            Experiment::TwoStream => "two-stream",
            Experiment::Sense => "sense",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn text(name: &str, text: String) -> Self {
        Self {
            name: name.to_string(),
            bytes: text.into_bytes(),
        }
    }

    fn json(name: &str, value: &impl Serialize) -> anyhow::Result<Self> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        Ok(Self::text(name, s))
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub seeds: Vec<u64>,
    /// One-line human summary.
    pub summary: String,
}

/// Folds command-line overrides into the config.
pub fn apply_overrides(
    cfg: &mut ScenarioConfig,
    experiment: Experiment,
    seed: Option<u64>,
    trials: Option<usize>,
) -> anyhow::Result<()> {
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(n) = trials {
        match experiment {
            Experiment::BerSweep => cfg.ber_sweep.realizations = n,
            Experiment::DiversitySweep => cfg.diversity_sweep.realizations = n,
            Experiment::TwoStream => cfg.two_stream.trials = n,
            Experiment::Precode => cfg.precode.random_draws = n,
            Experiment::Simulate | Experiment::Sense => bail!("--trials does not apply to `{experiment}`"),
        }
    }
    cfg.validate()?;
    Ok(())
}

pub fn execute(experiment: Experiment, cfg: &ScenarioConfig) -> anyhow::Result<Outcome> {
    cfg.validate()?;
    match experiment {
        Experiment::Simulate => simulate(cfg),
        Experiment::Precode => precode(cfg),
        Experiment::BerSweep => {
            let r = ber_sweep(&cfg.ber_sweep_config())?;
            let flagged = r.points.iter().filter(|p| p.flagged).count();
            let summary = format!("{} SNR points, {flagged} below the error target", r.points.len());
            Ok(Outcome {
                artifacts: vec![
                    Artifact::text("ber.csv", r.to_csv()),
                    Artifact::json("ber_summary.json", &json!({"summary": r.summary, "seeds": r.seeds, "flagged": flagged}))?,
                ],
                seeds: r.seeds,
                summary,
            })
        }
        Experiment::DiversitySweep => {
            let r = diversity_sweep(&cfg.diversity_config())?;
            let slope = r.summary.get("slope").copied().unwrap_or(f64::NAN);
            Ok(Outcome {
                artifacts: vec![
                    Artifact::text("diversity.csv", r.to_csv()),
                    Artifact::json("diversity_summary.json", &json!({"summary": r.summary, "seeds": r.seeds}))?,
                ],
                seeds: r.seeds,
                summary: format!("log-log slope {slope:.4}"),
            })
        }
        Experiment::TwoStream => two_stream(cfg),
        Experiment::Sense => sense(cfg),
    }
}

fn simulate(cfg: &ScenarioConfig) -> anyhow::Result<Outcome> {
    let scenario = cfg.scenario()?;
    let ch = scenario.channels()?;
    let s = &cfg.simulate;
    let modem = &scenario.modem;
    let q = QamConstellation::new(modem.order)?;
    let mut rng = rng_for(cfg.seed, &[SIMULATE_BITS]);
    let bits = random_bits(s.symbols * q.bits_per_symbol(), &mut rng);
    let symbols = q.map(&bits)?;
    let mut x = duc(&symbols, &modem.if_params, &modem.pulse)?;
    if x.peak() == 0.0 {
        bail!("IF waveform is identically zero");
    }
    // drive the DAC to exactly full scale
    let backoff = modem.full_scale / x.peak();
    x.samples.iter_mut().for_each(|v| *v *= backoff);
    let dac = quantize(&x, modem.dac_bits, modem.full_scale)?;
    let depth = s.peak_depth / dac.waveform.peak();
    let series = drive_series(&dac.waveform, s.alpha0, depth)?;
    let phases = match &s.phases_rad {
        Some(p) => p.clone(),
        None => angles_of(&closed_form_phases(&ch.h_o, &ch.h_eff)?.phases[0]),
    };
    let surface = SurfaceConfig::uniform(series, phases.clone())?.with_sample_rate(modem.if_params.sample_rate_hz)?;
    let y = simulate_rx(&scenario, &surface)?;

    // maximum-ratio combining against the known per-antenna gain
    let phi = unit_phasors(&phases);
    let gain = (&ch.h_o * phi.component_mul(&ch.h_eff)) * scenario.carrier_envelope;
    let norm = gain.norm_squared();
    if norm == 0.0 {
        bail!("the receiver sees no signal through the surface");
    }
    let z: Vec<Complex64> = y.iter().map(|v| gain.dotc(v) / norm).collect();
    let est: Vec<Complex64> = ddc_complex(&z, dac.waveform.origin_s, &modem.if_params, &modem.pulse)?
        .into_iter()
        .map(|v| v / (depth * backoff))
        .collect();
    let rx_bits = q.demap(&est);
    let errors = bit_errors(&bits, &rx_bits)?;
    let evm = evm_db(&est, &symbols)?;

    let fs = modem.if_params.sample_rate_hz;
    let mut received = String::from("time_s");
    for r in 0..scenario.rx.len() {
        let _ = write!(received, ",rx{r}_re,rx{r}_im");
    }
    received.push('\n');
    for (i, v) in y.iter().enumerate() {
        let _ = write!(received, "{}", dac.waveform.origin_s + i as f64 / fs);
        for z in v.iter() {
            let _ = write!(received, ",{},{}", z.re, z.im);
        }
        received.push('\n');
    }
    let mut sym_csv = String::from("index,tx_re,tx_im,rx_re,rx_im\n");
    for (i, (a, b)) in symbols.iter().zip(&est).enumerate() {
        let _ = writeln!(sym_csv, "{i},{},{},{},{}", a.re, a.im, b.re, b.im);
    }
    let mut phase_csv = String::from("element,phase_rad\n");
    for (k, p) in phases.iter().enumerate() {
        let _ = writeln!(phase_csv, "{k},{p}");
    }

    let probes = cfg.simulate_probes()?;
    let isotropy = if probes.is_empty() {
        None
    } else {
        let rep = isotropy_check(&scenario, &surface, &probes)?;
        Some(json!({"deviation": rep.deviation, "used": rep.used, "excluded": rep.excluded, "symbol_domain": rep.symbol_domain}))
    };
    let ber = errors as f64 / bits.len() as f64;
    let summary = json!({
        "symbols": symbols.len(),
        "bits": bits.len(),
        "bit_errors": errors,
        "ber": ber,
        "evm_db": evm,
        "received_power": norm * depth * depth,
        "dac_clipped_samples": dac.clipped,
        "isotropy": isotropy,
    });
    Ok(Outcome {
        artifacts: vec![
            Artifact::text("received.csv", received),
            Artifact::text("symbols.csv", sym_csv),
            Artifact::text("phases.csv", phase_csv),
            Artifact::json("simulate_summary.json", &summary)?,
        ],
        seeds: vec![cfg.seed],
        summary: format!("{} symbols, EVM {evm:.2} dB, BER {ber:.3e}", symbols.len()),
    })
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn precode(cfg: &ScenarioConfig) -> anyhow::Result<Outcome> {
    let scenario = cfg.scenario()?;
    let ch = scenario.channels()?;
    let cf = closed_form_phases(&ch.h_o, &ch.h_eff)?;
    let objective = PhaseObjective::ReceivedPower {
        h_o: ch.h_o.clone(),
        h_eff: ch.h_eff.clone(),
    };
    let quant = quantize_phases(&cf, &cfg.precode.palette_rad, &objective)?;
    let k = scenario.num_elements();
    let mut rng = rng_for(cfg.seed, &[PRECODE_BASELINE]);
    let draws = cfg.precode.random_draws;
    let random_mean = (0..draws)
        .map(|_| {
            let a: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            received_power(&ch.h_o, &unit_phasors(&a), &ch.h_eff)
        })
        .sum::<f64>()
        / draws as f64;

    let cols = cfg.geometry.cols;
    let mut csv = String::from("element,row,col,phase_rad,quantized_phase_rad\n");
    for (i, (a, b)) in angles_of(&cf.phases[0]).iter().zip(angles_of(&quant.phases[0])).enumerate() {
        let _ = writeln!(csv, "{i},{},{},{a},{b}", i / cols, i % cols);
    }
    let report = json!({
        "objective": cf.objective,
        "bound": cf.bound,
        "quantized_objective": quant.objective,
        "palette_rad": cfg.precode.palette_rad,
        "random_draws": draws,
        "random_mean_objective": random_mean,
        "gain_over_random_db": db(cf.objective / random_mean),
    });
    Ok(Outcome {
        artifacts: vec![Artifact::text("phases.csv", csv), Artifact::json("precode.json", &report)?],
        seeds: vec![cfg.seed],
        summary: format!(
            "received power {:.4e} ({:.2} dB over random phases), quantized {:.4e}",
            cf.objective,
            db(cf.objective / random_mean),
            quant.objective
        ),
    })
}

fn two_stream(cfg: &ScenarioConfig) -> anyhow::Result<Outcome> {
    let seeds: Vec<u64> = (0..cfg.two_stream.trials as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let reports: Vec<TwoStreamReport> = seeds
        .par_iter()
        .map(|&seed| two_stream_experiment(&cfg.two_stream_config(seed)).with_context(|| format!("trial seed {seed}")))
        .collect::<anyhow::Result<_>>()?;
    let mut csv = String::from(
        "seed,stream,order,sinr_before_db,sinr_after_db,single_stream_snr_db,evm_before_db,evm_after_db,ber_before,ber_after\n",
    );
    for (seed, rep) in seeds.iter().zip(&reports) {
        for (i, s) in rep.streams.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{seed},{i},{},{},{},{},{},{},{},{}",
                s.order,
                s.sinr_before_db,
                s.sinr_after_db,
                s.single_stream_snr_db,
                s.evm_before_db,
                s.evm_after_db,
                s.ber_before,
                s.ber_after
            );
        }
    }
    let improved = reports
        .iter()
        .filter(|r| r.streams.iter().all(|s| s.sinr_after_db > s.sinr_before_db))
        .count();
    let records: Vec<_> = seeds.iter().zip(&reports).map(|(s, r)| json!({"seed": s, "report": r})).collect();
    Ok(Outcome {
        artifacts: vec![Artifact::text("two_stream.csv", csv), Artifact::json("two_stream.json", &records)?],
        summary: format!("both streams improved in {improved}/{} trials", seeds.len()),
        seeds,
    })
}

/// Grid CSV (rows are frames, columns are bins) and its JSON header.
fn spectrogram_artifacts(stem: &str, s: &Spectrogram) -> anyhow::Result<[Artifact; 2]> {
    let mut csv = String::new();
    for row in &s.magnitudes {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        csv.push_str(&line.join(","));
        csv.push('\n');
    }
    let (frames, bins) = s.shape();
    let header = json!({
        "layout": "rows are frames, columns are frequency bins",
        "frames": frames,
        "bins": bins,
        "sample_rate_hz": s.config.sample_rate_hz,
        "window": s.config.window,
        "window_len": s.config.window_len,
        "hop": s.config.hop,
        "signal_len": s.signal_len,
        "bin_frequencies_hz": s.config.frequencies(),
    });
    Ok([Artifact::text(&format!("{stem}.csv"), csv), Artifact::json(&format!("{stem}.json"), &header)?])
}

fn sense(cfg: &ScenarioConfig) -> anyhow::Result<Outcome> {
    let scenario = cfg.scenario()?;
    let rep = spoofing_chain(&scenario, &cfg.spoofing_config()?)?;
    let mut artifacts = Vec::new();
    artifacts.extend(spectrogram_artifacts("target_spectrogram", &rep.target)?);
    let mut wave = String::new();
    for v in &rep.drive.samples {
        let _ = writeln!(wave, "{v}");
    }
    artifacts.push(Artifact::text("drive_waveform.csv", wave));
    artifacts.push(Artifact::json(
        "drive_waveform.json",
        &json!({"format": "single-column csv", "samples": rep.drive.samples.len(), "sample_rate_hz": rep.drive.sample_rate_hz, "origin_s": rep.drive.origin_s}),
    )?);
    for (i, s) in rep.recovered.iter().enumerate() {
        artifacts.extend(spectrogram_artifacts(&format!("recovered_probe{i}"), s)?);
    }
    let mut fid = String::from("probe,theta_rad,phi_rad,fidelity\n");
    for (i, (p, f)) in cfg.sense.probes.iter().zip(&rep.fidelity).enumerate() {
        let _ = writeln!(fid, "{i},{},{},{f}", p.theta_rad, p.phi_rad);
    }
    artifacts.push(Artifact::text("fidelity.csv", fid));
    artifacts.push(Artifact::json("sense_summary.json", &json!({"fidelity": rep.fidelity, "cross_probe": rep.cross_probe}))?);
    let worst = rep.fidelity.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Outcome {
        artifacts,
        seeds: vec![cfg.seed],
        summary: format!("worst probe fidelity {worst:.4}, cross-probe correlation {:.6}", rep.cross_probe),
    })
}
