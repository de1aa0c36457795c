//! JSON scenario configuration.
//!
//! Every numeric key carries its SI unit as a suffix. Sections other than
//! `geometry`, `tx_paths` and `rx_paths` may be omitted and take the defaults
//! below; unknown keys are rejected.

use std::fmt;
use std::path::Path;

use msa_core::channel::{PathComponent, TerminalArray, DEFAULT_CARRIER_HZ, SPEED_OF_LIGHT};
use msa_core::geometry::{ArrayGeometry, Direction, DirectionGrid};
use msa_core::mixer::DiodeModel;
use msa_core::modem::{IfParams, Pulse, QamConstellation, DEFAULT_DAC_BITS, DEFAULT_ROLLOFF, DEFAULT_SPAN_SYMBOLS};
use msa_core::precoder::{default_palette, AoInit, AoOptions};
use msa_core::reflection::ElementPattern;
use msa_core::sensing::{Rotor, SignatureParams, StftConfig, DEFAULT_REFINE_ITERATIONS};
use msa_core::simulator::{
    BerChannel, BerSweepConfig, DiversityConfig, ModemSettings, Precoding, Scenario, SpoofingConfig, TwoStreamConfig,
};
use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A validation failure with the dotted path of the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config field `{}`: {}", self.field, self.reason)
    }
}

impl std::error::Error for ConfigError {}

type Checked<T> = std::result::Result<T, ConfigError>;

/// Maps a core error into a config error under `section`.
fn under(section: &str) -> impl Fn(msa_core::Error) -> ConfigError + '_ {
    move |e| match e {
        msa_core::Error::Parameter { field, reason } => ConfigError::new(format!("{section}.{field}"), reason),
        other => ConfigError::new(section, other.to_string()),
    }
}

fn positive(field: &str, v: f64) -> Checked<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("{v} must be positive and finite")))
    }
}

fn non_negative(field: &str, v: f64) -> Checked<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("{v} must be finite and >= 0")))
    }
}

fn at_least_one(field: &str, v: usize) -> Checked<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(ConfigError::new(field, "must be at least 1"))
    }
}

fn qam_order(field: &str, order: usize) -> Checked<()> {
    QamConstellation::new(order).map(|_| ()).map_err(|e| ConfigError::new(field, e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionConfig {
    pub theta_rad: f64,
    pub phi_rad: f64,
}

impl DirectionConfig {
    fn build(&self, field: &str) -> Checked<Direction> {
        Direction::new(self.theta_rad, self.phi_rad).map_err(|e| ConfigError::new(field, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub rows: usize,
    pub cols: usize,
    /// Element pitch; half a wavelength when absent.
    #[serde(default)]
    pub spacing_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub cos_theta_samples: usize,
    pub phi_samples: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            cos_theta_samples: 8,
            phi_samples: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PatternConfig {
    Cosine { exponent: f64 },
    Isotropic,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig::Cosine { exponent: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalConfig {
    pub antennas: usize,
    /// Antenna pitch of the linear array; half a wavelength when absent.
    #[serde(default)]
    pub spacing_m: Option<f64>,
}

impl Default for TerminalConfig {
    fn default() -> Self {
        Self {
            antennas: 1,
            spacing_m: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub gain_re: f64,
    pub gain_im: f64,
    #[serde(default)]
    pub delay_s: f64,
    /// Direction of the path as seen from the surface.
    pub surface: DirectionConfig,
    /// Direction of the path as seen from the terminal.
    pub terminal: DirectionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PulseConfig {
    Rectangular,
    RaisedCosine { rolloff: f64, span_symbols: usize },
}

impl Default for PulseConfig {
    fn default() -> Self {
        PulseConfig::RaisedCosine {
            rolloff: DEFAULT_ROLLOFF,
            span_symbols: DEFAULT_SPAN_SYMBOLS,
        }
    }
}

impl PulseConfig {
    fn build(&self) -> Pulse {
        match *self {
            PulseConfig::Rectangular => Pulse::Rectangular,
            PulseConfig::RaisedCosine { rolloff, span_symbols } => Pulse::RaisedCosine {
                rolloff,
                span: span_symbols,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModemConfig {
    pub f_if_hz: f64,
    pub sample_rate_hz: f64,
    pub samples_per_symbol: usize,
    pub order: usize,
    pub pulse: PulseConfig,
    /// DAC resolution; `null` disables quantization.
    pub dac_bits: Option<u32>,
    pub full_scale: f64,
}

impl Default for ModemConfig {
    fn default() -> Self {
        let p = IfParams::default();
        Self {
            f_if_hz: p.f_if_hz,
            sample_rate_hz: p.sample_rate_hz,
            samples_per_symbol: p.samples_per_symbol,
            order: 16,
            pulse: PulseConfig::default(),
            dac_bits: Some(DEFAULT_DAC_BITS),
            full_scale: 1.0,
        }
    }
}

impl ModemConfig {
    fn if_params(&self) -> IfParams {
        IfParams {
            f_if_hz: self.f_if_hz,
            sample_rate_hz: self.sample_rate_hz,
            samples_per_symbol: self.samples_per_symbol,
        }
    }

    fn validate(&self) -> Checked<()> {
        self.if_params().validate().map_err(under("modem"))?;
        self.pulse.build().validate().map_err(under("modem.pulse"))?;
        qam_order("modem.order", self.order)?;
        positive("modem.full_scale", self.full_scale)?;
        if self.dac_bits == Some(0) {
            return Err(ConfigError::new("modem.dac_bits", "must be at least 1 or null"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiodeConfig {
    pub saturation_current_a: f64,
    pub alpha_d_per_v: f64,
    pub v_bias_v: f64,
}

impl Default for DiodeConfig {
    fn default() -> Self {
        let d = DiodeModel::default();
        Self {
            saturation_current_a: d.saturation_current,
            alpha_d_per_v: d.alpha_d,
            v_bias_v: d.v_bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Complex noise variance per receive sample.
    pub sigma2: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma2: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub symbols: usize,
    pub alpha0: f64,
    pub peak_depth: f64,
    /// Surface phases; the closed-form solution when absent.
    pub phases_rad: Option<Vec<f64>>,
    /// Probe directions for the isotropy report.
    pub probes: Vec<DirectionConfig>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            symbols: 200,
            alpha0: 0.5,
            peak_depth: 0.45,
            phases_rad: None,
            probes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecodeConfig {
    /// Realizable phase states of the elements.
    pub palette_rad: Vec<f64>,
    /// Random phase draws averaged for the baseline.
    pub random_draws: usize,
}

impl Default for PrecodeConfig {
    fn default() -> Self {
        Self {
            palette_rad: default_palette(),
            random_draws: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecodingConfig {
    None,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BerChannelConfig {
    Awgn,
    Rayleigh { elements: usize, rx_antennas: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BerSweepSection {
    pub snr_db: Vec<f64>,
    pub order: usize,
    pub precoding: PrecodingConfig,
    pub channel: BerChannelConfig,
    pub realizations: usize,
    pub min_bits: u64,
    pub target_errors: u64,
    pub max_bits: u64,
    pub noise_scale: f64,
}

impl Default for BerSweepSection {
    fn default() -> Self {
        let d = BerSweepConfig::default();
        Self {
            snr_db: d.snr_db,
            order: d.order,
            precoding: PrecodingConfig::None,
            channel: BerChannelConfig::Awgn,
            realizations: d.realizations,
            min_bits: d.min_bits,
            target_errors: d.target_errors,
            max_bits: d.max_bits,
            noise_scale: d.noise_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiversitySection {
    pub elements: Vec<usize>,
    pub realizations: usize,
    pub rx_antennas: usize,
}

impl Default for DiversitySection {
    fn default() -> Self {
        let d = DiversityConfig::default();
        Self {
            elements: d.elements,
            realizations: d.realizations,
            rx_antennas: d.rx_antennas,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoStreamSection {
    pub elements: usize,
    pub rx_antennas: usize,
    pub orders: [usize; 2],
    pub snr_db: f64,
    pub symbols: usize,
    pub alpha0: f64,
    pub peak_depth: f64,
    pub zero_cross: bool,
    /// Random restarts of the alternating optimizer.
    pub starts: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Independent channel draws, seeded `seed, seed + 1, ...`.
    pub trials: usize,
}

impl Default for TwoStreamSection {
    fn default() -> Self {
        let d = TwoStreamConfig::default();
        Self {
            elements: d.elements,
            rx_antennas: d.rx_antennas,
            orders: d.orders,
            snr_db: d.snr_db,
            symbols: d.symbols,
            alpha0: d.alpha0,
            peak_depth: d.peak_depth,
            zero_cross: d.zero_cross,
            starts: 8,
            max_iter: d.ao.max_iter,
            tol: d.ao.tol,
            trials: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotorConfig {
    pub rate_hz: f64,
    pub blades: usize,
    pub max_doppler_hz: f64,
    #[serde(default)]
    pub phase_rad: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SenseConfig {
    pub rotors: Vec<RotorConfig>,
    pub body_doppler_hz: f64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub window_len: usize,
    pub hop: usize,
    pub refine_iterations: usize,
    /// IF of the surface drive; a quarter of the sample rate when absent.
    pub f_if_hz: Option<f64>,
    pub alpha0: f64,
    pub peak_depth: f64,
    pub probes: Vec<DirectionConfig>,
    pub phases_rad: Option<Vec<f64>>,
}

impl Default for SenseConfig {
    fn default() -> Self {
        let sig = SignatureParams::dual_rotor();
        let d = SpoofingConfig::default();
        Self {
            rotors: sig
                .rotors
                .iter()
                .map(|r| RotorConfig {
                    rate_hz: r.rate_hz,
                    blades: r.blades,
                    max_doppler_hz: r.max_doppler_hz,
                    phase_rad: r.phase_rad,
                    amplitude: r.amplitude,
                })
                .collect(),
            body_doppler_hz: sig.body_doppler_hz,
            duration_s: sig.duration_s,
            sample_rate_hz: sig.stft.sample_rate_hz,
            window_len: sig.stft.window_len,
            hop: sig.stft.hop,
            refine_iterations: DEFAULT_REFINE_ITERATIONS,
            f_if_hz: d.f_if_hz,
            alpha0: d.alpha0,
            peak_depth: d.peak_depth,
            probes: d
                .probes
                .iter()
                .map(|p| DirectionConfig {
                    theta_rad: p.theta(),
                    phi_rad: p.phi(),
                })
                .collect(),
            phases_rad: None,
        }
    }
}

/// Complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_carrier")]
    pub carrier_hz: f64,
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub pattern: PatternConfig,
    #[serde(default)]
    pub tx: TerminalConfig,
    #[serde(default)]
    pub rx: TerminalConfig,
    pub tx_paths: Vec<PathConfig>,
    pub rx_paths: Vec<PathConfig>,
    /// Transmit beam as `[re, im]` pairs; uniform when absent.
    #[serde(default)]
    pub tx_beam: Option<Vec<[f64; 2]>>,
    #[serde(default = "unit_envelope")]
    pub carrier_envelope: [f64; 2],
    #[serde(default)]
    pub modem: ModemConfig,
    #[serde(default)]
    pub diode: DiodeConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub precode: PrecodeConfig,
    #[serde(default)]
    pub ber_sweep: BerSweepSection,
    #[serde(default)]
    pub diversity_sweep: DiversitySection,
    #[serde(default)]
    pub two_stream: TwoStreamSection,
    #[serde(default)]
    pub sense: SenseConfig,
}

fn default_carrier() -> f64 {
    DEFAULT_CARRIER_HZ
}

fn unit_envelope() -> [f64; 2] {
    [1.0, 0.0]
}

/// Reads, fills and validates a config file.
pub fn parse_config(path: &Path) -> anyhow::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    Ok(parse_config_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?)
}

pub fn parse_config_str(text: &str) -> anyhow::Result<ScenarioConfig> {
    let mut cfg: ScenarioConfig = serde_json::from_str(text)?;
    cfg.resolve();
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    /// Built-in 4 x 4 surface with one path on each side.
    pub fn example() -> Self {
        let path = |theta_s: f64, phi_s: f64, gain_re: f64, gain_im: f64| PathConfig {
            gain_re,
            gain_im,
            delay_s: 0.0,
            surface: DirectionConfig {
                theta_rad: theta_s,
                phi_rad: phi_s,
            },
            terminal: DirectionConfig {
                theta_rad: 0.0,
                phi_rad: 0.0,
            },
        };
        let mut cfg = Self {
            seed: 0,
            carrier_hz: DEFAULT_CARRIER_HZ,
            geometry: GeometryConfig {
                rows: 4,
                cols: 4,
                spacing_m: None,
            },
            grid: GridConfig::default(),
            pattern: PatternConfig::default(),
            tx: TerminalConfig::default(),
            rx: TerminalConfig::default(),
            tx_paths: vec![path(0.35, 0.8, 1.0, 0.0)],
            rx_paths: vec![path(0.6, 3.3, 0.8, 0.3)],
            tx_beam: None,
            carrier_envelope: unit_envelope(),
            modem: ModemConfig::default(),
            diode: DiodeConfig::default(),
            noise: NoiseConfig::default(),
            simulate: SimulateConfig::default(),
            precode: PrecodeConfig::default(),
            ber_sweep: BerSweepSection::default(),
            diversity_sweep: DiversitySection::default(),
            two_stream: TwoStreamSection::default(),
            sense: SenseConfig::default(),
        };
        cfg.resolve();
        cfg
    }

    fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Replaces implicit defaults by explicit values so the emitted config is
    /// self-contained.
    pub fn resolve(&mut self) {
        if self.carrier_hz > 0.0 && self.carrier_hz.is_finite() {
            let half = self.wavelength_m() / 2.0;
            self.geometry.spacing_m.get_or_insert(half);
            self.tx.spacing_m.get_or_insert(half);
            self.rx.spacing_m.get_or_insert(half);
        }
    }

    pub fn validate(&self) -> Checked<()> {
        positive("carrier_hz", self.carrier_hz)?;
        at_least_one("geometry.rows", self.geometry.rows)?;
        at_least_one("geometry.cols", self.geometry.cols)?;
        positive("geometry.spacing_m", self.geometry.spacing_m.unwrap_or(f64::NAN))?;
        at_least_one("grid.cos_theta_samples", self.grid.cos_theta_samples)?;
        at_least_one("grid.phi_samples", self.grid.phi_samples)?;
        if let PatternConfig::Cosine { exponent } = self.pattern {
            non_negative("pattern.exponent", exponent)?;
        }
        for (name, t) in [("tx", &self.tx), ("rx", &self.rx)] {
            at_least_one(&format!("{name}.antennas"), t.antennas)?;
            positive(&format!("{name}.spacing_m"), t.spacing_m.unwrap_or(f64::NAN))?;
        }
        for (name, paths) in [("tx_paths", &self.tx_paths), ("rx_paths", &self.rx_paths)] {
            if paths.is_empty() {
                return Err(ConfigError::new(name, "at least one path required"));
            }
            for (i, p) in paths.iter().enumerate() {
                let field = format!("{name}[{i}]");
                if !(p.gain_re.is_finite() && p.gain_im.is_finite()) {
                    return Err(ConfigError::new(format!("{field}.gain_re"), "gain must be finite"));
                }
                non_negative(&format!("{field}.delay_s"), p.delay_s)?;
                p.surface.build(&format!("{field}.surface"))?;
                p.terminal.build(&format!("{field}.terminal"))?;
            }
        }
        if let Some(beam) = &self.tx_beam {
            if beam.len() != self.tx.antennas {
                return Err(ConfigError::new(
                    "tx_beam",
                    format!("has {} entries for {} antennas", beam.len(), self.tx.antennas),
                ));
            }
            let norm: f64 = beam.iter().map(|[re, im]| re * re + im * im).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(ConfigError::new("tx_beam", "must be a non-zero finite vector"));
            }
        }
        if !self.carrier_envelope.iter().all(|v| v.is_finite()) {
            return Err(ConfigError::new("carrier_envelope", "must be finite"));
        }
        self.modem.validate()?;
        DiodeModel::new(self.diode.saturation_current_a, self.diode.alpha_d_per_v, self.diode.v_bias_v)
            .map_err(under("diode"))?;
        non_negative("noise.sigma2", self.noise.sigma2)?;
        self.validate_experiments()
    }

    fn validate_experiments(&self) -> Checked<()> {
        let k = self.geometry.rows * self.geometry.cols;
        let s = &self.simulate;
        at_least_one("simulate.symbols", s.symbols)?;
        non_negative("simulate.alpha0", s.alpha0)?;
        non_negative("simulate.peak_depth", s.peak_depth)?;
        if let Some(p) = &s.phases_rad {
            if p.len() != k {
                return Err(ConfigError::new("simulate.phases_rad", format!("has {} entries for {k} elements", p.len())));
            }
        }
        for (i, p) in s.probes.iter().enumerate() {
            p.build(&format!("simulate.probes[{i}]"))?;
        }
        if self.precode.palette_rad.is_empty() {
            return Err(ConfigError::new("precode.palette_rad", "must not be empty"));
        }
        at_least_one("precode.random_draws", self.precode.random_draws)?;

        let b = &self.ber_sweep;
        if b.snr_db.is_empty() || !b.snr_db.iter().all(|v| v.is_finite()) {
            return Err(ConfigError::new("ber_sweep.snr_db", "need a non-empty list of finite values"));
        }
        qam_order("ber_sweep.order", b.order)?;
        at_least_one("ber_sweep.realizations", b.realizations)?;
        if b.max_bits < b.min_bits {
            return Err(ConfigError::new("ber_sweep.max_bits", "must be >= min_bits"));
        }
        non_negative("ber_sweep.noise_scale", b.noise_scale)?;
        if let BerChannelConfig::Rayleigh { elements, rx_antennas } = b.channel {
            at_least_one("ber_sweep.channel.elements", elements)?;
            at_least_one("ber_sweep.channel.rx_antennas", rx_antennas)?;
        }

        let d = &self.diversity_sweep;
        if d.elements.is_empty() || d.elements.contains(&0) {
            return Err(ConfigError::new("diversity_sweep.elements", "need a non-empty list of positive sizes"));
        }
        at_least_one("diversity_sweep.realizations", d.realizations)?;
        at_least_one("diversity_sweep.rx_antennas", d.rx_antennas)?;

        let t = &self.two_stream;
        if t.elements < 2 || t.elements % 2 != 0 {
            return Err(ConfigError::new("two_stream.elements", "must be even and at least 2"));
        }
        at_least_one("two_stream.rx_antennas", t.rx_antennas)?;
        qam_order("two_stream.orders[0]", t.orders[0])?;
        qam_order("two_stream.orders[1]", t.orders[1])?;
        if !t.snr_db.is_finite() {
            return Err(ConfigError::new("two_stream.snr_db", "must be finite"));
        }
        at_least_one("two_stream.symbols", t.symbols)?;
        at_least_one("two_stream.max_iter", t.max_iter)?;
        at_least_one("two_stream.trials", t.trials)?;
        positive("two_stream.tol", t.tol)?;
        non_negative("two_stream.alpha0", t.alpha0)?;
        non_negative("two_stream.peak_depth", t.peak_depth)?;

        let sig = self.signature_params();
        sig.validate().map_err(under("sense"))?;
        for (i, p) in self.sense.probes.iter().enumerate() {
            p.build(&format!("sense.probes[{i}]"))?;
        }
        if self.sense.probes.is_empty() {
            return Err(ConfigError::new("sense.probes", "at least one probe required"));
        }
        if let Some(p) = &self.sense.phases_rad {
            if p.len() != k {
                return Err(ConfigError::new("sense.phases_rad", format!("has {} entries for {k} elements", p.len())));
            }
        }
        Ok(())
    }

    pub fn scenario(&self) -> Checked<Scenario> {
        self.validate()?;
        let lambda = self.wavelength_m();
        let g = &self.geometry;
        let geometry = ArrayGeometry::new(g.rows, g.cols, g.spacing_m.unwrap_or(lambda / 2.0), lambda)
            .map_err(under("geometry"))?;
        let grid = DirectionGrid::hemisphere(self.grid.cos_theta_samples, self.grid.phi_samples).map_err(under("grid"))?;
        let pattern = match self.pattern {
            PatternConfig::Cosine { exponent } => ElementPattern::cosine(&grid, exponent).map_err(under("pattern"))?,
            PatternConfig::Isotropic => ElementPattern::isotropic(grid.len()),
        };
        let terminal = |t: &TerminalConfig, name: &str| {
            TerminalArray::ula(t.antennas, t.spacing_m.unwrap_or(lambda / 2.0), lambda).map_err(under(name))
        };
        let paths = |list: &[PathConfig], name: &str| -> Checked<Vec<PathComponent>> {
            list.iter()
                .enumerate()
                .map(|(i, p)| {
                    let field = format!("{name}[{i}]");
                    PathComponent::new(
                        Complex64::new(p.gain_re, p.gain_im),
                        p.delay_s,
                        p.surface.build(&field)?,
                        p.terminal.build(&field)?,
                    )
                    .map_err(|e| ConfigError::new(field.clone(), e.to_string()))
                })
                .collect()
        };
        let n_tx = self.tx.antennas;
        let tx_beam = match &self.tx_beam {
            Some(b) => {
                let v = DVector::from_iterator(n_tx, b.iter().map(|[re, im]| Complex64::new(*re, *im)));
                let n = v.norm();
                v / Complex64::new(n, 0.0)
            }
            None => DVector::from_element(n_tx, Complex64::new(1.0 / (n_tx as f64).sqrt(), 0.0)),
        };
        let scenario = Scenario {
            geometry,
            grid,
            pattern,
            carrier_hz: self.carrier_hz,
            tx: terminal(&self.tx, "tx")?,
            rx: terminal(&self.rx, "rx")?,
            tx_paths: paths(&self.tx_paths, "tx_paths")?,
            rx_paths: paths(&self.rx_paths, "rx_paths")?,
            tx_beam,
            carrier_envelope: Complex64::new(self.carrier_envelope[0], self.carrier_envelope[1]),
            modem: ModemSettings {
                if_params: self.modem.if_params(),
                pulse: self.modem.pulse.build(),
                order: self.modem.order,
                dac_bits: self.modem.dac_bits,
                full_scale: self.modem.full_scale,
            },
            diode: DiodeModel::new(self.diode.saturation_current_a, self.diode.alpha_d_per_v, self.diode.v_bias_v)
                .map_err(under("diode"))?,
            sigma2: self.noise.sigma2,
            seed: self.seed,
        };
        scenario.validate().map_err(under("scenario"))?;
        Ok(scenario)
    }

    pub fn ber_sweep_config(&self) -> BerSweepConfig {
        let b = &self.ber_sweep;
        BerSweepConfig {
            snr_db: b.snr_db.clone(),
            order: b.order,
            precoding: match b.precoding {
                PrecodingConfig::None => Precoding::None,
                PrecodingConfig::ClosedForm => Precoding::ClosedForm,
            },
            channel: match b.channel {
                BerChannelConfig::Awgn => BerChannel::Awgn,
                BerChannelConfig::Rayleigh { elements, rx_antennas } => BerChannel::Rayleigh { elements, rx_antennas },
            },
            realizations: b.realizations,
            min_bits: b.min_bits,
            target_errors: b.target_errors,
            max_bits: b.max_bits,
            noise_scale: b.noise_scale,
            seed: self.seed,
        }
    }

    pub fn diversity_config(&self) -> DiversityConfig {
        let d = &self.diversity_sweep;
        DiversityConfig {
            elements: d.elements.clone(),
            realizations: d.realizations,
            rx_antennas: d.rx_antennas,
            seed: self.seed,
        }
    }

    /// Two-stream experiment for one channel draw.
    pub fn two_stream_config(&self, seed: u64) -> TwoStreamConfig {
        let t = &self.two_stream;
        TwoStreamConfig {
            elements: t.elements,
            rx_antennas: t.rx_antennas,
            orders: t.orders,
            snr_db: t.snr_db,
            symbols: t.symbols,
            if_params: self.modem.if_params(),
            pulse: self.modem.pulse.build(),
            alpha0: t.alpha0,
            peak_depth: t.peak_depth,
            ao: AoOptions {
                init: AoInit::MultiStart { seed, starts: t.starts },
                tol: t.tol,
                max_iter: t.max_iter,
                ..AoOptions::default()
            },
            zero_cross: t.zero_cross,
            seed,
        }
    }

    pub fn signature_params(&self) -> SignatureParams {
        let s = &self.sense;
        SignatureParams {
            rotors: s
                .rotors
                .iter()
                .map(|r| Rotor {
                    rate_hz: r.rate_hz,
                    blades: r.blades,
                    max_doppler_hz: r.max_doppler_hz,
                    phase_rad: r.phase_rad,
                    amplitude: r.amplitude,
                })
                .collect(),
            body_doppler_hz: s.body_doppler_hz,
            duration_s: s.duration_s,
            stft: StftConfig::hann(s.window_len, s.hop, s.sample_rate_hz),
        }
    }

    pub fn spoofing_config(&self) -> Checked<SpoofingConfig> {
        let s = &self.sense;
        Ok(SpoofingConfig {
            signature: self.signature_params(),
            refine_iterations: s.refine_iterations,
            f_if_hz: s.f_if_hz,
            alpha0: s.alpha0,
            peak_depth: s.peak_depth,
            probes: s
                .probes
                .iter()
                .enumerate()
                .map(|(i, p)| p.build(&format!("sense.probes[{i}]")))
                .collect::<Checked<_>>()?,
            phases: s.phases_rad.clone(),
            seed: self.seed,
        })
    }

    pub fn simulate_probes(&self) -> Checked<Vec<Direction>> {
        self.simulate
            .probes
            .iter()
            .enumerate()
            .map(|(i, p)| p.build(&format!("simulate.probes[{i}]")))
            .collect()
    }

    /// Canonical JSON text of the effective configuration.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
