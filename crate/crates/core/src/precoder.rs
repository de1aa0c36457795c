//! Phase design: closed-form SVD alignment for one stream and alternating
//! Riemannian ascent for the two-stream sum SINR.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::wrap_angle;
use crate::seeds::rng_for;

pub const UNIT_TOL: f64 = 1e-12;
pub const EXHAUSTIVE_LIMIT: u128 = 10_000_000;

/// Default two-state hardware palette, radians.
pub fn default_palette() -> Vec<f64> {
    vec![170f64.to_radians(), (-25f64).to_radians()]
}

pub fn unit_phasors(angles: &[f64]) -> DVector<Complex64> {
    DVector::from_iterator(angles.len(), angles.iter().map(|&a| Complex64::from_polar(1.0, a)))
}

pub fn angles_of(phi: &DVector<Complex64>) -> Vec<f64> {
    phi.iter().map(|z| z.arg()).collect()
}

fn check_unit(phi: &DVector<Complex64>) -> Result<()> {
    for (i, z) in phi.iter().enumerate() {
        if (z.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("phase entry {i} has modulus {}", z.norm())));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSolution {
    /// One vector for a single stream, `[phi1, phi2]` for two streams.
    pub phases: Vec<DVector<Complex64>>,
    pub objective: f64,
    /// Objective after each outer iteration (AO) or a single value.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Upper bound `sigma_1^2 ||h_eff||^2` for closed-form solutions.
    pub bound: Option<f64>,
    pub palette: Option<Vec<f64>>,
}

/// `||H_o diag(phi) h_eff||^2`.
pub fn received_power(h_o: &DMatrix<Complex64>, phi: &DVector<Complex64>, h_eff: &DVector<Complex64>) -> f64 {
    (h_o * phi.component_mul(h_eff)).norm_squared()
}

/// Dominant right singular vector and singular value.
pub fn dominant_right_singular(h: &DMatrix<Complex64>) -> (f64, DVector<Complex64>) {
    let svd = h.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^H");
    let (idx, s) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |b, (i, &s)| if s > b.1 { (i, s) } else { b });
    (s, v_t.row(idx).adjoint())
}

/// Dominant left singular vector and singular value.
pub fn dominant_left_singular(h: &DMatrix<Complex64>) -> (f64, DVector<Complex64>) {
    let svd = h.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let (idx, s) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |b, (i, &s)| if s > b.1 { (i, s) } else { b });
    (s, u.column(idx).into_owned())
}

/// `phi_i = arg(v1_i) - arg(h_eff_i)`; zero channel entries get phase 0.
pub fn closed_form_phases(h_o: &DMatrix<Complex64>, h_eff: &DVector<Complex64>) -> Result<PhaseSolution> {
    if h_o.ncols() != h_eff.len() {
        return Err(Error::dim("closed_form_phases", h_o.ncols(), h_eff.len()));
    }
    if h_o.iter().all(|z| z.norm() == 0.0) || h_eff.iter().all(|z| z.norm() == 0.0) {
        return Err(Error::Degenerate("all-zero channel".into()));
    }
    let (s1, v1) = dominant_right_singular(h_o);
    let angles: Vec<f64> = v1
        .iter()
        .zip(h_eff.iter())
        .map(|(v, h)| if h.norm() == 0.0 { 0.0 } else { wrap_angle(v.arg() - h.arg()) })
        .collect();
    let phi = unit_phasors(&angles);
    let power = received_power(h_o, &phi, h_eff);
    Ok(PhaseSolution {
        phases: vec![phi],
        objective: power,
        trace: vec![power],
        iterations: 0,
        converged: true,
        bound: Some(s1 * s1 * h_eff.norm_squared()),
        palette: None,
    })
}

/// Scalar channels of the two-stream problem, each of length `K/2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStreamChannels {
    pub b1: DVector<Complex64>,
    pub b2: DVector<Complex64>,
    pub c1: DVector<Complex64>,
    pub c2: DVector<Complex64>,
    pub sigma2: f64,
}

impl TwoStreamChannels {
    pub fn new(
        b1: DVector<Complex64>,
        b2: DVector<Complex64>,
        c1: DVector<Complex64>,
        c2: DVector<Complex64>,
        sigma2: f64,
    ) -> Result<Self> {
        let n = b1.len();
        for (name, v) in [("b2", &b2), ("c1", &c1), ("c2", &c2)] {
            if v.len() != n {
                return Err(Error::Shape(format!("{name} has length {} but b1 has {n}", v.len())));
            }
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::param("sigma2", "must be > 0"));
        }
        Ok(Self { b1, b2, c1, c2, sigma2 })
    }

    /// Length of each stream's phase vector.
    pub fn half_len(&self) -> usize {
        self.b1.len()
    }

    /// Exchanges the roles of the two streams.
    pub fn swapped(&self) -> Self {
        Self {
            b1: self.c2.clone(),
            b2: self.c1.clone(),
            c1: self.b2.clone(),
            c2: self.b1.clone(),
            sigma2: self.sigma2,
        }
    }
}

fn bilinear(a: &DVector<Complex64>, phi: &DVector<Complex64>) -> Complex64 {
    a.iter().zip(phi.iter()).map(|(x, y)| x * y).sum()
}

/// `(SINR_1, SINR_2)`.
pub fn sinr_terms(phi1: &DVector<Complex64>, phi2: &DVector<Complex64>, ch: &TwoStreamChannels) -> Result<(f64, f64)> {
    if !(ch.sigma2 > 0.0) {
        return Err(Error::param("sigma2", "must be > 0"));
    }
    let n = ch.half_len();
    if phi1.len() != n || phi2.len() != n {
        return Err(Error::dim("sum_sinr phases", n, phi1.len().max(phi2.len())));
    }
    let s1 = bilinear(&ch.b1, phi1).norm_sqr() / (bilinear(&ch.b2, phi2).norm_sqr() + ch.sigma2);
    let s2 = bilinear(&ch.c2, phi2).norm_sqr() / (bilinear(&ch.c1, phi1).norm_sqr() + ch.sigma2);
    Ok((s1, s2))
}

pub fn sum_sinr(phi1: &DVector<Complex64>, phi2: &DVector<Complex64>, ch: &TwoStreamChannels) -> Result<f64> {
    let (a, b) = sinr_terms(phi1, phi2, ch)?;
    Ok(a + b)
}

/// `(2/C2) b1* b1^T phi1 - 2 C2' / (v + sigma^2)^2 c1* c1^T phi1` with
/// `C2 = |b2^T phi2|^2 + sigma^2`, `C2' = |c2^T phi2|^2`, `v = |c1^T phi1|^2`.
pub fn euclidean_gradient_phi1(
    phi1: &DVector<Complex64>,
    phi2: &DVector<Complex64>,
    ch: &TwoStreamChannels,
) -> DVector<Complex64> {
    let c2_big = bilinear(&ch.b2, phi2).norm_sqr() + ch.sigma2;
    let c2_prime = bilinear(&ch.c2, phi2).norm_sqr();
    let c1p = bilinear(&ch.c1, phi1);
    let v = c1p.norm_sqr();
    let b1p = bilinear(&ch.b1, phi1);
    let k = 2.0 * c2_prime / ((v + ch.sigma2) * (v + ch.sigma2));
    ch.b1.map(|b| b.conj() * b1p * (2.0 / c2_big)) - ch.c1.map(|c| c.conj() * c1p * k)
}

pub fn euclidean_gradient_phi2(
    phi1: &DVector<Complex64>,
    phi2: &DVector<Complex64>,
    ch: &TwoStreamChannels,
) -> DVector<Complex64> {
    euclidean_gradient_phi1(phi2, phi1, &ch.swapped())
}

/// Tangent-space projection `g - Re{g o phi*} o phi`.
pub fn riemannian_project(grad: &DVector<Complex64>, phi: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    if grad.len() != phi.len() {
        return Err(Error::dim("riemannian_project", phi.len(), grad.len()));
    }
    check_unit(phi)?;
    Ok(DVector::from_iterator(
        grad.len(),
        grad.iter().zip(phi.iter()).map(|(g, p)| g - p * (g * p.conj()).re),
    ))
}

/// Elementwise normalization back onto the unit circle.
pub fn retract(phi: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    for (i, z) in phi.iter().enumerate() {
        if z.norm() == 0.0 || !z.norm().is_finite() {
            return Err(Error::Retraction { index: i });
        }
    }
    Ok(phi.map(|z| z / z.norm()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum AoInit {
    /// Phases uniform on `[0, 2 pi)`.
    Random(u64),
    /// Each stream aligned to its own desired channel.
    ClosedForm,
    Given(DVector<Complex64>, DVector<Complex64>),
    /// Each stream maximizes its signal-to-leakage ratio on its own.
    Leakage,
    /// Closed-form and leakage starts plus `starts` random starts; the
    /// best result is kept.
    MultiStart { seed: u64, starts: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AoOptions {
    pub init: AoInit,
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for AoOptions {
    fn default() -> Self {
        Self {
            init: AoInit::Random(0),
            tol: 1e-6,
            max_iter: 500,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

fn align_to(a: &DVector<Complex64>) -> DVector<Complex64> {
    a.map(|z| if z.norm() == 0.0 { Complex64::new(1.0, 0.0) } else { z.conj() / z.norm() })
}

/// Maximizes `|a^T phi|^2 / (|b^T phi|^2 + s)` from the aligned start.
fn leakage_ascent(a: &DVector<Complex64>, b: &DVector<Complex64>, s: f64, opts: &AoOptions) -> Result<DVector<Complex64>> {
    let eval = |phi: &DVector<Complex64>| bilinear(a, phi).norm_sqr() / (bilinear(b, phi).norm_sqr() + s);
    let mut phi = align_to(a);
    let mut f = eval(&phi);
    let mut step = 0.5;
    for _ in 0..opts.max_iter {
        let (ap, bp) = (bilinear(a, &phi), bilinear(b, &phi));
        let d = bp.norm_sqr() + s;
        let grad = a.map(|x| x.conj() * ap * (2.0 / d)) - b.map(|x| x.conj() * bp * (2.0 * ap.norm_sqr() / (d * d)));
        let before = f;
        (phi, f) = ascent_step(&phi, f, grad, eval, opts, &mut step)?;
        if f - before <= opts.tol * before.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(phi)
}

fn random_unit(n: usize, rng: &mut impl Rng) -> DVector<Complex64> {
    DVector::from_iterator(n, (0..n).map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..TAU))))
}

/// One Armijo-backtracked ascent step on the circle manifold.
fn ascent_step(
    phi: &DVector<Complex64>,
    value: f64,
    grad: DVector<Complex64>,
    eval: impl Fn(&DVector<Complex64>) -> f64,
    opts: &AoOptions,
    step: &mut f64,
) -> Result<(DVector<Complex64>, f64)> {
    let g = riemannian_project(&grad, phi)?;
    debug_assert!(g.iter().zip(phi.iter()).all(|(t, p)| (t * p.conj()).re.abs() < 1e-8 * (1.0 + t.norm())));
    let gnorm2 = g.norm_squared();
    if gnorm2 == 0.0 || !gnorm2.is_finite() {
        return Ok((phi.clone(), value));
    }
    let mut eta = *step * 2.0;
    for _ in 0..opts.max_backtracks {
        if let Ok(cand) = retract(&(phi + &g * Complex64::new(eta, 0.0))) {
            let f = eval(&cand);
            if f >= value + opts.armijo * eta * gnorm2 {
                *step = eta;
                return Ok((cand, f));
            }
        }
        eta *= 0.5;
    }
    Ok((phi.clone(), value))
}

fn ao_from(
    ch: &TwoStreamChannels,
    mut phi1: DVector<Complex64>,
    mut phi2: DVector<Complex64>,
    opts: &AoOptions,
) -> Result<PhaseSolution> {
    check_unit(&phi1)?;
    check_unit(&phi2)?;
    let mut f = sum_sinr(&phi1, &phi2, ch)?;
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    let (mut step1, mut step2) = (0.5, 0.5);
    while iterations < opts.max_iter {
        iterations += 1;
        let before = f;
        let g1 = euclidean_gradient_phi1(&phi1, &phi2, ch);
        let (p1, f1) = ascent_step(&phi1, f, g1, |p| sum_sinr(p, &phi2, ch).unwrap_or(f64::MIN), opts, &mut step1)?;
        phi1 = p1;
        let g2 = euclidean_gradient_phi2(&phi1, &phi2, ch);
        let (p2, f2) = ascent_step(&phi2, f1, g2, |p| sum_sinr(&phi1, p, ch).unwrap_or(f64::MIN), opts, &mut step2)?;
        phi2 = p2;
        f = f2;
        trace.push(f);
        if (f - before) <= opts.tol * before.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    Ok(PhaseSolution {
        phases: vec![phi1, phi2],
        objective: f,
        trace,
        iterations,
        converged,
        bound: None,
        palette: None,
    })
}

/// Alternating optimization of `phi1` and `phi2` for the sum SINR.
pub fn alternating_optimize(ch: &TwoStreamChannels, opts: &AoOptions) -> Result<PhaseSolution> {
    let n = ch.half_len();
    match &opts.init {
        AoInit::Random(seed) => {
            let mut rng = rng_for(*seed, &[]);
            let p1 = random_unit(n, &mut rng);
            let p2 = random_unit(n, &mut rng);
            ao_from(ch, p1, p2, opts)
        }
        AoInit::ClosedForm => ao_from(ch, align_to(&ch.b1), align_to(&ch.c2), opts),
        AoInit::Leakage => ao_from(
            ch,
            leakage_ascent(&ch.b1, &ch.c1, ch.sigma2, opts)?,
            leakage_ascent(&ch.c2, &ch.b2, ch.sigma2, opts)?,
            opts,
        ),
        AoInit::Given(p1, p2) => {
            if p1.len() != n || p2.len() != n {
                return Err(Error::dim("alternating_optimize init", n, p1.len().max(p2.len())));
            }
            ao_from(ch, p1.clone(), p2.clone(), opts)
        }
        AoInit::MultiStart { seed, starts } => {
            let mut best = ao_from(ch, align_to(&ch.b1), align_to(&ch.c2), opts)?;
            let nulled = alternating_optimize(
                ch,
                &AoOptions {
                    init: AoInit::Leakage,
                    ..opts.clone()
                },
            )?;
            if nulled.objective > best.objective {
                best = nulled;
            }
            for s in 0..*starts {
                let mut rng = rng_for(*seed, &[s as u64]);
                let p1 = random_unit(n, &mut rng);
                let p2 = random_unit(n, &mut rng);
                let cand = ao_from(ch, p1, p2, opts)?;
                if cand.objective > best.objective {
                    best = cand;
                }
            }
            Ok(best)
        }
    }
}

/// Objective used to re-score quantized phases.
#[derive(Debug, Clone)]
pub enum PhaseObjective {
    ReceivedPower {
        h_o: DMatrix<Complex64>,
        h_eff: DVector<Complex64>,
    },
    SumSinr(TwoStreamChannels),
}

impl PhaseObjective {
    pub fn evaluate(&self, phases: &[DVector<Complex64>]) -> Result<f64> {
        match (self, phases) {
            (PhaseObjective::ReceivedPower { h_o, h_eff }, [phi]) => {
                if phi.len() != h_eff.len() {
                    return Err(Error::dim("received power phases", h_eff.len(), phi.len()));
                }
                Ok(received_power(h_o, phi, h_eff))
            }
            (PhaseObjective::SumSinr(ch), [p1, p2]) => sum_sinr(p1, p2, ch),
            _ => Err(Error::Shape(format!("objective does not accept {} phase vectors", phases.len()))),
        }
    }
}

/// Index of the palette angle nearest to `angle`; ties go to the lower index.
pub fn nearest_palette_index(angle: f64, palette: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &p) in palette.iter().enumerate() {
        let d = wrap_angle(angle - p).abs();
        if d < best_d - 1e-12 {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Snaps every phase to the nearest palette angle and re-scores it.
pub fn quantize_phases(solution: &PhaseSolution, palette: &[f64], objective: &PhaseObjective) -> Result<PhaseSolution> {
    if palette.is_empty() {
        return Err(Error::param("palette", "must not be empty"));
    }
    let phases: Vec<DVector<Complex64>> = solution
        .phases
        .iter()
        .map(|phi| phi.map(|z| Complex64::from_polar(1.0, palette[nearest_palette_index(z.arg(), palette)])))
        .collect();
    let value = objective.evaluate(&phases)?;
    Ok(PhaseSolution {
        phases,
        objective: value,
        trace: vec![value],
        iterations: solution.iterations,
        converged: solution.converged,
        bound: solution.bound,
        palette: Some(palette.to_vec()),
    })
}

/// Best point of a `levels^k` grid of phases `2 pi l / levels`.
pub fn exhaustive_phase_oracle(objective: impl Fn(&[f64]) -> f64, k: usize, levels: usize) -> Result<(Vec<f64>, f64)> {
    if k == 0 || levels == 0 {
        return Err(Error::param("exhaustive", "k and levels must be positive"));
    }
    let total = (levels as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if total > EXHAUSTIVE_LIMIT {
        return Err(Error::Budget {
            evaluations: total,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let grid: Vec<f64> = (0..levels).map(|l| TAU * l as f64 / levels as f64).collect();
    let mut idx = vec![0usize; k];
    let mut angles = vec![0.0; k];
    let mut best = (angles.clone(), f64::NEG_INFINITY);
    loop {
        for (a, &i) in angles.iter_mut().zip(&idx) {
            *a = grid[i];
        }
        let v = objective(&angles);
        if v > best.1 {
            best = (angles.clone(), v);
        }
        let mut pos = 0;
        loop {
            if pos == k {
                return Ok(best);
            }
            idx[pos] += 1;
            if idx[pos] < levels {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}
