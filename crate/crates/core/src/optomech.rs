//! Single-photon optomechanics mapped onto the weak measurement machinery.
//!
//! The photon lives in the three-level space `{|u⟩, |ψ⟩, |d⟩}` (carrier
//! shifted up by Ω, the carrier itself, carrier shifted down by Ω), which
//! carries spin-1 ladder operators. The mirror is the pointer. Everywhere in
//! this module the coupling `g` is the effective one, `γ = 2 g0 / Ω`.

use std::f64::consts::{FRAC_PI_2, SQRT_2};

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{
    anticommutator, basis_ket, build_oscillator, coherent_cutoff, coherent_ket, commutator, expectation,
    thermal_cutoff, ComplexMatrix, DensityOperator, Ket, Quadrature, State, THERMAL_TAIL,
};
use crate::weakmeas::{evolve_joint, ConditionalResult, Order, PointerSpec, Postselected, SystemSpec};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Index of `|u⟩` (m = +1) in the photon basis.
pub const UP: usize = 0;
/// Index of the carrier `|ψ⟩` (m = 0).
pub const CENTER: usize = 1;
/// Index of `|d⟩` (m = −1).
pub const DOWN: usize = 2;

/// Cavity frequency used when none is given, in units of Ω.
pub const DEFAULT_CAVITY_OVER_OMEGA: f64 = 1e3;

/// Minimum ratio demanded of every regime margin.
pub const REGIME_MARGIN: f64 = 10.0;

/// δ_min = FIGURE_DELTA_FACTOR · γ√N for the amplification curves.
pub const FIGURE_DELTA_FACTOR: f64 = 100.0;

/// Number of δ samples per amplification curve.
pub const FIGURE_POINTS: usize = 200;

/// Upper end of every amplification curve.
pub const FIGURE_DELTA_MAX: f64 = 0.99;

/// Which coupling normalises the amplification factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CouplingConvention {
    /// `γ = 2 g0 / Ω`, the coupling of the effective evolution operator.
    #[default]
    Redefined,
    /// `g0 / Ω`.
    Bare,
}

/// Physical parameters, all angular frequencies in rad/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub omega: f64,
    pub g0: f64,
    pub gamma_cav: f64,
    pub epsilon: f64,
    pub omega_cav: f64,
    pub omega0: f64,
    pub convention: CouplingConvention,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::new(1e6, 5e2)
    }
}

impl ExperimentConfig {
    /// Resolved-sideband defaults: Γ = Ω/100, ε = Γ/100, ω_cav = 10³Ω and the
    /// carrier placed at `ω_cav − g0²/Ω`.
    pub fn new(omega: f64, g0: f64) -> Self {
        let gamma_cav = omega / 100.0;
        let omega_cav = DEFAULT_CAVITY_OVER_OMEGA * omega;
        ExperimentConfig {
            omega,
            g0,
            gamma_cav,
            epsilon: gamma_cav / 100.0,
            omega_cav,
            omega0: omega_cav - g0 * g0 / omega,
            convention: CouplingConvention::Redefined,
        }
    }

    pub fn with_cavity(mut self, gamma_cav: f64, epsilon: f64) -> Self {
        self.gamma_cav = gamma_cav;
        self.epsilon = epsilon;
        self
    }

    pub fn with_carrier(mut self, omega0: f64) -> Self {
        self.omega0 = omega0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("omega", self.omega), ("gamma_cav", self.gamma_cav), ("epsilon", self.epsilon)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.g0 >= 0.0 && self.g0.is_finite()) {
            return Err(Error::InvalidParameter(format!("g0 must be non-negative, got {}", self.g0)));
        }
        Ok(())
    }

    /// γ = 2 g0 / Ω
    pub fn gamma_eff(&self) -> f64 {
        2.0 * self.g0 / self.omega
    }

    /// g0 / Ω, the displacement of the mirror equilibrium per photon.
    pub fn scaled_coupling(&self) -> f64 {
        self.g0 / self.omega
    }

    /// Radiation-pressure shift of the cavity resonance, `−g0²/Ω`.
    pub fn detuning(&self) -> f64 {
        -self.g0 * self.g0 / self.omega
    }

    pub fn normalizing_coupling(&self) -> f64 {
        match self.convention {
            CouplingConvention::Redefined => self.gamma_eff(),
            CouplingConvention::Bare => self.scaled_coupling(),
        }
    }
}

/// Interferometer setting `|φ⟩ = δe^{iθ}|ψ⟩ − i√(1−δ²)|d⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PostselectionSpec {
    pub delta: f64,
    pub theta: f64,
}

impl PostselectionSpec {
    pub fn new(delta: f64, theta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
        }
        if !theta.is_finite() {
            return Err(Error::InvalidParameter(format!("theta must be finite, got {theta}")));
        }
        Ok(PostselectionSpec { delta, theta })
    }

    /// `√((1−δ²)/2)`
    fn dark_weight(&self) -> f64 {
        ((1.0 - self.delta * self.delta) / 2.0).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MirrorState {
    Thermal { mean: f64 },
    Coherent { mean: f64, phase: f64 },
    Fock { n: usize },
}

impl MirrorState {
    pub fn mean_phonons(&self) -> f64 {
        match *self {
            MirrorState::Thermal { mean } | MirrorState::Coherent { mean, .. } => mean,
            MirrorState::Fock { n } => n as f64,
        }
    }

    /// Coherent amplitude `√N e^{iβ}`; zero for the phase-less states.
    pub fn alpha(&self) -> C64 {
        match *self {
            MirrorState::Coherent { mean, phase } => C64::from_polar(mean.sqrt(), phase),
            _ => C64::new(0.0, 0.0),
        }
    }

    pub fn cutoff(&self) -> usize {
        match *self {
            MirrorState::Thermal { mean } => thermal_cutoff(mean, THERMAL_TAIL),
            MirrorState::Coherent { mean, .. } => coherent_cutoff(mean),
            MirrorState::Fock { n } => n + 20,
        }
    }

    pub fn state(&self, cutoff: usize) -> Result<State> {
        if let MirrorState::Thermal { mean } | MirrorState::Coherent { mean, .. } = *self {
            if !(mean >= 0.0 && mean.is_finite()) {
                return Err(Error::InvalidParameter(format!("mean phonon number must be >= 0, got {mean}")));
            }
        }
        Ok(match *self {
            MirrorState::Thermal { mean } if mean > 0.0 => State::Mixed(DensityOperator::thermal(mean, cutoff)),
            MirrorState::Thermal { .. } => State::Pure(basis_ket(cutoff, 0)),
            MirrorState::Coherent { .. } => State::Pure(coherent_ket(self.alpha(), cutoff)),
            MirrorState::Fock { n } => {
                if n >= cutoff {
                    return Err(Error::InvalidDimension(format!("Fock index {n} outside cutoff {cutoff}")));
                }
                State::Pure(basis_ket(cutoff, n))
            }
        })
    }

    pub fn pointer(&self, omega: f64) -> Result<PointerSpec> {
        let cutoff = self.cutoff();
        PointerSpec::new(build_oscillator(cutoff)?, self.state(cutoff)?, omega)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Thermal,
    Coherent,
}

impl std::str::FromStr for StateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thermal" => Ok(StateKind::Thermal),
            "coherent" => Ok(StateKind::Coherent),
            other => Err(Error::InvalidParameter(format!("unknown state kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AmplificationPoint {
    pub ps_probability: f64,
    pub f: f64,
    pub delta: f64,
    pub regime_ok: bool,
}

/// Second-order coefficients of the postselected numerator `⟨P_φ⊗M⟩_f`.
///
/// `c0`, `c1`, `c2` are the usual three; `c2_carrier = −⟨{M(t), c†c + ½}⟩`
/// is the second-order amplitude left on the carrier, which enters as
/// `g²δ² c2_carrier` and is dropped by the three-term form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExpansionCoefficients {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c2_carrier: f64,
}

impl ExpansionCoefficients {
    /// `δ²c0 − gδ√((1−δ²)/2)c1 + g²((1−δ²)/2)c2`
    pub fn numerator_three_term(&self, g: f64, ps: &PostselectionSpec) -> f64 {
        let d = ps.delta;
        let w = ps.dark_weight();
        d * d * self.c0 - g * d * w * self.c1 + g * g * w * w * self.c2
    }

    /// Full second-order numerator, including the carrier term.
    pub fn numerator(&self, g: f64, ps: &PostselectionSpec) -> f64 {
        self.numerator_three_term(g, ps) + g * g * ps.delta * ps.delta * self.c2_carrier
    }
}

/// Spin-1 photon space with `ρ_S = |ψ⟩⟨ψ|`.
pub fn build_tri_mode() -> SystemSpec {
    let r = SQRT_2;
    let mut jplus = ComplexMatrix::zeros(3, 3);
    jplus[(UP, CENTER)] = C64::from(r);
    jplus[(CENTER, DOWN)] = C64::from(r);
    let jminus = jplus.adjoint();
    let jx = (&jplus + &jminus) * C64::from(0.5);
    let jy = (&jplus - &jminus) / (2.0 * I);
    SystemSpec::new(jx, jy, State::Pure(basis_ket(3, CENTER))).expect("3x3 spin-1 operators")
}

pub fn postselection_ket(spec: &PostselectionSpec) -> Ket {
    let mut v = Ket::zeros(3);
    v[CENTER] = C64::from_polar(spec.delta, spec.theta);
    v[DOWN] = -I * (1.0 - spec.delta * spec.delta).sqrt();
    v
}

/// `√((1−δ²)/2)/δ`, the common modulus of both weak values.
pub fn weak_value_modulus(delta: f64) -> f64 {
    ((1.0 - delta * delta) / 2.0).sqrt() / delta
}

fn oscillation(ps: &PostselectionSpec, omega: f64, t: f64, which: Quadrature) -> f64 {
    let phase = omega * t - ps.theta;
    match which {
        Quadrature::X => phase.sin(),
        Quadrature::Y => phase.cos(),
    }
}

/// First-order conditional quadrature for a thermal mirror:
/// `2(1+N)(γ/δ)√((1−δ²)/2)·{sin, cos}(Ωt − θ)`.
pub fn thermal_prediction(
    cfg: &ExperimentConfig,
    ps: &PostselectionSpec,
    mean: f64,
    t: f64,
    which: Quadrature,
) -> f64 {
    2.0 * (1.0 + mean) * cfg.gamma_eff() * weak_value_modulus(ps.delta) * oscillation(ps, cfg.omega, t, which)
}

/// Free quadrature mean of the coherent state `√N e^{iβ}` at time t.
pub fn coherent_free_quadrature(mean: f64, beta: f64, omega: f64, t: f64, which: Quadrature) -> f64 {
    let alpha = C64::from_polar(mean.sqrt(), beta);
    let (c, s) = ((omega * t).cos(), (omega * t).sin());
    match which {
        Quadrature::X => SQRT_2 * (c * alpha.re + s * alpha.im),
        Quadrature::Y => SQRT_2 * (c * alpha.im - s * alpha.re),
    }
}

/// First-order conditional quadrature for a coherent mirror.
pub fn coherent_prediction(
    cfg: &ExperimentConfig,
    ps: &PostselectionSpec,
    mean: f64,
    beta: f64,
    t: f64,
    which: Quadrature,
) -> f64 {
    coherent_free_quadrature(mean, beta, cfg.omega, t, which)
        + 2.0 * cfg.gamma_eff() * weak_value_modulus(ps.delta) * oscillation(ps, cfg.omega, t, which)
}

/// First-order prediction for any mirror state. A Fock state behaves like a
/// thermal one with `N = n` at this order.
pub fn first_order_prediction(
    cfg: &ExperimentConfig,
    mirror: &MirrorState,
    ps: &PostselectionSpec,
    t: f64,
    which: Quadrature,
) -> f64 {
    match *mirror {
        MirrorState::Thermal { mean } => thermal_prediction(cfg, ps, mean, t, which),
        MirrorState::Fock { n } => thermal_prediction(cfg, ps, n as f64, t, which),
        MirrorState::Coherent { mean, phase } => coherent_prediction(cfg, ps, mean, phase, t, which),
    }
}

/// Postselection probability for a coherent mirror `√N e^{iβ}`, to first order.
pub fn coherent_ps_probability(g: f64, ps: &PostselectionSpec, mean: f64, beta: f64) -> f64 {
    let d = ps.delta;
    d * d - 2.0 * g * d * (1.0 - d * d).sqrt() * mean.sqrt() * (ps.theta - beta).sin()
}

pub fn amplification_factor(kind: StateKind, mean: f64, delta: f64) -> f64 {
    let base = 2.0 * weak_value_modulus(delta);
    match kind {
        StateKind::Thermal => (1.0 + mean) * base,
        StateKind::Coherent => base,
    }
}

/// δ_min = 100·γ√N. Zero phonons fall back to √1 so the curve has a start.
pub fn delta_min(cfg: &ExperimentConfig, mean: f64) -> f64 {
    FIGURE_DELTA_FACTOR * cfg.gamma_eff() * mean.max(1.0).sqrt()
}

/// 200 log-spaced δ from δ_min to 0.99.
pub fn default_delta_grid(cfg: &ExperimentConfig, mean: f64) -> Result<Vec<f64>> {
    let lo = delta_min(cfg, mean);
    if !(lo > 0.0 && lo < FIGURE_DELTA_MAX) {
        return Err(Error::InvalidParameter(format!(
            "delta_min = {lo:.4} leaves no room below {FIGURE_DELTA_MAX} for N = {mean}"
        )));
    }
    let (a, b) = (lo.ln(), FIGURE_DELTA_MAX.ln());
    let n = FIGURE_POINTS;
    Ok((0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect())
}

/// Amplification factor and postselection probability along a δ grid. The
/// coherent phase is set to `β = θ + π/2`, which maximises the probability.
pub fn amplification_curve(
    cfg: &ExperimentConfig,
    mean: f64,
    kind: StateKind,
    delta_grid: &[f64],
) -> Result<Vec<AmplificationPoint>> {
    if delta_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let g = cfg.gamma_eff();
    let scale = g / cfg.normalizing_coupling();
    let d_min = delta_min(cfg, mean);
    delta_grid
        .iter()
        .map(|&delta| {
            let ps = PostselectionSpec::new(delta, 0.0)?;
            let ps_probability = match kind {
                StateKind::Thermal => delta * delta,
                StateKind::Coherent => coherent_ps_probability(g, &ps, mean, ps.theta + FRAC_PI_2),
            };
            Ok(AmplificationPoint {
                ps_probability,
                f: scale * amplification_factor(kind, mean, delta),
                delta,
                regime_ok: delta >= d_min * (1.0 - 1e-12),
            })
        })
        .collect()
}

/// Evaluates the second-order coefficients on the pointer state.
pub fn expansion_coefficients(
    ptr: &PointerSpec,
    ps: &PostselectionSpec,
    m: &ComplexMatrix,
    t: f64,
) -> Result<ExpansionCoefficients> {
    let dev = crate::hilbert::hermitian_deviation(m);
    if dev > 1e-10 {
        return Err(Error::NotHermitian(dev));
    }
    let osc = &ptr.oscillator;
    let (x, y) = (&osc.x, &osc.y);
    let mt = ptr.rotated(m, t);
    let e = |op: &ComplexMatrix| expectation(op, &ptr.state);
    let (s, c) = (ps.theta.sin(), ps.theta.cos());

    let c0 = e(&mt)?;
    let c1 = e(&anticommutator(x, &mt))? * s + I * e(&commutator(x, &mt))? * c - e(&anticommutator(y, &mt))? * c
        + I * e(&commutator(y, &mt))? * s;
    let c2 = e(&(x * &mt * x))? + e(&(y * &mt * y))? + C64::from(2.0 * e(&(x * &mt * y))?.im);
    let half_sum = (&osc.number + &osc.annihilation * &osc.creation) * C64::from(0.5);
    let carrier = -e(&anticommutator(&mt, &half_sum))?;
    Ok(ExpansionCoefficients { c0: c0.re, c1: c1.re, c2: c2.re, c2_carrier: carrier.re })
}

/// Margins of the validity conditions (each should be ≥ 10).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegimeReport {
    /// Ω / Γ
    pub sideband_margin: f64,
    pub sideband_ok: bool,
    /// 1 / (γ² N)
    pub weak_coupling_margin: f64,
    pub weak_coupling_ok: bool,
    /// ω0 − (ω_cav − g0²/Ω)
    pub carrier_offset: f64,
    /// (g0²/Ω) / |carrier offset|
    pub carrier_margin: f64,
    pub carrier_ok: bool,
    /// Γ / ε
    pub monochromatic_margin: f64,
    pub monochromatic_ok: bool,
    /// δ / (γ√N)
    pub postselection_margin: f64,
    pub postselection_ok: bool,
    /// δ ≥ 100·γ√N
    pub figure_convention_ok: bool,
    pub regime_ok: bool,
}

fn safe_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            f64::INFINITY
        } else {
            num.signum() * f64::INFINITY
        }
    } else {
        num / den
    }
}

pub fn regime_report(cfg: &ExperimentConfig, mean: f64, delta: f64) -> RegimeReport {
    let g = cfg.gamma_eff();
    let sideband_margin = cfg.omega / cfg.gamma_cav;
    let weak_coupling_margin = safe_ratio(1.0, g * g * mean);
    let carrier_offset = cfg.omega0 - (cfg.omega_cav + cfg.detuning());
    let carrier_margin = if carrier_offset == 0.0 { f64::INFINITY } else { cfg.detuning().abs() / carrier_offset.abs() };
    let monochromatic_margin = cfg.gamma_cav / cfg.epsilon;
    let postselection_margin = safe_ratio(delta, g * mean.sqrt());
    let ok = |m: f64| m >= REGIME_MARGIN;
    let flags = [
        ok(sideband_margin),
        ok(weak_coupling_margin),
        ok(carrier_margin),
        ok(monochromatic_margin),
        ok(postselection_margin),
    ];
    RegimeReport {
        sideband_margin,
        sideband_ok: flags[0],
        weak_coupling_margin,
        weak_coupling_ok: flags[1],
        carrier_offset,
        carrier_margin,
        carrier_ok: flags[2],
        monochromatic_margin,
        monochromatic_ok: flags[3],
        postselection_margin,
        postselection_ok: flags[4],
        figure_convention_ok: delta >= FIGURE_DELTA_FACTOR * g * mean.sqrt(),
        regime_ok: flags.iter().all(|&f| f),
    }
}

/// `A sin(Ωt − φ) + offset`, fitted by least squares.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OscillationFit {
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
}

pub fn fit_oscillation(times: &[f64], values: &[f64], omega: f64) -> Result<OscillationFit> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: values.len() });
    }
    if times.len() < 3 {
        return Err(Error::InvalidParameter("need at least three samples to fit an oscillation".into()));
    }
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for (&t, &v) in times.iter().zip(values) {
        let row = Vector3::new((omega * t).sin(), (omega * t).cos(), 1.0);
        normal += row * row.transpose();
        rhs += row * v;
    }
    let sol = normal
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParameter("time samples do not resolve the oscillation".into()))?;
    let (a, b) = (sol[0], sol[1]);
    Ok(OscillationFit { amplitude: a.hypot(b), phase: (-b).atan2(a), offset: sol[2] })
}

/// Exact kick of the mirror by the photon, evaluated once and reused for any
/// postselection setting, quadrature and observation time.
#[derive(Clone, Debug)]
pub struct ExactSimulation {
    pub config: ExperimentConfig,
    pub mirror: MirrorState,
    pub pointer: PointerSpec,
    evolved: crate::weakmeas::EvolvedState,
}

impl ExactSimulation {
    pub fn new(cfg: &ExperimentConfig, mirror: &MirrorState) -> Result<Self> {
        cfg.validate()?;
        let pointer = mirror.pointer(cfg.omega)?;
        let sys = build_tri_mode();
        let evolved = evolve_joint(cfg.gamma_eff(), &sys, &pointer)?;
        Ok(ExactSimulation { config: *cfg, mirror: *mirror, pointer, evolved })
    }

    pub fn postselected(&self, ps: &PostselectionSpec) -> Postselected {
        self.evolved.postselect(&postselection_ket(ps))
    }

    pub fn ps_probability(&self, ps: &PostselectionSpec) -> f64 {
        self.postselected(ps).probability()
    }

    /// Exact numerator `⟨P_φ ⊗ M(t)⟩_f` for an arbitrary mirror observable.
    pub fn numerator(&self, ps: &PostselectionSpec, m: &ComplexMatrix, t: f64) -> f64 {
        self.postselected(ps).numerator(&self.pointer.rotated(m, t))
    }

    /// Exact `E(X|f)` or `E(Y|f)` at each time.
    pub fn conditional_quadrature(
        &self,
        ps: &PostselectionSpec,
        which: Quadrature,
        times: &[f64],
    ) -> Result<Vec<ConditionalResult>> {
        let post = self.postselected(ps);
        let p = post.probability();
        if p <= crate::weakmeas::MIN_EXACT_PROBABILITY {
            return Err(Error::DegeneratePostselection(p));
        }
        let osc = &self.pointer.oscillator;
        let ex = post.numerator(&osc.x) / p;
        let ey = post.numerator(&osc.y) / p;
        Ok(times
            .iter()
            .map(|&t| {
                let (c, s) = ((self.config.omega * t).cos(), (self.config.omega * t).sin());
                let expectation = match which {
                    Quadrature::X => c * ex + s * ey,
                    Quadrature::Y => c * ey - s * ex,
                };
                ConditionalResult { expectation, ps_probability: p, order: Order::Exact, regime_ok: true }
            })
            .collect())
    }
}

/// `n` evenly spaced times covering one mechanical period, starting at 0.
pub fn period_times(omega: f64, n: usize) -> Vec<f64> {
    let period = 2.0 * std::f64::consts::PI / omega;
    (0..n).map(|i| period * i as f64 / n as f64).collect()
}
