//! Weak measurement of a spin-like system by an oscillator pointer through the
//! impulsive coupling `U = exp[−ig(Jx⊗Y + Jy⊗X)]`, with and without
//! postselection on a rank-one projector.
//!
//! First-order formulas and the exact (all-orders) evaluation live side by
//! side; the exact route is the oracle for the first-order one.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{
    anticommutator, commutator, expectation, hermitian_deviation, heisenberg_rotate, kron, kron_ket, projector,
    ComplexMatrix, DensityOperator, Ket, State, TruncatedOscillator, SERIES_TOL,
};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Smallest postselection probability the exact conditional expectation accepts.
pub const MIN_EXACT_PROBABILITY: f64 = 1e-12;

/// Spin operators of the measured system and its initial state.
#[derive(Clone, Debug)]
pub struct SystemSpec {
    pub jx: ComplexMatrix,
    pub jy: ComplexMatrix,
    pub jz: ComplexMatrix,
    pub jplus: ComplexMatrix,
    pub jminus: ComplexMatrix,
    pub jsq: ComplexMatrix,
    pub state: State,
}

impl SystemSpec {
    /// Derives `Jz = −i[Jx, Jy]`, the ladder operators and `J²` from `Jx`, `Jy`.
    pub fn new(jx: ComplexMatrix, jy: ComplexMatrix, state: State) -> Result<Self> {
        let dim = jx.nrows();
        if jy.nrows() != dim || state.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: jy.nrows().max(state.dim()) });
        }
        let jz = commutator(&jx, &jy) * (-I);
        let jplus = &jx + &jy * I;
        let jminus = &jx - &jy * I;
        let jsq = &jx * &jx + &jy * &jy + &jz * &jz;
        Ok(SystemSpec { jx, jy, jz, jplus, jminus, jsq, state })
    }

    pub fn dim(&self) -> usize {
        self.jx.nrows()
    }

    pub fn with_state(&self, state: State) -> Result<Self> {
        if state.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: state.dim() });
        }
        Ok(SystemSpec { state, ..self.clone() })
    }

    pub fn rho(&self) -> DensityOperator {
        self.state.to_density()
    }
}

/// The measuring oscillator: its operators, initial state and frequency Ω.
#[derive(Clone, Debug)]
pub struct PointerSpec {
    pub oscillator: TruncatedOscillator,
    pub state: State,
    pub omega: f64,
}

impl PointerSpec {
    pub fn new(oscillator: TruncatedOscillator, state: State, omega: f64) -> Result<Self> {
        if state.dim() != oscillator.cutoff {
            return Err(Error::DimensionMismatch { expected: oscillator.cutoff, got: state.dim() });
        }
        Ok(PointerSpec { oscillator, state, omega })
    }

    pub fn dim(&self) -> usize {
        self.oscillator.cutoff
    }

    /// `M(t)` under the free oscillator Hamiltonian.
    pub fn rotated(&self, m: &ComplexMatrix, t: f64) -> ComplexMatrix {
        heisenberg_rotate(m, self.omega * t)
    }

    pub fn mean_phonons(&self) -> f64 {
        expectation(&self.oscillator.number, &self.state).map(|z| z.re).unwrap_or(0.0)
    }

    fn exp(&self, op: &ComplexMatrix) -> Result<C64> {
        expectation(op, &self.state)
    }

    /// Cov(A, B) = ⟨{A,B}⟩/2 − ⟨A⟩⟨B⟩
    pub fn covariance(&self, a: &ComplexMatrix, b: &ComplexMatrix) -> Result<C64> {
        Ok(self.exp(&anticommutator(a, b))? * 0.5 - self.exp(a)? * self.exp(b)?)
    }
}

/// Weak values of `Jx` and `Jy`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakValue {
    pub jx: C64,
    pub jy: C64,
}

impl WeakValue {
    /// True when either modulus exceeds `spectral_radius`, the largest
    /// eigenvalue magnitude of the measured operators.
    pub fn is_anomalous(&self, spectral_radius: f64) -> bool {
        self.jx.norm() > spectral_radius || self.jy.norm() > spectral_radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    Exact,
    First,
    Second,
}

/// Conditional pointer expectation together with the postselection
/// probability it was conditioned on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionalResult {
    pub expectation: f64,
    pub ps_probability: f64,
    pub order: Order,
    /// Soft validity flag; false when the first-order expansion is not trustworthy.
    pub regime_ok: bool,
}

/// First-order postselection probability with its soft validity flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstOrderProbability {
    pub value: f64,
    pub regime_ok: bool,
}

fn check_normalized(v: &Ket) -> Result<()> {
    let n = v.norm();
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!("postselected state must be normalized, |phi| = {n}")));
    }
    Ok(())
}

fn check_hermitian(m: &ComplexMatrix) -> Result<()> {
    let dev = hermitian_deviation(m);
    if dev > 1e-10 {
        return Err(Error::NotHermitian(dev));
    }
    Ok(())
}

fn check_pointer_op(ptr: &PointerSpec, m: &ComplexMatrix) -> Result<()> {
    if m.nrows() != ptr.dim() {
        return Err(Error::DimensionMismatch { expected: ptr.dim(), got: m.nrows() });
    }
    check_hermitian(m)
}

/// `−ig(Jx⊗Y + Jy⊗X)`, system index outermost.
pub fn interaction_generator(g: f64, sys: &SystemSpec, ptr: &PointerSpec) -> ComplexMatrix {
    let osc = &ptr.oscillator;
    (kron(&sys.jx, &osc.y) + kron(&sys.jy, &osc.x)) * (-I * g)
}

/// First-order pointer shift without postselection:
/// `⟨M(t)⟩ + ig⟨Jx⟩⟨[Y,M(t)]⟩ + ig⟨Jy⟩⟨[X,M(t)]⟩`.
pub fn shift_without_postselection(
    g: f64,
    sys: &SystemSpec,
    ptr: &PointerSpec,
    m: &ComplexMatrix,
    t: f64,
) -> Result<f64> {
    check_pointer_op(ptr, m)?;
    let mt = ptr.rotated(m, t);
    let osc = &ptr.oscillator;
    let jx = expectation(&sys.jx, &sys.state)?;
    let jy = expectation(&sys.jy, &sys.state)?;
    let value = ptr.exp(&mt)?
        + I * g * jx * ptr.exp(&commutator(&osc.y, &mt))?
        + I * g * jy * ptr.exp(&commutator(&osc.x, &mt))?;
    Ok(value.re)
}

fn first_order_probability_regime(p0: f64, g: f64, mean_phonons: f64) -> bool {
    p0 >= 100.0 * g * g * (mean_phonons + 1.0)
}

/// `⟨P⟩ + ig⟨[Jx,P]⟩⟨Y⟩ + ig⟨[Jy,P]⟩⟨X⟩`
pub fn postselection_probability_first_order(
    g: f64,
    sys: &SystemSpec,
    ptr: &PointerSpec,
    phi: &Ket,
) -> Result<FirstOrderProbability> {
    check_normalized(phi)?;
    let p = projector(phi);
    let osc = &ptr.oscillator;
    let p0 = expectation(&p, &sys.state)?.re;
    let value = p0
        + (I * g * expectation(&commutator(&sys.jx, &p), &sys.state)? * ptr.exp(&osc.y)?).re
        + (I * g * expectation(&commutator(&sys.jy, &p), &sys.state)? * ptr.exp(&osc.x)?).re;
    Ok(FirstOrderProbability { value, regime_ok: first_order_probability_regime(p0, g, ptr.mean_phonons()) })
}

/// First-order conditional expectation `E(M|f)` with covariances and
/// commutators of the pointer weighted by the postselected system moments.
pub fn conditional_expectation_first_order(
    g: f64,
    sys: &SystemSpec,
    ptr: &PointerSpec,
    phi: &Ket,
    m: &ComplexMatrix,
    t: f64,
) -> Result<ConditionalResult> {
    check_normalized(phi)?;
    check_pointer_op(ptr, m)?;
    let p = projector(phi);
    let s = &sys.state;
    let p0 = expectation(&p, s)?.re;
    if p0 <= 0.0 || p0 < f64::EPSILON {
        return Err(Error::DegeneratePostselection(p0));
    }
    let osc = &ptr.oscillator;
    let mt = ptr.rotated(m, t);

    let ac_x = expectation(&anticommutator(&sys.jx, &p), s)?;
    let cm_x = expectation(&commutator(&sys.jx, &p), s)?;
    let ac_y = expectation(&anticommutator(&sys.jy, &p), s)?;
    let cm_y = expectation(&commutator(&sys.jy, &p), s)?;

    let value = ptr.exp(&mt)?
        + I * g * ac_x / (2.0 * p0) * ptr.exp(&commutator(&osc.y, &mt))?
        - g * cm_x / (I * p0) * ptr.covariance(&osc.y, &mt)?
        + I * g * ac_y / (2.0 * p0) * ptr.exp(&commutator(&osc.x, &mt))?
        - g * cm_y / (I * p0) * ptr.covariance(&osc.x, &mt)?;

    let prob = postselection_probability_first_order(g, sys, ptr, phi)?;
    Ok(ConditionalResult {
        expectation: value.re,
        ps_probability: prob.value,
        order: Order::First,
        regime_ok: prob.regime_ok,
    })
}

/// Joint state after the kick, held as a weighted ensemble of kets.
#[derive(Clone, Debug)]
pub struct EvolvedState {
    pub sys_dim: usize,
    pub ptr_dim: usize,
    pub members: Vec<(f64, Ket)>,
}

/// Applies `U` to every member of the product ensemble of `ρ_S ⊗ ρ_M`.
pub fn evolve_joint(g: f64, sys: &SystemSpec, ptr: &PointerSpec) -> Result<EvolvedState> {
    let generator = interaction_generator(g, sys, ptr);
    let sys_members = sys.state.ensemble();
    let ptr_members = ptr.state.ensemble();
    let inputs: Vec<(f64, Ket)> = sys_members
        .iter()
        .flat_map(|(ws, vs)| ptr_members.iter().map(move |(wp, vp)| (ws * wp, kron_ket(vs, vp))))
        .collect();
    let members = inputs
        .into_par_iter()
        .map(|(w, v)| crate::hilbert::apply_unitary_series(&generator, &v, SERIES_TOL).map(|u| (w, u)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvolvedState { sys_dim: sys.dim(), ptr_dim: ptr.dim(), members })
}

impl EvolvedState {
    /// Unnormalised pointer states `(⟨φ| ⊗ 1)|v⟩` of every member.
    pub fn postselect(&self, phi: &Ket) -> Postselected {
        let d = self.ptr_dim;
        let members = self
            .members
            .iter()
            .map(|(w, v)| {
                let mut out = Ket::zeros(d);
                for (s, amp) in phi.iter().enumerate() {
                    out.axpy(amp.conj(), &v.rows(s * d, d), C64::new(1.0, 0.0));
                }
                (*w, out)
            })
            .collect();
        Postselected { members }
    }

    pub fn expectation(&self, op: &ComplexMatrix) -> C64 {
        self.members.iter().map(|(w, v)| crate::hilbert::ket_expectation(op, v) * *w).sum()
    }
}

/// Pointer ensemble conditioned on a successful postselection (unnormalised).
#[derive(Clone, Debug)]
pub struct Postselected {
    pub members: Vec<(f64, Ket)>,
}

impl Postselected {
    /// `⟨P_φ ⊗ 1⟩_f`
    pub fn probability(&self) -> f64 {
        self.members.iter().map(|(w, u)| w * u.norm_squared()).sum()
    }

    /// `⟨P_φ ⊗ M⟩_f`
    pub fn numerator(&self, m: &ComplexMatrix) -> f64 {
        self.members.iter().map(|(w, u)| w * crate::hilbert::ket_expectation(m, u).re).sum()
    }

    pub fn conditional(&self, m: &ComplexMatrix) -> Result<f64> {
        let p = self.probability();
        if p <= MIN_EXACT_PROBABILITY {
            return Err(Error::DegeneratePostselection(p));
        }
        Ok(self.numerator(m) / p)
    }
}

/// Exact `⟨P_φ⊗M(t)⟩_f / ⟨P_φ⊗1⟩_f`, with the kick applied before the free
/// rotation.
pub fn conditional_expectation_exact(
    g: f64,
    sys: &SystemSpec,
    ptr: &PointerSpec,
    phi: &Ket,
    m: &ComplexMatrix,
    t: f64,
) -> Result<ConditionalResult> {
    check_normalized(phi)?;
    check_pointer_op(ptr, m)?;
    let post = evolve_joint(g, sys, ptr)?.postselect(phi);
    let p = post.probability();
    let expectation = post.conditional(&ptr.rotated(m, t))?;
    Ok(ConditionalResult { expectation, ps_probability: p, order: Order::Exact, regime_ok: true })
}

/// `⟨φ|J|ψ⟩ / ⟨φ|ψ⟩` for pure pre- and postselection.
pub fn weak_values(psi: &Ket, phi: &Ket, sys: &SystemSpec) -> Result<WeakValue> {
    let overlap = phi.dotc(psi);
    if overlap.norm() < 1e-14 {
        return Err(Error::UndefinedWeakValue);
    }
    Ok(WeakValue { jx: phi.dotc(&(&sys.jx * psi)) / overlap, jy: phi.dotc(&(&sys.jy * psi)) / overlap })
}

/// Weak values from the anticommutator (real part) and commutator
/// (imaginary part) moments of the postselection projector. Valid for mixed
/// `ρ_S` and equal to [`weak_values`] for pure states.
pub fn weak_values_mixed(rho_s: &State, phi: &Ket, sys: &SystemSpec) -> Result<WeakValue> {
    let p = projector(phi);
    let p0 = expectation(&p, rho_s)?.re;
    if p0 < 1e-28 {
        return Err(Error::UndefinedWeakValue);
    }
    let part = |j: &ComplexMatrix| -> Result<C64> {
        let re = expectation(&anticommutator(j, &p), rho_s)?.re / (2.0 * p0);
        let im = (-expectation(&commutator(j, &p), rho_s)? / (2.0 * I * p0)).re;
        Ok(C64::new(re, im))
    };
    Ok(WeakValue { jx: part(&sys.jx)?, jy: part(&sys.jy)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{basis_ket, build_oscillator, coherent_ket, max_abs, DensityOperator};

    fn spin_one() -> (ComplexMatrix, ComplexMatrix) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = C64::new(0.0, 0.0);
        let r = C64::new(s, 0.0);
        let jx = ComplexMatrix::from_row_slice(3, 3, &[z, r, z, r, z, r, z, r, z]);
        let a = C64::new(0.0, -s);
        let b = C64::new(0.0, s);
        let jy = ComplexMatrix::from_row_slice(3, 3, &[z, a, z, b, z, a, z, b, z]);
        (jx, jy)
    }

    fn center() -> Ket {
        basis_ket(3, 1)
    }

    fn vacuum_pointer(cutoff: usize) -> PointerSpec {
        let osc = build_oscillator(cutoff).unwrap();
        PointerSpec::new(osc, State::Pure(basis_ket(cutoff, 0)), 1.0).unwrap()
    }

    #[test]
    fn system_spec_derives_ladders() {
        let (jx, jy) = spin_one();
        let sys = SystemSpec::new(jx.clone(), jy.clone(), State::Pure(center())).unwrap();
        assert!(max_abs(&(&sys.jplus - (&jx + &jy * I))) < 1e-15);
        assert!(max_abs(&(&sys.jsq - ComplexMatrix::identity(3, 3) * C64::from(2.0))) < 1e-14);
    }

    #[test]
    fn generator_is_anti_hermitian_and_zero_at_zero_coupling() {
        let (jx, jy) = spin_one();
        let sys = SystemSpec::new(jx, jy, State::Pure(center())).unwrap();
        let ptr = vacuum_pointer(6);
        assert_eq!(max_abs(&interaction_generator(0.0, &sys, &ptr)), 0.0);
        let g = interaction_generator(1e-3, &sys, &ptr);
        assert!(crate::hilbert::anti_hermitian_deviation(&g) <= 1e-12);
    }

    #[test]
    fn no_shift_for_center_state() {
        let (jx, jy) = spin_one();
        let sys = SystemSpec::new(jx, jy, State::Pure(center())).unwrap();
        let cutoff = 40;
        let osc = build_oscillator(cutoff).unwrap();
        let ptr = PointerSpec::new(osc.clone(), State::Pure(coherent_ket(C64::new(0.7, 0.2), cutoff)), 2.0).unwrap();
        for &t in &[0.0, 0.4, 1.3] {
            let shifted = shift_without_postselection(1e-3, &sys, &ptr, &osc.x, t).unwrap();
            let free = expectation(&ptr.rotated(&osc.x, t), &ptr.state).unwrap().re;
            assert_eq!(shifted, free);
        }
    }

    // Equatorial spin coherent state at azimuth π/4: ⟨Jx⟩ = ⟨Jy⟩ = 1/√2, so the
    // unconditional kick is g(cos Ωt − sin Ωt)/√2 rather than amplitude g.
    #[test]
    fn spin_coherent_kick_is_scaled_by_inverse_root_two() {
        let (jx, jy) = spin_one();
        let phase = C64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
        let psi = Ket::from_vec(vec![phase.conj() * 0.5, C64::from(std::f64::consts::FRAC_1_SQRT_2), phase * 0.5]);
        let sys = SystemSpec::new(jx, jy, State::Pure(psi)).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((expectation(&sys.jx, &sys.state).unwrap() - C64::from(s)).norm() < 1e-15);
        assert!((expectation(&sys.jy, &sys.state).unwrap() - C64::from(s)).norm() < 1e-15);

        let cutoff = 40;
        let osc = build_oscillator(cutoff).unwrap();
        let omega = 2.0;
        let ptr = PointerSpec::new(osc.clone(), State::Pure(coherent_ket(C64::new(0.7, 0.2), cutoff)), omega).unwrap();
        let g = 1e-3;
        for &t in &[0.0, 0.4, 1.3, 2.9] {
            let shifted = shift_without_postselection(g, &sys, &ptr, &osc.x, t).unwrap();
            let free = expectation(&ptr.rotated(&osc.x, t), &ptr.state).unwrap().re;
            let kick = g * s * ((omega * t).cos() - (omega * t).sin());
            assert!((shifted - free - kick).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn orthogonal_states_have_no_weak_value() {
        let (jx, jy) = spin_one();
        let sys = SystemSpec::new(jx, jy, State::Pure(center())).unwrap();
        let phi = basis_ket(3, 0);
        assert_eq!(weak_values(&center(), &phi, &sys), Err(Error::UndefinedWeakValue));
        assert_eq!(weak_values_mixed(&sys.state, &phi, &sys), Err(Error::UndefinedWeakValue));
    }

    #[test]
    fn weak_value_of_preselected_state_is_expectation() {
        let (jx, jy) = spin_one();
        let sys = SystemSpec::new(jx, jy, State::Pure(center())).unwrap();
        let wv = weak_values(&center(), &center(), &sys).unwrap();
        assert_eq!(wv.jx, C64::new(0.0, 0.0));
        assert_eq!(wv.jy, C64::new(0.0, 0.0));
    }

    #[test]
    fn degenerate_postselection_is_an_error() {
        let (jx, jy) = spin_one();
        let sys = SystemSpec::new(jx, jy, State::Pure(center())).unwrap();
        let ptr = vacuum_pointer(8);
        let phi = basis_ket(3, 0);
        let m = ptr.oscillator.x.clone();
        assert!(matches!(
            conditional_expectation_first_order(1e-3, &sys, &ptr, &phi, &m, 0.0),
            Err(Error::DegeneratePostselection(_))
        ));
        // |u⟩ is never reached from |ψ⟩ at g = 0
        assert!(matches!(
            conditional_expectation_exact(0.0, &sys, &ptr, &phi, &m, 0.0),
            Err(Error::DegeneratePostselection(_))
        ));
    }

    #[test]
    fn mixed_system_state_evolves_as_ensemble() {
        let (jx, jy) = spin_one();
        let rho = DensityOperator::from_populations(&[0.2, 0.5, 0.3]);
        let sys = SystemSpec::new(jx, jy, State::Mixed(rho)).unwrap();
        let ptr = vacuum_pointer(10);
        let ev = evolve_joint(0.01, &sys, &ptr).unwrap();
        assert_eq!(ev.members.len(), 3);
        let total: f64 = ev.members.iter().map(|(w, v)| w * v.norm_squared()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
