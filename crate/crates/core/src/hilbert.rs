//! Dense complex linear algebra on the truncated oscillator space, the
//! three-level photon space and their tensor product.
//!
//! Tensor products always put the photon (system) index outermost and the
//! oscillator index innermost, so a joint ket of dimension `3 * cutoff` is laid
//! out as three consecutive oscillator blocks.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<C64>;
pub type Ket = DVector<C64>;

/// Tolerance for the Hermiticity check on density operators and observables.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Default relative stopping tolerance for [`apply_unitary_series`].
pub const SERIES_TOL: f64 = 1e-15;

/// Maximum number of Taylor terms before the series is declared divergent.
pub const SERIES_MAX_TERMS: usize = 64;

/// Tail mass allowed when truncating a thermal state.
pub const THERMAL_TAIL: f64 = 1e-8;

/// Smallest oscillator dimension handed out by the cutoff rules.
pub const MIN_CUTOFF: usize = 8;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Mechanical quadrature selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Quadrature {
    X,
    Y,
}

impl std::str::FromStr for Quadrature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X" | "x" => Ok(Quadrature::X),
            "Y" | "y" => Ok(Quadrature::Y),
            other => Err(Error::InvalidParameter(format!("unknown quadrature {other:?}"))),
        }
    }
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// ‖M − M†‖_max
pub fn hermitian_deviation(m: &ComplexMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// ‖M + M†‖_max
pub fn anti_hermitian_deviation(m: &ComplexMatrix) -> f64 {
    max_abs(&(m + m.adjoint()))
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b + b * a
}

/// Tensor product `a ⊗ b` with `a` as the outer (slow) index.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

pub fn kron_ket(a: &Ket, b: &Ket) -> Ket {
    a.kronecker(b)
}

pub fn identity(dim: usize) -> ComplexMatrix {
    ComplexMatrix::identity(dim, dim)
}

pub fn basis_ket(dim: usize, index: usize) -> Ket {
    let mut v = Ket::zeros(dim);
    v[index] = C64::new(1.0, 0.0);
    v
}

pub fn projector(v: &Ket) -> ComplexMatrix {
    v * v.adjoint()
}

/// Heisenberg picture free rotation `exp(iφ c†c) M exp(−iφ c†c)` with φ = Ωt.
///
/// In the Fock basis this only multiplies entry (j, k) by `exp(iφ(j − k))`, so
/// it is exact at any cutoff. For the quadratures it reproduces
/// `X(t) = cos φ X + sin φ Y` and `Y(t) = cos φ Y − sin φ X`.
pub fn heisenberg_rotate(m: &ComplexMatrix, phase: f64) -> ComplexMatrix {
    let mut out = m.clone();
    for k in 0..m.ncols() {
        for j in 0..m.nrows() {
            out[(j, k)] *= C64::from_polar(1.0, phase * (j as f64 - k as f64));
        }
    }
    out
}

/// Ladder and quadrature operators on the Fock states `|0⟩ … |cutoff − 1⟩`.
#[derive(Clone, Debug)]
pub struct TruncatedOscillator {
    pub cutoff: usize,
    pub annihilation: ComplexMatrix,
    pub creation: ComplexMatrix,
    pub x: ComplexMatrix,
    pub y: ComplexMatrix,
    pub number: ComplexMatrix,
}

impl TruncatedOscillator {
    pub fn quadrature(&self, which: Quadrature) -> &ComplexMatrix {
        match which {
            Quadrature::X => &self.x,
            Quadrature::Y => &self.y,
        }
    }

    /// Quadrature rotated by the free evolution phase Ωt.
    pub fn rotated_quadrature(&self, which: Quadrature, phase: f64) -> ComplexMatrix {
        let (c, s) = (phase.cos(), phase.sin());
        match which {
            Quadrature::X => &self.x * C64::from(c) + &self.y * C64::from(s),
            Quadrature::Y => &self.y * C64::from(c) - &self.x * C64::from(s),
        }
    }

    pub fn identity(&self) -> ComplexMatrix {
        identity(self.cutoff)
    }
}

pub fn build_oscillator(cutoff: usize) -> Result<TruncatedOscillator> {
    if cutoff < 2 {
        return Err(Error::InvalidDimension(format!("oscillator cutoff must be at least 2, got {cutoff}")));
    }
    let mut a = ComplexMatrix::zeros(cutoff, cutoff);
    for n in 1..cutoff {
        a[(n - 1, n)] = C64::from((n as f64).sqrt());
    }
    let ad = a.adjoint();
    let sqrt2 = std::f64::consts::SQRT_2;
    let x = (&ad + &a) / C64::from(sqrt2);
    let y = (&ad - &a) * (I / sqrt2);
    let number = &ad * &a;
    Ok(TruncatedOscillator { cutoff, annihilation: a, creation: ad, x, y, number })
}

/// Smallest cutoff whose discarded thermal tail `(N/(N+1))^cutoff` is below `tail`.
pub fn thermal_cutoff(mean: f64, tail: f64) -> usize {
    if mean <= 0.0 {
        return MIN_CUTOFF;
    }
    let ratio = mean / (mean + 1.0);
    let n = (tail.ln() / ratio.ln()).ceil() as usize;
    // floating point may land one short of the bound
    let n = if ratio.powi(n as i32) > tail { n + 1 } else { n };
    n.max(MIN_CUTOFF)
}

/// `N + 10√N + 20` levels for a coherent state of mean phonon number N.
pub fn coherent_cutoff(mean: f64) -> usize {
    ((mean + 10.0 * mean.sqrt() + 20.0).ceil() as usize).max(MIN_CUTOFF)
}

pub fn thermal_populations(mean: f64, cutoff: usize) -> Vec<f64> {
    if mean <= 0.0 {
        let mut p = vec![0.0; cutoff];
        p[0] = 1.0;
        return p;
    }
    let ratio = mean / (mean + 1.0);
    let mut p = Vec::with_capacity(cutoff);
    let mut cur = 1.0 / (mean + 1.0);
    for _ in 0..cutoff {
        p.push(cur);
        cur *= ratio;
    }
    p
}

pub fn coherent_ket(alpha: C64, cutoff: usize) -> Ket {
    let mut v = Ket::zeros(cutoff);
    let mut cur = C64::from((-alpha.norm_sqr() / 2.0).exp());
    for n in 0..cutoff {
        v[n] = cur;
        cur *= alpha / ((n + 1) as f64).sqrt();
    }
    v
}

/// Hermitian, positive operator with (near) unit trace.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
}

impl DensityOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidDimension(format!(
                "density operator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let dev = hermitian_deviation(&matrix);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        Ok(DensityOperator { matrix })
    }

    pub fn from_ket(v: &Ket) -> Self {
        DensityOperator { matrix: projector(v) }
    }

    pub fn from_populations(p: &[f64]) -> Self {
        let diag = DVector::from_iterator(p.len(), p.iter().map(|&x| C64::from(x)));
        DensityOperator { matrix: ComplexMatrix::from_diagonal(&diag) }
    }

    /// Geometric populations with mean `mean`, not renormalised: the trace is
    /// `1 − (N/(N+1))^cutoff`.
    pub fn thermal(mean: f64, cutoff: usize) -> Self {
        Self::from_populations(&thermal_populations(mean, cutoff))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Eigenvalues of the Hermitian matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.matrix.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|j| (0..n).all(|k| j == k || self.matrix[(j, k)] == C64::new(0.0, 0.0)))
    }

    /// Decomposition ρ = Σ w_i |v_i⟩⟨v_i| with positive weights.
    pub fn ensemble(&self) -> Vec<(f64, Ket)> {
        let n = self.dim();
        if self.is_diagonal() {
            return (0..n)
                .filter_map(|j| {
                    let w = self.matrix[(j, j)].re;
                    (w > 0.0).then(|| (w, basis_ket(n, j)))
                })
                .collect();
        }
        let eig = self.matrix.clone().symmetric_eigen();
        eig.eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 1e-15)
            .map(|(j, &w)| (w, eig.eigenvectors.column(j).into_owned()))
            .collect()
    }
}

/// A pure or mixed state.
#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Pure(Ket),
    Mixed(DensityOperator),
}

impl State {
    pub fn dim(&self) -> usize {
        match self {
            State::Pure(v) => v.len(),
            State::Mixed(rho) => rho.dim(),
        }
    }

    pub fn to_density(&self) -> DensityOperator {
        match self {
            State::Pure(v) => DensityOperator::from_ket(v),
            State::Mixed(rho) => rho.clone(),
        }
    }

    pub fn ensemble(&self) -> Vec<(f64, Ket)> {
        match self {
            State::Pure(v) => vec![(1.0, v.clone())],
            State::Mixed(rho) => rho.ensemble(),
        }
    }

    pub fn as_ket(&self) -> Option<&Ket> {
        match self {
            State::Pure(v) => Some(v),
            State::Mixed(_) => None,
        }
    }
}

/// ⟨v|A|v⟩ without normalising v.
pub fn ket_expectation(obs: &ComplexMatrix, v: &Ket) -> C64 {
    v.dotc(&(obs * v))
}

pub fn expectation(obs: &ComplexMatrix, state: &State) -> Result<C64> {
    let dim = state.dim();
    if obs.nrows() != dim || obs.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: obs.nrows() });
    }
    Ok(match state {
        State::Pure(v) => ket_expectation(obs, v),
        State::Mixed(rho) => {
            // Tr(Aρ) = Σ_jk A_jk ρ_kj
            let r = rho.matrix();
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..dim {
                for k in 0..dim {
                    acc += obs[(j, k)] * r[(k, j)];
                }
            }
            acc
        }
    })
}

/// Real part of ⟨A⟩ for Hermitian `A`; the imaginary residue is discarded.
pub fn hermitian_expectation(obs: &ComplexMatrix, state: &State) -> Result<f64> {
    let dev = hermitian_deviation(obs);
    if dev > 1e-10 {
        return Err(Error::NotHermitian(dev));
    }
    expectation(obs, state).map(|z| z.re)
}

fn check_generator(generator: &ComplexMatrix, dim: usize, tol: f64) -> Result<()> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter(format!("series tolerance must be positive, got {tol}")));
    }
    if generator.nrows() != dim || generator.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: generator.nrows() });
    }
    let dev = anti_hermitian_deviation(generator);
    if dev > 1e-10 {
        return Err(Error::NotAntiHermitian(dev));
    }
    Ok(())
}

fn series_apply(generator: &ComplexMatrix, v: &Ket, tol: f64) -> Result<Ket> {
    let mut result = v.clone();
    let mut term = v.clone();
    let mut next = Ket::zeros(v.len());
    let mut ratio = f64::INFINITY;
    for k in 1..=SERIES_MAX_TERMS {
        generator.mul_to(&term, &mut next);
        next /= C64::from(k as f64);
        std::mem::swap(&mut term, &mut next);
        result += &term;
        let rn = result.norm();
        ratio = if rn > 0.0 { term.norm() / rn } else { term.norm() };
        if term.norm() <= tol * rn || rn == 0.0 {
            return Ok(result);
        }
    }
    Err(Error::SeriesDivergence { terms: SERIES_MAX_TERMS, ratio })
}

/// `exp(G)|v⟩` by a Taylor series applied to the vector.
pub fn apply_unitary_series(generator: &ComplexMatrix, v: &Ket, tol: f64) -> Result<Ket> {
    check_generator(generator, v.len(), tol)?;
    series_apply(generator, v, tol)
}

/// `exp(G) ρ exp(G)†`, applying the series column by column twice.
pub fn apply_unitary_series_density(
    generator: &ComplexMatrix,
    rho: &DensityOperator,
    tol: f64,
) -> Result<DensityOperator> {
    let dim = rho.dim();
    check_generator(generator, dim, tol)?;
    let apply_columns = |m: &ComplexMatrix| -> Result<ComplexMatrix> {
        let mut out = ComplexMatrix::zeros(dim, dim);
        for j in 0..dim {
            let col = series_apply(generator, &m.column(j).into_owned(), tol)?;
            out.set_column(j, &col);
        }
        Ok(out)
    };
    // Uρ, then U(Uρ)† = (UρU†)†
    let left = apply_columns(rho.matrix())?;
    let both = apply_columns(&left.adjoint())?.adjoint();
    // restore exact Hermiticity lost to rounding
    let sym = (&both + both.adjoint()) * C64::from(0.5);
    Ok(DensityOperator { matrix: sym })
}

pub fn evolve(generator: &ComplexMatrix, state: &State, tol: f64) -> Result<State> {
    Ok(match state {
        State::Pure(v) => State::Pure(apply_unitary_series(generator, v, tol)?),
        State::Mixed(rho) => State::Mixed(apply_unitary_series_density(generator, rho, tol)?),
    })
}

/// Dense `exp(G)` for anti-Hermitian `G` through the eigendecomposition of the
/// Hermitian matrix `iG`. Used as an independent reference for the series.
pub fn dense_exp_anti_hermitian(generator: &ComplexMatrix) -> Result<ComplexMatrix> {
    let dim = generator.nrows();
    check_generator(generator, dim, 1.0)?;
    let h = generator * I;
    let h = (&h + h.adjoint()) * C64::from(0.5);
    let eig = h.symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = DVector::from_iterator(dim, eig.eigenvalues.iter().map(|&l| C64::from_polar(1.0, -l)));
    Ok(v * ComplexMatrix::from_diagonal(&phases) * v.adjoint())
}
