//! Python bindings: experiment configuration, weak values, first-order
//! predictions, amplification curves, exact simulation and the spectral
//! reduction check.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use optoweak::hilbert::Quadrature;
use optoweak::optomech::{self, CouplingConvention, MirrorState, PostselectionSpec, StateKind};
use optoweak::{spectral, weakmeas, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::EmptyGrid | Error::InvalidDimension(_) | Error::DimensionMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn quadrature(name: &str) -> PyResult<Quadrature> {
    name.parse().map_err(|_| PyValueError::new_err(format!("unknown quadrature '{name}', expected X or Y")))
}

fn mirror(state: &str, mean: f64, beta: f64) -> PyResult<MirrorState> {
    match state {
        "thermal" => Ok(MirrorState::Thermal { mean }),
        "coherent" => Ok(MirrorState::Coherent { mean, phase: beta }),
        "fock" if mean >= 0.0 && mean.fract() == 0.0 => Ok(MirrorState::Fock { n: mean as usize }),
        "fock" => Err(PyValueError::new_err("fock state needs a non-negative integer index")),
        _ => Err(PyValueError::new_err(format!("unknown state '{state}'"))),
    }
}

/// Physical parameters in rad/s. Γ defaults to Ω/100 and ε to Γ/100.
#[pyclass(name = "ExperimentConfig", get_all, set_all, from_py_object)]
#[derive(Clone, Debug)]
pub struct PyExperimentConfig {
    pub omega: f64,
    pub g0: f64,
    pub gamma_cav: f64,
    pub epsilon: f64,
    pub omega_cav: f64,
    pub omega0: f64,
    /// Normalise amplification by g0/Ω instead of 2g0/Ω.
    pub bare_coupling: bool,
}

impl PyExperimentConfig {
    fn inner(&self) -> optomech::ExperimentConfig {
        let mut cfg = optomech::ExperimentConfig::new(self.omega, self.g0).with_cavity(self.gamma_cav, self.epsilon);
        cfg.omega_cav = self.omega_cav;
        cfg.omega0 = self.omega0;
        cfg.convention = if self.bare_coupling { CouplingConvention::Bare } else { CouplingConvention::Redefined };
        cfg
    }
}

#[pymethods]
impl PyExperimentConfig {
    #[new]
    #[pyo3(signature = (omega = 1e6, g0 = 500.0, gamma_cav = None, epsilon = None))]
    fn new(omega: f64, g0: f64, gamma_cav: Option<f64>, epsilon: Option<f64>) -> PyResult<Self> {
        let mut cfg = optomech::ExperimentConfig::new(omega, g0);
        let gamma_cav = gamma_cav.unwrap_or(cfg.gamma_cav);
        cfg = cfg.with_cavity(gamma_cav, epsilon.unwrap_or(gamma_cav / 100.0));
        cfg.validate().map_err(py_err)?;
        Ok(PyExperimentConfig {
            omega: cfg.omega,
            g0: cfg.g0,
            gamma_cav: cfg.gamma_cav,
            epsilon: cfg.epsilon,
            omega_cav: cfg.omega_cav,
            omega0: cfg.omega0,
            bare_coupling: false,
        })
    }

    /// γ = 2 g0 / Ω
    fn gamma_eff(&self) -> f64 {
        self.inner().gamma_eff()
    }

    fn scaled_coupling(&self) -> f64 {
        self.inner().scaled_coupling()
    }

    fn __repr__(&self) -> String {
        format!(
            "ExperimentConfig(omega={}, g0={}, gamma_cav={}, epsilon={})",
            self.omega, self.g0, self.gamma_cav, self.epsilon
        )
    }
}

/// Weak values `(Jx_w, Jy_w)` for the interferometric postselection.
#[pyfunction]
#[pyo3(signature = (delta, theta = 0.0))]
fn weak_values(delta: f64, theta: f64) -> PyResult<(Complex64, Complex64)> {
    let ps = PostselectionSpec::new(delta, theta).map_err(py_err)?;
    let sys = optomech::build_tri_mode();
    let psi = sys.state.as_ket().expect("pure preselection").clone();
    let wv = weakmeas::weak_values(&psi, &optomech::postselection_ket(&ps), &sys).map_err(py_err)?;
    Ok((wv.jx, wv.jy))
}

/// First-order conditional quadrature at time t.
#[pyfunction]
#[pyo3(signature = (config, state, mean, delta, t, theta = 0.0, quadrature = "X", beta = None))]
#[allow(clippy::too_many_arguments)]
fn first_order_prediction(
    config: &PyExperimentConfig,
    state: &str,
    mean: f64,
    delta: f64,
    t: f64,
    theta: f64,
    quadrature: &str,
    beta: Option<f64>,
) -> PyResult<f64> {
    let ps = PostselectionSpec::new(delta, theta).map_err(py_err)?;
    let m = mirror(state, mean, beta.unwrap_or(theta + std::f64::consts::FRAC_PI_2))?;
    Ok(optomech::first_order_prediction(&config.inner(), &m, &ps, t, self::quadrature(quadrature)?))
}

/// Rows `(delta, ps_probability, f, regime_ok)`; the default δ grid starts at 100γ√N.
#[pyfunction]
#[pyo3(signature = (config, kind, mean, deltas = None))]
fn amplification_curve(
    config: &PyExperimentConfig,
    kind: &str,
    mean: f64,
    deltas: Option<Vec<f64>>,
) -> PyResult<Vec<(f64, f64, f64, bool)>> {
    let kind: StateKind = kind.parse().map_err(py_err)?;
    let cfg = config.inner();
    let grid = match deltas {
        Some(d) => d,
        None => optomech::default_delta_grid(&cfg, mean).map_err(py_err)?,
    };
    let pts = optomech::amplification_curve(&cfg, mean, kind, &grid).map_err(py_err)?;
    Ok(pts.iter().map(|p| (p.delta, p.ps_probability, p.f, p.regime_ok)).collect())
}

#[pyfunction]
fn displaced_overlap(m: usize, k: usize, alpha: f64) -> f64 {
    spectral::displaced_overlap(m, k, alpha)
}

/// Validity margins; each should be at least 10.
#[pyfunction]
fn regime_report<'py>(
    py: Python<'py>,
    config: &PyExperimentConfig,
    mean: f64,
    delta: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = optomech::regime_report(&config.inner(), mean, delta);
    let d = PyDict::new(py);
    d.set_item("sideband_margin", r.sideband_margin)?;
    d.set_item("sideband_ok", r.sideband_ok)?;
    d.set_item("weak_coupling_margin", r.weak_coupling_margin)?;
    d.set_item("weak_coupling_ok", r.weak_coupling_ok)?;
    d.set_item("carrier_margin", r.carrier_margin)?;
    d.set_item("carrier_ok", r.carrier_ok)?;
    d.set_item("monochromatic_margin", r.monochromatic_margin)?;
    d.set_item("monochromatic_ok", r.monochromatic_ok)?;
    d.set_item("postselection_margin", r.postselection_margin)?;
    d.set_item("postselection_ok", r.postselection_ok)?;
    d.set_item("figure_convention_ok", r.figure_convention_ok)?;
    d.set_item("regime_ok", r.regime_ok)?;
    Ok(d)
}

/// Projection of the scattered photon onto the three sideband modes.
#[pyfunction]
fn validate_tri_mode_reduction<'py>(
    py: Python<'py>,
    config: &PyExperimentConfig,
    n: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.inner();
    let r = py.detach(|| spectral::validate_tri_mode_reduction(&cfg, n)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("n", r.n)?;
    d.set_item("carrier", r.carrier)?;
    d.set_item("up", r.up)?;
    d.set_item("down", r.down)?;
    d.set_item("global_phase", r.global_phase)?;
    d.set_item("carrier_deviation", r.carrier_deviation)?;
    d.set_item("up_deviation", r.up_deviation)?;
    d.set_item("down_deviation", r.down_deviation)?;
    d.set_item("leakage", r.leakage)?;
    d.set_item("l2_full_vs_single", r.l2_full_vs_single)?;
    d.set_item("l2_single_vs_mono", r.l2_single_vs_mono)?;
    d.set_item("l2_full_vs_mono", r.l2_full_vs_mono)?;
    d.set_item("regime_ok", r.regime_ok)?;
    d.set_item("passed", r.passed)?;
    Ok(d)
}

/// Exact kick of the mirror, reusable across postselection settings.
#[pyclass(name = "ExactSimulation", frozen)]
pub struct PyExactSimulation {
    inner: optomech::ExactSimulation,
}

#[pymethods]
impl PyExactSimulation {
    #[new]
    #[pyo3(signature = (config, state, mean, beta = 0.0))]
    fn new(py: Python<'_>, config: &PyExperimentConfig, state: &str, mean: f64, beta: f64) -> PyResult<Self> {
        let m = mirror(state, mean, beta)?;
        let cfg = config.inner();
        let inner = py.detach(|| optomech::ExactSimulation::new(&cfg, &m)).map_err(py_err)?;
        Ok(PyExactSimulation { inner })
    }

    #[pyo3(signature = (delta, theta = 0.0))]
    fn ps_probability(&self, delta: f64, theta: f64) -> PyResult<f64> {
        let ps = PostselectionSpec::new(delta, theta).map_err(py_err)?;
        Ok(self.inner.ps_probability(&ps))
    }

    /// Exact conditional `E(X|f)` or `E(Y|f)` at each time.
    #[pyo3(signature = (delta, times, theta = 0.0, quadrature = "X"))]
    fn conditional_quadrature(&self, delta: f64, times: Vec<f64>, theta: f64, quadrature: &str) -> PyResult<Vec<f64>> {
        let ps = PostselectionSpec::new(delta, theta).map_err(py_err)?;
        let q = self::quadrature(quadrature)?;
        let res = self.inner.conditional_quadrature(&ps, q, &times).map_err(py_err)?;
        Ok(res.iter().map(|r| r.expectation).collect())
    }

    #[getter]
    fn cutoff(&self) -> usize {
        self.inner.pointer.dim()
    }
}

#[pymodule]
fn optoweak_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyExperimentConfig>()?;
    m.add_class::<PyExactSimulation>()?;
    m.add_function(wrap_pyfunction!(weak_values, m)?)?;
    m.add_function(wrap_pyfunction!(first_order_prediction, m)?)?;
    m.add_function(wrap_pyfunction!(amplification_curve, m)?)?;
    m.add_function(wrap_pyfunction!(displaced_overlap, m)?)?;
    m.add_function(wrap_pyfunction!(regime_report, m)?)?;
    m.add_function(wrap_pyfunction!(validate_tri_mode_reduction, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weak_values_without_interpreter() {
        let (jx, jy) = weak_values(0.1, 0.0).unwrap();
        assert!((jx.norm() - 0.99f64.sqrt() / (2f64.sqrt() * 0.1)).abs() < 1e-12);
        assert!((jy.arg().abs() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn config_defaults() {
        let c = PyExperimentConfig::new(1e6, 500.0, None, None).unwrap();
        assert_eq!(c.gamma_cav, 1e4);
        assert_eq!(c.epsilon, 1e2);
        assert_eq!(c.gamma_eff(), 1e-3);
        assert!(PyExperimentConfig::new(-1.0, 500.0, None, None).is_err());
    }

    #[test]
    fn module_functions_through_interpreter() {
        Python::initialize();
        Python::attach(|py| {
            let c = PyExperimentConfig::new(1e6, 500.0, None, None).unwrap();
            let r = regime_report(py, &c, 1.0, 0.1).unwrap();
            let ok: bool = r.get_item("regime_ok").unwrap().unwrap().extract().unwrap();
            assert!(ok);
            let sim = PyExactSimulation::new(py, &c, "thermal", 1.0, 0.0).unwrap();
            let p = sim.ps_probability(0.2, 0.0).unwrap();
            assert!((p / 0.04 - 1.0).abs() < 1e-3);
        });
    }
}
