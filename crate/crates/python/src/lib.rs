//! Python bindings: rate-curve simulation, synthetic data, fitting and
//! derived noise metrics.

use std::path::PathBuf;

use mrtnoise::fitter::{self, FitConfig, ParamId, RateDataset};
use mrtnoise::io::{dataset, synthetic};
use mrtnoise::rate_model::{self, ModelOptions};
use mrtnoise::units::{Current, Energy, Flux, Temperature};
use mrtnoise::{MrtParams, Well};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(mrtnoise_py, MrtError, PyException);

fn to_py(e: mrtnoise::Error) -> PyErr {
    MrtError::new_err(format!("{}: {e}", e.kind()))
}

fn well(name: &str) -> PyResult<Well> {
    match name {
        "left" | "L" => Ok(Well::Left),
        "right" | "R" => Ok(Well::Right),
        other => Err(PyValueError::new_err(format!("unknown well {other:?}, expected 'left' or 'right'"))),
    }
}

/// Line-shape parameters in laboratory units (MHz, μΦ₀, mK, μA).
#[pyclass(name = "Params", module = "mrtnoise_py", from_py_object)]
#[derive(Clone)]
struct PyParams(MrtParams);

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (delta01_mhz, delta03_mhz, phi31, w_phi, gamma_phi, zeta_phi, temperature_mk, ip_ua))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        delta01_mhz: f64,
        delta03_mhz: f64,
        phi31: f64,
        w_phi: f64,
        gamma_phi: f64,
        zeta_phi: f64,
        temperature_mk: f64,
        ip_ua: f64,
    ) -> Self {
        PyParams(MrtParams {
            delta01: Energy::from_mhz(delta01_mhz),
            delta03: Energy::from_mhz(delta03_mhz),
            phi31: Flux::from_micro_phi0(phi31),
            w_phi: Flux::from_micro_phi0(w_phi),
            gamma_phi: Flux::from_micro_phi0(gamma_phi),
            zeta_phi: Flux::from_micro_phi0(zeta_phi),
            temperature: Temperature::from_millikelvin(temperature_mk),
            ip: Current::from_micro_amps(ip_ua),
        })
    }

    #[staticmethod]
    fn reference() -> Self {
        PyParams(MrtParams::reference())
    }

    #[getter]
    fn delta01_mhz(&self) -> f64 {
        self.0.delta01.mhz()
    }
    #[getter]
    fn delta03_mhz(&self) -> f64 {
        self.0.delta03.mhz()
    }
    #[getter]
    fn phi31(&self) -> f64 {
        self.0.phi31.micro_phi0()
    }
    #[getter]
    fn w_phi(&self) -> f64 {
        self.0.w_phi.micro_phi0()
    }
    #[getter]
    fn gamma_phi(&self) -> f64 {
        self.0.gamma_phi.micro_phi0()
    }
    #[getter]
    fn zeta_phi(&self) -> f64 {
        self.0.zeta_phi.micro_phi0()
    }
    #[getter]
    fn temperature_mk(&self) -> f64 {
        self.0.temperature.millikelvin()
    }
    #[getter]
    fn ip_ua(&self) -> f64 {
        self.0.ip.micro_amps()
    }

    /// Parameters as a `{name: value}` dict in reporting units.
    fn as_dict(&self) -> Vec<(&'static str, f64)> {
        ParamId::ALL.iter().map(|id| (id.name(), id.get(&self.0))).collect()
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!(
            "Params(delta01_mhz={}, delta03_mhz={}, phi31={}, w_phi={}, gamma_phi={}, zeta_phi={}, temperature_mk={}, ip_ua={})",
            p.delta01.mhz(),
            p.delta03.mhz(),
            p.phi31.micro_phi0(),
            p.w_phi.micro_phi0(),
            p.gamma_phi.micro_phi0(),
            p.zeta_phi.micro_phi0(),
            p.temperature.millikelvin(),
            p.ip.micro_amps()
        )
    }
}

/// Measured or synthetic escape rates.
#[pyclass(name = "Dataset", module = "mrtnoise_py", from_py_object)]
#[derive(Clone)]
struct PyDataset(RateDataset);

#[pymethods]
impl PyDataset {
    /// Parses the whitespace-separated dataset format from a file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        dataset::load_dataset(&path).map(PyDataset).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        dataset::write_dataset(&self.0, &path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.points.len()
    }

    /// Bias points in μΦ₀.
    #[getter]
    fn phi(&self) -> Vec<f64> {
        self.0.points.iter().map(|p| p.phi_x.micro_phi0()).collect()
    }

    /// Rates in 1/μs.
    #[getter]
    fn rates(&self) -> Vec<f64> {
        self.0.points.iter().map(|p| p.rate.per_us()).collect()
    }

    fn mirrored(&self) -> Self {
        PyDataset(self.0.mirrored())
    }
}

/// Outcome of a fit.
#[pyclass(name = "FitResult", module = "mrtnoise_py", frozen)]
struct PyFitResult(fitter::FitResult);

#[pymethods]
impl PyFitResult {
    #[getter]
    fn best(&self) -> PyParams {
        PyParams(self.0.best)
    }
    #[getter]
    fn chi2(&self) -> f64 {
        self.0.chi2
    }
    #[getter]
    fn reduced_chi2(&self) -> f64 {
        self.0.reduced_chi2()
    }
    #[getter]
    fn converged(&self) -> bool {
        self.0.converged()
    }
    #[getter]
    fn free(&self) -> Vec<&'static str> {
        self.0.free.iter().map(|id| id.name()).collect()
    }
    /// Linearized 1σ for each free parameter.
    #[getter]
    fn sigma(&self) -> Vec<(&'static str, f64)> {
        self.0.free.iter().zip(&self.0.uncertainties).map(|(id, s)| (id.name(), *s)).collect()
    }
    #[getter]
    fn eta(&self) -> f64 {
        self.0.derived.eta
    }
    #[getter]
    fn tan_delta_c(&self) -> f64 {
        self.0.derived.tan_delta_c
    }
    fn tan_delta_l_at_hz(&self, freq_hz: f64) -> f64 {
        self.0.derived.tan_delta_l_at_hz(freq_hz)
    }
}

/// Model rates in 1/μs at the given biases (μΦ₀).
#[pyfunction]
#[pyo3(signature = (params, phi, well = "left"))]
fn simulate(params: &PyParams, phi: Vec<f64>, well: &str) -> PyResult<Vec<f64>> {
    let biases: Vec<Flux> = phi.into_iter().map(Flux::from_micro_phi0).collect();
    let curve = rate_model::simulate_curve(&biases, &params.0, self::well(well)?).map_err(to_py)?;
    Ok(curve.rates())
}

/// Noisy synthetic dataset on a uniform bias grid.
#[pyfunction]
#[pyo3(signature = (params, phi_min = -500.0, phi_max = 3000.0, points = 200, noise_rel = 0.05, seed = 1, well = "left"))]
fn synthesize(
    params: &PyParams,
    phi_min: f64,
    phi_max: f64,
    points: usize,
    noise_rel: f64,
    seed: u64,
    well: &str,
) -> PyResult<PyDataset> {
    let spec = synthetic::SynthSpec {
        phi_min_uphi0: phi_min,
        phi_max_uphi0: phi_max,
        points,
        noise_rel,
        well: self::well(well)?,
        write_sigma: noise_rel > 0.0,
    };
    synthetic::synthesize(&params.0, &spec, seed, &ModelOptions::default()).map(PyDataset).map_err(to_py)
}

/// Fits a dataset with the default configuration.
#[pyfunction]
fn fit(py: Python<'_>, data: &PyDataset) -> PyResult<PyFitResult> {
    let d = data.0.clone();
    py.detach(move || fitter::fit_dataset(&d, &FitConfig::default())).map(PyFitResult).map_err(to_py)
}

/// `(eta, r_shunt_ohm, tan_delta_c, tan_delta_l_1ghz)` for parameters and a loop inductance in henries.
#[pyfunction]
fn derive_metrics(params: &PyParams, inductance_h: f64) -> PyResult<(f64, f64, f64, f64)> {
    let s = fitter::derive_metrics(&params.0, inductance_h).map_err(to_py)?;
    Ok((s.eta, s.r_shunt, s.tan_delta_c, s.tan_delta_l_at_hz(1e9)))
}

#[pymodule]
fn mrtnoise_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MrtError", m.py().get_type::<MrtError>())?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(derive_metrics, m)?)?;
    Ok(())
}
