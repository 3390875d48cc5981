//! Python bindings: trajectories, the classical limit, the moment closure and
//! ensembles, all in natural units (`hbar = m = omega = 1`).

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use spinmotion::classical::{run_classical as classical_run, ClassicalState};
use spinmotion::cumulant::{run_cumulant as cumulant_run, MomentState};
use spinmotion::diagnostics::jz_histogram;
use spinmotion::hilbert::{motional_coherent_state, spin_coherent_state, standard_initial_state};
use spinmotion::{
    build_operators, parse_config, run_ensemble as ensemble_run, run_trajectory, BasisSpec, EnsembleSpec, Error,
    ModelParams, NoiseStream, QuantumState, Scheme, Spin, SseConfig,
};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Csv(_) => PyIOError::new_err(e.to_string()),
        e if e.is_numerical() => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

/// Model parameters from the dimensionless desk inputs.
#[pyclass(name = "Params", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: ModelParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (j, delta_z_over_zg = 8.0, k_zg2_over_omega = 0.05, action_over_hbar = 50.0))]
    fn new(j: f64, delta_z_over_zg: f64, k_zg2_over_omega: f64, action_over_hbar: f64) -> PyResult<Self> {
        let spin = Spin::new(j).map_err(to_py)?;
        let inner =
            ModelParams::dimensionless(spin, delta_z_over_zg, k_zg2_over_omega, action_over_hbar).map_err(to_py)?;
        Ok(PyParams { inner })
    }

    #[getter]
    fn j(&self) -> f64 {
        self.inner.j()
    }

    #[getter]
    fn k(&self) -> f64 {
        self.inner.k
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }

    #[getter]
    fn delta_z(&self) -> f64 {
        self.inner.delta_z
    }

    #[getter]
    fn z_g(&self) -> f64 {
        self.inner.z_g()
    }

    #[getter]
    fn p_g(&self) -> f64 {
        self.inner.p_g()
    }

    #[getter]
    fn period(&self) -> f64 {
        self.inner.period()
    }

    #[getter]
    fn orbit_amplitude(&self) -> f64 {
        self.inner.orbit_amplitude()
    }

    fn well_center(&self, m: f64) -> f64 {
        self.inner.well_center(m)
    }

    fn default_n_max(&self) -> usize {
        self.inner.default_n_max()
    }

    fn weighted_n_max(&self, t_final: f64) -> usize {
        self.inner.weighted_n_max(t_final)
    }

    fn __repr__(&self) -> String {
        format!("Params(j={}, k={}, b={}, delta_z={})", self.inner.j(), self.inner.k, self.inner.b, self.inner.delta_z)
    }
}

/// Sampled quantum trajectory.
#[pyclass(frozen, get_all)]
struct Trajectory {
    t: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    jx: Vec<f64>,
    jy: Vec<f64>,
    jz: Vec<f64>,
    czz: Vec<f64>,
    cpp: Vec<f64>,
    cjzjz: Vec<f64>,
    entropy: Vec<f64>,
    /// `J_z` populations per sample, ascending in `M`.
    histogram: Vec<Vec<f64>>,
    n_max: usize,
    failure: Option<String>,
}

#[pyclass(frozen, get_all)]
struct ClassicalOrbit {
    t: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    s: Vec<[f64; 3]>,
}

/// Moment-closure series; covariances in the normalized units.
#[pyclass(frozen, get_all)]
struct CumulantTraces {
    t: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    jz: Vec<f64>,
    czz: Vec<f64>,
    cpp: Vec<f64>,
    cjzjz: Vec<f64>,
    czp: Vec<f64>,
    czjz: Vec<f64>,
    cpjz: Vec<f64>,
}

#[pyclass(frozen, get_all)]
struct EnsembleSummary {
    t: Vec<f64>,
    z_mean: Vec<f64>,
    z_variance: Vec<f64>,
    jz_mean: Vec<f64>,
    entropy_mean: Vec<f64>,
    n_traj: u64,
    n_complete: u64,
    failed: Vec<u64>,
    up_fraction: f64,
    mean_max_entropy: f64,
    /// Final `<J_z>` of every complete trajectory, in trajectory order.
    final_jz: Vec<f64>,
}

fn sse_config(params: &ModelParams, dt: Option<f64>, scheme: &str) -> PyResult<SseConfig> {
    let scheme: Scheme = scheme.parse().map_err(PyValueError::new_err)?;
    let mut cfg = SseConfig { scheme, ..SseConfig::default() };
    if let Some(dt) = dt {
        cfg.dt = dt;
    } else {
        cfg.dt = 1e-3 * params.period();
    }
    Ok(cfg)
}

fn basis(params: &ModelParams, n_max: Option<usize>, t_final: f64) -> BasisSpec {
    BasisSpec::new(n_max.unwrap_or_else(|| params.weighted_n_max(t_final)), params.spin)
}

/// One measured trajectory from the coherent product state. `dt` defaults
/// to a thousandth of a period and `n_max` to the spin-weighted estimate.
#[pyfunction]
#[pyo3(signature = (params, t_final_periods = 8.0, seed = 1, trajectory_id = 0, n_max = None, dt = None, scheme = "kraus", sample_stride = 10))]
#[allow(clippy::too_many_arguments)]
fn run_sse(
    py: Python<'_>,
    params: &PyParams,
    t_final_periods: f64,
    seed: u64,
    trajectory_id: u64,
    n_max: Option<usize>,
    dt: Option<f64>,
    scheme: &str,
    sample_stride: u64,
) -> PyResult<Trajectory> {
    let p = params.inner;
    let t_final = t_final_periods * p.period();
    let cfg = sse_config(&p, dt, scheme)?;
    let basis = basis(&p, n_max, t_final);
    let rec = py
        .detach(|| {
            let ops = build_operators(&p, &basis)?;
            let init = standard_initial_state(&p, &basis)?;
            run_trajectory(&init, &ops, &cfg, &mut NoiseStream::new(seed, trajectory_id), t_final, sample_stride)
        })
        .map_err(to_py)?;
    Ok(Trajectory {
        z: rec.column(|o| o.z),
        p: rec.column(|o| o.p),
        jx: rec.column(|o| o.jx),
        jy: rec.column(|o| o.jy),
        jz: rec.column(|o| o.jz),
        czz: rec.column(|o| o.czz),
        cpp: rec.column(|o| o.cpp),
        cjzjz: rec.column(|o| o.cjzjz),
        failure: rec.failure.as_ref().map(|f| f.message.clone()),
        t: rec.times,
        entropy: rec.entropy,
        histogram: rec.jz_histogram,
        n_max: basis.n_max,
    })
}

/// Classical orbit with the spin along x.
#[pyfunction]
#[pyo3(signature = (params, t_final_periods = 8.0, dt = None, sample_stride = 10))]
fn run_classical(
    params: &PyParams,
    t_final_periods: f64,
    dt: Option<f64>,
    sample_stride: u64,
) -> PyResult<ClassicalOrbit> {
    let p = params.inner;
    let init = ClassicalState::matched(&p, p.orbit_amplitude(), 0.0, [1.0, 0.0, 0.0]).map_err(to_py)?;
    let dt = dt.unwrap_or(1e-3 * p.period());
    let rec = classical_run(&init, &p, dt, t_final_periods * p.period(), sample_stride).map_err(to_py)?;
    Ok(ClassicalOrbit { t: rec.times, z: rec.z, p: rec.p, s: rec.s })
}

/// Gaussian moment closure driven by the same noise stream as
/// `run_sse(seed=seed, trajectory_id=trajectory_id)`.
#[pyfunction]
#[pyo3(signature = (params, t_final_periods = 8.0, seed = 1, trajectory_id = 0, dt = None, sample_stride = 10))]
fn run_cumulant(
    params: &PyParams,
    t_final_periods: f64,
    seed: u64,
    trajectory_id: u64,
    dt: Option<f64>,
    sample_stride: u64,
) -> PyResult<CumulantTraces> {
    let p = params.inner;
    let init = MomentState::coherent_product(&p, p.orbit_amplitude(), 0.0);
    let dt = dt.unwrap_or(1e-3 * p.period());
    let mut noise = NoiseStream::new(seed, trajectory_id);
    let series = cumulant_run(&init, &p, dt, t_final_periods * p.period(), &mut noise, sample_stride).map_err(to_py)?;
    let norm = series.normalized();
    Ok(CumulantTraces {
        z: series.mean.iter().map(|m| m[0]).collect(),
        p: series.mean.iter().map(|m| m[1]).collect(),
        jz: series.mean.iter().map(|m| m[2]).collect(),
        czz: norm.iter().map(|c| c.czz).collect(),
        cpp: norm.iter().map(|c| c.cpp).collect(),
        cjzjz: norm.iter().map(|c| c.cjzjz).collect(),
        czp: norm.iter().map(|c| c.czp).collect(),
        czjz: norm.iter().map(|c| c.czjz).collect(),
        cpjz: norm.iter().map(|c| c.cpjz).collect(),
        t: series.times,
    })
}

/// Independent trajectories on a worker pool; results do not depend on the
/// worker count.
#[pyfunction]
#[pyo3(signature = (params, n_traj, t_final_periods = 8.0, seed = 1, n_max = None, dt = None, threads = None, sample_stride = 10))]
#[allow(clippy::too_many_arguments)]
fn run_ensemble(
    py: Python<'_>,
    params: &PyParams,
    n_traj: u64,
    t_final_periods: f64,
    seed: u64,
    n_max: Option<usize>,
    dt: Option<f64>,
    threads: Option<usize>,
    sample_stride: u64,
) -> PyResult<EnsembleSummary> {
    let p = params.inner;
    let t_final = t_final_periods * p.period();
    let mut spec = EnsembleSpec::new(p, basis(&p, n_max, t_final), sse_config(&p, dt, "kraus")?, n_traj, seed, t_final);
    spec.threads = threads;
    spec.sample_stride = sample_stride;
    let res = py.detach(|| ensemble_run(&spec)).map_err(to_py)?;
    let final_jz = res.complete().filter_map(|r| r.obs.last().map(|o| o.jz)).collect();
    let a = res.aggregates;
    Ok(EnsembleSummary {
        t: a.times,
        z_mean: a.z.mean,
        z_variance: a.z.variance,
        jz_mean: a.jz.mean,
        entropy_mean: a.entropy.mean,
        n_traj: a.n_traj,
        n_complete: a.n_complete,
        failed: a.failed,
        up_fraction: a.up_fraction,
        mean_max_entropy: a.mean_max_entropy,
        final_jz,
    })
}

/// `J_z` populations of the x-polarized spin-coherent state.
#[pyfunction]
fn coherent_histogram(j: f64) -> PyResult<Vec<f64>> {
    let spin = Spin::new(j).map_err(to_py)?;
    let params = ModelParams::dimensionless(spin, 1.0, 0.05, 1.0).map_err(to_py)?;
    let basis = BasisSpec::new(8, spin);
    let motional = motional_coherent_state(&params, &basis, 0.0, 0.0).map_err(to_py)?;
    let spin_part = spin_coherent_state(spin, [1.0, 0.0, 0.0]).map_err(to_py)?;
    Ok(jz_histogram(&QuantumState::product(&motional, &spin_part), &basis))
}

/// Validate a configuration text and return it fully resolved.
#[pyfunction]
fn resolve_config(text: &str) -> PyResult<String> {
    Ok(parse_config(text).map_err(to_py)?.echo())
}

#[pymodule]
pub fn pyspinmotion(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<Trajectory>()?;
    m.add_class::<ClassicalOrbit>()?;
    m.add_class::<CumulantTraces>()?;
    m.add_class::<EnsembleSummary>()?;
    m.add_function(wrap_pyfunction!(run_sse, m)?)?;
    m.add_function(wrap_pyfunction!(run_classical, m)?)?;
    m.add_function(wrap_pyfunction!(run_cumulant, m)?)?;
    m.add_function(wrap_pyfunction!(run_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(coherent_histogram, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_config, m)?)?;
    Ok(())
}
