use std::ffi::CString;
use std::sync::Once;

use pyo3::prelude::*;
use pyo3::types::PyDict;

use pyspinmotion::pyspinmotion;

fn init() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        pyo3::append_to_inittab!(pyspinmotion);
        Python::initialize();
    });
}

fn run(code: &str) -> PyResult<()> {
    init();
    Python::attach(|py| {
        let globals = PyDict::new(py);
        let code = CString::new(code).unwrap();
        py.run(&code, Some(&globals), None)
    })
}

#[test]
fn params_match_the_desk_preset() {
    run(r#"
import math, pyspinmotion as sm
p = sm.Params(0.5)
assert abs(p.z_g - 1 / math.sqrt(2)) < 1e-15
assert abs(p.delta_z - 8 * p.z_g) < 1e-12
assert abs(p.b * p.z_g + 8.0) < 1e-12
assert abs(p.well_center(0.5) - p.delta_z) < 1e-12
assert 400 < p.weighted_n_max(8 * p.period) < p.default_n_max()
"#)
    .unwrap();
}

#[test]
fn bad_inputs_raise_value_error() {
    run(r#"
import pyspinmotion as sm
for bad in (lambda: sm.Params(0.3), lambda: sm.Params(1, k_zg2_over_omega=-1.0),
            lambda: sm.run_sse(sm.Params(0.5), scheme="euler"),
            lambda: sm.resolve_config("preset = desk\nnonsense = 1\n")):
    try:
        bad()
    except ValueError:
        pass
    else:
        raise AssertionError("accepted bad input")
"#)
    .unwrap();
}

#[test]
fn short_trajectory_and_closure_share_the_grid() {
    run(r#"
import pyspinmotion as sm
p = sm.Params(2.0)
tr = sm.run_sse(p, t_final_periods=0.2, n_max=200, seed=3)
cu = sm.run_cumulant(p, t_final_periods=0.2, seed=3)
cl = sm.run_classical(p, t_final_periods=0.2)
assert tr.failure is None
assert tr.t == cu.t == cl.t
assert all(abs(sum(h) - 1) < 1e-12 for h in tr.histogram)
assert abs(tr.z[0] - p.orbit_amplitude) < 1e-9
assert tr.entropy[0] < 1e-10 < max(tr.entropy)
"#)
    .unwrap();
}

#[test]
fn coherent_histogram_is_binomial() {
    run(r#"
import math, pyspinmotion as sm
h = sm.coherent_histogram(3)
assert len(h) == 7
for i, x in enumerate(h):
    assert abs(x - math.comb(6, i) / 64) < 1e-14
"#)
    .unwrap();
}

#[test]
fn ensemble_is_independent_of_workers() {
    run(r#"
import pyspinmotion as sm
p = sm.Params(0.5)
a = sm.run_ensemble(p, 3, t_final_periods=0.2, n_max=200, threads=1)
b = sm.run_ensemble(p, 3, t_final_periods=0.2, n_max=200, threads=2)
assert a.z_mean == b.z_mean and a.final_jz == b.final_jz
assert a.n_complete == 3 and a.failed == []
"#)
    .unwrap();
}
