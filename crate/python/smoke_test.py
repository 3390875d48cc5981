"""Smoke test for the pyspinmotion extension.

Build and install first:

    pip install --no-build-isolation -e crates/py
    python3 python/smoke_test.py
"""

import math

import pyspinmotion as sm


def main():
    half = sm.Params(0.5)
    assert abs(half.z_g - 1 / math.sqrt(2)) < 1e-15
    assert half.b < 0

    tr = sm.run_sse(half, t_final_periods=1.0, seed=11)
    assert tr.failure is None, tr.failure
    assert len(tr.t) == len(tr.z) == len(tr.histogram)
    assert abs(tr.z[0] - half.orbit_amplitude) < 1e-9
    peak = max(tr.entropy)
    print(f"J=1/2, 1 period: n_max {tr.n_max}, peak entropy {peak / math.log(2):.3f} ln 2, final <Jz> {tr.jz[-1]:+.3f}")

    cl = sm.run_classical(half, t_final_periods=1.0)
    assert cl.t == tr.t
    assert all(abs(s[0] ** 2 + s[1] ** 2 + s[2] ** 2 - 0.25) < 1e-12 for s in cl.s)

    ten = sm.Params(10)
    cu = sm.run_cumulant(ten, t_final_periods=2.0)
    assert abs(cu.czz[0] - 1.0) < 1e-12 and abs(cu.cjzjz[0] - 5.0) < 1e-12
    print(f"J=10 closure: max Czz/z_g^2 {max(cu.czz):.3f}")

    h = sm.coherent_histogram(10)
    assert max(abs(x - math.comb(20, i) / 2**20) for i, x in enumerate(h)) < 1e-12

    ens = sm.run_ensemble(half, 4, t_final_periods=0.5, threads=2)
    assert ens.n_complete == 4, ens.failed
    print(f"ensemble of 4: mean normalized peak entropy {ens.mean_max_entropy:.3f}")

    print(sm.resolve_config("preset = desk\nJ = 2\n").splitlines()[2])
    print("smoke test passed")


if __name__ == "__main__":
    main()
