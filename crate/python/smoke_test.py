"""Smoke test for the spindrift_py extension.

Build and import with either
    maturin develop -m crates/python/Cargo.toml --features extension-module
or
    cargo build --release -p spindrift-python --features extension-module
    cp target/release/libspindrift_py.so python/spindrift_py.so
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import spindrift_py as sd

CONFIG = """
mode = "sllg"

[grid]
nx = 6
ny = 6
nz = 6

[time]
t_end = 0.02
"""


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    g = sd.Grid.cube(6)
    assert g.dims == [6, 6, 6] and g.n_cells == 216

    m = sd.smooth_twist(g, math.pi / 2)
    assert len(m) == g.n_cells
    assert m.max_unit_deviation() < 1e-12

    up = sd.VectorField.uniform(g, [0.0, 0.0, 1.0])
    hd = sd.demag_field(up)
    assert -hd.inner(up) <= up.norm_l2() ** 2 + 1e-12

    params = sd.SpinParams(beta=0.9, beta_prime=0.8)
    s, iters = sd.solve_stationary_spin(m, params)
    assert iters > 0 and s.norm_l2() > 0.0

    params.epsilon = 1e-2
    s1 = sd.step_spin_transient(s, m, params, 1e-2)
    assert (s1 - s).norm_l2() < 1e-8

    e = sd.energy(m, sd.LlgParams(mu0=0.0))
    assert close(e["total"], e["exchange"], 1e-12)

    out = sd.run(CONFIG)
    ledger = out["ledger"]
    assert ledger[-1]["total"] <= ledger[0]["total"] + 1e-12
    assert out["m"].max_unit_deviation() < 1e-10

    checks = sd.validate()
    for c in checks:
        print(("PASS" if c["passed"] else "FAIL"), c["name"])
    assert all(c["passed"] for c in checks)
    print("smoke test ok")


if __name__ == "__main__":
    main()
