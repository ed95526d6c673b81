import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dcsolve import kernels
from dcsolve.problems import sfs_coefficients

BACKENDS = kernels.backends()
finite = st.floats(-50, 50, allow_nan=False)


def test_compiled_backend_is_active():
    # the package is built with the extension; the fallback is exercised below
    assert kernels.BACKEND == "compiled"
    assert set(BACKENDS) == {"python", "compiled"}


def closed_form_projection(z, radius, eps):
    """Projection onto {||w|| <= radius, w[1] <= -eps} in the plane, by cases."""
    z = np.asarray(z, dtype=float)
    cand = []
    # interior
    if np.linalg.norm(z) <= radius and z[1] <= -eps:
        return z.copy()
    # on the circle only
    w = z * radius / np.linalg.norm(z) if np.linalg.norm(z) > 0 else None
    if w is not None and w[1] <= -eps:
        cand.append(w)
    # on the line only
    w = np.array([z[0], -eps])
    if np.linalg.norm(w) <= radius:
        cand.append(w)
    # the two corners
    x = math.sqrt(radius ** 2 - eps ** 2)
    cand += [np.array([x, -eps]), np.array([-x, -eps])]
    return min(cand, key=lambda c: np.linalg.norm(c - z))


@given(arrays(np.float64, 2, elements=finite), st.floats(0.5, 20), st.floats(1e-4, 0.4))
def test_dykstra_matches_closed_form(z, radius, eps):
    want = closed_form_projection(z, radius, eps)
    for mod in BACKENDS.values():
        got = mod.dykstra_ball_halfspace(z, radius, eps)
        assert np.allclose(got, want, atol=1e-7 * (1 + radius))


@given(arrays(np.float64, st.integers(2, 6), elements=finite), st.floats(0.5, 20))
def test_dykstra_feasible_and_idempotent(z, radius):
    eps = 1e-3
    for mod in BACKENDS.values():
        w = mod.dykstra_ball_halfspace(z, radius, eps)
        assert np.linalg.norm(w) <= radius * (1 + 1e-12) + 1e-12
        assert w[-1] <= -eps + 1e-12
        assert np.allclose(mod.dykstra_ball_halfspace(w, radius, eps), w, rtol=0, atol=1e-12)


@given(arrays(np.float64, st.integers(1, 40), elements=finite), st.floats(0, 10))
def test_soft_threshold_backends_agree(z, t):
    outs = [mod.soft_threshold(z, t) for mod in BACKENDS.values()]
    for o in outs[1:]:
        assert np.array_equal(o, outs[0])


@pytest.mark.parametrize("shape", [(2, 2), (3, 5), (8, 8)])
def test_sfs_backends_agree(shape, rng):
    m, n = shape
    yy, xx = np.mgrid[0:m, 0:n].astype(float)
    xx = xx + 0.1 * rng.standard_normal(xx.shape)
    coeffs = [np.ascontiguousarray(c) for c in sfs_coefficients(xx, yy)]
    i2 = rng.uniform(0, 1, (m - 1, n - 1))
    z = rng.standard_normal((m, n))
    res = {k: mod.sfs_value_grad(z, i2, *coeffs, 0.2, -0.3, 0.9) for k, mod in BACKENDS.items()}
    v0, g0 = res["python"]
    for v, g in res.values():
        assert v == pytest.approx(v0, rel=1e-12)
        assert np.allclose(g, g0, rtol=1e-12, atol=1e-12 * np.abs(g0).max())
    for mod in BACKENDS.values():
        v, g = mod.sfs_value_grad(z, i2, *coeffs, 0.2, -0.3, 0.9, want_grad=False)
        assert g is None and v == pytest.approx(v0, rel=1e-12)


def test_fallback_selected_by_environment():
    import subprocess
    import sys

    code = "import dcsolve.kernels as k; print(k.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={"DCSOLVE_PURE_PYTHON": "1", "PATH": ""}, check=True)
    assert out.stdout.strip() == "python"
