import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate
from scipy.spatial.distance import pdist, squareform

from depcomb import _kernels_py, kernels

compiled = pytest.importorskip("depcomb._kernels", reason="compiled extension not built")


def test_active_backend_is_compiled():
    assert kernels.BACKEND == "cython"


def test_pure_python_switch():
    env = dict(os.environ, DEPCOMB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import depcomb; print(depcomb.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


counts = arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 9)),
                elements=st.floats(0, 1000, allow_subnormal=False))


@settings(max_examples=50, deadline=None)
@given(counts)
def test_bray_curtis_backends_agree(rows):
    rows[:, 0] += 1.0  # no empty rows
    a = compiled.bray_curtis(np.ascontiguousarray(rows))
    b = _kernels_py.bray_curtis(rows)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-15)


def test_bray_curtis_matches_scipy():
    rows = np.random.default_rng(1).poisson(20, size=(40, 30)).astype(float) + 0.5
    ref = squareform(pdist(rows, "braycurtis"))
    assert np.allclose(kernels.bray_curtis(rows), ref, atol=1e-14)
    assert np.allclose(_kernels_py.bray_curtis(rows), ref, atol=1e-14)


def test_bray_curtis_properties():
    rows = np.random.default_rng(2).gamma(0.5, size=(25, 8))
    d = kernels.bray_curtis(rows)
    assert np.allclose(d, d.T) and np.all(np.diag(d) == 0)
    assert np.all((d >= 0) & (d <= 1))


sorted_rows = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(3, 30)),
                     elements=st.floats(0, 1)).map(lambda a: np.sort(a, axis=1))


@settings(max_examples=50, deadline=None)
@given(sorted_rows, st.data())
def test_hc_backends_agree(p, data):
    m = p.shape[1]
    hs = np.array(sorted(data.draw(st.sets(st.integers(1, m), min_size=1, max_size=4))))
    a = kernels.hc_prefix_max(p, hs)
    b = _kernels_py.hc_prefix_max(p, hs)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_hc_matches_direct_formula():
    p = np.sort(np.random.default_rng(3).random(20))
    m = p.size
    j = np.arange(1, m + 1)
    terms = np.sqrt(m) * (j / m - p) / np.sqrt(p * (1 - p))
    out = kernels.hc_prefix_max(p, [1, 5, 20])[0]
    assert np.allclose(out, [terms[:1].max(), terms[:5].max(), terms.max()])


@settings(max_examples=50, deadline=None)
@given(sorted_rows)
def test_simes_backends_agree(p):
    assert np.allclose(kernels.simes_min(p), _kernels_py.simes_min(p), rtol=1e-14)


def test_simes_direct():
    p = np.array([[0.01, 0.02, 0.5, 0.9]])
    assert kernels.simes_min(p)[0] == pytest.approx(min(0.04, 0.04, 2 / 3, 0.9))


@pytest.mark.parametrize("x", [0.4, 3.0, 25.0])
def test_imhof_integrals_agree(x):
    w = np.array([1.0, 0.6, 0.2, 0.05])
    data = np.ascontiguousarray(np.concatenate(([x, w.size, 1.5, 0.0], w)))
    omega = 0.5 * x

    def integrals(backend):
        head, tail_cos, tail_sin = kernels.imhof_integrands(data, backend=backend)
        return [integrate.quad(head, 0.0, 1.5, epsabs=1e-13, limit=200)[0],
                integrate.quad(tail_cos, 0.0, np.inf, weight="cos", wvar=omega)[0],
                integrate.quad(tail_sin, 0.0, np.inf, weight="sin", wvar=omega)[0]]

    assert np.allclose(integrals("cython"), integrals("python"), rtol=1e-10, atol=1e-12)
