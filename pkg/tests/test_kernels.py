import math
import os
import subprocess
import sys

import numpy as np
import pytest

from etcabs import _pykernels, kernels
from etcabs.properties import random_cone_instance

try:
    from etcabs import _kernels
except ImportError:
    _kernels = None

needs_ext = pytest.mark.skipif(_kernels is None, reason="compiled extension not built")

A = np.array([[0.0, 1.0], [-2.0, 3.0]])
M = np.array([[1.05, 0.2], [0.2, 2.4]])


def test_backend_flag():
    assert kernels.BACKEND in ("compiled", "python")
    if _kernels is not None and os.environ.get("ETCABS_PURE_PYTHON") != "1":
        assert kernels.BACKEND == "compiled"


def test_pure_python_forced_by_environment():
    env = dict(os.environ, ETCABS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from etcabs import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.parametrize("periodic", [0, 1])
@pytest.mark.parametrize("cap", [8.0, 0.05])
@needs_ext
def test_integrate_interval_parity(periodic, cap):
    x = np.array([1.0, -0.3])
    c = np.array([0.0, -0.2])
    e = np.array([0.0, 0.03])
    args = (A, c, e, periodic, 2 * math.pi, 0.3, M, 0.5, x, 1e-4, 1e-7, cap)
    t1, x1, h1, w1 = _kernels.integrate_interval(*args)
    t2, x2, h2, w2 = _pykernels.integrate_interval(*args)
    assert t1 == pytest.approx(t2, abs=1e-12)
    np.testing.assert_allclose(np.asarray(x1), np.asarray(x2), atol=1e-12)
    assert bool(h1) == bool(h2)
    assert w1 == pytest.approx(w2, abs=1e-12)


@needs_ext
def test_cone_search_parity(rng):
    for _ in range(200):
        block, Q = random_cone_instance(rng)
        f1, a1 = _kernels.cone_min_lmax(block, Q, 1e-9)
        f2, a2 = _pykernels.cone_min_lmax(block, Q, 1e-9)
        assert f1 == pytest.approx(f2, rel=1e-9, abs=1e-12)
        # the minimiser need not be unique; each multiplier must reproduce its value
        pad = np.zeros((4, 4))
        pad[:2, :2] = Q
        for f, a in ((f1, a1), (f2, a2)):
            assert np.linalg.eigvalsh(block + a * pad)[-1] == pytest.approx(f, abs=1e-10)


@pytest.mark.parametrize("mod", [_pykernels, _kernels])
def test_sym_lmax_against_numpy(mod, rng):
    if mod is None:
        pytest.skip("compiled extension not built")
    for d in (1, 2, 4, 6):
        R = rng.standard_normal((d, d))
        S = R + R.T
        assert mod.sym_lmax(S) == pytest.approx(np.linalg.eigvalsh(S)[-1], abs=1e-10)


def test_read_only_inputs_accepted(design):
    Q = design.plant.A.copy()
    Q = 0.5 * (Q + Q.T)
    Q.setflags(write=False)
    blk = -np.eye(4)
    blk.setflags(write=False)
    f, _ = kernels.cone_min_lmax(blk, Q, 1e-9)
    assert f <= 0
