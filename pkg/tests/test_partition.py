import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etcabs.partition import (ConicRegion, UnsupportedDimension, angle_of, cone_matrix,
                              locate, make_cones, regions_table, sector_extrema)


def test_make_cones_layout():
    regs = make_cones(10)
    assert len(regs) == 20
    assert [r.index for r in regs] == list(range(1, 21))
    for r in regs:
        assert r.width == pytest.approx(math.pi / 10)
    for s in range(1, 11):
        a, b = regs[s - 1], regs[s + 9]
        assert a.mirror_of == s + 10 and b.mirror_of == s
        assert a.Q is b.Q
        assert b.theta_lo == pytest.approx(a.theta_lo + math.pi)


def test_make_cones_rejects_other_dimensions():
    with pytest.raises(UnsupportedDimension):
        make_cones(10, n=3)
    with pytest.raises(ValueError):
        make_cones(1)


def test_cone_matrix_width_guard():
    with pytest.raises(ValueError):
        cone_matrix(0.0, math.pi)
    with pytest.raises(ValueError):
        cone_matrix(1.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(lo=st.floats(0, 2 * math.pi), w=st.floats(0.01, math.pi - 0.01),
       phi=st.floats(0, 2 * math.pi))
def test_cone_matrix_sign_pattern(lo, w, phi):
    Q = cone_matrix(lo, lo + w)
    u = np.array([math.cos(phi), math.sin(phi)])
    val = u @ Q @ u
    d = (phi - lo) % math.pi   # double cone: mirror counts too
    if 1e-6 < d < w - 1e-6:
        assert val > 0
    elif w + 1e-6 < d < math.pi - 1e-6:
        assert val < 0
    assert u @ Q @ u == pytest.approx((-u) @ Q @ (-u))


@settings(max_examples=300, deadline=None)
@given(phi=st.floats(0, 2 * math.pi, exclude_max=True), r=st.floats(1e-6, 1e6))
def test_locate_matches_contains_angle(phi, r):
    regs = make_cones(10)
    x = r * np.array([math.cos(phi), math.sin(phi)])
    s = locate(x, 20)
    assert 1 <= s <= 20
    assert regs[s - 1].contains_angle(angle_of(x))


def test_locate_boundaries():
    q = 20
    w = 2 * math.pi / q
    assert locate([1.0, 0.0], q) == 1
    assert locate([1.0, -1e-15], q) == 1
    # shared ray between regions 3 and 4 goes to the lower index
    ray = 3 * w
    assert locate([math.cos(ray), math.sin(ray)], q) == 3
    assert locate([math.cos(ray + 1e-6), math.sin(ray + 1e-6)], q) == 4
    assert locate([0.0, 1.0], q) == 5
    assert locate([-1.0, 0.0], q) == 10
    with pytest.raises(ValueError):
        locate([0.0, 0.0], q)
    with pytest.raises(UnsupportedDimension):
        locate([1.0, 0.0, 0.0], q)


def test_locate_mirror_off_boundaries(rng):
    for phi in rng.uniform(0, 2 * math.pi, 500):
        x = np.array([math.cos(phi), math.sin(phi)])
        s, t = locate(x, 20), locate(-x, 20)
        assert (s - 1 + 10) % 20 + 1 == t


@pytest.mark.parametrize("lo,w", [(0.0, 0.3), (1.2, 2.5), (5.9, 0.8), (3.0, 1.57)])
def test_sector_extrema_dense_oracle(lo, w, rng):
    for _ in range(20):
        R = rng.standard_normal((2, 2))
        S = R + R.T
        mn, mx = sector_extrema(S, lo, lo + w)
        ph = np.linspace(lo, lo + w, 20001)
        U = np.stack([np.cos(ph), np.sin(ph)])
        v = np.einsum("ik,ij,jk->k", U, S, U)
        assert mn == pytest.approx(v.min(), abs=1e-7)
        assert mx == pytest.approx(v.max(), abs=1e-7)
        assert mn <= v.min() + 1e-12 and mx >= v.max() - 1e-12


def test_regions_table_and_rays():
    regs = make_cones(4)
    tab = regions_table(regs)
    assert tab["s"] == list(range(1, 9))
    assert tab["mirror_of"][:4] == [5, 6, 7, 8]
    a, b = regs[0].rays
    np.testing.assert_allclose(a, [1, 0])
    np.testing.assert_allclose(b, [math.cos(math.pi / 4), math.sin(math.pi / 4)])
    assert isinstance(regs[0], ConicRegion)
    m = regs[0].midpoint
    assert m @ regs[0].Q @ m > 0
