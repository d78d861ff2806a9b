import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import heisenberg_distance
from srotlab.errors import CutLocusPoint, NoConvergence
from srotlab.frames import catalog
from srotlab.geodesics import exp_map, hamiltonian
from srotlab.metric import (
    DEFAULT_OPTIONS,
    ShootingOptions,
    direct_distance,
    distance,
    eikonal_residual,
    multi_geodesic_probe,
)

H = catalog("heisenberg")

# values of the isoperimetric oracle in tests/oracles.py
ORACLE = [
    ((0, 0, 0), (1, 1, 0.5), 1.4142135623730951),
    ((0, 0, 0), (0, 0, 0.25), 1.7724538509055159),
    ((0, 0, 0), (1, 0, 0.3), 1.3867333434165148),
    ((0.2, -0.1, 0.4), (-0.5, 0.6, 0.1), 1.187252816291138),
    ((0, 0, 0), (0.5, 0.5, 1.0), 2.663880636839681),
    ((0, 0, 0), (2, 0, 0), 2.0),
]


@pytest.mark.parametrize("x,y,d", ORACLE)
def test_frozen_oracle_values(x, y, d):
    assert heisenberg_distance(x, y) == pytest.approx(d, abs=1e-14)
    r = distance(H, x, y)
    assert r.value == pytest.approx(d, abs=1e-6)
    assert r.converged and r.endpoint_error <= DEFAULT_OPTIONS.endpoint_tol


def test_line_and_vertical():
    r = distance(H, [0, 0, 0], [1, 1, 0.5])
    assert abs(r.value - math.sqrt(2)) < 1e-3
    np.testing.assert_allclose(r.covector, [1, 1, 0], atol=1e-6)
    assert abs(distance(H, [0, 0, 0], [0, 0, 0.25]).value - math.sqrt(math.pi)) < 1e-2


def test_diagonal():
    r = distance(H, [0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
    assert r.value == 0.0
    np.testing.assert_array_equal(r.covector, 0)


def test_random_pairs_match_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(40):
        x, y = rng.uniform(-1, 1, (2, 3))
        assert distance(H, x, y).value == pytest.approx(heisenberg_distance(x, y), abs=1e-6)


def test_every_covector_is_a_minimizer():
    x, y = np.zeros(3), np.array([0.0, 0.0, 0.25])
    r = distance(H, x, y)
    for p in r.covectors:
        assert 2 * hamiltonian(H, x, p) == pytest.approx(r.value**2, rel=1e-6)
        np.testing.assert_allclose(exp_map(H, x, p), y, atol=1e-7)


def test_symmetry_on_heisenberg():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        x, y = rng.uniform(-1, 1, (2, 3))
        worst = max(worst, abs(distance(H, x, y).value - distance(H, y, x).value))
    assert worst < 1e-4


@pytest.mark.parametrize("name", ["martinet", "two_generating_r4"])
def test_symmetry_on_other_frames(name):
    f = catalog(name)
    rng = np.random.default_rng(11)
    for _ in range(6):
        x, y = rng.uniform(-0.6, 0.6, (2, f.n))
        assert distance(f, x, y).value == pytest.approx(distance(f, y, x).value, abs=1e-4)


@given(seed=st.integers(0, 2**31 - 1))
def test_triangle_and_lower_bound(seed):
    rng = np.random.default_rng(seed)
    x, y, z = rng.uniform(-1, 1, (3, 3))
    dxy, dyz, dxz = (distance(H, a, b).value for a, b in ((x, y), (y, z), (x, z)))
    assert dxz <= dxy + dyz + 1e-4
    assert dxy >= math.hypot(*(y - x)[:2]) - 1e-6


def test_direct_route_is_independent_and_consistent():
    x, y = np.zeros(3), np.array([0.6, -0.2, 0.3])
    d = heisenberg_distance(x, y)
    raw = direct_distance(H, x, y, ShootingOptions(steps=400))
    assert raw.converged
    assert raw.value == pytest.approx(d, rel=1e-3)


def test_failure_carries_best_candidate():
    opts = ShootingOptions(direct=False, coarse_iter=0, max_iter=0)
    with pytest.raises(NoConvergence) as exc:
        distance(H, [0, 0, 0], [0.3, 0.1, 0.7], opts)
    assert exc.value.result is not None and not exc.value.result.converged
    r = distance(H, [0, 0, 0], [0.3, 0.1, 0.7], opts, raise_on_failure=False)
    assert not r.converged


def test_multiplicity_probe():
    assert multi_geodesic_probe(H, [0, 0, 0], [1, 1, 0.5]).multiplicity == 1
    v = multi_geodesic_probe(H, [0, 0, 0], [0, 0, 0.25])
    assert v.multiplicity >= 2 and v.cut_locus_proxy
    assert v.value == pytest.approx(math.sqrt(math.pi), abs=1e-2)
    same = multi_geodesic_probe(H, [1, 2, 3], [1, 2, 3])
    assert same.multiplicity == 1 and not np.any(same.representatives[0])


def test_eikonal_examples():
    assert abs(eikonal_residual(H, [0, 0, 0], [1, 1, 0.5])) < 5e-2
    assert abs(eikonal_residual(H, [0, 0, 0], [2, 0, 0])) < 5e-2
    with pytest.raises(CutLocusPoint):
        eikonal_residual(H, [0, 0, 0], [0, 0, 0])
    with pytest.raises(CutLocusPoint):
        eikonal_residual(H, [0, 0, 0], [0, 0, 0.25])


def test_options_are_hashable_and_serialisable():
    d = DEFAULT_OPTIONS.as_dict()
    assert d["endpoint_tol"] == 1e-8 and isinstance(d["vertical_grid"], list)
    assert hash(DEFAULT_OPTIONS) == hash(ShootingOptions())
