import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srotlab.errors import NonFinite
from srotlab.frames import CATALOG_NAMES, catalog
from srotlab.geodesics import (
    HorizontalPath,
    exp_map,
    flow_extremal,
    hamiltonian,
    horizontality_residual,
    length_energy,
)

H = catalog("heisenberg")


def test_hamiltonian_values():
    assert hamiltonian(H, [0, 0, 0], [1, 0, 0]) == 0.5
    assert hamiltonian(H, [1, 0, 0], [0, 0, 1]) == 0.5
    for name in CATALOG_NAMES:
        f = catalog(name)
        assert hamiltonian(f, np.ones(f.n), np.zeros(f.n)) == 0.0


def test_straight_lines():
    ext = flow_extremal(H, [0, 0, 0], [1, 0, 0])
    np.testing.assert_allclose(ext.xs, np.column_stack([ext.grid, 0 * ext.grid, 0 * ext.grid]), atol=1e-14)
    np.testing.assert_allclose(ext.ps, np.tile([1, 0, 0], (len(ext.grid), 1)), atol=1e-14)
    ext = flow_extremal(H, [0, 0, 0], [0, 1, 0])
    np.testing.assert_allclose(ext.xs[:, 1], ext.grid, atol=1e-14)
    np.testing.assert_allclose(ext.xs[:, [0, 2]], 0, atol=1e-14)


def test_exp_examples():
    np.testing.assert_allclose(exp_map(H, [0, 0, 0], [1, 0, 0]), [1, 0, 0], atol=1e-14)
    np.testing.assert_allclose(exp_map(H, [0, 0, 0], [1, 1, 0]), [1, 1, 0.5], atol=1e-12)
    x = np.array([0.3, -0.2, 0.9])
    np.testing.assert_array_equal(exp_map(H, x, np.zeros(3)), x)


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_zero_covector_is_constant(name):
    f = catalog(name)
    x0 = np.linspace(-0.5, 0.5, f.n)
    ext = flow_extremal(f, x0, np.zeros(f.n), steps=50)
    np.testing.assert_array_equal(ext.xs, np.tile(x0, (51, 1)))


def test_length_energy_examples():
    ext = flow_extremal(H, [0, 0, 0], [1, 0, 0])
    np.testing.assert_allclose(length_energy(ext), (1.0, 1.0), rtol=1e-14)
    assert length_energy(HorizontalPath.constant(H, [0, 0, 0], [0, 0], steps=10)) == (0.0, 0.0)


def test_blow_up_is_reported():
    with pytest.raises(NonFinite):
        exp_map(catalog("martinet"), [1, 0, 0], [0, 0, 1e8], steps=10)


@pytest.mark.parametrize("name", CATALOG_NAMES)
@given(seed=st.integers(0, 2**31 - 1))
def test_controls_and_energy_identities(name, seed):
    f = catalog(name)
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(-1, 1, f.n)
    p0 = rng.uniform(-1, 1, f.n)
    ext = flow_extremal(f, x0, p0)
    # controls are p . f_i along the lift
    np.testing.assert_array_equal(ext.controls, np.einsum("bk,bik->bi", ext.ps, f.fields(ext.xs)))
    assert ext.energy_drift() < 1e-6
    length, energy = length_energy(ext)
    h0 = hamiltonian(f, x0, p0)
    assert abs(energy - 2 * h0) <= 1e-6 * max(1.0, 2 * h0)
    assert abs(length**2 - energy) <= 1e-8 * max(energy, 1e-12)
    assert horizontality_residual(f, ext.xs, ext.controls) < 1e-8


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_scaling_law(name):
    f = catalog(name)
    rng = np.random.default_rng(7)
    for _ in range(5):
        x0, p0 = rng.uniform(-1, 1, f.n), rng.uniform(-1, 1, f.n)
        ext = flow_extremal(f, x0, p0, steps=1000)
        for t in (0.25, 0.5, 0.75):
            k = int(round(t * 1000))
            np.testing.assert_allclose(exp_map(f, x0, t * p0), ext.xs[k], atol=1e-6)


def test_path_validation():
    with pytest.raises(ValueError):
        HorizontalPath(H, [0, 0, 0], np.zeros((5, 3)))
    with pytest.raises(ValueError):
        HorizontalPath(H, [0, 0, 0], np.zeros((1, 2)))
    with pytest.raises(ValueError):
        flow_extremal(H, [0, 0, 0], [1, 0, 0], steps=0)
