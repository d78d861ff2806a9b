import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import fd_bracket
from srotlab.errors import IndexOutOfRange, UnknownFrame
from srotlab.frames import (
    CATALOG_NAMES,
    bracket_span_rank,
    catalog,
    custom_frame,
    hormander_depth,
    lie_bracket,
    martinet_set_membership,
)

coords = st.floats(-2, 2, allow_nan=False)


def point(n):
    return st.lists(coords, min_size=n, max_size=n).map(np.array)


def test_heisenberg_fields():
    H = catalog("heisenberg")
    np.testing.assert_array_equal(H.eval(2, [1, 0, 0]), [0, 1, 1])
    for x in ([0, 0, 0], [3, -1, 2]):
        np.testing.assert_array_equal(H.eval(1, x), [1, 0, 0])


def test_martinet_field_on_plane():
    np.testing.assert_array_equal(catalog("martinet").eval(2, [0, 5, 7]), [0, 1, 0])


def test_unknown_frame_and_index():
    with pytest.raises(UnknownFrame):
        catalog("nope")
    H = catalog("heisenberg")
    for i in (0, 3):
        with pytest.raises(IndexOutOfRange):
            H.eval(i, [0, 0, 0])


def test_invalid_rank():
    with pytest.raises(ValueError):
        custom_frame("bad", 3, 3, lambda x: np.zeros(x.shape[:-1] + (3, 3)))


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_frame_shape_and_rank(name):
    f = catalog(name)
    assert 1 <= f.m < f.n
    for x in f.lattice():
        assert np.linalg.matrix_rank(f.fields(x)) == f.m


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_analytic_jacobian_matches_differences(name):
    f = catalog(name)
    rng = np.random.default_rng(1)
    for x in rng.uniform(-1.5, 1.5, size=(20, f.n)):
        np.testing.assert_allclose(f.jacobians(x), f.fd_jacobians(x), atol=1e-8)


def test_brackets_against_difference_oracle():
    H, M = catalog("heisenberg"), catalog("martinet")
    for x in ([0, 0, 0], [1.2, -3, 0.4]):
        np.testing.assert_allclose(lie_bracket(H, 1, 2, x), [0, 0, 1], atol=1e-12)
        np.testing.assert_allclose(fd_bracket(H, 1, 2, x), [0, 0, 1], atol=1e-8)
    np.testing.assert_allclose(lie_bracket(M, 1, 2, [1, 0, 0]), [0, 0, 2], atol=1e-12)
    np.testing.assert_allclose(fd_bracket(M, 1, 2, [1, 0, 0]), [0, 0, 2], atol=1e-8)


@pytest.mark.parametrize("name", CATALOG_NAMES)
@given(data=st.data())
def test_bracket_antisymmetry(name, data):
    f = catalog(name)
    x = data.draw(point(f.n))
    i = data.draw(st.integers(1, f.m))
    j = data.draw(st.integers(1, f.m))
    np.testing.assert_allclose(lie_bracket(f, i, j, x), -lie_bracket(f, j, i, x), atol=1e-9)
    np.testing.assert_allclose(lie_bracket(f, i, i, x), 0, atol=1e-12)
    np.testing.assert_allclose(lie_bracket(f, i, j, x), fd_bracket(f, i, j, x), atol=1e-6)


def test_span_rank_examples():
    H, M = catalog("heisenberg"), catalog("martinet")
    assert bracket_span_rank(H, [0, 0, 0], 2) == 3
    assert bracket_span_rank(M, [0, 0, 0], 2) == 2
    assert bracket_span_rank(M, [0, 0, 0], 3) == 3


def test_membership_examples():
    M, H = catalog("martinet"), catalog("heisenberg")
    assert martinet_set_membership(M, [0, 2, -1])
    assert not martinet_set_membership(M, [0.5, 0, 0])
    assert not martinet_set_membership(H, [0.3, -2, 1])


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_hormander_on_lattice(name):
    f = catalog(name)
    for x in f.lattice():
        d = hormander_depth(f, x, max_depth=3)
        assert d is not None and d <= 3


def test_membership_band_on_lattice():
    M = catalog("martinet")
    axis = np.linspace(-1, 1, 9)
    for a in axis:
        for b in axis[::4]:
            assert martinet_set_membership(M, [a, b, 0.3]) == (a == 0.0)


def test_custom_frame_uses_difference_jacobians():
    f = custom_frame(
        "grushin_like",
        3,
        2,
        lambda x: np.stack(
            [np.stack([np.ones_like(x[..., 0]), 0 * x[..., 0], 0 * x[..., 0]], -1),
             np.stack([0 * x[..., 0], np.ones_like(x[..., 0]), x[..., 0]], -1)],
            -2,
        ),
    )
    np.testing.assert_allclose(lie_bracket(f, 1, 2, [0.3, 0, 0]), [0, 0, 1], atol=1e-8)


def test_describe_contains_lattice():
    d = catalog("rank2_dim4").describe()
    assert (d["name"], d["n"], d["m"]) == ("rank2_dim4", 4, 2)
    assert len(d["lattice"]) == d["lattice_size"] == 5**4
