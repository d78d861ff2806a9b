import numpy as np
import pytest

from srotlab import kernels
from srotlab.frames import CATALOG_NAMES, catalog, custom_frame

compiled = pytest.mark.skipif(kernels.BACKEND != "compiled", reason="compiled extension not built")


@compiled
@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_backends_agree(name):
    f = catalog(name)
    rng = np.random.default_rng(3)
    X0 = rng.uniform(-1, 1, (16, f.n))
    P0 = rng.uniform(-1, 1, (16, f.n))
    a = kernels.ham_endpoints(f, X0, P0, 200, backend="compiled")
    b = kernels.ham_endpoints(f, X0, P0, 200, backend="python")
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-13)
    a = kernels.ham_trajectory(f, X0[0], P0[0], 200, backend="compiled")
    b = kernels.ham_trajectory(f, X0[0], P0[0], 200, backend="python")
    np.testing.assert_allclose(a[0], b[0], rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-12, atol=1e-13)
    assert a[2] == b[2]
    U = rng.uniform(-1, 1, (201, f.m))
    a = kernels.controlled_flow(f, X0[0], U, P0[0], want_phi=True, backend="compiled")
    b = kernels.controlled_flow(f, X0[0], U, P0[0], want_phi=True, backend="python")
    for u, v in zip(a[:3], b[:3]):
        np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-13)


@compiled
def test_blow_up_rows_are_nan_on_both_backends():
    f = catalog("martinet")
    X0 = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    P0 = np.array([[0.0, 0.0, 1e8], [1.0, 0.0, 0.0]])
    for b in ("compiled", "python"):
        x, _ = kernels.ham_endpoints(f, X0, P0, 20, backend=b)
        assert not np.isfinite(x[0]).all()
        np.testing.assert_allclose(x[1], [1, 0, 0], atol=1e-14)


def test_custom_frames_refuse_compiled():
    f = custom_frame("flat", 2, 1, lambda x: np.stack([np.ones_like(x[..., 0]), 0 * x[..., 0]], -1)[..., None, :])
    x, _ = kernels.ham_endpoints(f, np.zeros((1, 2)), np.array([[2.0, 0.0]]), 10)
    np.testing.assert_allclose(x, [[2.0, 0.0]])
    if kernels.BACKEND == "compiled":
        with pytest.raises(RuntimeError):
            kernels.ham_endpoints(f, np.zeros((1, 2)), np.array([[2.0, 0.0]]), 10, backend="compiled")
