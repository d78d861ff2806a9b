import numpy as np
import pytest

from srotlab.errors import WrongDimension
from srotlab.frames import catalog
from srotlab.geodesics import HorizontalPath
from srotlab.singular import (
    abnormal_certificate,
    dim3_singular_classifier,
    endpoint_rank,
    goh_test,
    gramian,
    is_singular,
)

H, M = catalog("heisenberg"), catalog("martinet")
R4, D4 = catalog("two_generating_r4"), catalog("rank2_dim4")


def random_path(frame, rng, steps=200):
    a, b, c = rng.uniform(-1, 1, (3, frame.m))
    w = rng.uniform(1, 3)
    return HorizontalPath.from_function(frame, rng.uniform(-1, 1, frame.n), lambda t: a + b * t + c * np.sin(w * t), steps)


def test_heisenberg_line_is_regular():
    path = HorizontalPath.constant(H, [0, 0, 0], [1, 0])
    assert endpoint_rank(H, path) == 3
    assert abnormal_certificate(H, path) is None


def test_martinet_arc_is_goh_singular():
    path = HorizontalPath.constant(M, [0, 0, 0], [0, 1])
    assert endpoint_rank(M, path) == 2
    cert = abnormal_certificate(M, path)
    assert cert is not None and cert.residual < 1e-8
    np.testing.assert_allclose(cert.p0, [0, 0, 1], atol=1e-10)
    assert goh_test(M, cert) and cert.goh_residual < 1e-8
    assert dim3_singular_classifier(M, path)


def test_martinet_arc_at_height():
    path = HorizontalPath.constant(M, [0, -1, 0.7], [0, 2.5])
    assert dim3_singular_classifier(M, path)
    assert is_singular(M, path)


def test_rank2_dim4_f1_curve():
    path = HorizontalPath.constant(D4, np.zeros(4), [1, 0])
    assert endpoint_rank(D4, path) == 3
    cert = abnormal_certificate(D4, path)
    assert cert is not None and cert.residual < 1e-8
    np.testing.assert_allclose(np.abs(cert.p0), [0, 0, 0, 1], atol=1e-10)


def test_constant_paths():
    # the Gramian of a constant path is F^T F: rank m, never full
    for f in (H, R4, M):
        path = HorizontalPath.constant(f, np.full(f.n, 0.3), np.zeros(f.m), steps=50)
        assert endpoint_rank(f, path) == f.m
        np.testing.assert_allclose(gramian(f, path), f.fields(path.x0).T @ f.fields(path.x0), atol=1e-14)
        assert not goh_test(f, abnormal_certificate(f, path))


def test_two_generating_constant_paths_are_not_goh():
    rng = np.random.default_rng(8)
    for x in rng.uniform(-1, 1, (20, 4)):
        cert = abnormal_certificate(R4, HorizontalPath.constant(R4, x, [0, 0, 0], steps=20))
        assert not goh_test(R4, cert)


def test_martinet_leaving_the_plane():
    assert not dim3_singular_classifier(M, HorizontalPath.constant(M, [0, 0, 0], [1, 0]))


def test_classifier_needs_dimension_three():
    with pytest.raises(WrongDimension):
        dim3_singular_classifier(D4, HorizontalPath.constant(D4, np.zeros(4), [1, 0], steps=10))


@pytest.mark.parametrize("frame", [H, M], ids=["heisenberg", "martinet"])
def test_routes_agree_on_random_paths(frame):
    rng = np.random.default_rng(21)
    for _ in range(50):
        path = random_path(frame, rng)
        assert dim3_singular_classifier(frame, path) == is_singular(frame, path)
    for c in np.linspace(-1, 1, 5):  # arcs inside the Martinet plane
        path = HorizontalPath.constant(M, [0, 0.2, c], [0, 1 + c], steps=200)
        assert dim3_singular_classifier(M, path) and is_singular(M, path)


def test_certificates_are_valid():
    for path, frame in (
        (HorizontalPath.constant(M, [0, 0, 0], [0, 1]), M),
        (HorizontalPath.constant(D4, [0.2, 0, -0.1, 0.3], [0.7, 0]), D4),
        (HorizontalPath.from_function(M, [0, 0, 0], lambda t: np.array([0.0, np.cos(3 * t)])), M),
    ):
        cert = abnormal_certificate(frame, path)
        assert cert.residual < 1e-6 and cert.transport_defect < 1e-6


def test_rank_is_scale_invariant():
    rng = np.random.default_rng(4)
    for frame in (H, M, D4):
        for _ in range(5):
            path = random_path(frame, rng)
            # same image at double speed on [0, 1/2], then at rest
            U = np.vstack([2 * path.controls, np.zeros((len(path.controls) - 1, frame.m))])
            fast = HorizontalPath(frame, path.x0, U)
            np.testing.assert_allclose(fast.trajectory[len(path.controls) - 1], path.endpoint, atol=1e-3)
            assert endpoint_rank(frame, path) == endpoint_rank(frame, fast)


def test_certificate_json_is_serialisable():
    import json

    cert = abnormal_certificate(M, HorizontalPath.constant(M, [0, 0, 0], [0, 1], steps=50))
    goh_test(M, cert)
    d = json.loads(json.dumps(cert.to_json()))
    assert d["goh_residual"] < 1e-8
