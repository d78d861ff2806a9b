import numpy as np
import pytest

from srotlab.frames import catalog
from srotlab.regularity import lipschitz_probe, semiconcavity_probe

H = catalog("heisenberg")
BASE = ([0, 0, 0], [1, 1, 0.5])


def test_semiconcavity_is_finite_and_prefix_monotone():
    rep = semiconcavity_probe(H, BASE, samples=40, seed=1)
    assert np.isfinite(rep.estimate) and rep.estimate < 1e6
    assert rep.params["accepted"] > 0
    prefix = [rep.prefix_estimate(k) for k in range(1, 41)]
    assert all(a <= b for a, b in zip(prefix, prefix[1:]))
    assert prefix[-1] == rep.estimate
    small = semiconcavity_probe(H, BASE, samples=20, seed=1)
    np.testing.assert_array_equal(small.quotients, rep.quotients[:20])


def test_endpoint_mu_gives_zero_quotient():
    rep = semiconcavity_probe(H, BASE, samples=10, mu_grid=(0.0, 1.0), seed=2)
    fin = rep.quotients[np.isfinite(rep.quotients)]
    assert len(fin) and np.all(fin == 0.0)


def test_diagonal_pairs_are_rejected():
    rep = semiconcavity_probe(H, ([0, 0, 0], [0, 0, 0]), samples=10, radius=0.05, seed=3)
    assert np.isnan(rep.quotients).all() and rep.estimate == 0.0


@pytest.mark.parametrize("name", ["heisenberg", "two_generating_r4"])
def test_lipschitz_is_finite(name):
    f = catalog(name)
    region = [[-1] * f.n, [1] * f.n]
    rep = lipschitz_probe(f, region, samples=30, seed=4)
    assert np.isfinite(rep.quotients).all() and 0 < rep.estimate < 1e6
    prefix = [rep.prefix_estimate(k) for k in range(1, 31)]
    assert all(a <= b for a, b in zip(prefix, prefix[1:]))


def test_report_json():
    rep = lipschitz_probe(H, [[-1] * 3, [1] * 3], samples=5, seed=0)
    d = rep.to_json()
    assert d["kind"] == "lipschitz" and d["samples"] == 5 and d["scale"] == 1e-2
