"""Both kernel backends must agree bit for bit on the same inputs."""

import numpy as np
import pytest

from divkit import _kernels_py as kpy

kc = pytest.importorskip("divkit._kernels")

CASES = [
    (7, 5, 1, 1.0, False),
    (50, 60, 3, 0.5, False),
    (40, 40, 2, -0.5, False),
    (30, 30, 2, 1.0, True),
    (64, 64, 5, 1.7, False),
    (33, 33, 4, 4.5, False),
    (20, 20, 1, -0.9, False),
]


@pytest.mark.parametrize("n,m,dim,alpha,l1", CASES)
def test_pairwise_bit_identical(n, m, dim, alpha, l1):
    rng = np.random.default_rng(n * 100 + m)
    x = rng.normal(size=(n, dim))
    y = rng.normal(size=(m, dim)) + 3.0
    w = rng.random(n)
    w /= w.sum()
    v = rng.random(m)
    v /= v.sum()
    a = kpy.pairwise_power_sum(x, w, y, v, alpha, l1, False)
    b = kc.pairwise_power_sum(x, w, y, v, alpha, l1, False)
    assert a == b
    sa = kpy.pairwise_power_sum(x, w, x, w, alpha, l1, True)
    sb = kc.pairwise_power_sum(x, w, x, w, alpha, l1, True)
    assert sa == sb


def test_singular_errors_identical():
    x = np.array([[0.0], [1.0], [2.0]])
    y = np.array([[5.0], [1.0 + 4e-13], [9.0]])
    w = np.ones(3) / 3
    hits = []
    for mod in (kpy, kc):
        with pytest.raises(mod.SingularPairError) as exc:
            mod.pairwise_power_sum(x, w, y, w, -0.5, False, False)
        hits.append((exc.value.i, exc.value.j))
    assert hits[0] == hits[1] == (1, 1)


@pytest.mark.parametrize("policy", [0, 1, 2])
@pytest.mark.parametrize("eta_kind", [0, 1])
def test_trade_loop_bit_identical(policy, eta_kind):
    rng = np.random.default_rng(42)
    n = 600
    idx = rng.integers(0, n, size=20_000).astype(np.int64)
    us = rng.random(120_000)
    wa = np.ones(n)
    wb = np.ones(n)
    ra = kpy.wealth_trade_loop(wa, idx, us, 0.5, np.sqrt(0.5), eta_kind, policy, 5_000)
    rb = kc.wealth_trade_loop(wb, idx, us, 0.5, np.sqrt(0.5), eta_kind, policy, 5_000)
    assert ra == rb
    assert np.array_equal(wa, wb)


def test_constants_agree():
    assert kpy.SINGULAR_GUARD == kc.SINGULAR_GUARD
    assert kpy.REDRAW_CAP == kc.REDRAW_CAP
    assert (kpy.ETA_TWO_POINT, kpy.ETA_UNIFORM) == (kc.ETA_TWO_POINT, kc.ETA_UNIFORM)
    assert (kpy.POLICY_REDRAW, kpy.POLICY_TRUNCATE, kpy.POLICY_ALLOW) == (
        kc.POLICY_REDRAW,
        kc.POLICY_TRUNCATE,
        kc.POLICY_ALLOW,
    )
