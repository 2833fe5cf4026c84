import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from heisembed import audit, group, metric
from heisembed.audit import OUT_OF_BUCKET


@given(st.integers(-8, 8), st.floats(1.0, 2.0))
def test_bucket_membership(n, s):
    A = 4.0
    lo, hi = audit.bucket_bounds(n, A)
    assert audit.bucket_of(lo * s, A) == n
    assert hi == 2 * lo


def test_gap_between_buckets_is_out_of_bucket():
    A = 4.0
    lo, hi = audit.bucket_bounds(0, A)
    assert audit.bucket_of(hi * 1.5, A) == OUT_OF_BUCKET


def test_continuous_sampler_stratifies():
    S = audit.sample_continuous(range(-3, 4), 40, 4.0, seed=5)
    assert len(S) == 7 * 40
    d = metric.sr_norm(metric.displacement(S.p, S.q))
    assert np.allclose(d, S.d)
    assert np.array_equal(audit.bucket_of(d, 4.0), S.bucket)
    for n in range(-3, 4):
        assert np.sum(S.bucket == n) == 40
    # base points sit at the bucket scale, not near the origin
    big = S.bucket == 3
    assert np.median(np.abs(S.p[big, 0])) > 4.0


def test_samplers_are_seeded():
    a = audit.sample_continuous([0, 1], 10, 4.0, seed=2)
    b = audit.sample_continuous([0, 1], 10, 4.0, seed=2)
    assert np.array_equal(a.p, b.p) and np.array_equal(a.q, b.q)


def test_word_sampler_distances_are_exact():
    R = 8
    table = metric.word_ball(R)
    S = audit.sample_word(R, 300, 4.0, seed=1, table=table)
    assert len(S) == 300
    for p, q, d in zip(S.p.astype(int), S.q.astype(int), S.d):
        assert 0 <= table.lookup(p[None])[0] < R and 0 <= table.lookup(q[None])[0] < R
        g = group.lattice_mul(tuple(q.tolist()), group.lattice_inv(tuple(p.tolist())))
        assert table.distance(g) == d


def test_distortion_of_snowflaked_isometry():
    # a map whose differences are exactly d^{1-ε} has distortion 1
    S = audit.sample_continuous([0, 1], 5, 4.0, seed=0)
    eps = 0.25
    lookup = {tuple(p): np.zeros(1) for p in S.p}
    for p, q, d in zip(S.p, S.q, S.d):
        lookup[tuple(q)] = lookup[tuple(p)] + d ** (1 - eps)

    def fake(pts):
        return np.array([lookup[tuple(p)] for p in pts])

    rep = audit.distortion(fake, S, eps)
    assert rep.distortion == pytest.approx(1.0)
    assert rep.summary()["pairs"] == len(S)


def test_collapsed_pairs_are_rejected():
    S = audit.sample_continuous([0], 5, 4.0, seed=0)
    with pytest.raises(ValueError):
        audit.distortion(lambda pts: np.zeros((len(pts), 2)), S, 0.1)


def test_parallel_distortion_matches_serial():
    S = audit.sample_continuous(range(0, 4), 30, 4.0, seed=4)

    def fmap(pts):
        return np.stack([np.sin(pts[:, 0]), pts[:, 1], np.cos(pts[:, 2])], axis=-1)

    a = audit.distortion(fmap, S, 0.2, chunk=7)
    b = audit.distortion(fmap, S, 0.2, chunk=7, workers=4)
    assert np.array_equal(a.ratios, b.ratios)
    assert a.to_csv() == b.to_csv()


def test_loglog_fit_recovers_power_law():
    x = np.array([2.0, 4.0, 8.0, 16.0])
    fit = audit.loglog_fit(x, 3.0 * x**0.5)
    assert fit["slope"] == pytest.approx(0.5)
    assert fit["r2"] == pytest.approx(1.0)


def test_feps_is_homogeneous():
    g = np.array([[0.3, -0.2, 0.05]])
    lam = 4.0
    # each term scales like λ^{1-ε}
    eps = 0.2
    a = audit.feps(group.dilate(lam, g), eps, 1.0)
    assert a == pytest.approx(lam ** (1 - eps) * audit.feps(g, eps, 1.0))
