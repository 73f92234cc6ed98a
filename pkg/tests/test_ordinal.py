import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driveseg.ordinal import (
    RankSet, batch_loss, decode_argmax, encode_mask, expected_rank, kl_loss, label_table, metric_penalty,
    sord_encode,
)
from driveseg.taxonomy import VOID, Level

IMP, POSS, PREF = Level.IMPOSSIBLE, Level.POSSIBLE, Level.PREFERABLE
R3 = RankSet()

# Frozen from the mpmath oracle below (50 digits), rounded to 1e-5.
SORD_IMP = [0.52149, 0.32254, 0.15597]
SORD_PREF = [0.13928, 0.39507, 0.46566]


def sord_oracle(target_rank, ranks=(1, 2, 3)):
    mpmath.mp.dps = 50
    phi = [(mpmath.log(r) - mpmath.log(target_rank)) ** 2 for r in ranks]
    z = mpmath.fsum(mpmath.exp(-p) for p in phi)
    return [float(mpmath.exp(-p) / z) for p in phi]


def test_oracle_matches_frozen_values():
    np.testing.assert_allclose(sord_oracle(1), SORD_IMP, atol=1e-5)
    np.testing.assert_allclose(sord_oracle(3), SORD_PREF, atol=1e-5)


def test_metric_penalty_examples():
    assert metric_penalty(2, 2, "sld") == 0.0
    mpmath.mp.dps = 40
    assert metric_penalty(1, 3, "sld") == pytest.approx(float(mpmath.log(3) ** 2), rel=1e-15)
    assert metric_penalty(1, 3, "sld") == pytest.approx(1.206949, abs=1e-6)
    assert metric_penalty(1, 3, "ad") == 2
    with pytest.raises(ValueError):
        metric_penalty(0, 3, "sld")


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.sampled_from(["sld", "ad"]))
def test_penalty_is_a_symmetric_nonnegative_distance(a, b, kind):
    assert metric_penalty(a, a, kind) == 0
    assert metric_penalty(a, b, kind) == pytest.approx(metric_penalty(b, a, kind))
    assert metric_penalty(a, b, kind) >= 0


@pytest.mark.parametrize("level, rank", [(IMP, 1), (POSS, 2), (PREF, 3)])
def test_sord_matches_oracle(level, rank):
    y = sord_encode(level, R3, "sld")
    np.testing.assert_allclose(y, sord_oracle(rank), rtol=0, atol=1e-12)
    assert y.sum() == pytest.approx(1.0, abs=1e-12)
    assert int(np.argmax(y)) == R3.index_of(level)


def test_sord_examples():
    np.testing.assert_allclose(sord_encode(IMP), SORD_IMP, atol=1e-4)
    np.testing.assert_allclose(sord_encode(PREF), SORD_PREF, atol=1e-4)
    y = sord_encode(PREF)
    assert y[1] > y[0]


def test_sord_limits():
    for lvl in (IMP, POSS, PREF):
        hot = np.eye(3)[R3.index_of(lvl)]
        assert 0.5 * np.abs(sord_encode(lvl, scale=1e6) - hot).sum() < 1e-9
        np.testing.assert_allclose(sord_encode(lvl, scale=0.0), [1 / 3] * 3, atol=1e-15)


def test_sord_rejects_void():
    with pytest.raises(ValueError):
        sord_encode(VOID)


@pytest.mark.parametrize("kind", ["sld", "ad"])
@pytest.mark.parametrize("level", [IMP, POSS, PREF])
def test_sord_decreases_with_distance(kind, level):
    y = sord_encode(level, R3, kind)
    r_t = R3.rank_of(level)
    phi = [metric_penalty(r_t, r, kind) for r in R3.values]
    order = np.argsort(phi, kind="stable")
    for a, b in zip(order, order[1:]):
        if phi[b] > phi[a]:
            assert y[b] < y[a]


def test_encode_mask_one_hot():
    labels, void = encode_mask(np.full((2, 2), PREF), mode="one_hot")
    np.testing.assert_array_equal(labels, np.tile([0, 0, 1.0], (2, 2, 1)))
    assert not void.any()


def test_encode_mask_void_and_consistency():
    labels, void = encode_mask(np.array([PREF, VOID]), mode="sord")
    np.testing.assert_allclose(labels[0], sord_encode(PREF))
    assert void.tolist() == [False, True]
    rng = np.random.default_rng(0)
    m = rng.integers(0, 4, (5, 6))
    labels, void = encode_mask(m)
    for (i, j), lvl in np.ndenumerate(m):
        if lvl == VOID:
            assert void[i, j]
        else:
            np.testing.assert_array_equal(labels[i, j], sord_encode(lvl))


def test_label_table_is_cached():
    assert label_table(R3, "sld", "sord") is label_table(R3, "sld", "sord")


def test_kl_examples():
    y = sord_encode(POSS)
    assert kl_loss(y, y) == pytest.approx(0.0, abs=1e-15)
    y_hat = np.array([0.2, 0.5, 0.3])
    # oracle: with y one-hot at i, sum collapses to 1*ln(1/y_hat_i)
    for i in range(3):
        assert kl_loss(np.eye(3)[i], y_hat) == pytest.approx(-math.log(y_hat[i]), rel=1e-14)
    with pytest.raises(ValueError):
        kl_loss([0.5, 0.6, 0.0], y_hat)


def test_kl_clamps_zero_predictions():
    assert kl_loss([1.0, 0, 0], [0.0, 0.5, 0.5]) == pytest.approx(-math.log(1e-12))


simplex = st.lists(st.floats(1e-6, 1.0), min_size=3, max_size=3).map(lambda v: np.array(v) / sum(v))


@given(simplex, simplex)
def test_gibbs_inequality(y, q):
    assert kl_loss(y, q) >= -1e-12


@settings(max_examples=50)
@given(simplex, st.sampled_from([IMP, POSS, PREF]))
def test_kl_minimised_at_sord(q, level):
    y = sord_encode(level)
    assert kl_loss(y, q) >= kl_loss(y, y) - 1e-12


def test_batch_loss_examples():
    rng = np.random.default_rng(1)
    t, _ = encode_mask(rng.integers(1, 4, (3, 3)))
    assert batch_loss(t, t, np.zeros((3, 3), bool), rng.random((3, 3))) == pytest.approx(0.0, abs=1e-15)

    t = np.stack([sord_encode(IMP), sord_encode(PREF)])
    p = np.array([[0.6, 0.3, 0.1], [0.2, 0.3, 0.5]])
    void = np.array([False, True])
    assert batch_loss(t, p, void) == pytest.approx(kl_loss(t[0], p[0]))

    base = batch_loss(t, p, np.zeros(2, bool))
    assert batch_loss(t, p, np.zeros(2, bool), np.full(2, 2.5)) == pytest.approx(2.5 * base, rel=1e-14)
    with pytest.raises(ValueError, match="no non-void"):
        batch_loss(t, p, np.ones(2, bool))


@given(st.integers(0, 10_000))
def test_batch_loss_order_invariant(seed):
    rng = np.random.default_rng(seed)
    t, void = encode_mask(rng.integers(0, 4, 12))
    if void.all():
        return
    p = rng.dirichlet(np.ones(3), 12)
    w = rng.random(12)
    perm = rng.permutation(12)
    assert batch_loss(t[perm], p[perm], void[perm], w[perm]) == pytest.approx(batch_loss(t, p, void, w), rel=1e-12)


def _softmax(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@pytest.mark.parametrize("seed", range(3))
def test_batch_loss_gradient_wrt_scores(seed):
    """Analytic d/dz of sum w*KL(y||softmax(z))/N is w*(softmax(z) - y)/N."""
    rng = np.random.default_rng(seed)
    levels = rng.integers(0, 4, (4, 4))
    levels[0, 0] = 1
    t, void = encode_mask(levels)
    w = rng.random((4, 4)) * 10
    z = rng.normal(size=(4, 4, 3))
    n = (~void).sum()
    analytic = (w / n)[..., None] * (_softmax(z) - t) * (~void)[..., None]
    h = 1e-6
    fd = np.zeros_like(z)
    for idx in np.ndindex(z.shape):
        zp, zm = z.copy(), z.copy()
        zp[idx] += h
        zm[idx] -= h
        fd[idx] = (batch_loss(t, _softmax(zp), void, w) - batch_loss(t, _softmax(zm), void, w)) / (2 * h)
    err = np.linalg.norm(fd - analytic) / np.linalg.norm(analytic)
    assert err < 1e-4


def test_decode_argmax():
    assert decode_argmax([0.1, 0.2, 0.7]) == PREF
    assert decode_argmax([0.4, 0.4, 0.2]) == IMP
    for lvl in (IMP, POSS, PREF):
        assert decode_argmax(sord_encode(lvl)) == lvl
    grid = np.array([[[0.1, 0.2, 0.7], [0.2, 0.4, 0.4]]])
    assert decode_argmax(grid).tolist() == [[PREF, POSS]]


def test_expected_rank():
    assert expected_rank([1 / 3] * 3) == pytest.approx(2.0)
    assert expected_rank([0, 0, 1.0]) == 3.0
    oracle = sum(r * y for r, y in zip((1, 2, 3), sord_oracle(1)))
    assert expected_rank(sord_encode(IMP)) == pytest.approx(oracle, rel=1e-12)
    assert oracle == pytest.approx(1.6345, abs=1e-4)


def test_rankset_validation():
    with pytest.raises(ValueError):
        RankSet((1, 1, 2))
    with pytest.raises(ValueError):
        RankSet((0, 1, 2))
    b = RankSet.binary()
    assert b.values == (1.0, 3.0) and b.levels == (IMP, PREF)
    np.testing.assert_allclose(sord_encode(PREF, b), [math.exp(-math.log(3) ** 2) / (1 + math.exp(-math.log(3) ** 2)),
                                                      1 / (1 + math.exp(-math.log(3) ** 2))])
