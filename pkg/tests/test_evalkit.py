import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from driveseg.evalkit import (
    COLUMNS, ConfusionMatrix, accumulate, affordance_map, affordance_rasters, box_counts, format_rmse_table,
    format_table, instance_recall, merge_box_counts, mistake_severity, precision_recall, read_boxes, report, rmse,
    scale_boxes,
)
from driveseg.ordinal import RankSet, one_hot, sord_encode
from driveseg.taxonomy import VOID, Level

IMP, POSS, PREF = Level.IMPOSSIBLE, Level.POSSIBLE, Level.PREFERABLE
RANK = {IMP: 1, POSS: 2, PREF: 3}


def loop_oracle(pred, gt, weights=None):
    """Per-pixel loop, no numpy reductions."""
    rows = {}
    sq = 0.0
    n = 0
    sev, wrong = 0.0, 0
    for (i, j), g in np.ndenumerate(gt):
        if g == VOID:
            continue
        p = int(pred[i, j])
        w = 1.0 if weights is None else float(weights[i, j])
        c, cw = rows.get((int(g), p), (0, 0.0))
        rows[(int(g), p)] = (c + 1, cw + w)
        d = abs(RANK[p] - RANK[int(g)])
        sq += d * d
        n += 1
        if d:
            wrong += 1
            sev += (d - 1) / (3 - 1 - 1)
    return rows, (math.sqrt(sq / n) if n else None), (sev / wrong if wrong else None)


levels = st.sampled_from([0, 1, 2, 3])
mask5 = st.tuples(st.integers(1, 5), st.integers(1, 5)).flatmap(
    lambda s: st.tuples(arrays(np.int8, s, elements=st.sampled_from([1, 2, 3])), arrays(np.int8, s, elements=levels)))


@given(mask5)
def test_matches_loop_oracle(pair):
    pred, gt = pair
    w = (np.arange(gt.size).reshape(gt.shape) % 7) / 8.0
    conf = accumulate(pred, gt, w)
    rows, r, ms = loop_oracle(pred, gt, w)
    for g in (1, 2, 3):
        for p in (1, 2, 3):
            c, cw = rows.get((g, p), (0, 0.0))
            assert conf.counts[g - 1, p - 1] == c
            assert conf.weighted_counts[g - 1, p - 1] == cw
    assert conf.rmse() == r
    assert conf.mistake_severity() == ms


def test_perfect_prediction_is_diagonal():
    m = np.array([[1, 2], [3, 3]])
    conf = accumulate(m, m)
    assert conf.counts.tolist() == [[1, 0, 0], [0, 1, 0], [0, 0, 2]]
    for lvl in (IMP, POSS, PREF):
        assert precision_recall(conf, lvl) == (1.0, 1.0)


def test_all_void_gt_accumulates_nothing():
    conf = accumulate(np.full((3, 3), 2), np.zeros((3, 3), int))
    assert conf.total == 0 and conf.weighted_counts.sum() == 0
    assert conf.recall(IMP) is None and conf.rmse() is None


def test_additivity():
    rng = np.random.default_rng(0)
    a, b = [(rng.integers(1, 4, (4, 5)), rng.integers(0, 4, (4, 5)), rng.random((4, 5))) for _ in range(2)]
    split = accumulate(*a) + accumulate(*b)
    joint = accumulate(*(np.concatenate(x, axis=1) for x in zip(a, b)))
    np.testing.assert_array_equal(split.counts, joint.counts)
    np.testing.assert_allclose(split.weighted_counts, joint.weighted_counts, rtol=1e-15)


def test_accumulate_errors():
    with pytest.raises(ValueError, match="shape"):
        accumulate(np.ones((2, 2)), np.ones((2, 3)))
    with pytest.raises(ValueError, match="rank set"):
        accumulate(np.full((2, 2), 2), np.full((2, 2), 3), ranks=RankSet.binary())


def test_red_predicted_yellow_has_zero_recall():
    conf = accumulate(np.full((2, 2), POSS), np.full((2, 2), IMP))
    assert conf.recall(IMP) == 0.0
    assert conf.precision(IMP) is None


def test_uniform_weights_match_unweighted():
    rng = np.random.default_rng(3)
    pred, gt = rng.integers(1, 4, (6, 6)), rng.integers(1, 4, (6, 6))
    conf = accumulate(pred, gt, np.full((6, 6), 4.2))
    for lvl in (IMP, POSS, PREF):
        assert conf.recall(lvl, True) == pytest.approx(conf.recall(lvl), rel=1e-14)
        assert conf.precision(lvl, True) == pytest.approx(conf.precision(lvl), rel=1e-14)


def test_rmse_examples():
    assert rmse(np.full((2, 2), 3), np.full((2, 2), 3)) == 0.0
    assert rmse(np.full((2, 2), IMP), np.full((2, 2), PREF)) == 2.0
    # four pixels, two off by one: sqrt((1 + 1 + 0 + 0) / 4)
    assert rmse(np.array([[1, 2], [2, 3]]), np.array([[2, 3], [2, 3]])) == pytest.approx(math.sqrt(0.5), rel=1e-15)
    with pytest.raises(ValueError):
        rmse(np.ones((2, 2)), np.zeros((2, 2), int))


@given(mask5)
def test_rmse_bounded(pair):
    pred, gt = pair
    if (gt != VOID).any():
        assert rmse(pred, gt) <= 2
    b = np.where(pred == 2, 1, pred), np.where(gt == 2, 3, gt)
    if (b[1] != VOID).any():
        assert rmse(*b, ranks=RankSet.binary()) <= 2


def test_ms_anchors():
    green = np.full((3, 3), PREF)
    assert mistake_severity(np.full((3, 3), POSS), green) == 0.0
    assert mistake_severity(np.full((3, 3), IMP), green) == 1.0
    # mistakes: two adjacent (term 0), two extreme (term 1) -> mean 0.5
    pred = np.array([[2, 2], [1, 3]])
    gt = np.array([[3, 1], [3, 1]])
    assert mistake_severity(pred, gt) == 0.5
    conf = accumulate(green, green)
    assert mistake_severity(green, green) == 0.0 and conf.mistakes() == 0 and conf.mistake_severity() is None


@given(st.integers(0, 500), st.integers(1, 50))
def test_ms_invariant_to_correct_pixels(seed, extra):
    rng = np.random.default_rng(seed)
    pred, gt = rng.integers(1, 4, (1, 12)), rng.integers(1, 4, (1, 12))
    more = rng.integers(1, 4, (1, extra))
    assert mistake_severity(np.hstack([pred, more]), np.hstack([gt, more])) == mistake_severity(pred, gt)


def test_ms_rank_span():
    binary = accumulate(np.full((2, 2), 1), np.full((2, 2), 3), ranks=RankSet.binary())
    assert binary.mistake_severity() == 1.0
    tight = RankSet((1, 2), (IMP, PREF))
    conf = accumulate(np.full((2, 2), 1), np.full((2, 2), 3), ranks=tight)
    with pytest.raises(ValueError, match="r_max"):
        conf.mistake_severity()
    rep = report(conf)
    assert rep.ms is None and rep.row()["MS %"] == "n/a"


def _box_pred(n_hit):
    pred = np.full((20, 20), PREF)
    box = (5, 5, 15, 15)
    flat = np.zeros(100, bool)
    flat[:n_hit] = True
    pred[5:15, 5:15][flat.reshape(10, 10)] = IMP
    return pred, box


def test_instance_recall_examples():
    pred, box = _box_pred(60)
    assert instance_recall(pred, [box], 0.5) == (0.6, 1.0)
    assert instance_recall(pred, [box], 0.75) == (0.6, 0.0)
    allred = np.full((20, 20), IMP)
    for t in (0.1, 0.5, 1.0):
        assert instance_recall(allred, [box, (0, 0, 3, 3)], t) == (1.0, 1.0)
    with pytest.raises(ValueError):
        instance_recall(pred, [], 0.5)
    with pytest.raises(ValueError):
        instance_recall(pred, [box], 0.0)
    with pytest.raises(ValueError):
        instance_recall(pred, [(5, 5, 5, 9)], 0.5)


def test_overlapping_boxes_counted_once_for_pixels():
    pred = np.full((10, 10), PREF)
    pred[0:4, 0:4] = IMP
    pixel, inst = instance_recall(pred, [(0, 0, 4, 4), (2, 2, 6, 6)], 0.5)
    # union is 16 + 16 - 4 = 28 pixels, 16 of them red
    assert pixel == pytest.approx(16 / 28)
    assert inst == 0.5  # first box fully red, second 4/16


@given(st.integers(0, 1000))
def test_instance_recall_monotone_in_threshold(seed):
    rng = np.random.default_rng(seed)
    pred = rng.integers(1, 4, (16, 16))
    boxes = []
    for _ in range(rng.integers(1, 5)):
        x0, y0 = rng.integers(0, 15, 2)
        boxes.append((int(x0), int(y0), int(rng.integers(x0 + 1, 17)), int(rng.integers(y0 + 1, 17))))
    vals = [instance_recall(pred, boxes, t)[1] for t in np.linspace(0.05, 1, 20)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_box_counts_merge_and_io(tmp_path):
    pred, box = _box_pred(60)
    merged = merge_box_counts([box_counts(pred, [box]), box_counts(np.full((20, 20), IMP), [box])])
    assert merged["union_pixels"] == 200 and merged["union_hits"] == 160
    p = tmp_path / "b.txt"
    p.write_text("# boxes\nimg1 0 0 4 4\nimg1 2 2 6 6\nimg2 1 1 3 3\n")
    assert read_boxes(p) == {"img1": [(0, 0, 4, 4), (2, 2, 6, 6)], "img2": [(1, 1, 3, 3)]}
    p.write_text("img1 0 0 4\n")
    with pytest.raises(ValueError, match=":1:"):
        read_boxes(p)
    assert scale_boxes([(0, 0, 4, 4), (3, 3, 4, 4)], (8, 8), (4, 4)) == [(0, 0, 2, 2), (1, 1, 2, 2)]


def test_affordance_map():
    hot = np.broadcast_to(one_hot(PREF), (4, 5, 3))
    e, r = affordance_map(hot)
    assert (e == 3).all() and (r == 1).all()
    e, r = affordance_map(np.full((4, 5, 3), 1 / 3))
    np.testing.assert_allclose(r, 0.5)
    probs = np.stack([sord_encode(l) for l in (IMP, POSS, PREF)])
    e, r = affordance_map(probs)
    assert (np.diff(e) > 0).all() and (np.diff(r) > 0).all()
    gray, color = affordance_rasters(np.array([[0.0, 0.5, 1.0]]))
    assert gray.tolist() == [[0, 128, 255]] and color.shape == (1, 3, 3) and color.dtype == np.uint8
    assert color[0, 0, 0] > color[0, 0, 1] and color[0, 2, 1] > color[0, 2, 0]  # red to green


def test_report_diagonal():
    m = np.array([[1, 2, 3]])
    rep = report(accumulate(m, m, np.ones((1, 3))), samples=1, label="x")
    row = rep.row()
    assert row["red R %"] == row["green P %"] == row["red R_w %"] == row["green P_w %"] == "100.00"
    assert row["MS %"] == "n/a" and row["RMSE"] == "0.000"
    d = json.loads(rep.to_json())
    assert d["ms"] is None and d["recall"]["impossible"] == 1.0


def test_report_two_decimal_percentages():
    gt = np.full((1, 10000), IMP)
    pred = gt.copy()
    pred[0, :159] = POSS  # recall 0.9841
    rep = report(accumulate(pred, gt))
    assert rep.row()["red R %"] == "98.41"
    assert rep.row()["green P %"] == "n/a"
    text = format_table([rep, report(accumulate(gt, gt), label="b")])
    lines = text.splitlines()
    assert all(c in lines[0] for c in COLUMNS)
    assert len({len(l) for l in lines}) == 1  # aligned


def test_report_is_function_of_confusion():
    rng = np.random.default_rng(5)
    pred, gt = rng.integers(1, 4, (8, 8)), rng.integers(0, 4, (8, 8))
    conf = accumulate(pred, gt)
    perm = rng.permutation(64)
    shuffled = accumulate(pred.reshape(-1)[perm].reshape(8, 8), gt.reshape(-1)[perm].reshape(8, 8))
    assert report(conf).to_dict() == report(shuffled).to_dict()


def test_rmse_table_layout():
    text = format_rmse_table({"red vs rest": {"val": 0.5, "test": None}}, ["val", "test"])
    header, rule, row = text.splitlines()
    assert header.startswith("Segmentation class definition")
    assert row.split()[-2:] == ["0.500", "n/a"]
