"""Regenerate the frozen expected values in this directory.

Run from the repository root:  python tests/fixtures/make_fixtures.py

Expected values come only from the brute-force oracles in tests/oracles.py
(set counting, BFS components, all-pairs distances, scalar-loop EM).
"""

import itertools
import json
import sys
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))

import oracles  # noqa: E402

PENALTY = 374.0
SHAPE = (20, 12, 12)
REGIONS = {"ET": {3}, "TC": {1, 3}, "WT": {1, 2, 3}}


def box(arr, lo, hi, value):
    arr[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1] = value


def two_lesion_volumes():
    gt = np.zeros(SHAPE, dtype=np.uint8)
    # lesion A: ED shell / NCR shell / ET core
    box(gt, (2, 2, 2), (8, 8, 8), 2)
    box(gt, (3, 3, 3), (7, 7, 7), 1)
    box(gt, (4, 4, 4), (6, 6, 6), 3)
    # lesion B, far from A
    box(gt, (14, 3, 3), (17, 6, 6), 2)
    box(gt, (15, 4, 4), (16, 5, 5), 1)
    gt[15, 4, 4] = 3

    pred = np.zeros(SHAPE, dtype=np.uint8)
    box(pred, (2, 2, 2), (9, 8, 8), 2)  # ED one layer thicker on +x
    box(pred, (3, 3, 3), (7, 7, 7), 1)
    box(pred, (4, 5, 4), (6, 7, 6), 3)  # ET shifted +1 along y
    return gt, pred


def dilate_set(voxels, radius, shape):
    cur = set(voxels)
    for _ in range(radius):
        nxt = set(cur)
        for v in cur:
            for d in itertools.product((-1, 0, 1), repeat=3):
                n = tuple(v[i] + d[i] for i in range(3))
                if all(0 <= n[i] < shape[i] for i in range(3)):
                    nxt.add(n)
        cur = nxt
    return cur


def to_mask(voxels, shape):
    m = np.zeros(shape, dtype=bool)
    for v in voxels:
        m[v] = True
    return m


def lesion_oracle(gt, pred, spacing=(1.0, 1.0, 1.0)):
    """Lesion-wise metrics with 26-connectivity, dilation 1, max-overlap assignment."""
    shape = gt.shape
    gt_les = sorted(oracles.flood_fill_partition(gt, 26), key=lambda s: min((v[2], v[1], v[0]) for v in s))
    pr_les = sorted(oracles.flood_fill_partition(pred, 26), key=lambda s: min((v[2], v[1], v[0]) for v in s))
    dil = [dilate_set(g, 1, shape) for g in gt_les]
    assigned = {i: [] for i in range(len(gt_les))}
    fp = 0
    for p in pr_les:
        overlaps = [len(p & d) for d in dil]
        best = max(overlaps) if overlaps else 0
        if best == 0:
            fp += 1
            continue
        assigned[overlaps.index(best)].append(p)
    tp = fn = 0
    dices, hds = [], []
    for i, g in enumerate(gt_les):
        if not assigned[i]:
            fn += 1
            continue
        tp += 1
        union = set().union(*assigned[i])
        gm, pm = to_mask(g, shape), to_mask(union, shape)
        dices.append(oracles.set_dice(gm, pm))
        hds.append(oracles.brute_hd95(gm, pm, spacing, PENALTY))
    denom = tp + fn + fp
    lw_dsc = sum(dices) / denom if denom else 1.0
    lw_hd = (sum(hds) + PENALTY * (fn + fp)) / denom if denom else 0.0
    return {"tp": tp, "fn": fn, "fp": fp, "lesion_dice": dices, "lesion_hd95": hds, "lw_dsc": lw_dsc, "lw_hd95": lw_hd}


def region_expectations(gt, pred):
    out = {}
    for name, labels in REGIONS.items():
        g = np.isin(gt, sorted(labels))
        p = np.isin(pred, sorted(labels))
        entry = lesion_oracle(g, p)
        entry["dsc"] = oracles.set_dice(g, p)
        entry["hd95"] = oracles.brute_hd95(g, p, (1.0, 1.0, 1.0), PENALTY)
        out[name] = entry
    return out


def coords(arr, value=None):
    sel = arr == value if value is not None else arr.astype(bool)
    return [list(map(int, v)) for v in np.argwhere(sel)]


def binary_scenarios():
    shape = (24, 8, 8)
    scenarios = {}

    # one perfect TP plus one far-away FP
    gt = np.zeros(shape, dtype=bool)
    gt[2:5, 2:5, 2:5] = True
    pred = gt.copy()
    pred[18:20, 2:4, 2:4] = True
    scenarios["perfect_tp_plus_fp"] = (gt, pred)

    # TP whose HD95 is 2 voxels, plus one FP
    gt = np.zeros(shape, dtype=bool)
    gt[10:15, 4, 4] = True
    pred = np.zeros(shape, dtype=bool)
    pred[10:17, 4, 4] = True
    pred[0, 0, 0] = True
    scenarios["hd2_tp_plus_fp"] = (gt, pred)

    # two gt lesions, prediction covers one
    gt = np.zeros(shape, dtype=bool)
    gt[1:4, 1:4, 1:4] = True
    gt[18:21, 3:6, 3:6] = True
    pred = np.zeros(shape, dtype=bool)
    pred[1:4, 1:4, 1:4] = True
    scenarios["one_of_two_found"] = (gt, pred)

    out = {}
    for name, (g, p) in scenarios.items():
        entry = lesion_oracle(g, p)
        entry["dsc"] = oracles.set_dice(g, p)
        entry["hd95"] = oracles.brute_hd95(g, p, (1.0, 1.0, 1.0), PENALTY)
        out[name] = {"shape": list(shape), "gt": coords(g), "pred": coords(p), "expected": entry}
    return out


def staple_fixture():
    truth = [1, 1, 1, 1, 0, 0, 0, 0]
    raters = [list(truth) for _ in range(3)]
    raters[0][1] = 0
    raters[1][5] = 1
    raters[2][6] = 1
    prior = sum(map(sum, raters)) / (len(raters) * len(truth))
    w, p, q = oracles.scalar_staple(raters, 0.99999, 0.99999, prior, iterations=2)
    return {
        "raters": raters,
        "init": 0.99999,
        "prior": prior,
        "iterations": 2,
        "posterior": w,
        "sensitivity": p,
        "specificity": q,
        "consensus": [int(x >= 0.5) for x in w],
    }


def main():
    gt, pred = two_lesion_volumes()
    lesion = {
        "shape": list(SHAPE),
        "spacing": [1.0, 1.0, 1.0],
        "penalty_mm": PENALTY,
        "gt": {str(v): coords(gt, v) for v in (1, 2, 3)},
        "pred": {str(v): coords(pred, v) for v in (1, 2, 3)},
        "expected": region_expectations(gt, pred),
        "binary": binary_scenarios(),
    }
    (HERE / "two_lesion.json").write_text(json.dumps(lesion, indent=1) + "\n")
    (HERE / "staple_8voxel.json").write_text(json.dumps(staple_fixture(), indent=1) + "\n")


if __name__ == "__main__":
    main()
