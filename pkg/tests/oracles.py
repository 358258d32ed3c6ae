"""Brute-force reference implementations used as test oracles.

Deliberately naive and independent of the package code paths they check.
"""

import itertools
import math
from collections import deque

import numpy as np
from scipy.spatial.distance import cdist


def neighbours(connectivity):
    out = []
    for d in itertools.product((-1, 0, 1), repeat=3):
        nz = sum(1 for x in d if x)
        if nz == 0:
            continue
        if connectivity == 6 and nz > 1:
            continue
        if connectivity == 18 and nz > 2:
            continue
        out.append(d)
    return out


def flood_fill_partition(mask, connectivity):
    """Set of frozensets of voxel coordinates, one per connected component."""
    mask = np.asarray(mask, dtype=bool)
    nx, ny, nz = mask.shape
    # one voxel of padding means neighbour lookups never leave the array
    sy, sx = nz + 2, (ny + 2) * (nz + 2)
    pad = np.pad(mask, 1).ravel().tolist()
    steps = [d[0] * sx + d[1] * sy + d[2] for d in neighbours(connectivity)]
    comps = []
    for start, v in enumerate(pad):
        if not v:
            continue
        pad[start] = False
        comp = [start]
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for s in steps:
                n = u + s
                if pad[n]:
                    pad[n] = False
                    comp.append(n)
                    queue.append(n)
        comps.append(frozenset((c // sx - 1, c % sx // sy - 1, c % sy - 1) for c in comp))
    return set(comps)


def labels_to_partition(labels):
    parts = {}
    for idx in zip(*np.nonzero(labels)):
        parts.setdefault(int(labels[idx]), set()).add(tuple(int(x) for x in idx))
    return {frozenset(p) for p in parts.values()}


def brute_edt(mask, spacing):
    """Distance (mm) from every voxel to the nearest true voxel, by enumeration."""
    mask = np.asarray(mask, dtype=bool)
    pts = np.argwhere(mask).astype(float) * np.asarray(spacing, dtype=float)
    grid = np.argwhere(np.ones_like(mask)).astype(float) * np.asarray(spacing, dtype=float)
    if len(pts) == 0:
        return np.full(mask.shape, np.inf)
    out = np.empty(len(grid))
    for start in range(0, len(grid), 512):
        g = grid[start : start + 512]
        d2 = ((g[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        out[start : start + 512] = np.sqrt(d2.min(axis=1))
    return out.reshape(mask.shape)


def surface_voxels(mask):
    """Voxels of mask with a 6-neighbour outside the mask or the grid."""
    mask = np.asarray(mask, dtype=bool)
    out = set()
    offs = neighbours(6)
    for v in zip(*np.nonzero(mask)):
        for d in offs:
            n = tuple(v[i] + d[i] for i in range(3))
            if not all(0 <= n[i] < mask.shape[i] for i in range(3)) or not mask[n]:
                out.add(tuple(int(x) for x in v))
                break
    return sorted(out)


def nearest_rank_95(values):
    vals = sorted(values)
    k = math.ceil(95 * len(vals) / 100)
    return vals[max(k, 1) - 1]


def directed_d95(src, dst, spacing):
    sp = np.asarray(spacing, dtype=float)
    a = np.asarray(src, dtype=float) * sp
    b = np.asarray(dst, dtype=float) * sp
    d = cdist(a, b).min(axis=1)
    return nearest_rank_95(d.tolist())


def brute_hd95(a, b, spacing, penalty=374.0):
    a_any, b_any = np.any(a), np.any(b)
    if not a_any and not b_any:
        return 0.0
    if not a_any or not b_any:
        return penalty
    sa, sb = surface_voxels(a), surface_voxels(b)
    return max(directed_d95(sa, sb, spacing), directed_d95(sb, sa, spacing))


def set_dice(a, b):
    sa = {tuple(v) for v in np.argwhere(a)}
    sb = {tuple(v) for v in np.argwhere(b)}
    if not sa and not sb:
        return 1.0
    return 2 * len(sa & sb) / (len(sa) + len(sb))


def scalar_staple(decisions, p0, q0, prior, iterations):
    """Plain-loop STAPLE EM (no log space, no numpy) for small instances.

    ``decisions`` is a list of per-rater lists of 0/1 voxel decisions.
    Returns (W, p, q) after ``iterations`` E+M steps followed by a final E-step.
    """
    r = len(decisions)
    n = len(decisions[0])
    p = [p0] * r
    q = [q0] * r

    def e_step():
        w = []
        for i in range(n):
            a = prior
            b = 1 - prior
            for j in range(r):
                if decisions[j][i]:
                    a *= p[j]
                    b *= 1 - q[j]
                else:
                    a *= 1 - p[j]
                    b *= q[j]
            w.append(a / (a + b))
        return w

    for _ in range(iterations):
        w = e_step()
        sw = sum(w)
        sv = sum(1 - x for x in w)
        p = [sum(w[i] * decisions[j][i] for i in range(n)) / sw for j in range(r)]
        q = [sum((1 - w[i]) * (1 - decisions[j][i]) for i in range(n)) / sv for j in range(r)]
    return e_step(), p, q
