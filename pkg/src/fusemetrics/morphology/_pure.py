"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``.

Used when the extension is not built or ``FUSEMETRICS_PURE_PYTHON=1``.
"""

import math

import numpy as np

INF = math.inf


def _envelope(f, w2):
    n = len(f)
    v = [0] * n
    z = [0.0] * (n + 1)
    k = -1
    for q in range(n):
        fq = f[q]
        if fq == INF:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -INF
            z[1] = INF
            continue
        while True:
            vk = v[k]
            s = ((fq + w2 * q * q) - (f[vk] + w2 * vk * vk)) / (2.0 * w2 * (q - vk))
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = INF
    if k < 0:
        return f
    out = [0.0] * n
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        vk = v[k]
        out[q] = w2 * (q - vk) * (q - vk) + f[vk]
    return out


def edt_sq_pass(f, w2):
    """Squared distance transform along the last axis of every row, in place."""
    for line in range(f.shape[0]):
        row = f[line]
        if np.isinf(row).all():
            continue
        f[line] = _envelope(row.tolist(), float(w2))


def label_components(mask, offsets):
    na, nb, nc = mask.shape
    offsets = [tuple(int(x) for x in o) for o in np.asarray(offsets)]
    coords = np.argwhere(mask)  # C raster order
    parent = {}
    true = set(np.flatnonzero(mask).tolist())

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b, c in coords.tolist():
        idx = (a * nb + b) * nc + c
        parent[idx] = idx
        for da, db, dc in offsets:
            pa, pb, pc = a + da, b + db, c + dc
            if not (0 <= pa < na and 0 <= pb < nb and 0 <= pc < nc):
                continue
            nidx = (pa * nb + pb) * nc + pc
            if nidx not in true:
                continue
            ri = find(idx)
            rn = find(nidx)
            if ri < rn:
                parent[rn] = ri
            elif rn < ri:
                parent[ri] = rn
    labels = np.zeros(mask.shape, dtype=np.int32)
    newlab = {}
    for a, b, c in coords.tolist():
        r = find((a * nb + b) * nc + c)
        if r not in newlab:
            newlab[r] = len(newlab) + 1
        labels[a, b, c] = newlab[r]
    return labels, len(newlab)
