# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: 1-D squared distance pass and union-find labeling.

Mirrors ``_pure.py`` exactly; both must give identical results.
"""

import numpy as np
cimport numpy as cnp

from libc.math cimport INFINITY

cnp.import_array()


cdef inline void _envelope(double* f, Py_ssize_t n, double w2,
                           Py_ssize_t* v, double* z, double* d) noexcept nogil:
    cdef Py_ssize_t q, k = -1
    cdef double s, fq, fv
    for q in range(n):
        fq = f[q]
        if fq == INFINITY:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -INFINITY
            z[1] = INFINITY
            continue
        while True:
            fv = f[v[k]]
            s = ((fq + w2 * q * q) - (fv + w2 * v[k] * v[k])) / (2.0 * w2 * (q - v[k]))
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = INFINITY
    if k < 0:
        return
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = w2 * (q - v[k]) * (q - v[k]) + f[v[k]]
    for q in range(n):
        f[q] = d[q]


def edt_sq_pass(double[:, ::1] f, double w2):
    """Squared distance transform along the last axis of every row, in place."""
    cdef Py_ssize_t nlines = f.shape[0]
    cdef Py_ssize_t n = f.shape[1]
    cdef Py_ssize_t line
    if nlines == 0 or n == 0:
        return
    cdef Py_ssize_t[::1] v = np.empty(n, dtype=np.intp)
    cdef double[::1] z = np.empty(n + 1, dtype=np.float64)
    cdef double[::1] d = np.empty(n, dtype=np.float64)
    with nogil:
        for line in range(nlines):
            _envelope(&f[line, 0], n, w2, &v[0], &z[0], &d[0])


cdef inline Py_ssize_t _find(Py_ssize_t[::1] parent, Py_ssize_t i) noexcept nogil:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def label_components(cnp.uint8_t[:, :, ::1] mask, Py_ssize_t[:, ::1] offsets):
    """Label a C-ordered mask; ids follow C raster order of first voxels.

    ``offsets`` holds the lexicographically negative half of the
    neighbourhood, so each pair of adjacent voxels is visited once.
    """
    cdef Py_ssize_t na = mask.shape[0], nb = mask.shape[1], nc = mask.shape[2]
    cdef Py_ssize_t n = na * nb * nc
    cdef Py_ssize_t noff = offsets.shape[0]
    labels_arr = np.zeros((na, nb, nc), dtype=np.int32)
    cdef cnp.int32_t[:, :, ::1] labels = labels_arr
    cdef Py_ssize_t[::1] parent = np.empty(max(n, 1), dtype=np.intp)
    cdef cnp.int32_t[::1] newlab = np.zeros(max(n, 1), dtype=np.int32)
    cdef Py_ssize_t a, b, c, o, pa, pb, pc, idx, nidx, ri, rn
    cdef cnp.int32_t count = 0
    with nogil:
        for a in range(na):
            for b in range(nb):
                for c in range(nc):
                    if not mask[a, b, c]:
                        continue
                    idx = (a * nb + b) * nc + c
                    parent[idx] = idx
                    for o in range(noff):
                        pa = a + offsets[o, 0]
                        pb = b + offsets[o, 1]
                        pc = c + offsets[o, 2]
                        if pa < 0 or pa >= na or pb < 0 or pb >= nb or pc < 0 or pc >= nc:
                            continue
                        if not mask[pa, pb, pc]:
                            continue
                        nidx = (pa * nb + pb) * nc + pc
                        ri = _find(parent, idx)
                        rn = _find(parent, nidx)
                        if ri < rn:
                            parent[rn] = ri
                        elif rn < ri:
                            parent[ri] = rn
        for a in range(na):
            for b in range(nb):
                for c in range(nc):
                    if not mask[a, b, c]:
                        continue
                    idx = (a * nb + b) * nc + c
                    ri = _find(parent, idx)
                    if newlab[ri] == 0:
                        count += 1
                        newlab[ri] = count
                    labels[a, b, c] = newlab[ri]
    return labels_arr, int(count)
