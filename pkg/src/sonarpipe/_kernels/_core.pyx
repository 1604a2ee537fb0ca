# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Must stay bit-identical to ``_fallback.py``."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


def gmm_apply(const unsigned char[:, ::1] frame,
              double[:, :, ::1] weights,
              double[:, :, ::1] means,
              double[:, :, ::1] variances,
              int[:, ::1] counts,
              unsigned char[:, ::1] out,
              double alpha,
              double var_threshold,
              double var_threshold_gen,
              double background_ratio,
              double complexity_prior,
              double var_init,
              double var_min,
              double var_max):
    cdef Py_ssize_t height = weights.shape[0]
    cdef Py_ssize_t width = weights.shape[1]
    cdef int K = <int>weights.shape[2]
    cdef Py_ssize_t i, j
    cdef int k, n, m, match, bg
    cdef double x, d, d2, cum, total, wj, kk, v, a1, prune
    cdef double tw, tm, tv
    cdef double *w
    cdef double *mu
    cdef double *var

    a1 = 1.0 - alpha
    prune = alpha * complexity_prior
    with nogil:
        for i in range(height):
            for j in range(width):
                w = &weights[i, j, 0]
                mu = &means[i, j, 0]
                var = &variances[i, j, 0]
                n = counts[i, j]
                x = <double>frame[i, j]

                # background decision on the model as it stood before this frame
                bg = 0
                cum = 0.0
                for k in range(n):
                    if cum >= background_ratio:
                        break
                    d = x - mu[k]
                    d2 = d * d
                    if d2 <= var_threshold * var[k]:
                        bg = 1
                        break
                    cum = cum + w[k]
                out[i, j] = 0 if bg else 1

                match = -1
                for k in range(n):
                    d = x - mu[k]
                    d2 = d * d
                    if d2 < var_threshold_gen * var[k]:
                        match = k
                        break

                for k in range(n):
                    w[k] = w[k] * a1 - prune
                if match >= 0:
                    k = match
                    wj = w[k] + alpha
                    w[k] = wj
                    kk = alpha / wj
                    d = x - mu[k]
                    d2 = d * d
                    mu[k] = mu[k] + kk * d
                    v = var[k]
                    v = v + kk * (d2 - v)
                    if v < var_min:
                        v = var_min
                    if v > var_max:
                        v = var_max
                    var[k] = v

                m = 0
                for k in range(n):
                    if w[k] > 0.0:
                        w[m] = w[k]
                        mu[m] = mu[k]
                        var[m] = var[k]
                        m = m + 1
                n = m

                if match < 0:
                    if n == K:
                        k = K - 1
                    else:
                        k = n
                        n = n + 1
                    w[k] = alpha
                    mu[k] = x
                    var[k] = var_init

                total = 0.0
                for k in range(n):
                    total = total + w[k]
                for k in range(n):
                    w[k] = w[k] / total

                # stable insertion sort, heaviest component first
                for k in range(1, n):
                    tw = w[k]
                    tm = mu[k]
                    tv = var[k]
                    m = k
                    while m > 0 and tw > w[m - 1]:
                        w[m] = w[m - 1]
                        mu[m] = mu[m - 1]
                        var[m] = var[m - 1]
                        m = m - 1
                    w[m] = tw
                    mu[m] = tm
                    var[m] = tv

                for k in range(n, K):
                    w[k] = 0.0
                    mu[k] = 0.0
                    var[k] = 0.0
                counts[i, j] = n


def median3x3(const unsigned char[:, ::1] mask):
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    if h == 0 or w == 0:
        return out_arr
    cdef unsigned char[:, ::1] out = out_arr
    # vertical 3-sums per column; edge rows are replicated
    vs_arr = np.zeros(w + 2, dtype=np.int32)
    cdef int[::1] vs = vs_arr
    cdef Py_ssize_t y, x, up, dn
    with nogil:
        for y in range(h):
            up = y - 1 if y > 0 else 0
            dn = y + 1 if y < h - 1 else h - 1
            for x in range(w):
                vs[x + 1] = (mask[up, x] != 0) + (mask[y, x] != 0) + (mask[dn, x] != 0)
            vs[0] = vs[1]
            vs[w + 1] = vs[w]
            for x in range(w):
                out[y, x] = 1 if vs[x] + vs[x + 1] + vs[x + 2] >= 5 else 0
    return out_arr


def erode_cross(const unsigned char[:, ::1] mask):
    """Outside the frame counts as background, so border pixels always erode."""
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t y, x
    cdef const unsigned char *r
    cdef const unsigned char *rp
    cdef const unsigned char *rn
    cdef unsigned char *o
    with nogil:
        for y in range(1, h - 1):
            r = &mask[y, 0]
            rp = &mask[y - 1, 0]
            rn = &mask[y + 1, 0]
            o = &out[y, 0]
            for x in range(1, w - 1):
                o[x] = (r[x] != 0) & (rp[x] != 0) & (rn[x] != 0) & (r[x - 1] != 0) & (r[x + 1] != 0)
    return out_arr


def dilate_cross(const unsigned char[:, ::1] mask):
    """A missing neighbour is replaced by the pixel itself, which leaves the OR unchanged."""
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    if h == 0 or w == 0:
        return out_arr
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t y, x
    cdef const unsigned char *r
    cdef const unsigned char *rp
    cdef const unsigned char *rn
    cdef unsigned char *o
    with nogil:
        for y in range(h):
            r = &mask[y, 0]
            rp = &mask[y - 1, 0] if y > 0 else r
            rn = &mask[y + 1, 0] if y < h - 1 else r
            o = &out[y, 0]
            for x in range(1, w - 1):
                o[x] = (r[x] | rp[x] | rn[x] | r[x - 1] | r[x + 1]) != 0
            o[0] = (r[0] | rp[0] | rn[0] | r[1 if w > 1 else 0]) != 0
            if w > 1:
                o[w - 1] = (r[w - 1] | rp[w - 1] | rn[w - 1] | r[w - 2]) != 0
    return out_arr


def open_cross3x3(const unsigned char[:, ::1] mask):
    return dilate_cross(erode_cross(mask))


cdef inline int _find(int *parent, int a) noexcept nogil:
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


cdef inline void _union(int *parent, int a, int b) noexcept nogil:
    a = _find(parent, a)
    b = _find(parent, b)
    if a < b:
        parent[b] = a
    elif b < a:
        parent[a] = b


def connected_components(const unsigned char[:, ::1] mask,
                         const unsigned char[:, ::1] raw,
                         int connectivity):
    """Two-pass union-find labeling.

    Returns ``(labels, stats)`` with the same layout and ordering as the
    fallback: stats rows ``(area, x0, y0, x1, y1, intensity_sum)``.
    """
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    labels_arr = np.zeros((h, w), dtype=np.int32)
    cdef int[:, ::1] labels = labels_arr
    cdef Py_ssize_t y, x
    cdef int nxt = 1
    cdef int cur, nb, r, n_final
    cdef int *parent = <int *>malloc(sizeof(int) * (h * w + 2))
    cdef int *final
    if parent == NULL:
        raise MemoryError()
    parent[0] = 0
    try:
        with nogil:
            for y in range(h):
                for x in range(w):
                    if mask[y, x] == 0:
                        continue
                    cur = 0
                    # already-visited neighbours in raster order
                    if x > 0 and labels[y, x - 1] != 0:
                        cur = labels[y, x - 1]
                    if y > 0:
                        nb = labels[y - 1, x]
                        if nb != 0:
                            if cur == 0:
                                cur = nb
                            else:
                                _union(parent, cur, nb)
                        if connectivity == 8:
                            if x > 0:
                                nb = labels[y - 1, x - 1]
                                if nb != 0:
                                    if cur == 0:
                                        cur = nb
                                    else:
                                        _union(parent, cur, nb)
                            if x + 1 < w:
                                nb = labels[y - 1, x + 1]
                                if nb != 0:
                                    if cur == 0:
                                        cur = nb
                                    else:
                                        _union(parent, cur, nb)
                    if cur == 0:
                        cur = nxt
                        parent[nxt] = nxt
                        nxt = nxt + 1
                    labels[y, x] = cur

        final = <int *>malloc(sizeof(int) * nxt)
        if final == NULL:
            raise MemoryError()
        try:
            n_final = 0
            # roots are the smallest provisional label of their set, i.e. the
            # first raster pixel, so numbering roots in label order keeps raster order
            for cur in range(1, nxt):
                r = _find(parent, cur)
                if r == cur:
                    n_final += 1
                    final[cur] = n_final
            for cur in range(1, nxt):
                final[cur] = final[_find(parent, cur)]

            stats_arr = np.zeros((n_final, 6), dtype=np.int64)
            if n_final:
                stats_arr[:, 1] = w
                stats_arr[:, 2] = h
            run_stats(labels, raw, final, stats_arr)
        finally:
            free(final)
    finally:
        free(parent)
    return labels_arr, stats_arr


cdef void run_stats(int[:, ::1] labels, const unsigned char[:, ::1] raw, int *final,
                    cnp.int64_t[:, ::1] stats):
    cdef Py_ssize_t h = labels.shape[0]
    cdef Py_ssize_t w = labels.shape[1]
    cdef Py_ssize_t y, x
    cdef int lab
    with nogil:
        for y in range(h):
            for x in range(w):
                lab = labels[y, x]
                if lab == 0:
                    continue
                lab = final[lab]
                labels[y, x] = lab
                lab = lab - 1
                stats[lab, 0] += 1
                if x < stats[lab, 1]:
                    stats[lab, 1] = x
                if y < stats[lab, 2]:
                    stats[lab, 2] = y
                if x > stats[lab, 3]:
                    stats[lab, 3] = x
                if y > stats[lab, 4]:
                    stats[lab, 4] = y
                stats[lab, 5] += raw[y, x]
