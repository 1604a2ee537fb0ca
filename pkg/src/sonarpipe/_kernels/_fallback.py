"""Pure NumPy implementations of the hot kernels.

Every kernel here must give bit-identical results to the compiled versions in
``_core.pyx``: floating point expressions are evaluated in the same order and
reductions over mixture components are sequential.
"""

from __future__ import annotations

from collections import deque

import numpy as np


def gmm_apply(
    frame,
    weights,
    means,
    variances,
    counts,
    out,
    alpha,
    var_threshold,
    var_threshold_gen,
    background_ratio,
    complexity_prior,
    var_init,
    var_min,
    var_max,
):
    height, width, K = weights.shape
    P = height * width
    x = frame.reshape(P).astype(np.float64)
    w = weights.reshape(P, K)
    mu = means.reshape(P, K)
    var = variances.reshape(P, K)
    n = counts.reshape(P)
    rows = np.arange(P)

    valid = np.arange(K)[None, :] < n[:, None]
    d = x[:, None] - mu
    d2 = d * d

    # background decision on the model as it stood before this frame
    cum = np.zeros(P)
    bg = np.zeros(P, dtype=bool)
    for k in range(K):
        vk = valid[:, k]
        bg |= vk & (cum < background_ratio) & (d2[:, k] <= var_threshold * var[:, k])
        cum = cum + np.where(vk, w[:, k], 0.0)
    out.reshape(P)[:] = np.where(bg, 0, 1).astype(np.uint8)

    fits = valid & (d2 < var_threshold_gen * var)
    matched = fits.any(axis=1)
    j = fits.argmax(axis=1)

    a1 = 1.0 - alpha
    prune = alpha * complexity_prior
    nw = w * a1 - prune

    r = rows[matched]
    jr = j[matched]
    wj = nw[r, jr] + alpha
    nw[r, jr] = wj
    kk = alpha / wj
    dj = d[r, jr]
    mu[r, jr] = mu[r, jr] + kk * dj
    vj = var[r, jr]
    vj = vj + kk * (d2[r, jr] - vj)
    var[r, jr] = np.minimum(np.maximum(vj, var_min), var_max)

    keep = valid & (nw > 0.0)
    order = np.argsort(~keep, axis=1, kind="stable")
    nw = np.take_along_axis(nw, order, axis=1)
    nmu = np.take_along_axis(mu, order, axis=1)
    nvar = np.take_along_axis(var, order, axis=1)
    nn = keep.sum(axis=1)

    fresh = ~matched
    rf = rows[fresh]
    slot = np.where(nn[fresh] == K, K - 1, nn[fresh])
    nw[rf, slot] = alpha
    nmu[rf, slot] = x[fresh]
    nvar[rf, slot] = var_init
    nn[fresh] = np.minimum(nn[fresh] + 1, K)

    valid = np.arange(K)[None, :] < nn[:, None]
    total = np.zeros(P)
    for k in range(K):
        total = total + np.where(valid[:, k], nw[:, k], 0.0)
    nw = np.where(valid, nw / total[:, None], 0.0)

    key = np.where(valid, -nw, np.inf)
    order = np.argsort(key, axis=1, kind="stable")
    w[:] = np.take_along_axis(nw, order, axis=1)
    mu[:] = np.where(valid, np.take_along_axis(nmu, order, axis=1), 0.0)
    var[:] = np.where(valid, np.take_along_axis(nvar, order, axis=1), 0.0)
    n[:] = nn


def median3x3(mask):
    m = (np.asarray(mask) != 0).astype(np.uint8)
    p = np.pad(m, 1, mode="edge")
    h, w = m.shape
    total = np.zeros((h, w), dtype=np.uint8)
    for dy in range(3):
        for dx in range(3):
            total += p[dy : dy + h, dx : dx + w]
    return (total >= 5).astype(np.uint8)


def _cross_shifts(p, h, w):
    return (
        p[1 : h + 1, 1 : w + 1],
        p[0:h, 1 : w + 1],
        p[2 : h + 2, 1 : w + 1],
        p[1 : h + 1, 0:w],
        p[1 : h + 1, 2 : w + 2],
    )


def erode_cross(mask):
    m = (np.asarray(mask) != 0).astype(np.uint8)
    h, w = m.shape
    p = np.pad(m, 1, mode="constant", constant_values=0)
    c, u, dn, l, r = _cross_shifts(p, h, w)
    return c & u & dn & l & r


def dilate_cross(mask):
    m = (np.asarray(mask) != 0).astype(np.uint8)
    h, w = m.shape
    p = np.pad(m, 1, mode="constant", constant_values=0)
    c, u, dn, l, r = _cross_shifts(p, h, w)
    return c | u | dn | l | r


def open_cross3x3(mask):
    return dilate_cross(erode_cross(mask))


_N4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
_N8 = _N4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))


def connected_components(mask, raw, connectivity):
    """Label foreground components by breadth-first search.

    Returns ``(labels, stats)``; ``stats`` rows are
    ``(area, x0, y0, x1, y1, intensity_sum)`` with inclusive corners, ordered
    by the raster position of each component's first pixel.
    """
    m = np.asarray(mask) != 0
    h, w = m.shape
    steps = _N8 if connectivity == 8 else _N4
    labels = np.zeros((h, w), dtype=np.int32)
    rawl = raw.tolist()
    stats = []
    ys, xs = np.nonzero(m)
    fg = m.tolist()
    lab = labels.tolist()
    current = 0
    for y0, x0 in zip(ys.tolist(), xs.tolist()):
        if lab[y0][x0]:
            continue
        current += 1
        lab[y0][x0] = current
        queue = deque([(y0, x0)])
        area = 0
        total = 0
        bx0, by0, bx1, by1 = x0, y0, x0, y0
        while queue:
            y, x = queue.popleft()
            area += 1
            total += rawl[y][x]
            if x < bx0:
                bx0 = x
            if x > bx1:
                bx1 = x
            if y > by1:
                by1 = y
            for dy, dx in steps:
                yy, xx = y + dy, x + dx
                if 0 <= yy < h and 0 <= xx < w and fg[yy][xx] and not lab[yy][xx]:
                    lab[yy][xx] = current
                    queue.append((yy, xx))
        stats.append((area, bx0, by0, bx1, by1, total))
    labels[:] = np.array(lab, dtype=np.int32).reshape(h, w) if h and w else labels
    return labels, np.array(stats, dtype=np.int64).reshape(-1, 6)
