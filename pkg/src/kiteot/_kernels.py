"""Compiled inner loop for power cells clipped to a convex domain (float only)."""

import numpy as np
from numba import njit

MAXV = 96


@njit(cache=True)
def _clip(xs, ys, ls, m, nx, ny, off, label, ox, oy, ol, dedup_tol):
    k = 0
    allin = True
    allout = True
    for i in range(m):
        s = nx * xs[i] + ny * ys[i] - off
        if s > 0:
            allin = False
        if s < 0:
            allout = False
    if allin:
        for i in range(m):
            ox[i] = xs[i]
            oy[i] = ys[i]
            ol[i] = ls[i]
        return m
    if allout:
        return 0
    for i in range(m):
        j = i + 1 if i + 1 < m else 0
        px, py, qx, qy = xs[i], ys[i], xs[j], ys[j]
        sp = nx * px + ny * py - off
        sq = nx * qx + ny * qy - off
        if sp <= 0:
            if k < MAXV:
                ox[k] = px
                oy[k] = py
                ol[k] = ls[i]
                k += 1
            if sq > 0 and k < MAXV:
                t = sp / (sp - sq)
                ox[k] = px + t * (qx - px)
                oy[k] = py + t * (qy - py)
                ol[k] = label
                k += 1
        elif sq <= 0 and k < MAXV:
            t = sp / (sp - sq)
            ox[k] = px + t * (qx - px)
            oy[k] = py + t * (qy - py)
            ol[k] = ls[i]
            k += 1
    # drop a vertex coinciding with its successor
    w = 0
    for i in range(k):
        j = i + 1 if i + 1 < k else 0
        if abs(ox[i] - ox[j]) <= dedup_tol and abs(oy[i] - oy[j]) <= dedup_tol and k > 1:
            continue
        ox[w] = ox[i]
        oy[w] = oy[i]
        ol[w] = ol[i]
        w += 1
    return w


@njit(cache=True)
def power_cells(sites, lift, indptr, indices, visible, dom, min_area, dedup_tol):
    n = sites.shape[0]
    nd = dom.shape[0]
    verts = np.zeros((n, MAXV, 2))
    labels = np.full((n, MAXV), -2, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    areas = np.zeros(n)
    cents = np.full((n, 2), np.nan)
    m2 = np.zeros(n)
    ax = np.empty(MAXV)
    ay = np.empty(MAXV)
    al = np.empty(MAXV, dtype=np.int64)
    bx = np.empty(MAXV)
    by = np.empty(MAXV)
    bl = np.empty(MAXV, dtype=np.int64)
    for j in range(n):
        if not visible[j]:
            continue
        for i in range(nd):
            ax[i] = dom[i, 0]
            ay[i] = dom[i, 1]
            al[i] = -1
        m = nd
        yx, yy = sites[j, 0], sites[j, 1]
        for p in range(indptr[j], indptr[j + 1]):
            k = indices[p]
            if k == j:
                continue
            dx = sites[k, 0] - yx
            dy = sites[k, 1] - yy
            if dx == 0.0 and dy == 0.0:
                continue
            m = _clip(ax, ay, al, m, dx, dy, 0.5 * (lift[k] - lift[j]), k, bx, by, bl, dedup_tol)
            if m < 3:
                m = 0
                break
            for i in range(m):
                ax[i] = bx[i]
                ay[i] = by[i]
                al[i] = bl[i]
        if m < 3:
            continue
        a = 0.0
        cx = 0.0
        cy = 0.0
        mm = 0.0
        for i in range(m):
            i1 = i + 1 if i + 1 < m else 0
            x0, y0, x1, y1 = ax[i], ay[i], ax[i1], ay[i1]
            c = x0 * y1 - x1 * y0
            a += c
            cx += (x0 + x1) * c
            cy += (y0 + y1) * c
            mm += (x0 * x0 + x0 * x1 + x1 * x1 + y0 * y0 + y0 * y1 + y1 * y1) * c
        a *= 0.5
        if a < min_area:
            continue
        areas[j] = a
        cents[j, 0] = cx / (6 * a)
        cents[j, 1] = cy / (6 * a)
        m2[j] = mm / 12
        counts[j] = m
        for i in range(m):
            verts[j, i, 0] = ax[i]
            verts[j, i, 1] = ay[i]
            labels[j, i] = al[i]
    return verts, labels, counts, areas, cents, m2
