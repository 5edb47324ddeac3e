"""Lattice stencils adapted to an anisotropic metric.

An obtuse superbase (b0, b1, b2, b3) of Z^3 for a metric M satisfies
b0 + b1 + b2 + b3 = 0 and <b_i, M b_j> <= 0 for i != j.  The 24 triangles
[b_i, b_i + b_j, -b_l] then form a star-shaped surface whose vertices are
pairwise M-acute within each face, so a semi-Lagrangian update on it is
causal.  The superbase is found by Selling's reduction.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

_OTHERS = np.array([[2, 3], [1, 3], [1, 2], [0, 3], [0, 2], [0, 1]], dtype=np.int64)
_PAIRS = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]], dtype=np.int64)


@nb.njit(cache=True)
def _bdb(D, a, b):
    s = 0.0
    for i in range(3):
        for j in range(3):
            s += a[i] * D[i, j] * b[j]
    return s


def lbr_combinatorics():
    """Vertex labels and the 24 triangles [b_i, b_i + b_j, -b_l].

    Vertices 0-3 are b_i, 4-7 are -b_i, 8-10 are b_0 + b_m (m = 1, 2, 3) and
    11-13 are their negatives.
    """

    def pair(i, j):
        if 0 in (i, j):
            m = j if i == 0 else i
            return 8 + m - 1
        m = ({1, 2, 3} - {i, j}).pop()
        return 11 + m - 1

    tris = []
    for i in range(4):
        for j in range(4):
            for k in range(4):
                if len({i, j, k}) < 3:
                    continue
                l = ({0, 1, 2, 3} - {i, j, k}).pop()
                tris.append((i, pair(i, j), 4 + l))
    return np.array(tris, dtype=np.int64)


@nb.njit(cache=True)
def superbase(M, b):
    """Selling reduction of the canonical superbase to an M-obtuse one."""
    for r in range(4):
        for c in range(3):
            b[r, c] = 0
    b[0, 0] = 1
    b[1, 1] = 1
    b[2, 2] = 1
    b[3, 0] = -1
    b[3, 1] = -1
    b[3, 2] = -1
    scale = M[0, 0] + M[1, 1] + M[2, 2]
    it = 0
    while it < 10000:
        found = False
        for p in range(6):
            i, j = _PAIRS[p, 0], _PAIRS[p, 1]
            if _bdb(M, b[i], b[j]) > 1e-14 * scale:
                k, l = _OTHERS[p, 0], _OTHERS[p, 1]
                for r in range(3):
                    b[k, r] += b[i, r]
                    b[l, r] += b[i, r]
                    b[i, r] = -b[i, r]
                found = True
                break
        if not found:
            break
        it += 1
    return it


@nb.njit(cache=True)
def build_lbr(preset, xs, ts, spacing, xi, eps, valid_x):
    """14 stencil vertices (index offsets) for every (x, theta) column."""
    nx, nt = xs.shape[0], ts.shape[0]
    verts = np.zeros((nx, nt, 14, 3), dtype=np.int64)
    F = np.empty((3, 3))
    M = np.empty((3, 3))
    W1 = np.empty((3, 3))
    b = np.empty((4, 3), dtype=np.int64)
    x2 = xi * xi
    d = np.array([x2, 1.0, x2 / (eps * eps)])
    for i in range(nx):
        if not valid_x[i]:
            continue
        for k in range(nt):
            _coframe(preset, xs[i], ts[k], W1)
            # M in index units: S w^T diag(d) w S
            for a in range(3):
                for c in range(3):
                    s = 0.0
                    for r in range(3):
                        s += d[r] * W1[r, a] * W1[r, c]
                    M[a, c] = s * spacing[a] * spacing[c]
            superbase(M, b)
            for r in range(3):
                for m in range(4):
                    verts[i, k, m, r] = b[m, r]
                    verts[i, k, 4 + m, r] = -b[m, r]
                for m in range(1, 4):
                    verts[i, k, 8 + m - 1, r] = b[0, r] + b[m, r]
                    verts[i, k, 11 + m - 1, r] = -(b[0, r] + b[m, r])
    return verts


@nb.njit(cache=True)
def _coframe(preset, x, th, out):
    ct, st = math.cos(th), math.sin(th)
    if preset == 1:
        cx, sx = 1.0, 0.0
    else:
        cx, sx = math.cos(x), math.sin(x)
    out[0, 0], out[0, 1], out[0, 2] = ct, -cx * st, 0.0
    out[1, 0], out[1, 1], out[1, 2] = 0.0, sx, 1.0
    out[2, 0], out[2, 1], out[2, 2] = st, cx * ct, 0.0


@nb.njit(cache=True)
def reverse_vertices(verts, periodic_t, valid_x):
    """CSR: for (ip, kp), entries (d0, d1, d2, vertex) with p = q + d."""
    nx, nt, nv = verts.shape[0], verts.shape[1], verts.shape[2]
    counts = np.zeros(nx * nt + 1, dtype=np.int64)
    data = np.empty((0, 4), dtype=np.int64)
    for pass_ in range(2):
        fill = np.zeros(nx * nt, dtype=np.int64)
        if pass_ == 1:
            data = np.empty((counts[-1], 4), dtype=np.int64)
        for iq in range(nx):
            if not valid_x[iq]:
                continue
            for kq in range(nt):
                for v in range(nv):
                    d0, d1, d2 = verts[iq, kq, v, 0], verts[iq, kq, v, 1], verts[iq, kq, v, 2]
                    ip = iq + d0
                    if ip < 0 or ip >= nx:
                        continue
                    kp = kq + d2
                    if periodic_t:
                        kp %= nt
                    elif kp < 0 or kp >= nt:
                        continue
                    slot = ip * nt + kp
                    if pass_ == 0:
                        counts[slot + 1] += 1
                    else:
                        pos = counts[slot] + fill[slot]
                        data[pos, 0] = d0
                        data[pos, 1] = d1
                        data[pos, 2] = d2
                        data[pos, 3] = v
                        fill[slot] += 1
        if pass_ == 0:
            for s in range(nx * nt):
                counts[s + 1] += counts[s]
    return counts, data
