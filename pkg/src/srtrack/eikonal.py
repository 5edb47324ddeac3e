"""Riemannian approximation of the SR eikonal equation on SO(3) and SE(2).

The metric in chart coordinates is

    M_eps = w^T diag(C^2 xi^2, C^2, C^2 xi^2 / eps^2) w

with w the matrix of left-invariant one-forms.  The solver is a
label-correcting Dijkstra variant with semi-Lagrangian updates: a node's
value is the minimum over the triangles of its stencil surface of
(linearly interpolated W) + (metric length of the step).  Nodes may be
re-opened when a neighbour improves later, so the result is the fixed point
of the local update rather than a single causal sweep.

Three stencils are available.  ``sl26`` is the 26-neighbour cube surface.
``lbr`` is a 14-vertex surface adapted to the local metric through an
obtuse superbase; it is causal, so no node is ever re-opened.  ``hybrid``
(the default) takes the minimum over both, which is the most accurate at
strong anisotropy.

For the cuspless variant updates are forward-only: the part of a stencil
triangle from which the step into the node would have u1 < 0 is discarded,
so the value is propagated only along forward spatial motion and in-place
rotation.
"""

from __future__ import annotations

import heapq
import json
import math
import struct
from dataclasses import dataclass, field, asdict

import numba as nb
import numpy as np

from . import _lattice, lie_so3

PRESETS = {"so3": 0, "se2": 1}
_MAGIC = b"SRFM"
_VERSION = 1
SOURCE_FACTOR = 2  # refinement of the local box around the seed
SOURCE_HALF = 50  # half-width of that box in fine nodes
REOPEN_TOL = 1e-3  # re-queue settled nodes only for gains above this many cells


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Grid3D:
    """Regular (x, y, theta) lattice.

    For SO(3) x spans [-pi/2, pi/2] with both poles on the grid; y and theta
    are periodic with the index N // 2 at 0.  For SE(2) the first two axes
    are the planar (X, Y) with the given half-widths and theta is periodic.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    periodic: tuple[bool, bool, bool]
    preset: str = "so3"

    @classmethod
    def so3(cls, nx: int = 101, ny: int = 201, nt: int = 201) -> "Grid3D":
        if nx % 2 == 0:
            raise ConfigError("Nx must be odd so that x = 0 is a node")
        dx = math.pi / (nx - 1)
        dy, dt = 2 * math.pi / ny, 2 * math.pi / nt
        return cls((nx, ny, nt), (dx, dy, dt), (-math.pi / 2, -(ny // 2) * dy, -(nt // 2) * dt),
                   (False, True, True), "so3")

    @classmethod
    def se2(cls, nx: int, ny: int, nt: int, half_x: float, half_y: float) -> "Grid3D":
        if nx % 2 == 0 or ny % 2 == 0:
            raise ConfigError("Nx and Ny must be odd")
        dx, dy = 2 * half_x / (nx - 1), 2 * half_y / (ny - 1)
        dt = 2 * math.pi / nt
        return cls((nx, ny, nt), (dx, dy, dt), (-half_x, -half_y, -(nt // 2) * dt),
                   (False, False, True), "se2")

    @classmethod
    def so3_box(cls, half_x: float, half_y: float, nx: int, ny: int, nt: int) -> "Grid3D":
        """Chart box |x| <= half_x, |y| <= half_y around the identity.

        Only theta wraps; used for image-sized problems.
        """
        if nx % 2 == 0 or ny % 2 == 0:
            raise ConfigError("Nx and Ny must be odd")
        if not 0 < half_x < math.pi / 2:
            raise ConfigError("half_x must lie in (0, pi/2)")
        dx, dy = 2 * half_x / (nx - 1), 2 * half_y / (ny - 1)
        dt = 2 * math.pi / nt
        return cls((nx, ny, nt), (dx, dy, dt), (-half_x, -half_y, -(nt // 2) * dt),
                   (False, False, True), "so3")

    def coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing[axis] * np.arange(self.dims[axis])

    def index_of(self, point) -> tuple[int, int, int]:
        """Nearest node to a chart point."""
        out = []
        for a in range(3):
            v = point[a]
            if self.periodic[a]:
                v = lie_so3.wrap_angle(v - self.origin[a] - math.pi) + math.pi
                i = int(round(v / self.spacing[a])) % self.dims[a]
            else:
                i = int(round((v - self.origin[a]) / self.spacing[a]))
                if not 0 <= i < self.dims[a]:
                    raise ConfigError(f"point {point} outside grid along axis {a}")
            out.append(i)
        return tuple(out)

    def node(self, idx) -> np.ndarray:
        return np.array([self.origin[a] + self.spacing[a] * idx[a] for a in range(3)])

    @property
    def min_cell(self) -> float:
        return min(self.spacing)


@dataclass(frozen=True)
class MetricSpec:
    xi: float
    eps: float = 0.1
    preset: str = "so3"
    cuspless: bool = False

    def __post_init__(self):
        if self.xi <= 0:
            raise ConfigError("xi must be positive")
        if not 0 < self.eps <= 1:
            raise ConfigError("eps must lie in (0, 1]")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")


@dataclass
class DistanceGrid:
    W: np.ndarray
    grid: Grid3D
    metric: MetricSpec
    cost: np.ndarray
    seed: tuple[int, int, int]
    stats: dict = field(default_factory=dict)

    def value_at(self, idx) -> float:
        return float(self.W[tuple(idx)])


# --------------------------------------------------------------------------
# metric


def coframe_matrix(x: float, theta: float, preset: str = "so3") -> np.ndarray:
    if preset == "se2":
        return lie_so3.coframe_at(0.0, theta)
    return lie_so3.coframe_at(x, theta)


def assemble_metric(x: float, theta: float, spec: MetricSpec, cost: float = 1.0):
    """Return (M_eps, M_eps^{-1}) in chart coordinates at (x, theta).

    The inverse is written directly from the frame: X D^{-1} X^T.
    """
    if spec.preset == "so3" and abs(math.cos(x)) < 1e-12:
        raise lie_so3.ChartSingularityError("metric undefined at the pole")
    w = coframe_matrix(x, theta, spec.preset)
    d = cost**2 * np.array([spec.xi**2, 1.0, spec.xi**2 / spec.eps**2])
    m = w.T @ np.diag(d) @ w
    fr = lie_so3.frame_at(0.0 if spec.preset == "se2" else x, theta)
    minv = fr.T @ np.diag(1.0 / d) @ fr
    return m, minv


# --------------------------------------------------------------------------
# stencil


def _cube_triangles(r: int = 1):
    """Triangulated surface of the cube [-r, r]^3: 48 r^2 triangles.

    Each face square is split along a diagonal pointing away from the face
    centre, which gives the union-jack pattern for r = 1.
    """
    rng = range(-r, r + 1)
    offsets = [(a, b, c) for a in rng for b in rng for c in rng
               if max(abs(a), abs(b), abs(c)) == r]
    index = {o: n for n, o in enumerate(offsets)}
    tris = []
    for axis in range(3):
        for side in (-r, r):
            u_ax, v_ax = [a for a in range(3) if a != axis]

            def pt(u, v):
                p = [0, 0, 0]
                p[axis], p[u_ax], p[v_ax] = side, u, v
                return index[tuple(p)]

            for u in range(-r, r):
                for v in range(-r, r):
                    a, b, c, d = pt(u, v), pt(u + 1, v), pt(u + 1, v + 1), pt(u, v + 1)
                    # diagonal through the corner nearest the face centre
                    if (u >= 0) == (v >= 0):
                        tris += [(a, b, c), (a, c, d)]
                    else:
                        tris += [(a, b, d), (b, c, d)]
    return np.array(offsets, dtype=np.int64), np.array(tris, dtype=np.int64)


OFFSETS, TRIANGLES = _cube_triangles()
OFFSETS2, TRIANGLES2 = _cube_triangles(2)


def _incidence(nv, triangles):
    lists = [[] for _ in range(nv)]
    for t, tri in enumerate(triangles):
        for v in tri:
            lists[v].append(t)
    width = max(len(x) for x in lists)
    inc = -np.ones((nv, width), dtype=np.int64)
    for v, lst in enumerate(lists):
        inc[v, : len(lst)] = lst
    return inc


INCIDENCE = _incidence(len(OFFSETS), TRIANGLES)
LBR_TRIANGLES = _lattice.lbr_combinatorics()
LBR_INCIDENCE = _incidence(14, LBR_TRIANGLES)


# --------------------------------------------------------------------------
# numba kernels

_INF = np.inf


@nb.njit(cache=True, inline="always")
def _qf(M, a, b):
    return (a[0] * (M[0, 0] * b[0] + M[0, 1] * b[1] + M[0, 2] * b[2])
            + a[1] * (M[1, 0] * b[0] + M[1, 1] * b[1] + M[1, 2] * b[2])
            + a[2] * (M[2, 0] * b[0] + M[2, 1] * b[1] + M[2, 2] * b[2]))


@nb.njit(cache=True)
def _vertex(w, d, M):
    q = _qf(M, d, d)
    return w + math.sqrt(max(q, 0.0))


@nb.njit(cache=True)
def _segment(wa, wb, da, db, M):
    """Min over the segment [da, db] of interpolated w + |.|_M (endpoints included)."""
    best = min(_vertex(wa, da, M), _vertex(wb, db, M))
    qaa = _qf(M, da, da)
    qab = _qf(M, da, db)
    qbb = _qf(M, db, db)
    det = qaa * qbb - qab * qab
    if det <= 1e-300:
        return best
    i00, i01, i11 = qbb / det, -qab / det, qaa / det
    a = i00 + 2 * i01 + i11
    b = (i00 + i01) * wa + (i01 + i11) * wb
    c = i00 * wa * wa + 2 * i01 * wa * wb + i11 * wb * wb
    disc = b * b - a * (c - 1.0)
    if disc < 0 or a <= 0:
        return best
    mu = (b + math.sqrt(disc)) / a
    den = a * mu - b
    if den <= 0:
        return best
    r0, r1 = mu - wa, mu - wb
    l0 = (i00 * r0 + i01 * r1) / den
    l1 = (i01 * r0 + i11 * r1) / den
    if l0 >= -1e-12 and l1 >= -1e-12 and mu < best:
        return mu
    return best


@nb.njit(cache=True)
def _triangle(w, D, M, lam):
    """Interior stationary value over a triangle; inf if not interior.

    D rows are the three offsets; ``lam`` receives the barycentric weights.
    """
    q00 = _qf(M, D[0], D[0])
    q01 = _qf(M, D[0], D[1])
    q02 = _qf(M, D[0], D[2])
    q11 = _qf(M, D[1], D[1])
    q12 = _qf(M, D[1], D[2])
    q22 = _qf(M, D[2], D[2])
    c00 = q11 * q22 - q12 * q12
    c01 = q02 * q12 - q01 * q22
    c02 = q01 * q12 - q02 * q11
    det = q00 * c00 + q01 * c01 + q02 * c02
    if abs(det) <= 1e-300:
        return _INF
    c11 = q00 * q22 - q02 * q02
    c12 = q02 * q01 - q00 * q12
    c22 = q00 * q11 - q01 * q01
    # row sums of Q^{-1} (times det)
    r0 = c00 + c01 + c02
    r1 = c01 + c11 + c12
    r2 = c02 + c12 + c22
    w0, w1, w2 = w[0], w[1], w[2]
    a = (r0 + r1 + r2) / det
    b = (r0 * w0 + r1 * w1 + r2 * w2) / det
    c = (w0 * (c00 * w0 + c01 * w1 + c02 * w2)
         + w1 * (c01 * w0 + c11 * w1 + c12 * w2)
         + w2 * (c02 * w0 + c12 * w1 + c22 * w2)) / det
    disc = b * b - a * (c - 1.0)
    if disc < 0 or a <= 0:
        return _INF
    mu = (b + math.sqrt(disc)) / a
    den = (a * mu - b) * det
    if den == 0 or (a * mu - b) <= 0:
        return _INF
    e0, e1, e2 = mu - w0, mu - w1, mu - w2
    lam[0] = (c00 * e0 + c01 * e1 + c02 * e2) / den
    lam[1] = (c01 * e0 + c11 * e1 + c12 * e2) / den
    lam[2] = (c02 * e0 + c12 * e1 + c22 * e2) / den
    if lam[0] < -1e-12 or lam[1] < -1e-12 or lam[2] < -1e-12:
        return _INF
    return mu


@nb.njit(cache=True)
def _lerp(da, db, t, out):
    for i in range(3):
        out[i] = (1.0 - t) * da[i] + t * db[i]


@nb.njit(cache=True)
def _edge_split(wa, wb, da, db, sa, sb, M, cuspless, buf):
    """Segment minimum; in cuspless mode only the forward part (s <= 0) counts."""
    if not cuspless or (sa <= 0 and sb <= 0):
        return _segment(wa, wb, da, db, M)
    if sa > 0 and sb > 0:
        return _INF
    t = sa / (sa - sb)
    _lerp(da, db, t, buf)
    wc = (1.0 - t) * wa + t * wb
    if sa <= 0:
        return _segment(wa, wc, da, buf, M)
    return _segment(wc, wb, buf, db, M)


@nb.njit(cache=True)
def _triangle_min(w, D, s, M, cuspless, lam, pts, wp):
    """Minimum over a closed triangle of the update.

    ``s`` is the backward component per vertex: a step from vertex i into the
    node moves backwards when s[i] > 0, which the cuspless model forbids.
    """
    v = _triangle(w, D, M, lam)
    if v < _INF:
        if not cuspless or lam[0] * s[0] + lam[1] * s[1] + lam[2] * s[2] <= 1e-14:
            return v
    best = _INF
    for e in range(3):
        a, b = e, (e + 1) % 3
        r = _edge_split(w[a], w[b], D[a], D[b], s[a], s[b], M, cuspless, pts[2])
        if r < best:
            best = r
    if cuspless:
        # the cut u1 = 0 through the triangle
        n = 0
        for e in range(3):
            a, b = e, (e + 1) % 3
            if (s[a] < 0 < s[b]) or (s[b] < 0 < s[a]):
                if n < 2:
                    t = s[a] / (s[a] - s[b])
                    _lerp(D[a], D[b], t, pts[n])
                    wp[n] = (1 - t) * w[a] + t * w[b]
                    n += 1
        if n == 2:
            r = _segment(wp[0], wp[1], pts[0], pts[1], M)
            if r < best:
                best = r
    return best


@nb.njit(cache=True)
def _node_metric(preset, x, th, xi, eps, c, Mf, om1):
    ct, st = math.cos(th), math.sin(th)
    if preset == 1:
        cx, sx = 1.0, 0.0
    else:
        cx, sx = math.cos(x), math.sin(x)
    c2 = c * c
    d1 = c2 * xi * xi
    d2 = c2
    d3 = d1 / (eps * eps)
    # coframe rows: (ct, -cx st, 0), (0, sx, 1), (st, cx ct, 0)
    a0, a1 = ct, -cx * st
    b1, b2 = sx, 1.0
    e0, e1 = st, cx * ct
    Mf[0, 0] = d1 * a0 * a0 + d3 * e0 * e0
    Mf[0, 1] = d1 * a0 * a1 + d3 * e0 * e1
    Mf[0, 2] = 0.0
    Mf[1, 1] = d1 * a1 * a1 + d2 * b1 * b1 + d3 * e1 * e1
    Mf[1, 2] = d2 * b1 * b2
    Mf[2, 2] = d2 * b2 * b2
    Mf[1, 0] = Mf[0, 1]
    Mf[2, 0] = Mf[0, 2]
    Mf[2, 1] = Mf[1, 2]
    om1[0], om1[1], om1[2] = a0, a1, 0.0


@nb.njit(cache=True)
def _wrap(v, n, per):
    if per:
        return v % n
    if v < 0 or v >= n:
        return -1
    return v


@nb.njit(cache=True)
def _solve_kernel(W, cost2d, excluded, preset, xs, ts, spacing, periodic,
                  xi, eps, cuspless, verts, triangles, incidence, rptr, rdata,
                  lbcol, seeds, seed_vals, stop_value, max_pops, tol):
    nx, ny, nt = W.shape
    heap = [(0.0, 0)]
    heap.pop()
    for s in range(seeds.shape[0]):
        i, j, k = seeds[s, 0], seeds[s, 1], seeds[s, 2]
        W[i, j, k] = seed_vals[s]
        heapq.heappush(heap, (seed_vals[s], (i * ny + j) * nt + k))
    Mf = np.empty((3, 3))
    om1 = np.empty(3)
    D = np.empty((3, 3))
    wv = np.empty(3)
    sv = np.empty(3)
    lam = np.empty(3)
    pts = np.empty((3, 3))
    wp = np.empty(2)
    pops = 0
    reopen = 0
    popped = np.zeros(W.shape, dtype=np.bool_)
    max_popped = 0.0
    violation = 0.0
    while len(heap) > 0:
        val, flat = heapq.heappop(heap)
        i = flat // (ny * nt)
        j = (flat // nt) % ny
        k = flat % nt
        if val > W[i, j, k]:
            continue  # stale entry
        if val > stop_value:
            break
        pops += 1
        if pops > max_pops:
            break
        if popped[i, j, k]:
            reopen += 1
        popped[i, j, k] = True
        if val < max_popped:
            if max_popped - val > violation:
                violation = max_popped - val
        else:
            max_popped = val
        # update each neighbour q = p - d using triangles of q containing p
        slot = i * nt + k
        for rr_ in range(rptr[slot], rptr[slot + 1]):
            o = rdata[rr_, 3]
            qi = _wrap(i - rdata[rr_, 0], nx, periodic[0])
            qj = _wrap(j - rdata[rr_, 1], ny, periodic[1])
            qk = _wrap(k - rdata[rr_, 2], nt, periodic[2])
            if qi < 0 or qj < 0 or qk < 0:
                continue
            if excluded[qi, qj, qk]:
                continue
            cq = cost2d[qi, qj]
            best = W[qi, qj, qk]
            # every step onto the stencil surface is at least this long
            lb = cq * lbcol[qi, qk]
            _node_metric(preset, xs[qi], ts[qk], xi, eps, cq, Mf, om1)
            for tt in range(incidence.shape[1]):
                t = incidence[o, tt]
                if t < 0:
                    break
                nfin = 0
                wmin = _INF
                for v in range(3):
                    ov = triangles[t, v]
                    o0 = verts[qi, qk, ov, 0]
                    o1 = verts[qi, qk, ov, 1]
                    o2 = verts[qi, qk, ov, 2]
                    a = _wrap(qi + o0, nx, periodic[0])
                    b = _wrap(qj + o1, ny, periodic[1])
                    cc = _wrap(qk + o2, nt, periodic[2])
                    if a < 0 or b < 0 or cc < 0:
                        wv[v] = _INF
                    else:
                        wv[v] = W[a, b, cc]
                    if wv[v] < _INF:
                        nfin += 1
                    if wv[v] < wmin:
                        wmin = wv[v]
                    D[v, 0] = o0 * spacing[0]
                    D[v, 1] = o1 * spacing[1]
                    D[v, 2] = o2 * spacing[2]
                    # > 0 means the step into q moves backwards
                    sv[v] = om1[0] * D[v, 0] + om1[1] * D[v, 1]
                if wmin + lb >= best:
                    continue
                if nfin == 3:
                    r = _triangle_min(wv, D, sv, Mf, cuspless, lam, pts, wp)
                else:
                    r = _INF
                    for e in range(3):
                        a2, b2 = e, (e + 1) % 3
                        if wv[a2] < _INF and wv[b2] < _INF:
                            rr = _edge_split(wv[a2], wv[b2], D[a2], D[b2], sv[a2], sv[b2],
                                             Mf, cuspless, pts[2])
                        elif wv[a2] < _INF:
                            rr = _INF if (cuspless and sv[a2] > 0) else _vertex(wv[a2], D[a2], Mf)
                        else:
                            continue
                        if rr < r:
                            r = rr
                if r < best:
                    best = r
            cur = W[qi, qj, qk]
            if best < cur * (1.0 - 1e-13) - 1e-15:
                W[qi, qj, qk] = best
                if popped[qi, qj, qk] and cur - best < tol:
                    continue  # negligible correction of a settled node
                heapq.heappush(heap, (best, (qi * ny + qj) * nt + qk))
    return pops, reopen, violation


@nb.njit(cache=True)
def _surface_bound(preset, xs, ts, spacing, xi, eps, verts, triangles, valid_x):
    """Smallest unit-cost metric length of a step onto each column's stencil."""
    nx, nt = xs.shape[0], ts.shape[0]
    out = np.zeros((nx, nt))
    Mf = np.empty((3, 3))
    om1 = np.empty(3)
    D = np.empty((3, 3))
    w = np.zeros(3)
    sv = np.zeros(3)
    lam = np.empty(3)
    pts = np.empty((3, 3))
    wp = np.empty(2)
    for i in range(nx):
        if not valid_x[i]:
            continue
        for k in range(nt):
            _node_metric(preset, xs[i], ts[k], xi, eps, 1.0, Mf, om1)
            best = _INF
            for t in range(triangles.shape[0]):
                for v in range(3):
                    for r in range(3):
                        D[v, r] = verts[i, k, triangles[t, v], r] * spacing[r]
                r = _triangle_min(w, D, sv, Mf, False, lam, pts, wp)
                if r < best:
                    best = r
            out[i, k] = best * (1.0 - 1e-9)
    return out


@dataclass
class Stencils:
    """Per-column stencil vertices with the reverse lookup and prune bound."""

    verts: np.ndarray
    triangles: np.ndarray
    incidence: np.ndarray
    rptr: np.ndarray
    rdata: np.ndarray
    bound: np.ndarray


_STENCIL_CACHE: dict = {}


def _valid_columns(grid: Grid3D) -> np.ndarray:
    xs = grid.coords(0)
    if grid.preset == "so3":
        return np.abs(np.cos(xs)) > 1e-9
    return np.ones(len(xs), dtype=np.bool_)


def stencils(spec: MetricSpec, grid: Grid3D, scheme: str = "hybrid") -> Stencils:
    """Stencils for every (x, theta) column, cached per (spec, grid, scheme).

    ``lbr`` adapts a 14-vertex, 24-triangle stencil to the local metric via an
    obtuse superbase, which makes the update causal; ``sl26`` uses the fixed
    cube surface and ``hybrid`` the union of both.
    """
    key = (spec.xi, spec.eps, spec.preset, grid, scheme)
    if key in _STENCIL_CACHE:
        return _STENCIL_CACHE[key]
    xs, ts = grid.coords(0), grid.coords(2)
    valid = _valid_columns(grid)
    h = np.array(grid.spacing)
    pre = PRESETS[grid.preset]
    if scheme == "lbr":
        verts = _lattice.build_lbr(pre, xs, ts, h, float(spec.xi), float(spec.eps), valid)
        tris, inc = LBR_TRIANGLES, LBR_INCIDENCE
    elif scheme == "hybrid":
        lbr = _lattice.build_lbr(pre, xs, ts, h, float(spec.xi), float(spec.eps), valid)
        cube = np.broadcast_to(OFFSETS, (len(xs), len(ts)) + OFFSETS.shape)
        verts = np.ascontiguousarray(np.concatenate([lbr, cube], axis=2))
        tris = np.concatenate([LBR_TRIANGLES, TRIANGLES + 14])
        inc = _incidence(14 + len(OFFSETS), tris)
    elif scheme in ("sl98", "hybrid98"):
        cube = np.broadcast_to(OFFSETS2, (len(xs), len(ts)) + OFFSETS2.shape)
        if scheme == "sl98":
            verts = np.ascontiguousarray(cube)
            tris = TRIANGLES2
        else:
            lbr = _lattice.build_lbr(pre, xs, ts, h, float(spec.xi), float(spec.eps), valid)
            verts = np.ascontiguousarray(np.concatenate([lbr, cube], axis=2))
            tris = np.concatenate([LBR_TRIANGLES, TRIANGLES2 + 14])
        inc = _incidence(verts.shape[2], tris)
    elif scheme == "sl26":
        verts = np.ascontiguousarray(np.broadcast_to(OFFSETS, (len(xs), len(ts)) + OFFSETS.shape))
        tris, inc = TRIANGLES, INCIDENCE
    else:
        raise ConfigError(f"unknown scheme {scheme!r}")
    rptr, rdata = _lattice.reverse_vertices(verts, bool(grid.periodic[2]), valid)
    bound = _surface_bound(pre, xs, ts, h, float(spec.xi), float(spec.eps), verts, tris, valid)
    out = Stencils(verts, tris, inc, rptr, rdata, bound)
    if len(_STENCIL_CACHE) > 8:
        _STENCIL_CACHE.clear()
    _STENCIL_CACHE[key] = out
    return out


def _prepare_cost(cost, grid: Grid3D) -> np.ndarray:
    nx, ny, _ = grid.dims
    if cost is None:
        c = np.ones((nx, ny))
    else:
        c = np.asarray(cost, dtype=float)
        if c.ndim == 3:
            if not np.all(c == c[:, :, :1]):
                raise ConfigError("cost must be constant along theta")
            c = c[:, :, 0]
        if np.isscalar(cost) or c.ndim == 0:
            c = np.full((nx, ny), float(cost))
        if c.shape != (nx, ny):
            raise ConfigError(f"cost shape {c.shape} != {(nx, ny)}")
    if not np.all(np.isfinite(c)) or np.any(c <= 0):
        raise ConfigError("cost must be finite and positive")
    return np.ascontiguousarray(c)


def _source_box(spec: MetricSpec, grid: Grid3D, seed, c2, factor: int, half: int,
                scheme: str = "hybrid"):
    """Values near the seed from a solve on a finer local box.

    Returns (coarse indices, values) of coarse nodes that coincide with fine
    nodes and whose fine value lies below the smallest value on the box
    boundary, so their optimal paths never leave the box.  Returns None if
    the box would reach a pole.
    """
    h = np.array(grid.spacing) / factor
    centre = grid.node(seed)
    origin = centre - half * h
    if grid.preset == "so3" and abs(centre[0]) + (half + 1) * h[0] >= math.pi / 2:
        return None
    n = 2 * half + 1
    fine = Grid3D((n, n, n), tuple(h), tuple(origin), (False, False, False), grid.preset)
    if np.all(c2 == c2.flat[0]):
        cf = np.full((n, n), c2.flat[0])
    else:
        from scipy import ndimage

        xs = (origin[0] + h[0] * np.arange(n) - grid.origin[0]) / grid.spacing[0]
        ys = (origin[1] + h[1] * np.arange(n) - grid.origin[1]) / grid.spacing[1]
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        mode = "grid-wrap" if grid.periodic[1] else "nearest"
        cf = ndimage.map_coordinates(c2, [X, Y], order=1, mode=mode)
    fd = solve(spec, fine, seed=(half, half, half), cost=cf, refine_source=False, scheme=scheme)
    Wf = fd.W
    faces = np.concatenate([Wf[[0, -1]].ravel(), Wf[:, [0, -1]].ravel(), Wf[:, :, [0, -1]].ravel()])
    r_in = float(np.min(faces))
    if not np.isfinite(r_in):
        return None
    sub = Wf[::factor, ::factor, ::factor]
    m = half // factor
    a, b, c = np.nonzero(sub < r_in)
    idx = np.stack([a - m + seed[0], b - m + seed[1], c - m + seed[2]], axis=1)
    for ax in range(3):
        if grid.periodic[ax]:
            idx[:, ax] %= grid.dims[ax]
    keep = np.all((idx >= 0) & (idx < np.array(grid.dims)), axis=1)
    return idx[keep], sub[a, b, c][keep], r_in


def solve(spec: MetricSpec, grid: Grid3D, seed=None, cost=None,
          stop_value: float = np.inf, max_pops: int | None = None,
          tol: float | None = None, refine_source: bool = False,
          scheme: str = "hybrid", source_factor: int = SOURCE_FACTOR,
          source_half: int = SOURCE_HALF) -> DistanceGrid:
    """Distance from ``seed`` (index triple, default centre) for ``spec``.

    ``stop_value`` ends the propagation once the smallest open value exceeds
    it; nodes beyond keep their tentative (upper-bound) values or +inf.

    With ``refine_source`` the singular neighbourhood of the seed is first
    solved on a box with spacing divided by ``source_factor`` and
    ``source_half`` fine nodes on each side of the seed; coarse nodes whose
    value is settled there are frozen before the main propagation.
    """
    if spec.preset != grid.preset:
        raise ConfigError("metric and grid presets differ")
    nx, ny, nt = grid.dims
    if seed is None:
        seed = (nx // 2, ny // 2, nt // 2)
    seed = tuple(int(v) for v in seed)
    c2 = _prepare_cost(cost, grid)
    W = np.full(grid.dims, np.inf)
    excl = np.zeros(grid.dims, dtype=np.bool_)
    xs = grid.coords(0)
    if grid.preset == "so3":
        excl[np.abs(np.cos(xs)) < 1e-9] = True
    if excl[seed]:
        raise ConfigError("seed on an excluded node")
    seeds = np.array([seed], dtype=np.int64)
    vals = np.zeros(1)
    r_in = 0.0
    if refine_source:
        box = _source_box(spec, grid, seed, c2, source_factor, source_half, scheme)
        if box is not None:
            seeds, vals, r_in = box
            # frozen: never updated by the coarse propagation
            excl[seeds[:, 0], seeds[:, 1], seeds[:, 2]] = True
    seeds = np.ascontiguousarray(seeds, dtype=np.int64)
    vals = np.ascontiguousarray(vals, dtype=float)
    sten = stencils(spec, grid, scheme)
    pops, reopen, viol = _solve_kernel(
        W, c2, excl, PRESETS[grid.preset], xs, grid.coords(2),
        np.array(grid.spacing), np.array(grid.periodic), float(spec.xi), float(spec.eps),
        bool(spec.cuspless), sten.verts, sten.triangles, sten.incidence, sten.rptr,
        sten.rdata, sten.bound, seeds, vals, float(stop_value),
        int(max_pops if max_pops is not None else 50 * W.size),
        float(REOPEN_TOL * grid.min_cell if tol is None else tol),
    )
    stats = {"scheme": scheme, "pops": int(pops), "reopened": int(reopen),
             "max_causality_violation": float(viol),
             "stop_value": float(stop_value), "source_nodes": int(len(seeds)),
             "source_radius": float(r_in)}
    return DistanceGrid(W, grid, spec, c2, seed, stats)


def solve_cuspless(spec: MetricSpec, grid: Grid3D, **kw) -> DistanceGrid:
    spec = MetricSpec(spec.xi, spec.eps, spec.preset, True)
    return solve(spec, grid, **kw)


def se2_solve(spec: MetricSpec, grid: Grid3D, **kw) -> DistanceGrid:
    if spec.preset != "se2":
        spec = MetricSpec(spec.xi, spec.eps, "se2", spec.cuspless)
    return solve(spec, grid, **kw)


# --------------------------------------------------------------------------
# interpolation


@nb.njit(cache=True)
def _cr_weights(t, w, dw):
    t2, t3 = t * t, t * t * t
    w[0] = -0.5 * t3 + t2 - 0.5 * t
    w[1] = 1.5 * t3 - 2.5 * t2 + 1.0
    w[2] = -1.5 * t3 + 2.0 * t2 + 0.5 * t
    w[3] = 0.5 * t3 - 0.5 * t2
    dw[0] = -1.5 * t2 + 2.0 * t - 0.5
    dw[1] = 4.5 * t2 - 5.0 * t
    dw[2] = -4.5 * t2 + 4.0 * t + 0.5
    dw[3] = 1.5 * t2 - t


@nb.njit(cache=True)
def _hermite(W, origin, spacing, periodic, p, out):
    """Tricubic Catmull-Rom interpolation: value and chart gradient.

    Returns True if a clamped (one-sided) stencil was needed.
    """
    dims = W.shape
    idx = np.empty((3, 4), dtype=np.int64)
    wts = np.empty((3, 4))
    dws = np.empty((3, 4))
    clamped = False
    for a in range(3):
        u = (p[a] - origin[a]) / spacing[a]
        i0 = int(math.floor(u))
        t = u - i0
        _cr_weights(t, wts[a], dws[a])
        for m in range(4):
            ii = i0 - 1 + m
            if periodic[a]:
                ii %= dims[a]
            elif ii < 0:
                ii = 0
                clamped = True
            elif ii >= dims[a]:
                ii = dims[a] - 1
                clamped = True
            idx[a, m] = ii
    v = 0.0
    g0 = 0.0
    g1 = 0.0
    g2 = 0.0
    for l in range(4):
        for m in range(4):
            for n in range(4):
                f = W[idx[0, l], idx[1, m], idx[2, n]]
                v += wts[0, l] * wts[1, m] * wts[2, n] * f
                g0 += dws[0, l] * wts[1, m] * wts[2, n] * f
                g1 += wts[0, l] * dws[1, m] * wts[2, n] * f
                g2 += wts[0, l] * wts[1, m] * dws[2, n] * f
    out[0] = v
    out[1] = g0 / spacing[0]
    out[2] = g1 / spacing[1]
    out[3] = g2 / spacing[2]
    return clamped


class Interpolant:
    """Tricubic Hermite interpolant of a DistanceGrid.

    Unreached (+inf) nodes are replaced by a finite ceiling so the stencil
    stays defined; values read there are meaningless and flagged.
    """

    def __init__(self, dist: DistanceGrid):
        self.dist = dist
        W = dist.W.copy()
        fin = np.isfinite(W)
        top = W[fin].max() if fin.any() else 1.0
        self.ceiling = 1.5 * top + 1.0
        W[~fin] = self.ceiling
        self.W = np.ascontiguousarray(W)
        g = dist.grid
        self.origin = np.array(g.origin)
        self.spacing = np.array(g.spacing)
        self.periodic = np.array(g.periodic)
        self._out = np.empty(4)

    def chart(self, p):
        """(W, dW/dx, dW/dy, dW/dtheta, clamped)."""
        clamped = _hermite(self.W, self.origin, self.spacing, self.periodic,
                           np.asarray(p, dtype=float), self._out)
        return self._out[0], self._out[1:].copy(), bool(clamped)

    def __call__(self, p):
        return sample_W(self, p)


def sample_W(interp: "Interpolant | DistanceGrid", p):
    """W and its frame derivatives (X1 W, X2 W, X3 W) at chart point ``p``.

    Returns ``(value, (X1W, X2W, X3W), flagged)``; ``flagged`` marks a
    one-sided stencil near the x boundary or a read of unreached nodes.
    """
    if isinstance(interp, DistanceGrid):
        interp = Interpolant(interp)
    v, g, clamped = interp.chart(p)
    preset = interp.dist.grid.preset
    x = 0.0 if preset == "se2" else p[0]
    fr = lie_so3.frame_at(x, p[2])
    flagged = clamped or v >= interp.ceiling * 0.5
    return float(v), fr @ g, flagged


# --------------------------------------------------------------------------
# I/O


def write_grid(path, dist: DistanceGrid, extra: dict | None = None):
    g, m = dist.grid, dist.metric
    hdr = _MAGIC + struct.pack("<IB3I3d2d", _VERSION, PRESETS[g.preset], *g.dims,
                               *g.spacing, m.xi, m.eps)
    with open(path, "wb") as f:
        f.write(hdr)
        f.write(np.asarray(dist.W, dtype="<f8").ravel(order="F").tobytes())
    meta = {
        "grid": asdict(g),
        "metric": asdict(m),
        "seed": list(dist.seed),
        "stats": dist.stats,
        "cost_uniform": bool(np.all(dist.cost == dist.cost.flat[0])),
        "cost_value": float(dist.cost.flat[0]),
    }
    if extra:
        meta.update(extra)
    with open(str(path) + ".json", "w") as f:
        json.dump(meta, f, indent=2)
    if not meta["cost_uniform"]:
        np.save(str(path) + ".cost.npy", dist.cost)


def read_grid(path) -> DistanceGrid:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _MAGIC:
        raise ConfigError("not an SRFM grid file")
    fmt = "<IB3I3d2d"
    n = struct.calcsize(fmt)
    ver, preset, nx, ny, nt, dx, dy, dt, xi, eps = struct.unpack(fmt, raw[4 : 4 + n])
    if ver != _VERSION:
        raise ConfigError(f"unsupported grid version {ver}")
    W = np.frombuffer(raw[4 + n :], dtype="<f8").reshape((nx, ny, nt), order="F").copy()
    with open(str(path) + ".json") as f:
        meta = json.load(f)
    gd = meta["grid"]
    grid = Grid3D(tuple(gd["dims"]), tuple(gd["spacing"]), tuple(gd["origin"]),
                  tuple(gd["periodic"]), gd["preset"])
    md = meta["metric"]
    spec = MetricSpec(md["xi"], md["eps"], md["preset"], md["cuspless"])
    if meta.get("cost_uniform", True):
        cost = np.full((nx, ny), float(meta.get("cost_value", 1.0)))
    else:
        cost = np.load(str(path) + ".cost.npy")
    return DistanceGrid(W, grid, spec, cost, tuple(meta["seed"]), meta.get("stats", {}))
