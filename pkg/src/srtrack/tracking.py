"""Backtracking of optimal curves from a distance grid, and curvature channels.

The backward curve solves gamma_b' = -(u1 X1 + u2 X2) in normalized time
tau in [0, 1], with controls

    (u1, u2) = W(g1) / C^2 * (X1 W / xi^2, X2 W)

evaluated along the curve.  Its SR speed is W(g1), so tau = 1 is the seed
when the distance map is exact.  Reversing the samples gives the forward
geodesic from the seed to g1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d

from . import lie_so3, optics
from .eikonal import DistanceGrid, Interpolant, sample_W

KAPPA_SENTINEL = 1e9

# flag bits
FLAG_INTERP = 1  # one-sided interpolation stencil or unreached nodes read
FLAG_CUSP = 2  # X1 W <= 0: curvature undefined, sentinel written
FLAG_VIEW = 4  # outside the camera field of view
FLAG_SEED = 8  # track ended by a stall in the numerical neighbourhood of the seed

NEAR_SEED = 3.0  # cells; W is discretization-dominated this close to the seed

TRACK_COLUMNS = ["tau", "x", "y", "theta", "X", "Y", "n1", "n2", "n3", "u1", "u2",
                 "kappa_g", "kappa_planar", "W", "flags"]


class UnreachableError(ValueError):
    """Endpoint outside the propagated part of the distance map."""


class StallError(RuntimeError):
    """Descent stopped away from the seed (W is not differentiable there)."""

    def __init__(self, msg, position=None):
        super().__init__(msg)
        self.position = position


@dataclass
class Track:
    """Backtracked samples, ordered from the endpoint g1 towards the seed.

    ``chart`` holds (x, y, theta) for SO(3) and (X, Y, Theta) for SE(2).
    ``controls`` are the forward controls per unit SR length, so that
    C * sqrt(xi^2 u1^2 + u2^2) is close to 1.  ``grad`` holds the frame
    derivatives (X1 W, X2 W, X3 W).
    """

    tau: np.ndarray
    chart: np.ndarray
    controls: np.ndarray
    grad: np.ndarray
    W: np.ndarray
    cost: np.ndarray
    xi: float
    preset: str = "so3"
    flags: np.ndarray | None = None
    kappa_g: np.ndarray | None = None
    kappa_planar: np.ndarray | None = None

    def __post_init__(self):
        if self.flags is None:
            self.flags = np.zeros(len(self.tau), dtype=np.int64)

    def __len__(self):
        return len(self.tau)

    def forward(self) -> "Track":
        """Samples ordered from the seed to g1."""

        def rev(a):
            return None if a is None else a[::-1].copy()

        return Track(1.0 - self.tau[::-1], rev(self.chart), rev(self.controls), rev(self.grad),
                     rev(self.W), rev(self.cost), self.xi, self.preset, rev(self.flags),
                     rev(self.kappa_g), rev(self.kappa_planar))

    def spherical(self) -> np.ndarray:
        """(x, y) on the image sphere; SE(2) tracks are unprojected."""
        if self.preset == "so3":
            return self.chart[:, :2].copy()
        x, y = optics.unproject_to_sphere(self.chart[:, 0], self.chart[:, 1])
        return np.stack([x, y], axis=1)

    def sphere_points(self) -> np.ndarray:
        xy = self.spherical()
        return lie_so3.sphere_point(xy[:, 0], xy[:, 1])

    def sr_length(self) -> float:
        """Trapezoidal SR length int C sqrt(xi^2 u1^2 + u2^2) dt from the samples."""
        s = self.W[0]
        speed = self.cost * np.hypot(self.xi * self.controls[:, 0], self.controls[:, 1]) * s
        return float(np.trapezoid(speed, self.tau))


# --------------------------------------------------------------------------
# descent


def _cost_at(dist: DistanceGrid, p) -> float:
    """Bilinear interpolation of the (x, y) cost field."""
    g = dist.grid
    c = dist.cost
    if np.all(c == c.flat[0]):
        return float(c.flat[0])
    idx = []
    for a in range(2):
        u = (p[a] - g.origin[a]) / g.spacing[a]
        i0 = math.floor(u)
        t = u - i0
        n = g.dims[a]
        if g.periodic[a]:
            i0, i1 = i0 % n, (i0 + 1) % n
        else:
            i0 = min(max(i0, 0), n - 1)
            i1 = min(i0 + 1, n - 1)
            t = min(max(t, 0.0), 1.0)
        idx.append((i0, i1, t))
    (a0, a1, ta), (b0, b1, tb) = idx
    return float((1 - ta) * ((1 - tb) * c[a0, b0] + tb * c[a0, b1])
                 + ta * ((1 - tb) * c[a1, b0] + tb * c[a1, b1]))


def _frame(preset: str, p) -> np.ndarray:
    return lie_so3.frame_at(0.0 if preset == "se2" else p[0], p[2])


class _Field:
    """Backward velocity field of the descent."""

    def __init__(self, dist: DistanceGrid, w1: float, cuspless: bool, full: bool):
        self.dist = dist
        self.interp = Interpolant(dist)
        self.w1 = w1
        self.cuspless = cuspless
        self.full = full
        self.xi = dist.metric.xi
        self.eps = dist.metric.eps
        self.preset = dist.grid.preset

    def controls(self, p):
        v, d, flag = sample_W(self.interp, p)
        c = _cost_at(self.dist, p)
        k = self.w1 / (c * c)
        a1 = max(d[0], 0.0) if self.cuspless else d[0]
        u = np.array([k * a1 / self.xi**2, k * d[1],
                      k * self.eps**2 * d[2] / self.xi**2 if self.full else 0.0])
        return u, v, d, c, flag

    def velocity(self, p):
        u = self.controls(p)[0]
        return -(u @ _frame(self.preset, p))


def _index_distance(grid, p, seed) -> float:
    """Max-norm distance in cells between a chart point and a node."""
    out = 0.0
    for a in range(3):
        d = (p[a] - grid.origin[a]) / grid.spacing[a] - seed[a]
        if grid.periodic[a]:
            n = grid.dims[a]
            d = (d + n / 2) % n - n / 2
        out = max(out, abs(d))
    return out


def backtrack(dist: DistanceGrid, g1, cuspless: bool | None = None, full: bool = False,
              step: float | None = None, tau_max: float = 2.0) -> Track:
    """Descend from chart point ``g1`` to the seed of ``dist``.

    ``cuspless`` defaults to the metric's flag and replaces X1 W by
    max(0, X1 W).  ``full`` adds the X3 component of the eps-metric gradient,
    which is what an isotropic (eps = 1) run needs.
    """
    if cuspless is None:
        cuspless = dist.metric.cuspless
    grid = dist.grid
    p = np.array(g1, dtype=float)
    field = _Field(dist, 1.0, cuspless, full)
    w1, _, _ = sample_W(field.interp, p)
    if not np.isfinite(w1) or w1 >= field.interp.ceiling * 0.5:
        raise UnreachableError("endpoint not reached by the distance map")
    if _index_distance(grid, p, dist.seed) <= 1.0:
        raise ValueError("endpoint within one cell of the seed")
    field.w1 = w1
    h = grid.min_cell / (4.0 * w1) if step is None else step
    taus, pts, us, grads, ws, cs, flags = [], [], [], [], [], [], []

    def record(tau, q):
        u, v, d, c, flag = field.controls(q)
        taus.append(tau)
        pts.append(q.copy())
        us.append(u[:2] / w1)
        grads.append(d)
        ws.append(v)
        cs.append(c)
        flags.append(FLAG_INTERP if flag else 0)
        return u

    tau = 0.0
    u = record(tau, p)
    while True:
        if np.hypot(u[0], u[1]) < 1e-9:
            if _index_distance(grid, p, dist.seed) > NEAR_SEED:
                raise StallError(f"descent stalled at {p.tolist()}", p.copy())
            flags[-1] |= FLAG_SEED
            break
        k1 = field.velocity(p)
        k2 = field.velocity(p + 0.5 * h * k1)
        k3 = field.velocity(p + 0.5 * h * k2)
        k4 = field.velocity(p + h * k3)
        p = p + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        for a in range(3):
            if grid.periodic[a]:
                p[a] = lie_so3.wrap_angle(p[a])
        tau += h
        u = record(tau, p)
        if _index_distance(grid, p, dist.seed) <= 1.0:
            break
        if tau > tau_max:
            raise StallError(f"seed not reached by tau = {tau_max}", p.copy())
    tr = Track(np.array(taus), np.array(pts), np.array(us), np.array(grads), np.array(ws),
               np.array(cs), dist.metric.xi, grid.preset, np.array(flags, dtype=np.int64))
    tr.kappa_g = geodesic_curvature(dist, tr)
    return tr


def backtrack_cuspless(dist: DistanceGrid, g1, full: bool = True, **kw) -> Track:
    """Cuspless descent.

    The forward-only eps-map has horizontal local minima wherever the optimal
    path uses a little sideways motion, so the X3 term is kept by default.
    """
    return backtrack(dist, g1, cuspless=True, full=full, **kw)


def integrate_controls(track: Track, start) -> np.ndarray:
    """Re-integrate the forward curve from ``start`` with the recorded controls.

    Uses the midpoint rule on the forward-ordered samples; returns the chart
    points.  Reaching g1 closely checks that the track is horizontal and
    consistent with its controls.
    """
    fw = track.forward()
    p = np.array(start, dtype=float)
    out = [p.copy()]
    scale = track.W[0]
    for i in range(len(fw) - 1):
        dt = (fw.tau[i + 1] - fw.tau[i]) * scale
        u = 0.5 * (fw.controls[i] + fw.controls[i + 1])
        pm = p + 0.5 * dt * (u[0] * _frame(track.preset, p)[0] + u[1] * _frame(track.preset, p)[1])
        fr = _frame(track.preset, pm)
        p = p + dt * (u[0] * fr[0] + u[1] * fr[1])
        out.append(p.copy())
    return np.array(out)


# --------------------------------------------------------------------------
# curvature


def geodesic_curvature(dist: DistanceGrid, track: Track) -> np.ndarray:
    """kappa_g = xi^2 X2 W / X1 W per sample; sentinel where X1 W <= 0."""
    xi = dist.metric.xi
    g = track.grad
    out = np.empty(len(track))
    for i in range(len(track)):
        if g[i, 0] <= 0:
            out[i] = math.copysign(KAPPA_SENTINEL, g[i, 1] if g[i, 1] != 0 else 1.0)
            track.flags[i] |= FLAG_CUSP
        else:
            out[i] = xi**2 * g[i, 1] / g[i, 0]
    return out


def sphere_curvature(n: np.ndarray) -> np.ndarray:
    """Finite-difference geodesic curvature of a curve n(s) on the unit sphere.

    Uses det(n, n', n'') / |n'|^3, which has the sign of u2 / u1 for curves
    in the chart convention.
    """
    d1 = np.gradient(n, axis=0)
    d2 = np.gradient(d1, axis=0)
    num = np.einsum("ij,ij->i", n, np.cross(d1, d2))
    return num / np.linalg.norm(d1, axis=1) ** 3


def _plane_curvature(P: np.ndarray, smooth: float) -> np.ndarray:
    """Signed curvature of a planar polyline, arc-length resampled."""
    seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 0:
        return np.zeros(len(P))
    su = np.linspace(0.0, s[-1], len(P))
    X = np.interp(su, s, P[:, 0])
    Y = np.interp(su, s, P[:, 1])
    if smooth > 0:
        X = gaussian_filter1d(X, smooth, mode="nearest")
        Y = gaussian_filter1d(Y, smooth, mode="nearest")
    ds = su[1] - su[0]
    x1, y1 = np.gradient(X, ds), np.gradient(Y, ds)
    x2, y2 = np.gradient(x1, ds), np.gradient(y1, ds)
    k = (x1 * y2 - y1 * x2) / np.maximum(np.hypot(x1, y1), 1e-300) ** 3
    # chart-aligned headings run clockwise, (cos T, -sin T)
    return np.interp(s, su, -k)


def planar_curvature(track: Track, eye: optics.EyeModel = optics.EyeModel(),
                     smooth: float = 2.0) -> np.ndarray:
    """Curvature of the planar projection of the track, per sample.

    SO(3) tracks are pushed through the camera projection first; SE(2) tracks
    are already planar.  Samples out of view are flagged and the curvature
    there is computed from the clipped projection.
    """
    if track.preset == "se2":
        P = track.chart[:, :2]
    else:
        x, y = track.chart[:, 0], track.chart[:, 1]
        den = eye.a + np.cos(x) * np.cos(y)
        bad = den <= 0
        if np.any(bad):
            track.flags[bad] |= FLAG_VIEW
        k = eye.eta * eye.ac / np.where(bad, np.nan, den)
        P = np.stack([k * np.sin(x), k * np.cos(x) * np.sin(y)], axis=1)
        if np.any(bad):
            good = ~bad
            for a in range(2):
                P[bad, a] = np.interp(np.flatnonzero(bad), np.flatnonzero(good), P[good, a])
        lim = eye.x_max
        out = (np.abs(P[:, 0]) > lim) | (np.abs(P[:, 1]) > lim)
        track.flags[out] |= FLAG_VIEW
    kp = _plane_curvature(P, smooth)
    track.kappa_planar = kp
    return kp


# --------------------------------------------------------------------------
# output


def write_track_csv(path, track: Track, eye: optics.EyeModel = optics.EyeModel()):
    if track.kappa_planar is None:
        planar_curvature(track, eye)
    if track.preset == "so3":
        xy = track.chart[:, :2]
        den = eye.a + np.cos(xy[:, 0]) * np.cos(xy[:, 1])
        k = eye.eta * eye.ac / np.where(den > 0, den, np.inf)
        XY = np.stack([k * np.sin(xy[:, 0]), k * np.cos(xy[:, 0]) * np.sin(xy[:, 1])], axis=1)
    else:
        XY = track.chart[:, :2]
        xy = track.spherical()
    n = lie_so3.sphere_point(xy[:, 0], xy[:, 1])
    kg = np.nan_to_num(track.kappa_g, nan=KAPPA_SENTINEL, posinf=KAPPA_SENTINEL,
                       neginf=-KAPPA_SENTINEL)
    kp = np.nan_to_num(track.kappa_planar, nan=KAPPA_SENTINEL, posinf=KAPPA_SENTINEL,
                       neginf=-KAPPA_SENTINEL)
    with open(path, "w", newline="") as f:
        f.write(f"# xi={track.xi} preset={track.preset} W={track.W[0]:.12g}\n")
        w = csv.writer(f)
        w.writerow(TRACK_COLUMNS)
        for i in range(len(track)):
            row = [track.tau[i], *track.chart[i], *XY[i], *n[i], *track.controls[i],
                   kg[i], kp[i], track.W[i]]
            w.writerow([f"{v:.12g}" for v in row] + [int(track.flags[i])])
