"""Acceptance checks at desk scale.

Each ``criterion_N`` returns a :class:`Result`; ``run`` evaluates a selection.
The heavy distance maps are cached per process so that criteria sharing a
map (6 and 11) solve it once.
"""

from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.spatial import cKDTree

from . import cost as K
from . import eikonal as E
from . import geodesics as G
from . import lie_so3, optics
from . import tracking as T


@dataclass
class Result:
    number: int
    title: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    limits: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        parts = ", ".join(f"{k}={_fmt(v)}" for k, v in self.metrics.items())
        return f"criterion {self.number:2d} {verdict}  {self.title}: {parts} [{self.limits}] ({self.seconds:.1f} s)"

    def as_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "passed": bool(self.passed),
                "metrics": {k: _plain(v) for k, v in self.metrics.items()},
                "limits": self.limits, "seconds": round(self.seconds, 3)}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _timed(fn):
    @functools.wraps(fn)
    def wrapper(*a, **kw):
        t0 = time.perf_counter()
        r = fn(*a, **kw)
        r.seconds = time.perf_counter() - t0
        return r

    return wrapper


# --------------------------------------------------------------------------
# 1-5: optics and closed forms


@_timed
def criterion_1() -> Result:
    eye = optics.EyeModel(a=13 / 21, r_eye=1.0, psi_max=math.pi / 8)
    ym = eye.y_max
    j0 = float(optics.local_jacobian(0.0, 0.0, eye))
    jm = float(optics.local_jacobian(ym, ym, eye))
    gd, _ = optics.global_distortion(ym, eye)
    ok = (abs(ym - 0.63) <= 0.01 and abs(j0 - 0.77) <= 0.01 and abs(jm - 1.1) <= 0.02
          and abs(gd - 0.07) <= 0.005)
    return Result(1, "optics golden values", ok,
                  {"y_max": ym, "J00": j0, "J_max": jm, "GD": gd},
                  "0.63+-0.01, 0.77+-0.01, 1.1+-0.02, 0.07+-0.005")


@_timed
def criterion_2(n: int = 50) -> Result:
    eye = optics.EyeModel(eta=1.0)
    g = np.linspace(-eye.x_max, eye.x_max, n)
    X, Y = np.meshgrid(g, g, indexing="ij")
    x, y = optics.unproject_to_sphere(X, Y, eye)
    X2, Y2 = optics.project_to_plane(x, y, eye)
    e1 = float(max(np.abs(X2 - X).max(), np.abs(Y2 - Y).max()))
    s = np.linspace(-eye.y_max, eye.y_max, n)
    x, y = np.meshgrid(s, s, indexing="ij")
    x2, y2 = optics.unproject_to_sphere(*optics.project_to_plane(x, y, eye), eye)
    e2 = float(max(np.abs(x2 - x).max(), np.abs(y2 - y).max()))
    return Result(2, "projection round trips", max(e1, e2) <= 1e-12,
                  {"plane_err": e1, "sphere_err": e2}, "<= 1e-12")


def _random_momenta(rng, n, xi):
    beta = rng.uniform(0.0, 4.0 * math.pi, n)
    c = rng.uniform(-3.0, 3.0, n)
    return np.stack([xi * np.cos(beta / 2), np.sin(beta / 2), xi * c / 2], axis=1)


@_timed
def criterion_3(seed: int = 0) -> Result:
    rng = np.random.default_rng(seed)
    dH = dM = 0.0
    # one xi per class, ten momenta integrated as a batch
    for xi in (rng.uniform(0.3, 0.9), 1.0, rng.uniform(1.2, 4.0)):
        h0 = _random_momenta(rng, 10, xi)
        _, _, hs, _ = G.hamiltonian_flow_t(h0, float(xi), 2 * math.pi, n_out=200)
        H = 0.5 * (hs[..., 0] ** 2 / xi**2 + hs[..., 1] ** 2)
        M = np.linalg.norm(hs, axis=2)
        dH = max(dH, float(np.abs(H - 0.5).max()))
        dM = max(dM, float(np.abs(M - M[:, :1]).max()))
    return Result(3, "RK4 conservation of H and M", max(dH, dM) <= 1e-8,
                  {"max_dH": dH, "max_dM": dM, "momenta": 30}, "<= 1e-8")


def _hermite_matrix(times, R, h, xi, t):
    """RK4 samples interpolated with the exact derivative R' = R Omega."""
    i = int(np.clip(np.searchsorted(times, t) - 1, 0, len(times) - 2))
    t0, t1 = times[i], times[i + 1]
    dt = t1 - t0
    u = (t - t0) / dt
    d0 = R[i] @ G._omega(h[i], xi)
    d1 = R[i + 1] @ G._omega(h[i + 1], xi)
    h00, h10 = 2 * u**3 - 3 * u**2 + 1, u**3 - 2 * u**2 + u
    h01, h11 = -2 * u**3 + 3 * u**2, u**3 - u**2
    return h00 * R[i] + h10 * dt * d0 + h01 * R[i + 1] + h11 * dt * d1


@_timed
def criterion_4(seed: int = 1, n_mom: int = 20, n_t: int = 50,
                scale_t=G.ytilde_scale, scale_s=G.ytilde_s_scale) -> Result:
    rng = np.random.default_rng(seed)
    err_t = err_s = err_st = 0.0
    xis = rng.uniform(0.5, 3.0, n_mom)
    for k in range(n_mom):
        xi = float(xis[k])
        # t-parametrised: any momentum on H = 1/2
        h0 = _random_momenta(rng, 1, xi)[0]
        Tend = 3.0
        times, Rs, hs, _ = G.hamiltonian_flow_t(h0[None], xi, Tend)
        ts = np.linspace(0.0, Tend, n_t)
        cf = G.geodesic_closed_form_t(h0, xi, ts, scale=scale_t)
        for j, t in enumerate(ts):
            ref = _hermite_matrix(times, Rs[0], hs[0], xi, t)
            err_t = max(err_t, lie_so3.matrix_distance(cf.matrices[j], ref))
        # s-parametrised cuspless branch and its SR-arclength image
        h20, h30 = rng.uniform(-0.9, 0.9), rng.uniform(-1.5, 1.5)
        smax = G.cusp_time_smax(h20, h30, xi)
        send = min(0.9 * smax, 1.5)
        ss = np.linspace(0.0, send, n_t)
        cs = G.geodesic_closed_form_s(h20, h30, xi, ss, scale=scale_s)
        tt = np.array([G.sr_length_s(h20, h30, xi, s) for s in ss])
        hm = G.Momentum.from_s_data(h20, h30, xi).vec
        times, Rs, hs, _ = G.hamiltonian_flow_t(hm[None], xi, float(tt[-1]) + 1e-3)
        ct = G.geodesic_closed_form_t(hm, xi, tt, scale=scale_t)
        for j in range(n_t):
            ref = _hermite_matrix(times, Rs[0], hs[0], xi, tt[j])
            err_s = max(err_s, lie_so3.matrix_distance(cs.matrices[j], ref))
            err_st = max(err_st, lie_so3.matrix_distance(cs.matrices[j], ct.matrices[j]))
    worst = max(err_t, err_s, err_st)
    return Result(4, "closed forms vs RK4", worst <= 1e-6,
                  {"t_form": err_t, "s_form": err_s, "s_vs_t": err_st}, "<= 1e-6")


@_timed
def criterion_5(seed: int = 2) -> Result:
    rng = np.random.default_rng(seed)
    worst_h2 = 0.0
    min_h1 = math.inf
    n = 0
    while n < 100:
        xi = float(rng.uniform(0.3, 3.0))
        h20, h30 = float(rng.uniform(-0.95, 0.95)), float(rng.uniform(-3.0, 3.0))
        sm = G.cusp_time_smax(h20, h30, xi)
        if not np.isfinite(sm):
            continue
        n += 1
        _, h2, _ = G.vertical_solution_s(h20, h30, xi, sm)
        worst_h2 = max(worst_h2, abs(abs(float(h2)) - 1.0))
        s = np.linspace(0.0, sm - 1e-6, 400)
        h1, _, _ = G.vertical_solution_s(h20, h30, xi, s)
        min_h1 = min(min_h1, float(h1.min()))
    # elliptic parameters with kappa < 0: the vertical flow in s stays inside |h2| < 1
    reach = 0.0
    m = 0
    while m < 20:
        xi = float(rng.uniform(0.2, 0.9))
        h20, h30 = float(rng.uniform(-0.9, 0.9)), float(rng.uniform(-0.9, 0.9))
        if h30**2 / (1 - xi * xi) + h20**2 >= 1.0:
            continue
        m += 1

        def rhs(_, v, xi=xi):
            return [v[1], (xi * xi - 1.0) * v[0]]

        sol = integrate.solve_ivp(rhs, (0.0, 1e3), [h20, h30], method="DOP853",
                                  rtol=1e-10, atol=1e-12, max_step=0.5)
        reach = max(reach, float(np.abs(sol.y[0]).max()))
    ok = worst_h2 <= 1e-9 and min_h1 > 0 and reach < 1.0
    return Result(5, "cusp time", ok,
                  {"max_abs_h2_minus_1": worst_h2, "min_h1": min_h1, "elliptic_max_h2": reach},
                  "|h2(s_max)|=1 to 1e-9, h1>0, elliptic max|h2|<1")


# --------------------------------------------------------------------------
# 6-9: fast marching on the full chart


@functools.lru_cache(maxsize=4)
def distance_map(xi: float, eps: float, dims: tuple, stop: float, scheme: str = "hybrid",
                 refine: bool = False, cuspless: bool = False) -> E.DistanceGrid:
    grid = E.Grid3D.so3(*dims)
    spec = E.MetricSpec(xi, eps, "so3", cuspless)
    return E.solve(spec, grid, stop_value=stop, scheme=scheme, refine_source=refine)


def _sphere_gap_cells(track: T.Track, exact_sphere: np.ndarray, cell: float) -> float:
    n = track.sphere_points()
    ang = np.arccos(np.clip(n @ exact_sphere.T, -1.0, 1.0)).min(axis=1)
    return float(ang.max() / cell)


def _cuspless_end(h2, xi):
    return min(G.cusp_time_smax(h2, 0.0, xi), math.pi / 2)


@_timed
def criterion_6(eps: float = 0.1, dims=(101, 201, 201)) -> Result:
    xi = 1.5
    d = distance_map(xi, eps, tuple(dims), 3.3)
    cell = d.grid.spacing[0]
    gaps, rels = {}, {}
    for h2 in (-0.99, -0.45, 0.45, 0.99):
        se = _cuspless_end(h2, xi)
        path = G.geodesic_closed_form_s(h2, 0.0, xi, np.linspace(0.0, se, 2000))
        L = G.sr_length_s(h2, 0.0, xi, se)
        tr = T.backtrack(d, path.chart[-1])
        gaps[h2] = _sphere_gap_cells(tr, path.sphere, cell)
        rels[h2] = abs(tr.W[0] / L - 1.0)
    gap, rel = max(gaps.values()), max(rels.values())
    return Result(6, "FM vs exact cuspless geodesics", gap <= 2.0 and rel <= 0.05,
                  {"sup_cells": gap, "W_rel_err": rel}, "<= 2 cells, <= 5%")


@_timed
def criterion_7() -> Result:
    xi, te = 4.5, 1.5 * math.pi
    d = distance_map(xi, 0.1, (101, 201, 201), 1.12 * te)
    cell = d.grid.spacing[0]
    worst = 0.0
    cusps = []
    for h2 in (-0.99, 0.99):
        for h3 in (-5.0, 5.0):
            h0 = [xi * math.sqrt(1 - h2 * h2), h2, h3]
            path = G.geodesic_closed_form_t(h0, xi, np.linspace(0.0, te, 3000))
            u1 = path.controls[:, 0]
            cusps.append(int(np.sum(np.diff(np.sign(u1)) != 0)))
            tr = T.backtrack(d, path.chart[-1])
            worst = max(worst, _sphere_gap_cells(tr, path.sphere, cell))
    return Result(7, "FM vs exact geodesics with cusps", worst <= 3.0,
                  {"sup_cells": worst, "cusps": cusps}, "<= 3 cells")


def iso_points(W: np.ndarray, level: float, periodic) -> np.ndarray:
    """Fractional index points where W crosses ``level`` along grid edges."""
    out = []
    for ax in range(3):
        Wb = np.roll(W, -1, axis=ax)
        m = np.isfinite(W) & np.isfinite(Wb) & ((W - level) * (Wb - level) < 0)
        if not periodic[ax]:
            sl = [slice(None)] * 3
            sl[ax] = -1
            m[tuple(sl)] = False
        idx = np.argwhere(m).astype(float)
        idx[:, ax] += (level - W[m]) / (Wb[m] - W[m])
        out.append(idx)
    return np.concatenate(out)


@_timed
def criterion_8(n_beta: int = 300) -> Result:
    xi, Tl = 1.0, 15 * math.pi / 32
    d = distance_map(xi, 0.1, (101, 201, 201), 1.15 * Tl, "hybrid98", True)
    g = d.grid
    P = iso_points(d.W, Tl, g.periodic)
    cloud = G.wavefront_sample(xi, Tl, n=n_beta, c_max=40.0)
    ci = np.stack([(cloud[:, a] - g.origin[a]) / g.spacing[a] for a in range(3)], axis=1)
    for a in (1, 2):
        ci[:, a] %= g.dims[a]
    # the outer hull: wavefront points not strictly inside the FM sphere
    interp = E.Interpolant(d)
    wc = np.array([interp.chart(c)[0] for c in cloud])
    hull = ci[wc >= 0.9 * Tl]
    tree = cKDTree(hull, boxsize=[1e9, g.dims[1], g.dims[2]])
    dist, _ = tree.query(P)
    worst = float(dist.max())
    return Result(8, "FM sphere vs wavefront hull", worst <= 2.0,
                  {"max_cells": worst, "p99_cells": float(np.percentile(dist, 99)),
                   "mean_cells": float(dist.mean()), "iso_points": len(P), "hull_points": len(hull)},
                  "<= 2 cells")


@_timed
def criterion_9(n_end: int = 20, seed: int = 3) -> Result:
    d = distance_map(1.5, 0.1, (61, 121, 121), 1.6, cuspless=True)
    interp = E.Interpolant(d)
    rng = np.random.default_rng(seed)
    umin = math.inf
    done = stalls = 0
    while done < n_end:
        p = np.array([rng.uniform(-0.4, 0.4), rng.uniform(-0.5, 0.5), rng.uniform(-1.2, 1.2)])
        w = interp.chart(p)[0]
        if not 0.3 < w < 1.4:
            continue
        done += 1
        try:
            tr = T.backtrack_cuspless(d, p)
        except T.StallError:
            stalls += 1
            continue
        umin = min(umin, float(tr.controls[:, 0].min()))
    return Result(9, "cuspless controls", stalls == 0 and umin >= -1e-9,
                  {"min_u1": umin, "stalls": stalls, "endpoints": n_end}, "u1 >= -1e-9")


# --------------------------------------------------------------------------
# 10-11: image cost and curvature


def _lift(image: K.ScalarImage, eye, rc, heading=0.0):
    X, Y = image.to_plane(rc[0], rc[1])
    x, y = optics.unproject_to_sphere(X, Y, eye)
    return np.array([x, y, optics.lift_direction(X, Y, heading, eye)])


def _track_pixels(track: T.Track, image: K.ScalarImage, eye):
    xy = track.spherical()
    X, Y = optics.project_to_plane(xy[:, 0], xy[:, 1], eye)
    return image.to_pixel(X, Y)


def arc_tube(size: int = 129, radius: float = 110.0, n: int = 200):
    """Image with one dark circular-arc tube and its centerline (row, col)."""
    cr, cc = size // 2 + radius, size // 2
    ang = np.linspace(-0.55, 0.55, n)
    pts = np.stack([cr - radius * np.cos(ang), cc + radius * np.sin(ang)], axis=1)
    return K.tube_image((size, size), [pts], width=2.0), pts, (cr, cc, radius)


def parallel_tubes(size: int = 129, row_a: float = 60.0, sep: float = 6.0, gap: int = 24):
    """A tube with a gap next to an unbroken parallel tube."""
    mid = size // 2
    a = [[(row_a, 5), (row_a, mid - gap // 2)], [(row_a, mid + gap // 2), (row_a, size - 6)]]
    b = [[(row_a + sep, 5), (row_a + sep, size - 6)]]
    return K.tube_image((size, size), a + b, width=1.5), row_a


@_timed
def criterion_10() -> Result:
    eye = optics.EyeModel(eta=2.0)
    lam, xi = 50.0, 3.0
    img, pts, (cr, cc, rad) = arc_tube()
    im = K.ScalarImage.in_view(img, eye)
    vf = K.vesselness(im)
    Gimg = 1.0 / (1.0 + vf / (lam * vf.max() ** 2))
    dpix = K.polyline_distance(img.shape, pts)
    cols = range(20, img.shape[1] - 19)
    argmin_err = max(float(dpix[int(np.argmin(Gimg[:, j])), j]) for j in cols)
    vfi = K.ScalarImage(vf, im.origin, im.pixel)
    grid = K.image_grid(im, eye, 101, 101, 64)
    cf = K.cost_for_grid(vfi, lam, eye, grid)
    i0, i1 = 15, len(pts) - 15
    tangent = lambda i: pts[i + 1] - pts[i - 1]  # noqa: E731
    head = lambda t: math.atan2(-t[0], t[1])  # noqa: E731
    a = _lift(im, eye, pts[i0], head(tangent(i0)))
    b = _lift(im, eye, pts[i1], head(tangent(i1)))
    d = E.solve(E.MetricSpec(xi, 0.1), grid, seed=grid.index_of(a), cost=cf.values)
    tr = T.backtrack(d, b)
    rr, cc2 = _track_pixels(tr, im, eye)
    track_err = float(np.abs(np.hypot(rr - cr, cc2 - cc) - rad).max())
    # two parallel tubes: SR versus isotropic
    img2, row_a = parallel_tubes()
    im2 = K.ScalarImage.in_view(img2, eye)
    vf2 = K.ScalarImage(K.vesselness(im2), im2.origin, im2.pixel)
    g2 = K.image_grid(im2, eye, 61, 61, 48)
    cf2 = K.cost_for_grid(vf2, lam, eye, g2)
    a2, b2 = _lift(im2, eye, (row_a, 12)), _lift(im2, eye, (row_a, img2.shape[1] - 13))
    exc = {}
    for eps in (0.1, 1.0):
        dd = E.solve(E.MetricSpec(xi, eps), g2, seed=g2.index_of(a2), cost=cf2.values)
        t2 = T.backtrack(dd, b2, full=eps == 1.0)
        r2, _ = _track_pixels(t2, im2, eye)
        exc[eps] = float(np.abs(r2 - row_a).max())
    ok = argmin_err <= 1.0 and track_err <= 2.0 and exc[1.0] > exc[0.1]
    return Result(10, "cost pipeline on synthetic tubes", ok,
                  {"argmin_px": argmin_err, "track_px": track_err,
                   "excursion_sr_px": exc[0.1], "excursion_iso_px": exc[1.0]},
                  "argmin <= 1 px, track <= 2 px, iso > sr")


@_timed
def criterion_11(h2: float = 0.45) -> Result:
    xi = 1.5
    d = distance_map(xi, 0.1, (101, 201, 201), 3.3)
    se = _cuspless_end(h2, xi)
    ss = np.linspace(0.0, se, 4000)
    path = G.geodesic_closed_form_s(h2, 0.0, xi, ss)
    k_exact = xi**2 * path.momenta[:, 1] / path.momenta[:, 0]
    tr = T.backtrack(d, path.chart[-1])
    _, j = cKDTree(path.sphere).query(tr.sphere_points())
    inner = (ss[j] > 0.1 * se) & (ss[j] < 0.9 * se)
    ke = k_exact[j[inner]]
    kf = tr.kappa_g[inner]
    rel = np.abs(kf - ke) / np.abs(ke)
    return Result(11, "geodesic curvature from W vs exact", float(rel.max()) <= 0.05,
                  {"max_rel": float(rel.max()), "median_rel": float(np.median(rel)),
                   "rms_rel": float(np.sqrt(np.mean((kf - ke) ** 2) / np.mean(ke**2)))},
                  "<= 5% on 10-90% of the arc")


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 12)}


def run(numbers=None) -> list[Result]:
    out = []
    for i in numbers or sorted(CRITERIA):
        out.append(CRITERIA[i]())
    return out
