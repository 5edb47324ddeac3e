"""Sub-Riemannian geodesics of the uniform-cost problem on SO(3).

Momenta are the left-invariant Hamiltonians h_i = <lambda, X_i>.  On
SR-arclength normalised geodesics H = (h1^2/xi^2 + h2^2)/2 = 1/2 and the
Casimir M^2 = h1^2 + h2^2 + h3^2 is conserved.

Three routes are provided:

* :func:`hamiltonian_flow_t` -- fixed-step RK4 on the full system, used as
  the oracle for everything else;
* :func:`geodesic_closed_form_t` -- rotation of the momentum to (0, 0, M)
  followed by the explicit horizontal solution, with the pendulum
  (vertical part) integrated to high accuracy;
* :func:`geodesic_closed_form_s` -- the cuspless solution in spherical
  arclength, where the vertical part is elementary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from . import lie_so3
from .lie_so3 import A1, A2, rotation_matrix, angles_from_matrices

RK4_STEP = 1e-3
_POLE_MARGIN = 0.05  # switch to matrix propagation once cos(x) drops below


class PastCuspError(ValueError):
    pass


class CuspError(ValueError):
    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


@dataclass(frozen=True)
class Momentum:
    h1: float
    h2: float
    h3: float

    @property
    def vec(self) -> np.ndarray:
        return np.array([self.h1, self.h2, self.h3])

    @property
    def M(self) -> float:
        return math.sqrt(self.h1**2 + self.h2**2 + self.h3**2)

    def H(self, xi: float) -> float:
        return 0.5 * (self.h1**2 / xi**2 + self.h2**2)

    @classmethod
    def from_pendulum(cls, beta: float, c: float, xi: float) -> "Momentum":
        return cls(xi * math.cos(beta / 2), math.sin(beta / 2), xi * c / 2)

    @classmethod
    def from_s_data(cls, h2: float, h3: float, xi: float) -> "Momentum":
        """Momentum with h1 >= 0 fixed by H = 1/2."""
        if abs(h2) > 1:
            raise PastCuspError(f"|h2|={abs(h2)} > 1")
        return cls(xi * math.sqrt(1.0 - h2 * h2), h2, h3)


@dataclass(frozen=True)
class PendulumState:
    beta: float
    c: float
    xi: float

    @property
    def r(self) -> float:
        return 1.0 / self.xi**2 - 1.0


def pendulum_from_momentum(h: Momentum, xi: float) -> PendulumState:
    beta = 2.0 * math.atan2(h.h2, h.h1 / xi)
    return PendulumState(beta, 2.0 * h.h3 / xi, xi)


def momentum_from_pendulum(p: PendulumState) -> Momentum:
    return Momentum.from_pendulum(p.beta, p.c, p.xi)


@dataclass
class ChiParam:
    """chi = principal sqrt(xi^2 - 1): imaginary, zero or real."""

    xi: float
    chi: complex = field(init=False)

    def __post_init__(self):
        self.chi = complex(np.sqrt(complex(self.xi**2 - 1.0)))

    @property
    def kind(self) -> str:
        if self.xi < 1:
            return "elliptic"
        return "linear" if self.xi == 1 else "hyperbolic"


@dataclass
class GeodesicPath:
    """Sampled trajectory; ``param`` is t (SR arclength) or s (sphere arclength)."""

    param: np.ndarray
    matrices: np.ndarray
    momenta: np.ndarray
    xi: float
    parametrization: str = "t"
    provenance: str = "ode"
    flags: np.ndarray | None = None

    def __post_init__(self):
        if self.flags is None:
            self.flags = np.zeros(len(self.param), dtype=bool)

    @property
    def chart(self) -> np.ndarray:
        return angles_from_matrices(self.matrices)

    @property
    def sphere(self) -> np.ndarray:
        return self.matrices[:, :, 0].copy()

    @property
    def controls(self) -> np.ndarray:
        """(u1, u2) per sample."""
        h = self.momenta
        if self.parametrization == "t":
            return np.stack([h[:, 0] / self.xi**2, h[:, 1]], axis=1)
        # s-parametrised: u1 = ds/ds = 1, u2 = k_g = xi^2 h2 / h1
        with np.errstate(divide="ignore", invalid="ignore"):
            kg = self.xi**2 * h[:, 1] / h[:, 0]
        return np.stack([np.ones(len(h)), kg], axis=1)

    def point(self, i: int) -> lie_so3.GroupPoint:
        return lie_so3.GroupPoint.from_matrix(self.matrices[i])

    def to_rows(self):
        ch, n, u = self.chart, self.sphere, self.controls
        for i in range(len(self.param)):
            yield [self.param[i], *ch[i], *n[i], *self.momenta[i], *u[i]]


CSV_COLUMNS = ["param", "x", "y", "theta", "n1", "n2", "n3", "h1", "h2", "h3", "u1", "u2"]


def write_csv(path, path_obj: GeodesicPath):
    import csv

    with open(path, "w", newline="") as f:
        f.write(
            f"# xi={path_obj.xi} parametrization={path_obj.parametrization} "
            f"provenance={path_obj.provenance}\n"
        )
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for row in path_obj.to_rows():
            w.writerow([f"{v:.12g}" for v in row])


# --------------------------------------------------------------------------
# RK4 oracle


def _vertical_rhs(h, xi):
    h1, h2, h3 = h[..., 0], h[..., 1], h[..., 2]
    return np.stack([-h2 * h3, h1 * h3 / xi**2, (1.0 - 1.0 / xi**2) * h1 * h2], axis=-1)


def _chart_rhs(h, q, xi):
    u1 = h[..., 0] / xi**2
    u2 = h[..., 1]
    x, th = q[..., 0], q[..., 2]
    cx = np.cos(x)
    st, ct = np.sin(th), np.cos(th)
    return np.stack([u1 * ct, -u1 * st / cx, u1 * st * np.tan(x) + u2], axis=-1)


def _omega(h, xi):
    # Omega = -u1 A2 + u2 A1
    u1 = h[..., 0] / xi**2
    u2 = h[..., 1]
    return -u1[..., None, None] * A2 + u2[..., None, None] * A1


def hamiltonian_flow_t(h0, xi: float, T: float, step: float = RK4_STEP, n_out: int | None = None):
    """Fixed-step RK4 on the vertical + horizontal system from the identity.

    ``h0`` may be a single momentum (3,) or a batch (n, 3).  Returns a
    GeodesicPath (single) or a tuple of arrays (times, R, h, flags) for a
    batch.  Horizontal motion is integrated in the chart; a trajectory whose
    latitude approaches a pole is continued with R' = R Omega instead.
    """
    if step > RK4_STEP + 1e-15:
        raise ValueError("RK4 oracle step must be <= 1e-3")
    h0 = np.asarray(h0, dtype=float)
    single = h0.ndim == 1
    h = np.atleast_2d(h0).copy()
    n = h.shape[0]
    nsteps = max(1, int(math.ceil(T / step - 1e-9)))
    dt = T / nsteps
    stride = 1 if n_out is None else max(1, nsteps // max(1, n_out - 1))
    q = np.zeros((n, 3))
    R = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    in_matrix = np.zeros(n, dtype=bool)

    ts, Rs, hs, fl = [0.0], [R.copy()], [h.copy()], [in_matrix.copy()]
    for k in range(nsteps):
        # chart state and matrix state advance together; the matrix one is
        # authoritative once a trajectory is flagged
        def f(hh, qq):
            return _vertical_rhs(hh, xi), _chart_rhs(hh, qq, xi)

        k1h, k1q = f(h, q)
        k2h, k2q = f(h + 0.5 * dt * k1h, q + 0.5 * dt * k1q)
        k3h, k3q = f(h + 0.5 * dt * k2h, q + 0.5 * dt * k2q)
        k4h, k4q = f(h + dt * k3h, q + dt * k3q)

        def fr(hh, RR):
            return RR @ _omega(hh, xi)

        l1 = fr(h, R)
        l2 = fr(h + 0.5 * dt * k1h, R + 0.5 * dt * l1)
        l3 = fr(h + 0.5 * dt * k2h, R + 0.5 * dt * l2)
        l4 = fr(h + dt * k3h, R + dt * l3)
        R = R + dt / 6.0 * (l1 + 2 * l2 + 2 * l3 + l4)
        h = h + dt / 6.0 * (k1h + 2 * k2h + 2 * k3h + k4h)
        q = q + dt / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)

        Rq = rotation_matrix(q[:, 0], q[:, 1], q[:, 2])
        near_pole = np.cos(q[:, 0]) < _POLE_MARGIN
        in_matrix |= near_pole
        # keep the matrix state synchronised with the (more accurate) chart
        # state while the chart is valid
        R = np.where(in_matrix[:, None, None], R, Rq)
        if in_matrix.any():
            q[in_matrix] = angles_from_matrices(R[in_matrix])
        if (k + 1) % stride == 0 or k + 1 == nsteps:
            ts.append((k + 1) * dt)
            Rs.append(R.copy())
            hs.append(h.copy())
            fl.append(in_matrix.copy())

    times = np.array(ts)
    Rs = np.stack(Rs, axis=1)
    hs = np.stack(hs, axis=1)
    fl = np.stack(fl, axis=1)
    if single:
        return GeodesicPath(times, Rs[0], hs[0], xi, "t", "ode", fl[0])
    return times, Rs, hs, fl


# --------------------------------------------------------------------------
# closed form, SR arclength


def ytilde_scale(M, xi):
    """Prefactor of the y~ quadrature in t; determined against the RK4 oracle."""
    return M / xi**2


def _d0(h1, h2, h3):
    M = math.sqrt(h1 * h1 + h2 * h2 + h3 * h3)
    mu = math.sqrt(max(M * M - h2 * h2, 0.0))
    return (
        np.array(
            [
                [mu, h2 * h1 / mu, -h2 * h3 / mu],
                [0.0, M * h3 / mu, M * h1 / mu],
                [h2, -h1, h3],
            ]
        )
        / M
    )


def _assemble(d0, xt, yt, tht):
    return d0.T @ rotation_matrix(xt, yt, tht)


def _pendulum_track(h0, xi, times, rtol=1e-12, atol=1e-13):
    """Momentum and y~-integrand quadrature along the pendulum flow."""
    h1, h2, h3 = h0
    M = math.sqrt(h1 * h1 + h2 * h2 + h3 * h3)
    beta0 = 2.0 * math.atan2(h2, h1 / xi)
    c0 = 2.0 * h3 / xi
    r = 1.0 / xi**2 - 1.0

    def rhs(t, z):
        beta, c, _ = z
        hh2 = math.sin(beta / 2)
        hh3 = xi * c / 2
        return [c, -r * math.sin(beta), 1.0 - hh3 * hh3 / (M * M - hh2 * hh2)]

    times = np.asarray(times, dtype=float)
    T = float(times.max()) if times.size else 0.0
    if T == 0:
        z = np.tile([[beta0], [c0], [0.0]], (1, len(times)))
    else:
        sol = integrate.solve_ivp(
            rhs, (0.0, T), [beta0, c0, 0.0], method="DOP853", t_eval=times,
            rtol=rtol, atol=atol,
        )
        z = sol.y
    beta, c, quad = z
    h = np.stack([xi * np.cos(beta / 2), np.sin(beta / 2), xi * c / 2], axis=1)
    return h, quad, M


def geodesic_closed_form_t(h0, xi: float, times, scale: Callable = ytilde_scale) -> GeodesicPath:
    """Explicit geodesic R(t) = D0^T exp(y~ A3) exp(-x~ A2) exp(theta~ A1)."""
    h0 = np.asarray(h0, dtype=float)
    H = 0.5 * (h0[0] ** 2 / xi**2 + h0[1] ** 2)
    if abs(H - 0.5) > 1e-10:
        raise ValueError(f"H(h0)={H} != 1/2")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    M = float(np.linalg.norm(h0))
    flags = np.zeros(len(times), dtype=bool)
    if M * M - h0[1] ** 2 < 1e-14:
        # h = (0, +-1, 0) is an equilibrium: pure rotation in place
        mats = np.stack([lie_so3.rot_e1(h0[1] * t) for t in times])
        mom = np.tile(h0, (len(times), 1))
        return GeodesicPath(times, mats, mom, xi, "t", "closed-form", np.ones(len(times), bool))

    h, quad, M = _pendulum_track(h0, xi, times)
    d0 = _d0(*h0)
    xt = np.arctan2(h[:, 1], np.sqrt(h[:, 0] ** 2 + h[:, 2] ** 2))
    tht = np.arctan2(-h[:, 0], h[:, 2])
    yt = scale(M, xi) * quad
    mats = _assemble(d0, xt, yt, tht)
    return GeodesicPath(times, mats, h, xi, "t", "closed-form", flags)


# --------------------------------------------------------------------------
# cuspless geodesics, spherical arclength


def vertical_solution_s(h20: float, h30: float, xi: float, s):
    """(h1, h2, h3) at spherical arclength s on the cuspless branch."""
    s = np.asarray(s, dtype=float)
    if xi == 1.0:
        h2 = h20 + h30 * s
        h3 = np.full_like(s, h30)
    elif xi < 1.0:
        a = math.sqrt(1.0 - xi * xi)
        h2 = h20 * np.cos(a * s) + h30 * np.sin(a * s) / a
        h3 = h30 * np.cos(a * s) - a * h20 * np.sin(a * s)
    else:
        a = math.sqrt(xi * xi - 1.0)
        h2 = h20 * np.cosh(a * s) + h30 * np.sinh(a * s) / a
        h3 = h30 * np.cosh(a * s) + a * h20 * np.sinh(a * s)
    if np.any(h2 * h2 > 1.0 + 1e-12):
        raise PastCuspError("|h2| > 1: parameter beyond the first cusp")
    h1 = xi * np.sqrt(np.clip(1.0 - h2 * h2, 0.0, None))
    return h1, h2, h3


def vertical_solution_s_complex(h20: float, h30: float, xi: float, s):
    """Same as :func:`vertical_solution_s` written once over complex chi."""
    chi = complex(np.sqrt(complex(xi * xi - 1.0)))
    s = np.asarray(s, dtype=float)
    if chi == 0:
        return vertical_solution_s(h20, h30, xi, s)
    h2 = h20 * np.cosh(s * chi) + h30 / chi * np.sinh(s * chi)
    h3 = h30 * np.cosh(s * chi) + chi * h20 * np.sinh(s * chi)
    assert np.all(np.abs(h2.imag) < 1e-10) and np.all(np.abs(h3.imag) < 1e-10)
    h2, h3 = h2.real, h3.real
    h1 = xi * np.sqrt(np.clip(1.0 - h2 * h2, 0.0, None))
    return h1, h2, h3


def cusp_time_smax(h20: float, h30: float, xi: float) -> float:
    """Spherical arclength of the first cusp (+inf if none)."""
    if abs(h20) > 1:
        raise PastCuspError("|h2(0)| > 1")
    chi = complex(np.sqrt(complex(xi * xi - 1.0)))
    if chi == 0:
        if h30 == 0:
            return math.inf
        return (math.copysign(1.0, h30) - h20) / h30
    kappa = h30 * h30 + (1.0 - h20 * h20) * (chi * chi).real
    den = h20 * chi + h30
    if kappa < 0 or abs(den) == 0:
        return math.inf
    s1 = math.copysign(1.0, den.real) if den.real != 0 else 1.0
    arg = s1 * (math.sqrt(kappa) + chi) / den
    lg = np.log(arg) if arg != 0 else complex(-math.inf)
    if not np.isfinite(lg):
        return math.inf
    val = (1.0 / chi) * lg
    if abs(val.imag) > 1e-12 * max(1.0, abs(val)):
        raise ArithmeticError(f"non-real s_max {val}")
    sm = float(val.real)
    if not np.isfinite(sm) or sm <= 0:
        return math.inf
    return sm


def _ys_integrand(h20, h30, xi, M):
    def f(sig):
        _, h2, _ = vertical_solution_s(h20, h30, xi, sig)
        h2 = float(h2)
        return math.sqrt(max(1.0 - h2 * h2, 0.0)) / (M * M - h2 * h2)

    return f


def ytilde_s_quadrature(h20, h30, xi, s_values, tol=1e-10):
    """Cumulative quadrature of sqrt(1-h2^2)/(M^2-h2^2) at increasing s."""
    h10 = xi * math.sqrt(1.0 - h20 * h20)
    M = math.sqrt(h10 * h10 + h20 * h20 + h30 * h30)
    f = _ys_integrand(h20, h30, xi, M)
    s_values = np.asarray(s_values, dtype=float)
    order = np.argsort(s_values)
    out = np.empty_like(s_values)
    acc, prev = 0.0, 0.0
    for i in order:
        si = s_values[i]
        if si > prev:
            val, _ = integrate.quad(f, prev, si, epsabs=tol, epsrel=tol, limit=200)
            acc += val
            prev = si
        out[i] = acc
    return out


def ytilde_s_elliptic(h20, h30, xi, s_values):
    """Elliptic-integral evaluation of the same integral, xi < 1 only."""
    import mpmath

    if xi >= 1:
        raise ValueError("elliptic form needs xi < 1")
    a = math.sqrt(1.0 - xi * xi)
    h10 = xi * math.sqrt(1.0 - h20 * h20)
    M2 = h10 * h10 + h20 * h20 + h30 * h30
    rho2 = (M2 - xi * xi) / (1.0 - xi * xi)
    psi0 = math.atan2(h20, h30 / a)
    n = rho2 / M2

    def G(psi):
        return mpmath.ellipf(psi, rho2) - (1.0 - 1.0 / M2) * mpmath.ellippi(n, psi, rho2)

    g0 = G(psi0)
    out = [float(mpmath.re(G(a * s + psi0) - g0)) / a for s in np.atleast_1d(s_values)]
    return np.array(out)


def s_momentum(h20, h30, xi) -> tuple[float, float, float, float]:
    h10 = xi * math.sqrt(1.0 - h20 * h20)
    M = math.sqrt(h10 * h10 + h20 * h20 + h30 * h30)
    return h10, h20, h30, M


def ytilde_s_scale(M, xi):
    """Prefactor of the y~ quadrature in s; determined against the RK4 oracle."""
    return xi * M


def geodesic_closed_form_s(h20: float, h30: float, xi: float, s_values,
                           scale: Callable = ytilde_s_scale) -> GeodesicPath:
    s_values = np.atleast_1d(np.asarray(s_values, dtype=float))
    smax = cusp_time_smax(h20, h30, xi)
    if np.any(s_values > smax + 1e-12):
        raise PastCuspError(f"s beyond first cusp s_max={smax}")
    h10, _, _, M = s_momentum(h20, h30, xi)
    if M * M - h20 * h20 < 1e-14:
        raise ArithmeticError("mu = 0: D0 undefined for this momentum")
    h1, h2, h3 = vertical_solution_s(h20, h30, xi, s_values)
    d0 = _d0(h10, h20, h30)
    xt = np.arctan2(h2, np.sqrt(np.clip(M * M - h2 * h2, 0.0, None)))
    tht = np.arctan2(-h1, h3)
    yt = scale(M, xi) * ytilde_s_quadrature(h20, h30, xi, s_values)
    mats = _assemble(d0, xt, yt, tht)
    mom = np.stack([h1, h2, h3], axis=1)
    return GeodesicPath(s_values, mats, mom, xi, "s", "closed-form")


def sr_length_s(h20, h30, xi, s) -> float:
    """SR length t(s) = int_0^s sqrt(xi^2 + k_g^2) ds for uniform cost.

    The integrand xi^2 / h1 has an inverse square-root singularity at a cusp;
    the substitution sigma = s - u^2 removes it.
    """
    if s <= 0:
        return 0.0

    def f(u):
        h1, _, _ = vertical_solution_s(h20, h30, xi, s - u * u)
        h1 = float(h1)
        if h1 <= 0:
            # limit of 2 u xi^2 / h1 at the cusp, from the local square-root law
            return f(1e-7) if u < 1e-7 else math.inf
        return 2.0 * u * xi * xi / h1

    val, _ = integrate.quad(f, 0.0, math.sqrt(s), epsabs=1e-10, epsrel=1e-10, limit=400)
    return val


# --------------------------------------------------------------------------
# reparametrisation


def reparametrize(path: GeodesicPath, target: str, cost: Callable | None = None) -> GeodesicPath:
    """Switch between SR arclength t and spherical arclength s.

    Uses the trapezoidal rule on the stored samples: ds/dt = u1 (t -> s) and
    dt/ds = C(n) sqrt(xi^2 + k_g^2) (s -> t).
    """
    if target == path.parametrization:
        return path
    n = path.sphere
    cvals = np.ones(len(path.param)) if cost is None else np.array([cost(v) for v in n])
    u = path.controls
    if target == "s":
        u1 = u[:, 0]
        bad = np.nonzero(u1 <= 0)[0]
        if len(bad):
            raise CuspError(f"u1 <= 0 at t={path.param[bad[0]]:.6g}", int(bad[0]))
        # dt along an SR-arclength path carries speed C sqrt(xi^2 u1^2 + u2^2) = 1
        new = integrate.cumulative_trapezoid(u1, path.param, initial=0.0)
    elif target == "t":
        kg = u[:, 1]
        rate = cvals * np.sqrt(path.xi**2 + kg**2)
        new = integrate.cumulative_trapezoid(rate, path.param, initial=0.0)
    else:
        raise ValueError(target)
    return GeodesicPath(new, path.matrices, path.momenta, path.xi, target, path.provenance, path.flags)


# --------------------------------------------------------------------------
# wavefronts


def sample_momenta(n_beta: int, n_c: int, c_max: float, xi: float) -> np.ndarray:
    """Momenta on H = 1/2, uniform in beta and arcsinh-warped in c."""
    betas = np.linspace(0.0, 4.0 * np.pi, n_beta, endpoint=False)
    w = np.linspace(-np.arcsinh(c_max), np.arcsinh(c_max), n_c)
    cs = np.sinh(w)
    B, C = np.meshgrid(betas, cs, indexing="ij")
    B, C = B.ravel(), C.ravel()
    return np.stack([xi * np.cos(B / 2), np.sin(B / 2), xi * C / 2], axis=1)


def wavefront_batch(h0: np.ndarray, xi: float, T: float, step: float = 2e-3) -> np.ndarray:
    """Endpoints Exp(h0, T) for a batch of momenta, via the explicit solution.

    The pendulum and y~ quadrature are advanced with a vectorised RK4 (the
    horizontal part is the closed form); momenta (0, +-1, 0) use the exact
    in-place rotation.  Returns rotation matrices (n, 3, 3).
    """
    h0 = np.atleast_2d(np.asarray(h0, dtype=float))
    M = np.linalg.norm(h0, axis=1)
    beta = 2.0 * np.arctan2(h0[:, 1], h0[:, 0] / xi)
    c = 2.0 * h0[:, 2] / xi
    r = 1.0 / xi**2 - 1.0
    quad = np.zeros(len(h0))
    nsteps = max(1, int(math.ceil(T / step)))
    dt = T / nsteps
    mu2 = M * M - h0[:, 1] ** 2
    ok = mu2 > 1e-12

    def f(b, cc):
        h2 = np.sin(b / 2)
        h3 = xi * cc / 2
        den = np.where(ok, M * M - h2 * h2, 1.0)
        return cc, -r * np.sin(b), 1.0 - h3 * h3 / den

    for _ in range(nsteps):
        a1, b1, q1 = f(beta, c)
        a2, b2, q2 = f(beta + 0.5 * dt * a1, c + 0.5 * dt * b1)
        a3, b3, q3 = f(beta + 0.5 * dt * a2, c + 0.5 * dt * b2)
        a4, b4, q4 = f(beta + dt * a3, c + dt * b3)
        beta = beta + dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        c = c + dt / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
        quad = quad + dt / 6 * (q1 + 2 * q2 + 2 * q3 + q4)
    h = np.stack([xi * np.cos(beta / 2), np.sin(beta / 2), xi * c / 2], axis=1)
    xt = np.arctan2(h[:, 1], np.sqrt(h[:, 0] ** 2 + h[:, 2] ** 2))
    tht = np.arctan2(-h[:, 0], h[:, 2])
    yt = ytilde_scale(M, xi) * quad
    out = np.empty((len(h0), 3, 3))
    Rt = rotation_matrix(xt, yt, tht)
    for i in np.nonzero(ok)[0]:
        out[i] = _d0(*h0[i]).T @ Rt[i]
    for i in np.nonzero(~ok)[0]:
        out[i] = lie_so3.rot_e1(h0[i, 1] * T)
    return out


def wavefront_sample(xi: float, T: float, n: int = 64, c_max: float = 40.0,
                     n_c: int | None = None) -> np.ndarray:
    """Chart coordinates (N, 3) of wavefront points at SR length T.

    ``n`` samples of beta over [0, 4 pi) and ``n_c`` (default n) of c.
    """
    if n < 8:
        raise ValueError("need at least 8 samples")
    h0 = sample_momenta(n, n_c or n, c_max, xi)
    if T == 0:
        return np.zeros((len(h0), 3))
    mats = wavefront_batch(h0, xi, T)
    return angles_from_matrices(mats)
