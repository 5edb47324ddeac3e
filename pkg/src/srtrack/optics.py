"""Reduced schematic-eye model: image sphere <-> flat camera plane.

Lengths are in eyeball radii.  The spherical image coordinates (x, y) are
identified with the retinal object coordinates (the reflection through the
nodal point), so only the image-sphere chart is modelled here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class OutOfViewError(ValueError):
    pass


@dataclass(frozen=True)
class EyeModel:
    a: float = 13.0 / 21.0
    c_eye: float = 4.0 / 5.0
    eta: float = 1.0
    psi_max: float = np.pi / 8.0
    r_eye: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.a < self.r_eye:
            raise ValueError(f"nodal offset a={self.a} must satisfy 0 <= a < R")
        if self.c_eye <= 0 or self.eta <= 0:
            raise ValueError("c_eye and eta must be positive")

    @property
    def ac(self) -> float:
        return self.a + self.c_eye

    @property
    def x_max(self) -> float:
        """Half-width of the square camera field of view."""
        return self.ac * np.tan(self.psi_max) * self.eta

    @property
    def y_max(self) -> float:
        return max_retina_angle(self.a, self.r_eye, self.psi_max)


def max_retina_angle(a: float, r_eye: float, psi: float) -> float:
    s2 = np.sin(psi) ** 2
    arg = np.cos(psi) * np.sqrt(1.0 - a * a * s2 / r_eye**2) - a * s2 / r_eye
    if abs(arg) > 1.0 + 1e-12:
        raise ArithmeticError(f"arccos argument {arg} outside [-1, 1]")
    return float(np.arccos(np.clip(arg, -1.0, 1.0)))


def project_to_plane(x, y, eye: EyeModel = EyeModel()):
    """Central projection (x, y) -> (X, Y); vectorized."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    den = eye.a + np.cos(x) * np.cos(y)
    if np.any(den <= 0):
        raise OutOfViewError("point behind the nodal plane")
    k = eye.eta * eye.ac / den
    X, Y = k * np.sin(x), k * np.cos(x) * np.sin(y)
    if X.ndim == 0:
        return float(X), float(Y)
    return X, Y


def _xi(r2, eye: EyeModel):
    return np.sqrt(r2 * (1.0 - eye.a**2) + eye.ac**2)


def unproject_to_sphere(X, Y, eye: EyeModel = EyeModel()):
    """Inverse projection (X, Y) -> (x, y); eta is divided out first."""
    X = np.asarray(X, dtype=float) / eye.eta
    Y = np.asarray(Y, dtype=float) / eye.eta
    a, ac = eye.a, eye.ac
    r2 = X * X + Y * Y
    xi = _xi(r2, eye)
    den = r2 + ac * ac
    pbar = (a * ac + xi) / den
    p1 = (ac * xi - a * r2) / den
    s = X * pbar
    if np.any(np.abs(s) > 1.0 + 1e-12):
        raise OutOfViewError("|X p| > 1")
    x = np.arcsin(np.clip(s, -1.0, 1.0))
    y = np.arctan2(Y * pbar, p1)
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def local_jacobian(x, y, eye: EyeModel = EyeModel()):
    cx = np.cos(x)
    q = cx * np.cos(y)
    return eye.eta**2 * eye.ac**2 * cx * (1.0 + eye.a * q) / (eye.a + q) ** 3


def jacobian_matrix(x: float, y: float, eye: EyeModel = EyeModel()) -> np.ndarray:
    """d(X, Y)/d(x, y) in closed form."""
    cx, sx, cy, sy = np.cos(x), np.sin(x), np.cos(y), np.sin(y)
    d = eye.a + cx * cy
    k = eye.eta * eye.ac
    dX_dx = k * (cx * d + sx * sx * cy) / d**2
    dX_dy = k * sx * cx * sy / d**2
    dY_dx = k * (-sx * sy * d + cx * sy * sx * cy) / d**2
    dY_dy = k * (cx * cy * d + cx * sy * cx * sy) / d**2
    return np.array([[dX_dx, dX_dy], [dY_dx, dY_dy]])


def inverse_jacobian(X: float, Y: float, eye: EyeModel = EyeModel()) -> np.ndarray:
    """d(x, y)/d(X, Y), via the inverse of the forward Jacobian."""
    x, y = unproject_to_sphere(X, Y, eye)
    return np.linalg.inv(jacobian_matrix(x, y, eye))


def global_distortion(y, eye: EyeModel = EyeModel()):
    """Relative length error |y - Y(0, y)| / |y| along x = 0, with eta = 1.

    Returns ``(value, flag)``.  The function decreases on (0, y_max]; its
    limit at y -> 0+ is 1 - (a + c) / (1 + a), not 0.  At y = 0 itself the
    value 0 is returned by convention with ``flag`` set.
    """
    if y == 0:
        return 0.0, True
    unit = EyeModel(eye.a, eye.c_eye, 1.0, eye.psi_max, eye.r_eye)
    _, Y = project_to_plane(0.0, y, unit)
    return abs(y - Y) / abs(y), False


def lift_direction(X: float, Y: float, Theta: float, eye: EyeModel = EyeModel()) -> float:
    """Orientation theta on the sphere matching a planar heading Theta.

    Planar headings follow the chart-aligned SE(2) convention, where the unit
    direction is (cos Theta, -sin Theta); this is the flat counterpart of
    X1 = cos(theta) d/dx - sec(x) sin(theta) d/dy.  The returned theta makes
    X1 at (x, y, theta) parallel to the pushforward of that direction.
    """
    x, _ = unproject_to_sphere(X, Y, eye)
    jinv = inverse_jacobian(X, Y, eye)
    xdot, ydot = jinv @ np.array([np.cos(Theta), -np.sin(Theta)])
    re, im = xdot, -np.cos(x) * ydot
    if np.hypot(re, im) < 1e-12:
        raise ArithmeticError("degenerate pushforward")
    return float(np.arctan2(im, re))


def planar_heading(x: float, y: float, theta: float, eye: EyeModel = EyeModel()) -> float:
    """Inverse of :func:`lift_direction`: push X1 forward to the plane."""
    v = jacobian_matrix(x, y, eye) @ np.array([np.cos(theta), -np.sin(theta) / np.cos(x)])
    return float(np.arctan2(-v[1], v[0]))


def report(eye: EyeModel = EyeModel(), n: int = 201) -> dict:
    """Summary numbers for the field of view: y_max, Jacobian range, max GD."""
    ymax = eye.y_max
    g = np.linspace(-ymax, ymax, n)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    unit = EyeModel(eye.a, eye.c_eye, 1.0, eye.psi_max, eye.r_eye)
    jac = local_jacobian(xx, yy, unit)
    ys = np.linspace(ymax / n, ymax, n)
    gd = [global_distortion(v, unit)[0] for v in ys]
    return {
        "y_max": ymax,
        "J_min": float(jac.min()),
        "J_max": float(jac.max()),
        "GD_max": float(max(gd)),
        "GD_at_y_max": float(gd[-1]),
    }
