"""SO(3) elements in the (x, y, theta) chart, Lie algebra basis and frames.

The chart is R(x, y, theta) = exp(y A3) exp(-x A2) exp(theta A1) with
x in [-pi/2, pi/2] (latitude of R e1) and y, theta periodic.  Left-invariant
fields are X1 = -R A2 ("spatial"), X2 = R A1 ("angular") and X3 = R A3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

A1 = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
A2 = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
A3 = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
BASIS = (A1, A2, A3)

HALF_PI = 0.5 * np.pi
_DOMAIN_TOL = 1e-12
_GIMBAL_TOL = 1e-12


class ChartDomainError(ValueError):
    """Latitude outside [-pi/2, pi/2]."""


class ChartSingularityError(ValueError):
    """Frame requested at a pole of the chart, where sec(x) is infinite."""


def wrap_angle(a):
    """Reduce angles to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    r = np.pi - np.mod(np.pi - a, 2.0 * np.pi)
    return r if r.ndim else float(r)


def bracket(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def algebra_element(a1: float, a2: float, a3: float) -> np.ndarray:
    return a1 * A1 + a2 * A2 + a3 * A3


def rot_e1(phi: float) -> np.ndarray:
    """exp(phi A1)."""
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_e2(phi: float) -> np.ndarray:
    """exp(phi A2)."""
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_e3(phi: float) -> np.ndarray:
    """exp(phi A3)."""
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _matrix_from_angles(x, y, theta):
    cx, sx = np.cos(x), np.sin(x)
    cy, sy = np.cos(y), np.sin(y)
    ct, st = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [cx * cy, -sx * cy * st - sy * ct, sy * st - sx * cy * ct],
            [cx * sy, cy * ct - sx * sy * st, -cy * st - sx * sy * ct],
            [sx, cx * st, cx * ct],
        ]
    )


def _angles_from_matrix(r: np.ndarray) -> tuple[float, float, float, bool]:
    r31 = float(np.clip(r[2, 0], -1.0, 1.0))
    rho = float(np.hypot(r[0, 0], r[1, 0]))
    x = float(np.arctan2(r31, rho))
    if rho < _GIMBAL_TOL:
        # y and theta are not separately determined; fix y := 0 and read
        # theta from the remaining free rotation about the pole.
        x = HALF_PI if r31 > 0 else -HALF_PI
        sgn = 1.0 if r31 > 0 else -1.0
        # with y = 0: R[:,1] = (-sgn sin th, cos th, 0)
        theta = float(np.arctan2(-sgn * r[0, 1], r[1, 1]))
        return x, 0.0, wrap_angle(theta), True
    y = float(np.arctan2(r[1, 0], r[0, 0]))
    theta = float(np.arctan2(r[2, 1], r[2, 2]))
    return x, wrap_angle(y), wrap_angle(theta), False


@dataclass(frozen=True)
class GroupPoint:
    """Rotation matrix together with its chart coordinates.

    Build with :func:`rotation_from_angles` or :meth:`from_matrix`; the two
    representations are kept in sync.  ``degenerate`` marks the gimbal case
    |x| = pi/2 where y has been set to 0 by convention.
    """

    matrix: np.ndarray
    chart: tuple[float, float, float]
    degenerate: bool = field(default=False)

    @classmethod
    def from_matrix(cls, r: np.ndarray) -> "GroupPoint":
        r = np.array(r, dtype=float)
        x, y, theta, flag = _angles_from_matrix(r)
        r.setflags(write=False)
        return cls(r, (x, y, theta), flag)

    @property
    def x(self) -> float:
        return self.chart[0]

    @property
    def y(self) -> float:
        return self.chart[1]

    @property
    def theta(self) -> float:
        return self.chart[2]

    def __matmul__(self, other: "GroupPoint") -> "GroupPoint":
        return GroupPoint.from_matrix(self.matrix @ other.matrix)

    def inverse(self) -> "GroupPoint":
        return GroupPoint.from_matrix(self.matrix.T)

    def projection(self) -> np.ndarray:
        return spherical_projection(self)


def rotation_from_angles(x: float, y: float, theta: float) -> GroupPoint:
    if not (-HALF_PI - _DOMAIN_TOL <= x <= HALF_PI + _DOMAIN_TOL):
        raise ChartDomainError(f"x={x!r} outside [-pi/2, pi/2]")
    x = float(np.clip(x, -HALF_PI, HALF_PI))
    r = _matrix_from_angles(x, y, theta)
    r.setflags(write=False)
    y, theta = wrap_angle(y), wrap_angle(theta)
    degenerate = abs(abs(x) - HALF_PI) < _GIMBAL_TOL
    if degenerate:
        _, y, theta, _ = _angles_from_matrix(r)
    return GroupPoint(r, (x, y, theta), degenerate)


def angles_from_rotation(g: GroupPoint | np.ndarray) -> tuple[float, float, float]:
    """Chart coordinates of a rotation (y := 0 at the poles)."""
    if isinstance(g, GroupPoint):
        return g.chart
    x, y, theta, _ = _angles_from_matrix(np.asarray(g, dtype=float))
    return x, y, theta


def rotation_matrix(x, y, theta) -> np.ndarray:
    """Vectorized closed-form matrix; broadcasting inputs give (..., 3, 3)."""
    m = _matrix_from_angles(np.asarray(x), np.asarray(y), np.asarray(theta))
    return np.moveaxis(m, (0, 1), (-2, -1))


def angles_from_matrices(r: np.ndarray) -> np.ndarray:
    """Vectorized inverse of :func:`rotation_matrix`; returns (..., 3)."""
    r31 = np.clip(r[..., 2, 0], -1.0, 1.0)
    x = np.arctan2(r31, np.hypot(r[..., 0, 0], r[..., 1, 0]))
    y = np.arctan2(r[..., 1, 0], r[..., 0, 0])
    th = np.arctan2(r[..., 2, 1], r[..., 2, 2])
    return np.stack([x, y, th], axis=-1)


def frame_at(x: float, theta: float) -> np.ndarray:
    """Rows are X1, X2, X3 expressed over (d/dx, d/dy, d/dtheta).

    The frame does not depend on y.
    """
    cx = np.cos(x)
    if abs(cx) < 1e-14:
        raise ChartSingularityError(f"frame undefined at x={x!r}")
    sec, tan = 1.0 / cx, np.tan(x)
    ct, st = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [ct, -sec * st, tan * st],
            [0.0, 0.0, 1.0],
            [st, sec * ct, -tan * ct],
        ]
    )


def coframe_at(x: float, theta: float) -> np.ndarray:
    """Rows are omega^1, omega^2, omega^3 over (dx, dy, dtheta)."""
    cx, sx = np.cos(x), np.sin(x)
    ct, st = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [ct, -cx * st, 0.0],
            [0.0, sx, 1.0],
            [st, cx * ct, 0.0],
        ]
    )


def spherical_projection(g: GroupPoint | np.ndarray) -> np.ndarray:
    """n = R e1 = (cos x cos y, cos x sin y, sin x)."""
    r = g.matrix if isinstance(g, GroupPoint) else np.asarray(g)
    return np.array(r[..., :, 0], dtype=float)


def sphere_point(x, y) -> np.ndarray:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return np.stack([np.cos(x) * np.cos(y), np.cos(x) * np.sin(y), np.sin(x)], axis=-1)


def reorthonormalize(r: np.ndarray) -> np.ndarray:
    """Nearest rotation in Frobenius norm (polar factor)."""
    u, _, vt = np.linalg.svd(r)
    q = u @ vt
    if np.linalg.det(q) < 0:
        u[:, -1] *= -1
        q = u @ vt
    return q


def orthogonality_drift(r: np.ndarray) -> float:
    return float(np.max(np.abs(r.T @ r - np.eye(3))))


def matrix_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius distance between two rotation matrices."""
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))
