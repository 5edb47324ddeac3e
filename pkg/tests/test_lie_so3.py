import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from srtrack import lie_so3 as L

lat = st.floats(-1.5, 1.5)
ang = st.floats(-math.pi, math.pi)


def test_basis_brackets():
    assert np.allclose(L.bracket(L.A1, L.A2), L.A3)
    assert np.allclose(L.bracket(L.A2, L.A3), L.A1)
    assert np.allclose(L.bracket(L.A3, L.A1), L.A2)


@pytest.mark.parametrize("rot, A", [(L.rot_e1, L.A1), (L.rot_e2, L.A2), (L.rot_e3, L.A3)])
def test_one_parameter_subgroups(rot, A):
    for phi in (-2.0, 0.3, 1.7):
        assert np.allclose(rot(phi), expm(phi * A))


@given(lat, ang, ang)
def test_chart_matches_exponentials(x, y, th):
    ref = expm(y * L.A3) @ expm(-x * L.A2) @ expm(th * L.A1)
    assert np.allclose(L.rotation_from_angles(x, y, th).matrix, ref, atol=1e-12)


@given(lat, ang, ang)
def test_chart_round_trip(x, y, th):
    g = L.rotation_from_angles(x, y, th)
    x2, y2, t2 = L.angles_from_rotation(g.matrix)
    assert abs(x2 - x) < 1e-9
    assert abs(L.wrap_angle(y2 - y)) < 1e-9
    assert abs(L.wrap_angle(t2 - th)) < 1e-9


@given(lat, ang, ang)
def test_vectorized_matches_scalar(x, y, th):
    m = L.rotation_matrix(np.array([x]), np.array([y]), np.array([th]))[0]
    assert np.allclose(m, L.rotation_from_angles(x, y, th).matrix)
    diff = L.angles_from_matrices(m[None])[0] - np.array(L.angles_from_rotation(m))
    assert np.allclose(L.wrap_angle(diff), 0.0, atol=1e-12)


@given(lat, ang)
def test_frame_coframe_duality(x, th):
    assert np.allclose(L.coframe_at(x, th) @ L.frame_at(x, th).T, np.eye(3), atol=1e-9)


@settings(max_examples=30)
@given(lat, ang, ang)
def test_frame_is_left_invariant(x, y, th):
    # X_i at R is R A_i with A = (-A2, A1, A3); check by differentiating the chart
    R = L.rotation_matrix(x, y, th)
    fr = L.frame_at(x, th)
    h = 1e-6
    for row, A in zip(fr, (-L.A2, L.A1, L.A3)):
        q = np.array([x, y, th])
        dR = (L.rotation_matrix(*(q + h * row)) - L.rotation_matrix(*(q - h * row))) / (2 * h)
        assert np.allclose(dR, R @ A, atol=1e-6)


def test_gimbal_case():
    g = L.rotation_from_angles(math.pi / 2, 0.7, 0.2)
    assert g.degenerate
    assert g.y == 0.0
    assert np.allclose(L.rotation_from_angles(*g.chart).matrix, g.matrix)


def test_errors():
    with pytest.raises(L.ChartDomainError):
        L.rotation_from_angles(1.6, 0.0, 0.0)
    with pytest.raises(L.ChartSingularityError):
        L.frame_at(math.pi / 2, 0.0)


def test_wrap_angle():
    assert L.wrap_angle(math.pi) == pytest.approx(math.pi)
    assert L.wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert np.allclose(L.wrap_angle(np.array([3 * math.pi, 0.5])), [math.pi, 0.5])


def test_group_operations(rng):
    a = L.rotation_from_angles(0.3, -1.0, 2.0)
    b = L.rotation_from_angles(-0.4, 0.5, -0.1)
    assert np.allclose((a @ b).matrix, a.matrix @ b.matrix)
    assert np.allclose((a @ a.inverse()).matrix, np.eye(3), atol=1e-12)
    assert np.allclose(a.projection(), L.sphere_point(0.3, -1.0))


def test_reorthonormalize(rng):
    R = L.rotation_matrix(0.2, 0.4, -0.3)
    noisy = R + 1e-4 * rng.standard_normal((3, 3))
    Q = L.reorthonormalize(noisy)
    assert L.orthogonality_drift(Q) < 1e-12
    assert np.linalg.det(Q) == pytest.approx(1.0)
    assert L.matrix_distance(Q, R) < 1e-3
