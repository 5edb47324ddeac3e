import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srtrack import optics as O

EYE = O.EyeModel()
inside = st.floats(-0.6, 0.6)


@given(inside, inside)
def test_sphere_round_trip(x, y):
    X, Y = O.project_to_plane(x, y, EYE)
    x2, y2 = O.unproject_to_sphere(X, Y, EYE)
    assert x2 == pytest.approx(x, abs=1e-12)
    assert y2 == pytest.approx(y, abs=1e-12)


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(0.5, 3.0))
def test_plane_round_trip_with_scale(X, Y, eta):
    eye = O.EyeModel(eta=eta)
    assert np.allclose(O.project_to_plane(*O.unproject_to_sphere(X, Y, eye), eye), (X, Y),
                       atol=1e-12)


@given(inside, inside)
def test_jacobian_matches_finite_differences(x, y):
    h = 1e-6
    J = O.jacobian_matrix(x, y, EYE)
    fd = np.column_stack([
        (np.array(O.project_to_plane(x + h, y, EYE)) - O.project_to_plane(x - h, y, EYE)) / (2 * h),
        (np.array(O.project_to_plane(x, y + h, EYE)) - O.project_to_plane(x, y - h, EYE)) / (2 * h),
    ])
    assert np.allclose(J, fd, atol=1e-7)
    # area element on the sphere is cos(x) dx dy
    assert np.linalg.det(J) == pytest.approx(float(O.local_jacobian(x, y, EYE)), rel=1e-10)


@given(st.floats(-0.4, 0.4), st.floats(-0.4, 0.4), st.floats(-math.pi, math.pi))
def test_lift_and_heading_are_inverse(X, Y, Theta):
    th = O.lift_direction(X, Y, Theta, EYE)
    x, y = O.unproject_to_sphere(X, Y, EYE)
    back = O.planar_heading(x, y, th, EYE)
    assert abs(math.remainder(back - Theta, 2 * math.pi)) < 1e-9


def test_lift_at_centre_is_identity():
    for T in (-1.0, 0.0, 0.5, 2.0):
        assert O.lift_direction(0.0, 0.0, T, EYE) == pytest.approx(T)


def test_golden_values():
    assert EYE.y_max == pytest.approx(0.63, abs=0.01)
    assert float(O.local_jacobian(0.0, 0.0, EYE)) == pytest.approx(0.77, abs=0.01)
    gd, flag = O.global_distortion(EYE.y_max, EYE)
    assert gd == pytest.approx(0.07, abs=0.005) and not flag


def test_global_distortion_limit_and_convention():
    assert O.global_distortion(0.0, EYE) == (0.0, True)
    lim = 1.0 - EYE.ac / (1.0 + EYE.a)
    assert O.global_distortion(1e-6, EYE)[0] == pytest.approx(lim, rel=1e-6)


def test_report_keys():
    r = O.report(EYE, n=51)
    assert set(r) == {"y_max", "J_min", "J_max", "GD_max", "GD_at_y_max"}
    assert r["J_min"] <= r["J_max"]


def test_errors():
    with pytest.raises(O.OutOfViewError):
        O.project_to_plane(0.0, 3.0, EYE)
    with pytest.raises(ValueError):
        O.EyeModel(a=1.5)
    with pytest.raises(ValueError):
        O.EyeModel(eta=0.0)
