import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srtrack import geodesics as G
from srtrack import lie_so3 as L


def momentum(beta, c, xi):
    return G.Momentum.from_pendulum(beta, c, xi).vec


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 4 * math.pi), st.floats(-3.0, 3.0), st.floats(0.4, 3.0))
def test_rk4_conserves_h_and_casimir(beta, c, xi):
    h0 = momentum(beta, c, xi)
    p = G.hamiltonian_flow_t(h0, xi, 1.0)
    H = 0.5 * (p.momenta[:, 0] ** 2 / xi**2 + p.momenta[:, 1] ** 2)
    M = np.linalg.norm(p.momenta, axis=1)
    assert np.abs(H - 0.5).max() < 1e-9
    assert np.abs(M - M[0]).max() < 1e-9
    assert max(L.orthogonality_drift(R) for R in p.matrices) < 1e-9


def test_rk4_step_limit():
    with pytest.raises(ValueError):
        G.hamiltonian_flow_t([1.0, 0.0, 0.0], 1.0, 1.0, step=1e-2)


def test_straight_line_and_rotation_in_place():
    # h = (xi, 0, 0): great circle at unit speed 1/xi; h = (0, 1, 0): pure rotation
    xi = 2.0
    p = G.geodesic_closed_form_t([xi, 0.0, 0.0], xi, [0.0, 1.0])
    assert p.chart[-1, 0] == pytest.approx(1.0 / xi, abs=1e-10)
    q = G.geodesic_closed_form_t([0.0, 1.0, 0.0], xi, [0.0, 0.7])
    assert np.allclose(q.matrices[-1], L.rot_e1(0.7))
    assert q.flags.all()


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 4 * math.pi), st.floats(-2.0, 2.0), st.floats(0.5, 3.0))
def test_closed_form_t_matches_rk4(beta, c, xi):
    h0 = momentum(beta, c, xi)
    ode = G.hamiltonian_flow_t(h0, xi, 1.5)
    cf = G.geodesic_closed_form_t(h0, xi, ode.param[::100])
    err = max(L.matrix_distance(a, b) for a, b in zip(cf.matrices, ode.matrices[::100]))
    assert err < 1e-7


def test_wrong_prefactor_is_detected():
    xi = 1.7
    h0 = momentum(1.0, 1.3, xi)
    ode = G.hamiltonian_flow_t(h0, xi, 2.0)
    bad = G.geodesic_closed_form_t(h0, xi, ode.param[-1:], scale=lambda M, xi: M / xi)
    assert L.matrix_distance(bad.matrices[0], ode.matrices[-1]) > 1e-3


def test_off_shell_momentum_rejected():
    with pytest.raises(ValueError):
        G.geodesic_closed_form_t([1.0, 1.0, 0.0], 1.0, [0.0, 1.0])


@pytest.mark.parametrize("xi", [0.6, 1.0, 2.5])
def test_vertical_solution_solves_linear_ode(xi):
    h20, h30 = 0.3, -0.4
    s = np.linspace(0.0, 0.5, 401)
    _, h2, h3 = G.vertical_solution_s(h20, h30, xi, s)
    ds = s[1] - s[0]
    assert np.allclose(np.gradient(h2, ds)[1:-1], h3[1:-1], atol=1e-4)
    h2pp = np.diff(h2, 2) / ds**2
    assert np.allclose(h2pp, (xi * xi - 1.0) * h2[1:-1], atol=1e-4)


@given(st.floats(-0.95, 0.95), st.floats(-2.0, 2.0), st.floats(0.3, 3.0))
def test_complex_and_real_vertical_forms_agree(h20, h30, xi):
    s = np.linspace(0.0, 0.9 * min(G.cusp_time_smax(h20, h30, xi), 2.0), 20)
    a = np.array(G.vertical_solution_s(h20, h30, xi, s))
    b = np.array(G.vertical_solution_s_complex(h20, h30, xi, s))
    assert np.allclose(a, b, atol=1e-10)


@given(st.floats(-0.95, 0.95), st.floats(-3.0, 3.0), st.floats(0.3, 3.0))
def test_cusp_time(h20, h30, xi):
    sm = G.cusp_time_smax(h20, h30, xi)
    if math.isfinite(sm):
        _, h2, _ = G.vertical_solution_s(h20, h30, xi, sm)
        assert abs(abs(float(h2)) - 1.0) < 1e-8
        _, h2in, _ = G.vertical_solution_s(h20, h30, xi, np.linspace(0, sm * (1 - 1e-6), 50))
        assert np.all(np.abs(h2in) < 1.0)


def test_no_cusp_for_straight_line():
    assert G.cusp_time_smax(0.0, 0.0, 1.5) == math.inf
    with pytest.raises(G.PastCuspError):
        G.cusp_time_smax(1.2, 0.0, 1.5)


@pytest.mark.parametrize("h20, h30, xi", [(0.3, 0.2, 0.6), (-0.5, 0.1, 0.8)])
def test_elliptic_integral_matches_quadrature(h20, h30, xi):
    s = np.linspace(0.1, 1.0, 5)
    assert np.allclose(G.ytilde_s_elliptic(h20, h30, xi, s),
                       G.ytilde_s_quadrature(h20, h30, xi, s), atol=1e-9)


def test_s_and_t_forms_agree():
    h20, h30, xi = 0.4, 0.3, 1.5
    sm = G.cusp_time_smax(h20, h30, xi)
    ss = np.linspace(0.0, min(0.8 * sm, 1.2), 9)
    cs = G.geodesic_closed_form_s(h20, h30, xi, ss)
    tt = [G.sr_length_s(h20, h30, xi, s) for s in ss]
    ct = G.geodesic_closed_form_t(G.Momentum.from_s_data(h20, h30, xi).vec, xi, tt)
    assert max(L.matrix_distance(a, b) for a, b in zip(cs.matrices, ct.matrices)) < 1e-7


def test_closed_form_s_rejects_past_cusp():
    sm = G.cusp_time_smax(0.9, 1.0, 1.5)
    with pytest.raises(G.PastCuspError):
        G.geodesic_closed_form_s(0.9, 1.0, 1.5, [0.0, sm + 0.1])


def test_sr_length_of_great_circle():
    # h2 = h3 = 0: kappa_g = 0 so t = xi s
    assert G.sr_length_s(0.0, 0.0, 1.5, 0.8) == pytest.approx(1.2, rel=1e-10)


def test_reparametrize_round_trip():
    h20, h30, xi = 0.2, 0.5, 1.3
    s = np.linspace(0.0, 1.0, 2001)
    ps = G.geodesic_closed_form_s(h20, h30, xi, s)
    pt = G.reparametrize(ps, "t")
    assert pt.param[-1] == pytest.approx(G.sr_length_s(h20, h30, xi, 1.0), rel=1e-6)
    tt = G.geodesic_closed_form_t(ps.momenta[0], xi, pt.param)
    back = G.reparametrize(tt, "s")
    assert np.allclose(back.param, s, atol=1e-5)
    assert G.reparametrize(ps, "s") is ps


def test_reparametrize_stops_at_cusp():
    xi, h2 = 4.5, 0.99
    p = G.geodesic_closed_form_t([xi * math.sqrt(1 - h2 * h2), h2, 5.0], xi,
                                 np.linspace(0.0, 1.5 * math.pi, 500))
    assert np.any(p.controls[:, 0] < 0)
    with pytest.raises(G.CuspError) as e:
        G.reparametrize(p, "s")
    assert p.controls[e.value.index, 0] <= 0
    with pytest.raises(ValueError):
        G.reparametrize(p, "q")


def test_pendulum_round_trip():
    h = G.Momentum(1.2, 0.3, -0.7)
    xi = h.h1 / math.sqrt(1 - h.h2**2)
    back = G.momentum_from_pendulum(G.pendulum_from_momentum(h, xi))
    assert np.allclose(back.vec, h.vec)
    assert h.H(xi) == pytest.approx(0.5)


@pytest.mark.parametrize("xi, kind", [(0.5, "elliptic"), (1.0, "linear"), (2.0, "hyperbolic")])
def test_chi_classes(xi, kind):
    c = G.ChiParam(xi)
    assert c.kind == kind
    assert c.chi**2 == pytest.approx(xi * xi - 1.0)


def test_wavefront_matches_rk4_endpoints():
    xi, T = 1.2, 0.8
    h0 = G.sample_momenta(6, 5, 10.0, xi)
    W = G.wavefront_batch(h0, xi, T)
    _, Rs, _, _ = G.hamiltonian_flow_t(h0, xi, T)
    assert max(L.matrix_distance(W[i], Rs[i, -1]) for i in range(len(h0))) < 1e-6
    assert G.wavefront_sample(xi, 0.0, n=8).shape == (64, 3)
    with pytest.raises(ValueError):
        G.wavefront_sample(xi, T, n=4)


def test_csv_output(tmp_path):
    p = G.geodesic_closed_form_s(0.2, 0.1, 1.5, np.linspace(0.0, 0.5, 11))
    f = tmp_path / "g.csv"
    G.write_csv(f, p)
    lines = f.read_text().splitlines()
    assert lines[0].startswith("# xi=1.5")
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == G.CSV_COLUMNS
    assert len(rows) == 12
    assert float(rows[-1][0]) == pytest.approx(0.5)
