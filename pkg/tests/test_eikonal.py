import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srtrack import eikonal as E
from srtrack import lie_so3 as L

XI = 1.5
C = (20, 40, 40)  # seed index on the 41 x 81 x 81 grid


def cell_W(grid):
    return XI * grid.spacing[0]


@given(st.floats(-1.4, 1.4), st.floats(-math.pi, math.pi), st.floats(0.2, 3.0),
       st.floats(0.05, 1.0), st.floats(0.5, 2.0))
def test_metric_and_inverse(x, th, xi, eps, c):
    m, minv = E.assemble_metric(x, th, E.MetricSpec(xi, eps), c)
    assert np.allclose(m @ minv, np.eye(3), atol=1e-8 * np.abs(m).max() * np.abs(minv).max())
    assert np.allclose(m, m.T)
    # the frame is orthogonal with norms C xi, C, C xi / eps
    fr = L.frame_at(x, th)
    assert np.allclose(np.diag(fr @ m @ fr.T), c * c * np.array([xi * xi, 1.0, xi * xi / eps**2]))


def test_straight_line_is_exact(so3_map):
    g = so3_map.grid
    for k in (3, 6, 10):
        assert so3_map.W[C[0] + k, C[1], C[2]] == pytest.approx(XI * k * g.spacing[0], rel=1e-9)
    assert so3_map.W[C] == 0.0


def test_lbr_is_causal(so3_grid):
    d = E.solve(E.MetricSpec(XI, 0.1), so3_grid, stop_value=1.0, scheme="lbr")
    assert d.stats["reopened"] == 0
    assert d.stats["max_causality_violation"] == 0.0


@pytest.mark.parametrize("scheme", ["sl26", "sl98", "hybrid98"])
def test_schemes_agree_on_straight_line(so3_grid, so3_map, scheme):
    d = E.solve(E.MetricSpec(XI, 0.1), so3_grid, stop_value=1.0, scheme=scheme)
    assert d.W[C[0] + 6, C[1], C[2]] == pytest.approx(so3_map.W[C[0] + 6, C[1], C[2]])


def test_uniform_cost_scales_distance(so3_grid, so3_map):
    d = E.solve(E.MetricSpec(XI, 0.1), so3_grid, stop_value=3.0, cost=1.5)
    m = np.isfinite(so3_map.W) & (so3_map.W > 0) & (so3_map.W < 1.8)
    assert np.abs(d.W[m] / so3_map.W[m] - 1.5).max() < 1e-3


@pytest.mark.parametrize("flip", [(0, 2), (1, 2)])
def test_mirror_symmetry(so3_map, flip):
    # (x, theta) -> (-x, -theta) and (y, theta) -> (-y, -theta) are isometries
    W = so3_map.W
    Wm = np.flip(W, axis=flip)
    m = (W < 1.5) & (Wm < 1.5)
    assert np.abs(W[m] - Wm[m]).max() < 0.5 * cell_W(so3_map.grid)


def test_more_isotropy_never_costs_more(so3_grid, so3_map):
    d = E.solve(E.MetricSpec(XI, 0.5), so3_grid, stop_value=2.0)
    m = so3_map.W < 1.5
    assert np.all(d.W[m] <= so3_map.W[m] + 1e-12)


def test_cuspless_forward_only(so3_map, cuspless_map):
    ahead = (C[0] + 6, C[1], C[2])
    behind = (C[0] - 6, C[1], C[2])
    assert cuspless_map.W[ahead] == pytest.approx(so3_map.W[ahead])
    assert cuspless_map.W[behind] > 2.0 * so3_map.W[behind]
    # settled values only, up to the re-open tolerance of the solver
    m = cuspless_map.W < 2.0
    tol = E.REOPEN_TOL * so3_map.grid.min_cell
    assert np.all(cuspless_map.W[m] >= so3_map.W[m] - tol)


def test_source_refinement_keeps_line_exact(so3_grid):
    d = E.solve(E.MetricSpec(XI, 0.1), so3_grid, stop_value=1.0, refine_source=True,
                source_half=10)
    assert d.stats["source_nodes"] > 1
    assert d.W[C[0] + 6, C[1], C[2]] == pytest.approx(XI * 6 * so3_grid.spacing[0], rel=1e-6)


def test_se2_straight_line():
    g = E.Grid3D.se2(31, 31, 32, 1.0, 1.0)
    d = E.se2_solve(E.MetricSpec(2.0, 0.1), g, stop_value=1.0)
    assert d.W[15 + 5, 15, 16] == pytest.approx(2.0 * 5 * g.spacing[0])
    assert d.grid.preset == "se2" and d.metric.preset == "se2"


def test_interpolant_exact_at_nodes(so3_map):
    it = E.Interpolant(so3_map)
    g = so3_map.grid
    for idx in [(22, 41, 38), (18, 37, 44), (25, 40, 40)]:
        v, _, clamped = it.chart(g.node(idx))
        assert v == pytest.approx(so3_map.W[idx], abs=1e-12)
        assert not clamped


def test_frame_gradient_matches_finite_differences(so3_map):
    it = E.Interpolant(so3_map)
    p = np.array([0.17, 0.05, 0.3])
    _, grad, flagged = E.sample_W(it, p)
    assert not flagged
    fr = L.frame_at(p[0], p[2])
    h = 1e-5
    for i in range(3):
        fd = (it.chart(p + h * fr[i])[0] - it.chart(p - h * fr[i])[0]) / (2 * h)
        assert grad[i] == pytest.approx(fd, abs=1e-5)


def test_grid_round_trip(tmp_path, so3_map):
    f = tmp_path / "w.bin"
    E.write_grid(f, so3_map, extra={"note": 1})
    back = E.read_grid(f)
    assert np.array_equal(back.W, so3_map.W)
    assert back.grid == so3_map.grid and back.metric == so3_map.metric
    assert back.seed == so3_map.seed


def test_nonuniform_cost_round_trip(tmp_path, so3_grid):
    c = np.ones(so3_grid.dims[:2])
    c[:5] = 2.0
    d = E.solve(E.MetricSpec(XI, 0.1), so3_grid, cost=c, stop_value=0.3)
    f = tmp_path / "w.bin"
    E.write_grid(f, d)
    assert np.array_equal(E.read_grid(f).cost, c)


def test_bad_file(tmp_path):
    f = tmp_path / "bad.bin"
    f.write_bytes(b"XXXX" + bytes(100))
    with pytest.raises(E.ConfigError):
        E.read_grid(f)


def test_index_of(so3_grid):
    assert so3_grid.index_of((0.0, 0.0, 0.0)) == C
    assert so3_grid.index_of((0.0, 2 * math.pi, -2 * math.pi)) == C
    with pytest.raises(E.ConfigError):
        so3_grid.index_of((2.0, 0.0, 0.0))


@pytest.mark.parametrize("make", [
    lambda g: E.MetricSpec(0.0),
    lambda g: E.MetricSpec(1.0, 0.0),
    lambda g: E.MetricSpec(1.0, 1.5),
    lambda g: E.MetricSpec(1.0, 0.1, "se3"),
    lambda g: E.Grid3D.so3(40, 81, 81),
    lambda g: E.Grid3D.so3_box(2.0, 0.5, 11, 11, 8),
    lambda g: E.solve(E.MetricSpec(1.0, 0.1, "se2"), g),
    lambda g: E.solve(E.MetricSpec(1.0), g, cost=-1.0),
    lambda g: E.solve(E.MetricSpec(1.0), g, cost=np.ones((3, 3))),
    lambda g: E.solve(E.MetricSpec(1.0), g, seed=(0, 0, 0)),
    lambda g: E.solve(E.MetricSpec(1.0), g, scheme="nope"),
])
def test_config_errors(so3_grid, make):
    with pytest.raises(E.ConfigError):
        make(so3_grid)
