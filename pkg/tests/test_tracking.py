import csv
import math

import numpy as np
import pytest

from srtrack import eikonal as E
from srtrack import geodesics as G
from srtrack import tracking as T

XI = 1.5


@pytest.fixture(scope="module")
def curved():
    p = G.geodesic_closed_form_s(0.45, 0.0, XI, np.linspace(0.0, 0.8, 500))
    return p


def test_great_circle_track(so3_map):
    tr = T.backtrack(so3_map, [0.6, 0.0, 0.0])
    assert tr.W[0] == pytest.approx(XI * 0.6)
    assert np.abs(tr.chart[:, 1:]).max() < 1e-3
    assert np.all(np.diff(tr.W) < 0)
    # the descent stops one cell short of the seed
    assert tr.sr_length() + tr.W[-1] == pytest.approx(tr.W[0], rel=0.01)


def test_curved_track_length_and_shape(so3_map, curved):
    tr = T.backtrack(so3_map, curved.chart[-1])
    assert np.all(np.diff(tr.W) < 0)
    assert tr.sr_length() + tr.W[-1] == pytest.approx(tr.W[0], rel=0.05)
    ang = np.arccos(np.clip(tr.sphere_points() @ curved.sphere.T, -1, 1)).min(axis=1)
    assert ang.max() < 2 * so3_map.grid.spacing[0]
    fw = tr.forward()
    assert fw.tau[-1] == 1.0 and np.allclose(fw.chart[-1], tr.chart[0])


def test_controls_reproduce_track(so3_map, curved):
    tr = T.backtrack(so3_map, curved.chart[-1])
    fw = T.integrate_controls(tr, tr.chart[-1])
    assert np.abs(fw[-1] - tr.chart[0]).max() < 0.1 * so3_map.grid.spacing[0]


def test_cuspless_controls_forward(cuspless_map, curved):
    tr = T.backtrack_cuspless(cuspless_map, curved.chart[-1])
    assert tr.controls[:, 0].min() >= 0.0
    assert np.all(np.diff(tr.W) < 0)


def test_endpoint_errors(so3_map):
    with pytest.raises(T.UnreachableError):
        T.backtrack(so3_map, [0.0, 3.0, 0.0])
    with pytest.raises(ValueError):
        T.backtrack(so3_map, [0.02, 0.0, 0.0])
    with pytest.raises(T.StallError):
        T.backtrack(so3_map, [0.6, 0.0, 0.05], tau_max=0.1)


def test_curvature_sentinel(so3_map):
    tr = T.backtrack(so3_map, [0.6, 0.0, 0.0])
    tr.grad[3] = [-1.0, 0.5, 0.0]
    k = T.geodesic_curvature(so3_map, tr)
    assert k[3] == T.KAPPA_SENTINEL
    assert tr.flags[3] & T.FLAG_CUSP
    assert np.abs(np.delete(k, 3)).max() < 1e-2


def test_sphere_curvature_of_exact_geodesic(curved):
    k = T.sphere_curvature(curved.sphere)
    ke = XI**2 * curved.momenta[:, 1] / curved.momenta[:, 0]
    assert np.allclose(k[5:-5], ke[5:-5], rtol=1e-3)


def test_planar_curvature_of_circle():
    r = 0.4
    a = np.linspace(0.0, math.pi, 400)
    chart = np.stack([r * np.cos(a), r * np.sin(a), np.zeros_like(a)], axis=1)
    n = len(a)
    tr = T.Track(np.linspace(0, 1, n), chart, np.zeros((n, 2)), np.zeros((n, 3)), np.ones(n),
                 np.ones(n), 1.0, "se2")
    k = T.planar_curvature(tr, smooth=0.0)
    # counter-clockwise in (X, Y) is clockwise in chart-aligned headings
    assert np.allclose(k[5:-5], -1.0 / r, rtol=1e-3)


def test_track_csv(tmp_path, so3_map, curved):
    tr = T.backtrack(so3_map, curved.chart[-1])
    f = tmp_path / "t.csv"
    T.write_track_csv(f, tr)
    lines = f.read_text().splitlines()
    assert lines[0].startswith("# xi=1.5 preset=so3")
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == T.TRACK_COLUMNS
    assert len(rows) == len(tr) + 1
    assert all(math.isfinite(float(v)) for row in rows[1:] for v in row)
