import json

import numpy as np
import pytest

from srtrack import acceptance, cli
from srtrack import cost as K
from srtrack import eikonal as E


@pytest.fixture(scope="module")
def fm_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("fm") / "w.bin"
    assert cli.main(["fastmarch", "--xi", "1.5", "--grid", "31,61,61", "--stop", "1.5",
                     "--out", str(out)]) == 0
    return out


def test_optics_report(tmp_path, capsys):
    out = tmp_path / "o.json"
    assert cli.main(["optics", "report", "--n", "51", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["y_max"] == pytest.approx(0.63, abs=0.01)
    side = json.loads((tmp_path / "o.json.json").read_text())
    assert side["command"] == "optics" and side["config"]["n"] == 51
    assert json.loads(capsys.readouterr().out) == rep


@pytest.mark.parametrize("param, method", [("t", "closed-form"), ("t", "ode"),
                                           ("s", "closed-form"), ("s", "ode")])
def test_geodesic_csv(tmp_path, param, method):
    out = tmp_path / "g.csv"
    assert cli.main(["geodesic", "--xi", "1.5", "--h2", "0.3", "--h3", "0.2", "--param", param,
                     "--method", method, "--end", "0.5", "--n", "11", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 13


def test_geodesic_methods_agree(tmp_path):
    rows = {}
    for method in ("closed-form", "ode"):
        out = tmp_path / f"{method}.csv"
        cli.main(["geodesic", "--xi", "2", "--h2", "-0.4", "--h3", "1", "--end", "1",
                  "--method", method, "--out", str(out)])
        rows[method] = np.loadtxt(out, delimiter=",", skiprows=2)
    assert np.allclose(rows["closed-form"][:, 4:7], rows["ode"][:, 4:7], atol=1e-6)


def test_cusp(capsys):
    assert cli.main(["cusp", "--xi", "1.5", "--h2", "0.45", "--h3", "0"]) == 0
    assert "s_max" in capsys.readouterr().out


def test_wavefront(tmp_path):
    out = tmp_path / "wf.csv"
    assert cli.main(["wavefront", "--xi", "1", "--T", "0.5", "--n", "8", "--out", str(out)]) == 0
    assert (tmp_path / "wf.csv.json").exists()


def test_fastmarch_and_track(tmp_path, fm_file):
    d = E.read_grid(fm_file)
    assert d.W[15, 30, 30] == 0.0
    meta = json.loads((fm_file.parent / "w.bin.json").read_text())
    assert meta["config"]["xi"] == 1.5
    out = tmp_path / "t.csv"
    assert cli.main(["track", "--dist", str(fm_file), "--end", "0.5,0.1,0.2",
                     "--out", str(out)]) == 0
    side = json.loads((tmp_path / "t.csv.json").read_text())
    assert side["W"] > 0 and side["samples"] > 2


def test_exit_codes(tmp_path, fm_file):
    out = str(tmp_path / "x")
    # unreachable endpoint
    assert cli.main(["track", "--dist", str(fm_file), "--end", "0,3,0", "--out", out]) == 4
    # map without the cuspless flag
    assert cli.main(["track", "--dist", str(fm_file), "--end", "0.5,0,0", "--cuspless",
                     "--out", out]) == 2
    # |h2| > 1
    assert cli.main(["geodesic", "--xi", "1", "--h2", "1.5", "--h3", "0", "--end", "1",
                     "--out", out]) == 2
    # past the first cusp
    assert cli.main(["geodesic", "--xi", "1.5", "--h2", "0.9", "--h3", "1", "--param", "s",
                     "--end", "5", "--out", out]) == 3
    # bad arguments and missing files
    assert cli.main(["fastmarch", "--xi", "1", "--grid", "30,61,61", "--out", out]) == 2
    assert cli.main(["fastmarch", "--xi", "1", "--eps", "2", "--out", out]) == 2
    assert cli.main(["track", "--dist", str(tmp_path / "none"), "--end", "0,0,0",
                     "--out", out]) == 2
    assert cli.main(["nope"]) == 2
    assert cli.main(["compare", "--start=2,0,0", "--end=0,0,0", "--out-dir", out]) == 2


def test_config_file_supplies_defaults(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"xi": 2.0, "h2": 0.1, "h3": 0.0, "end": 0.3, "n": 5}))
    out = tmp_path / "g.csv"
    assert cli.main(["--config", str(cfg), "geodesic", "--n", "7", "--out", str(out)]) == 0
    side = json.loads((tmp_path / "g.csv.json").read_text())
    assert side["config"]["xi"] == 2.0 and side["config"]["n"] == 7
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert cli.main(["--config", str(bad), "cusp", "--xi", "1", "--h2", "0", "--h3", "0"]) == 2


def test_cost_then_fastmarch(tmp_path):
    img = K.tube_image((41, 41), [[(20.0, 3.0), (20.0, 37.0)]])
    f = tmp_path / "img.png"
    K.save_image(f, img)
    c = tmp_path / "c.bin"
    assert cli.main(["cost", "--image", str(f), "--grid", "21,21", "--lambda", "5",
                     "--out", str(c)]) == 0
    field = K.read_cost(c)
    assert field.values.min() < 0.5
    out = tmp_path / "w.bin"
    assert cli.main(["fastmarch", "--xi", "2", "--grid", "21,21,16", "--cost", str(c),
                     "--out", str(out)]) == 0
    assert cli.main(["fastmarch", "--xi", "2", "--grid", "23,21,16", "--cost", str(c),
                     "--out", str(out)]) == 2


def test_compare(tmp_path, capsys):
    d = tmp_path / "cmp"
    assert cli.main(["compare", "--start=-0.15,0,0", "--end=0.15,0.05,0", "--xi", "2",
                     "--out-dir", str(d)]) == 0
    rep = json.loads((d / "report.json").read_text())
    assert not rep["trivial"]
    assert rep["hausdorff_cells"] < 2.0
    assert (d / "se2_track.csv").exists() and (d / "so3_track.csv").exists()
    assert cli.main(["compare", "--start=0,0,0", "--end=0,0,0", "--out-dir", str(d)]) == 0
    assert json.loads((d / "report.json").read_text())["trivial"]


def test_verify(tmp_path, monkeypatch):
    out = tmp_path / "v.json"
    assert cli.main(["verify", "--criteria", "1,2", "--out", str(out)]) == 0
    v = json.loads(out.read_text())
    assert v["passed"] and [c["number"] for c in v["criteria"]] == [1, 2]
    failing = acceptance.Result(99, "stub", False)
    monkeypatch.setitem(acceptance.CRITERIA, 99, lambda: failing)
    assert cli.main(["verify", "--criteria", "99"]) == 1
    assert cli.main(["verify", "--criteria", "123"]) == 2


def test_deterministic_output(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"w{k}.bin"
        cli.main(["fastmarch", "--xi", "1.2", "--grid", "21,41,41", "--stop", "1",
                  "--out", str(out)])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
