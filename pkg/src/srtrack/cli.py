"""Command-line entry point.

Every subcommand validates its arguments before computing and writes its
effective configuration next to its output (``<out>.json``).  A JSON file
given with ``--config`` supplies defaults that explicit flags override.

Exit codes: 0 success, 1 failed verification, 2 configuration error,
3 numerical failure, 4 unreachable endpoint.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import cost as K
from . import eikonal as E
from . import geodesics as G
from . import optics
from . import tracking as T

log = logging.getLogger("srtrack")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC, EXIT_UNREACHABLE = 0, 1, 2, 3, 4


# --------------------------------------------------------------------------
# argument helpers


def floats(n: int | None = None):
    def parse(text: str):
        try:
            vals = [float(v) for v in str(text).split(",")]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
        if n is not None and len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} values, got {len(vals)}")
        return vals

    return parse


def ints(n: int):
    def parse(text: str):
        vals = floats(n)(text)
        if any(v != int(v) or v <= 0 for v in vals):
            raise argparse.ArgumentTypeError(f"expected {n} positive integers, got {text!r}")
        return [int(v) for v in vals]

    return parse


def eye_model(vals) -> optics.EyeModel:
    a, c, eta = vals
    return optics.EyeModel(a=a, c_eye=c, eta=eta)


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def effective_config(args) -> dict:
    return {k: _jsonable(v) for k, v in vars(args).items() if k not in ("func", "config")}


def write_sidecar(out, args, **extra):
    meta = {"command": args.command, "config": effective_config(args)}
    meta.update(_jsonable(extra))
    with open(str(out) + ".json", "w") as f:
        json.dump(meta, f, indent=2)


def _emit(args, payload: dict):
    text = json.dumps(_jsonable(payload), indent=2)
    if getattr(args, "out", None):
        Path(args.out).write_text(text + "\n")
        write_sidecar(args.out, args)
    print(text)


# --------------------------------------------------------------------------
# optics, geodesics


def cmd_optics(args) -> int:
    eye = optics.EyeModel(a=args.eye[0], c_eye=args.eye[1], eta=args.eye[2],
                          psi_max=args.psi, r_eye=args.radius)
    _emit(args, optics.report(eye, n=args.n))
    return EXIT_OK


def _momentum(args) -> np.ndarray:
    if abs(args.h2) > 1:
        raise E.ConfigError("|h2| must not exceed 1 on H = 1/2")
    h1 = args.h1_sign * args.xi * math.sqrt(1.0 - args.h2**2)
    return np.array([h1, args.h2, args.h3])


def cmd_geodesic(args) -> int:
    if args.end <= 0 or args.n < 2:
        raise E.ConfigError("need --end > 0 and --n >= 2")
    params = np.linspace(0.0, args.end, args.n)
    if args.method == "closed-form":
        if args.param == "t":
            path = G.geodesic_closed_form_t(_momentum(args), args.xi, params)
        else:
            if args.h1_sign < 0:
                raise E.ConfigError("the s-parametrised branch needs h1 > 0")
            path = G.geodesic_closed_form_s(args.h2, args.h3, args.xi, params)
    else:
        if args.param == "t":
            path = G.hamiltonian_flow_t(_momentum(args), args.xi, args.end, n_out=args.n)
        else:
            # integrate in t far enough, then switch to s
            t_end = G.sr_length_s(args.h2, args.h3, args.xi, args.end)
            full = G.reparametrize(G.hamiltonian_flow_t(_momentum(args), args.xi, t_end), "s")
            # keep the RK4 samples nearest to the requested s values
            keep = np.unique(np.clip(np.searchsorted(full.param, params), 0, len(full.param) - 1))
            path = G.GeodesicPath(full.param[keep], full.matrices[keep], full.momenta[keep],
                                  full.xi, "s", full.provenance, full.flags[keep])
    G.write_csv(args.out, path)
    write_sidecar(args.out, args, samples=len(path.param))
    return EXIT_OK


def cmd_cusp(args) -> int:
    sm = G.cusp_time_smax(args.h2, args.h3, args.xi)
    _emit(args, {"xi": args.xi, "h2": args.h2, "h3": args.h3,
                 "s_max": sm if math.isfinite(sm) else None, "finite": math.isfinite(sm)})
    return EXIT_OK


def cmd_wavefront(args) -> int:
    if args.T < 0:
        raise E.ConfigError("T must be non-negative")
    pts = G.wavefront_sample(args.xi, args.T, n=args.n, c_max=args.c_max)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y", "theta"])
        for p in pts:
            w.writerow([f"{v:.12g}" for v in p])
    write_sidecar(args.out, args, points=len(pts))
    return EXIT_OK


# --------------------------------------------------------------------------
# fast marching and tracking


def _grid_for(args, field: K.CostField | None) -> E.Grid3D:
    nx, ny, nt = args.grid
    if field is not None:
        if field.preset != args.preset:
            raise E.ConfigError("cost file preset differs from --preset")
        if field.values.shape != (nx, ny):
            raise E.ConfigError(f"cost lattice {field.values.shape} != grid {(nx, ny)}")
        hx, hy = -float(field.xs[0]), -float(field.ys[0])
        if args.preset == "se2":
            return E.Grid3D.se2(nx, ny, nt, hx, hy)
        return E.Grid3D.so3_box(hx, hy, nx, ny, nt)
    if args.preset == "se2":
        if args.half is None:
            raise E.ConfigError("--half X,Y is required for the se2 preset")
        return E.Grid3D.se2(nx, ny, nt, *args.half)
    if args.half is not None:
        return E.Grid3D.so3_box(args.half[0], args.half[1], nx, ny, nt)
    return E.Grid3D.so3(nx, ny, nt)


def cmd_fastmarch(args) -> int:
    field = K.read_cost(args.cost) if args.cost else None
    grid = _grid_for(args, field)
    if field is not None:
        if not (np.allclose(field.xs, grid.coords(0)) and np.allclose(field.ys, grid.coords(1))):
            raise E.ConfigError("cost lattice does not match the grid")
    spec = E.MetricSpec(args.xi, args.eps, args.preset, args.cuspless)
    seed = grid.index_of(args.seed)
    dist = E.solve(spec, grid, seed=seed, cost=None if field is None else field.values,
                   stop_value=args.stop if args.stop is not None else np.inf,
                   refine_source=args.refine, scheme=args.scheme)
    E.write_grid(args.out, dist, extra={"command": "fastmarch", "config": effective_config(args)})
    reached = int(np.isfinite(dist.W).sum())
    log.info("reached %d of %d nodes", reached, dist.W.size)
    return EXIT_OK


def cmd_track(args) -> int:
    dist = E.read_grid(args.dist)
    if args.cuspless and not dist.metric.cuspless:
        raise E.ConfigError("--cuspless needs a map computed with fastmarch --cuspless")
    eye = eye_model(args.eye)
    if args.cuspless:
        tr = T.backtrack_cuspless(dist, args.end)
    else:
        tr = T.backtrack(dist, args.end, full=args.full)
    T.planar_curvature(tr, eye)
    T.write_track_csv(args.out, tr, eye)
    write_sidecar(args.out, args, samples=len(tr), W=float(tr.W[0]),
                  sr_length=tr.sr_length())
    return EXIT_OK


def cmd_cost(args) -> int:
    eye = eye_model(args.eye)
    values = K.load_image(args.image)
    image = K.ScalarImage.in_view(values, eye)
    vf = K.vesselness(image, scales=tuple(args.scales), beta=args.beta, c=args.c)
    vfi = K.ScalarImage(vf, image.origin, image.pixel)
    grid = K.image_grid(image, eye, args.grid[0], args.grid[1], 1, args.preset)
    field = K.cost_for_grid(vfi, args.lam, eye, grid)
    K.write_cost(args.out, field, extra={"command": "cost", "config": effective_config(args)})
    return EXIT_OK


# --------------------------------------------------------------------------
# comparisons


def _planar(track: T.Track, eye: optics.EyeModel) -> np.ndarray:
    if track.preset == "se2":
        return track.chart[:, :2].copy()
    X, Y = optics.project_to_plane(track.chart[:, 0], track.chart[:, 1], eye)
    return np.stack([X, Y], axis=1)


def _hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    from scipy.spatial.distance import directed_hausdorff

    return float(max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0]))


def _curvature_stats(k: np.ndarray) -> dict:
    k = k[np.abs(k) < T.KAPPA_SENTINEL]
    if len(k) == 0:
        return {"mean_abs": None, "max_abs": None}
    return {"mean_abs": float(np.mean(np.abs(k))), "max_abs": float(np.max(np.abs(k)))}


def compare_se2_so3(v0, v1, xi: float, eye: optics.EyeModel = optics.EyeModel(),
                    dims=(61, 61, 48), eps: float = 0.1, half_so3: float | None = None):
    """SE(2) and SO(3) tracks between planar boundary conditions.

    ``v0`` and ``v1`` are (X, Y, Theta) in the camera plane.  Returns the two
    tracks (or None for a trivial problem) and a report dictionary.
    """
    lim = eye.x_max
    for v in (v0, v1):
        if abs(v[0]) > lim or abs(v[1]) > lim:
            raise optics.OutOfViewError(f"{tuple(v[:2])} outside the field of view |X|, |Y| <= {lim:.4g}")
    if np.allclose(v0, v1):
        return None, None, {"trivial": True}
    nx, ny, nt = dims
    g2 = E.Grid3D.se2(nx, ny, nt, lim, lim)
    d2 = E.se2_solve(E.MetricSpec(xi, eps, "se2"), g2, seed=g2.index_of(v0))
    t2 = T.backtrack(d2, np.asarray(v1, dtype=float))

    def lift(v):
        x, y = optics.unproject_to_sphere(v[0], v[1], eye)
        return np.array([x, y, optics.lift_direction(v[0], v[1], v[2], eye)])

    nu0, nu1 = lift(v0), lift(v1)
    h = eye.y_max if half_so3 is None else half_so3
    g3 = E.Grid3D.so3_box(h, h, nx, ny, nt)
    d3 = E.solve(E.MetricSpec(xi, eps), g3, seed=g3.index_of(nu0))
    t3 = T.backtrack(d3, nu1)
    for tr in (t2, t3):
        T.planar_curvature(tr, eye)
    P2, P3 = _planar(t2, eye), _planar(t3, eye)
    cell = min(g2.spacing[:2])
    report = {
        "trivial": False,
        "nu0": nu0.tolist(), "nu1": nu1.tolist(),
        "W_se2": float(t2.W[0]), "W_so3": float(t3.W[0]),
        "end_mismatch_se2": float(np.hypot(*(P2[-1] - np.asarray(v0[:2])))),
        "end_mismatch_so3": float(np.hypot(*(P3[-1] - np.asarray(v0[:2])))),
        "hausdorff": _hausdorff(P2, P3), "hausdorff_cells": _hausdorff(P2, P3) / cell,
        "kappa_g_se2": _curvature_stats(t2.kappa_g), "kappa_g_so3": _curvature_stats(t3.kappa_g),
        "kappa_planar_se2": _curvature_stats(t2.kappa_planar),
        "kappa_planar_so3": _curvature_stats(t3.kappa_planar),
    }
    return t2, t3, report


def cmd_compare(args) -> int:
    eye = eye_model(args.eye)
    t2, t3, report = compare_se2_so3(args.start, args.end, args.xi, eye, tuple(args.grid), args.eps)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if t2 is not None:
        T.write_track_csv(out / "se2_track.csv", t2, eye)
        T.write_track_csv(out / "so3_track.csv", t3, eye)
    report["config"] = effective_config(args)
    report["command"] = args.command
    (out / "report.json").write_text(json.dumps(_jsonable(report), indent=2) + "\n")
    print(json.dumps(_jsonable({k: v for k, v in report.items() if k != "config"}), indent=2))
    return EXIT_OK


def riemann_compare(field: K.CostField | None, grid: E.Grid3D, start, end, xi: float):
    """Tracks for eps = 1 (isotropic) and eps = 0.1 on the same cost."""
    cost = None if field is None else field.values
    seed = grid.index_of(start)
    out = {}
    for eps in (1.0, 0.1):
        d = E.solve(E.MetricSpec(xi, eps, grid.preset), grid, seed=seed, cost=cost)
        out[eps] = T.backtrack(d, np.asarray(end, dtype=float), full=eps == 1.0)
    return out


def cmd_riemann_compare(args) -> int:
    field = K.read_cost(args.cost) if args.cost else None
    grid = _grid_for(args, field)
    tracks = riemann_compare(field, grid, args.start, args.end, args.xi)
    eye = eye_model(args.eye)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {}
    for eps, tr in tracks.items():
        name = "riemann" if eps == 1.0 else "sr"
        T.write_track_csv(out / f"{name}_track.csv", tr, eye)
        report[name] = {"eps": eps, "W": float(tr.W[0]), "samples": len(tr),
                        "mean_cost": float(np.mean(tr.cost)),
                        "rotation": float(np.trapezoid(np.abs(tr.controls[:, 1]), tr.tau) * tr.W[0])}
    a, b = tracks[0.1].chart[:, :2], tracks[1.0].chart[:, :2]
    report["hausdorff_cells"] = _hausdorff(a, b) / min(grid.spacing[:2])
    report["config"] = effective_config(args)
    report["command"] = args.command
    (out / "report.json").write_text(json.dumps(_jsonable(report), indent=2) + "\n")
    print(json.dumps(_jsonable({k: v for k, v in report.items() if k != "config"}), indent=2))
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import acceptance

    numbers = args.criteria or sorted(acceptance.CRITERIA)
    unknown = [n for n in numbers if n not in acceptance.CRITERIA]
    if unknown:
        raise E.ConfigError(f"unknown criteria {unknown}")
    results = []
    for n in numbers:
        r = acceptance.CRITERIA[n]()
        print(r.line(), flush=True)
        results.append(r)
    verdict = {"passed": all(r.passed for r in results),
               "criteria": [r.as_dict() for r in results]}
    if args.out:
        Path(args.out).write_text(json.dumps(verdict, indent=2) + "\n")
        write_sidecar(args.out, args)
    return EXIT_OK if verdict["passed"] else EXIT_FAILED


# --------------------------------------------------------------------------
# parser


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    p = argparse.ArgumentParser(prog="srtrack", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file with defaults for the subcommand")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    subs = {}

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        subs[name] = sp
        return sp

    eye_help = "schematic eye a,c,eta"

    sp = add("optics", cmd_optics, "field-of-view report of the eye model")
    sp.add_argument("action", choices=["report"])
    sp.add_argument("--eye", type=floats(3), default=[13 / 21, 0.8, 1.0], help=eye_help)
    sp.add_argument("--psi", type=float, default=math.pi / 8, help="maximal scanning angle")
    sp.add_argument("--radius", type=float, default=1.0, help="eye radius R")
    sp.add_argument("--n", type=int, default=201)
    sp.add_argument("--out")

    sp = add("geodesic", cmd_geodesic, "closed-form or integrated geodesic as CSV")
    sp.add_argument("--xi", type=float, required=True)
    sp.add_argument("--h2", type=float, required=True)
    sp.add_argument("--h3", type=float, required=True)
    sp.add_argument("--h1-sign", type=int, choices=[-1, 1], default=1)
    sp.add_argument("--param", choices=["t", "s"], default="t")
    sp.add_argument("--method", choices=["closed-form", "ode"], default="closed-form")
    sp.add_argument("--end", type=float, required=True, help="final t or s")
    sp.add_argument("--n", type=int, default=201)
    sp.add_argument("--out", required=True)

    sp = add("cusp", cmd_cusp, "first cusp time s_max")
    sp.add_argument("--xi", type=float, required=True)
    sp.add_argument("--h2", type=float, required=True)
    sp.add_argument("--h3", type=float, required=True)
    sp.add_argument("--out")

    sp = add("wavefront", cmd_wavefront, "wavefront point cloud at SR length T")
    sp.add_argument("--xi", type=float, required=True)
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--n", type=int, default=64)
    sp.add_argument("--c-max", type=float, default=40.0)
    sp.add_argument("--out", required=True)

    def grid_args(sp, default):
        sp.add_argument("--preset", choices=sorted(E.PRESETS), default="so3")
        sp.add_argument("--grid", type=ints(3), default=default, help="NX,NY,NT")
        sp.add_argument("--half", type=floats(2), help="half-widths of an (x, y) box")
        sp.add_argument("--cost", help="2D cost file written by the cost subcommand")

    sp = add("fastmarch", cmd_fastmarch, "distance map from a seed")
    grid_args(sp, [101, 201, 201])
    sp.add_argument("--xi", type=float, required=True)
    sp.add_argument("--eps", type=float, default=0.1)
    sp.add_argument("--seed", type=floats(3), default=[0.0, 0.0, 0.0], help="chart point x,y,theta")
    sp.add_argument("--cuspless", action="store_true")
    sp.add_argument("--stop", type=float, help="stop once W exceeds this value")
    sp.add_argument("--scheme", choices=["hybrid", "lbr", "sl26", "sl98", "hybrid98"],
                    default="hybrid")
    sp.add_argument("--refine", action="store_true", help="refine the source neighbourhood")
    sp.add_argument("--out", required=True)

    sp = add("track", cmd_track, "backtrack a geodesic from an endpoint")
    sp.add_argument("--dist", required=True)
    sp.add_argument("--end", type=floats(3), required=True, help="chart point x,y,theta")
    sp.add_argument("--cuspless", action="store_true")
    sp.add_argument("--full", action="store_true", help="keep the X3 gradient term")
    sp.add_argument("--eye", type=floats(3), default=[13 / 21, 0.8, 1.0], help=eye_help)
    sp.add_argument("--out", required=True)

    sp = add("cost", cmd_cost, "vesselness cost from an image")
    sp.add_argument("--image", required=True)
    sp.add_argument("--scales", type=floats(), default=list(K.DEFAULT_SCALES))
    sp.add_argument("--beta", type=float, default=0.3)
    sp.add_argument("--c", type=float, default=0.3)
    sp.add_argument("--lambda", dest="lam", type=float, default=50.0)
    sp.add_argument("--eye", type=floats(3), default=[13 / 21, 0.8, 1.0], help=eye_help)
    sp.add_argument("--grid", type=ints(2), default=[101, 101], help="NX,NY of the cost lattice")
    sp.add_argument("--preset", choices=sorted(E.PRESETS), default="so3")
    sp.add_argument("--out", required=True)

    sp = add("compare", cmd_compare, "SE(2) versus SO(3) tracks between planar conditions")
    sp.add_argument("--start", type=floats(3), required=True, help="X,Y,Theta")
    sp.add_argument("--end", type=floats(3), required=True, help="X,Y,Theta")
    sp.add_argument("--xi", type=float, default=1.0)
    sp.add_argument("--eps", type=float, default=0.1)
    sp.add_argument("--eye", type=floats(3), default=[13 / 21, 0.8, 1.0], help=eye_help)
    sp.add_argument("--grid", type=ints(3), default=[61, 61, 48])
    sp.add_argument("--out-dir", required=True)

    sp = add("riemann-compare", cmd_riemann_compare, "isotropic versus SR tracks on one cost")
    grid_args(sp, [61, 61, 48])
    sp.add_argument("--start", type=floats(3), required=True, help="chart point x,y,theta")
    sp.add_argument("--end", type=floats(3), required=True, help="chart point x,y,theta")
    sp.add_argument("--xi", type=float, default=3.0)
    sp.add_argument("--eye", type=floats(3), default=[13 / 21, 0.8, 1.0], help=eye_help)
    sp.add_argument("--out-dir", required=True)

    sp = add("verify", cmd_verify, "run the acceptance criteria")
    sp.add_argument("--criteria", type=lambda s: [int(v) for v in s.split(",")],
                    help="comma-separated subset, default all")
    sp.add_argument("--out", help="JSON verdict file")
    return p, subs


def parse_args(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        with open(known.config) as f:
            cfg = json.load(f)
        if not isinstance(cfg, dict):
            raise E.ConfigError("config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        for sp in subs.values():
            for a in sp._actions:
                if a.dest in cfg:
                    a.required = False
            valid = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in cfg.items() if k in valid})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except (E.ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"srtrack: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except T.UnreachableError as exc:
        print(f"srtrack: unreachable endpoint: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    except (ArithmeticError, T.StallError, G.CuspError, G.PastCuspError) as exc:
        print(f"srtrack: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (E.ConfigError, optics.OutOfViewError, ValueError, OSError) as exc:
        print(f"srtrack: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
