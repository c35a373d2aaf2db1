"""Command-line entry point.

Exit codes: 0 success, 1 invalid scene, 2 numerical failure, 3 I/O error.
A scene argument is either a YAML file or ``builtin:<name>``.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from ..errors import (ConfigError, DecompositionError, InvertedElementError, NumericalFailure, SingularMomentError,
                      STLParseError)
from . import oracles
from .config import load_scene_file, scene_from_dict, scene_to_dict
from .output import write_probe_csv, write_vtk_points
from .scenes import BUILTIN, builtin_scene

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


def _load(arg, seed=None):
    if arg.startswith("builtin:"):
        scene = builtin_scene(arg.split(":", 1)[1])
    else:
        scene = load_scene_file(arg)
    if seed is not None:
        scene = dataclasses.replace(scene, seed=seed)
    return scene


def _out_dir(args, scene):
    return args.out or scene.output.dir or os.path.join("runs", scene.name)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    return str(o)


def cmd_run(args):
    from .runner import run

    scene = _load(args.scene, args.seed)
    out = _out_dir(args, scene)
    res = run(scene, out_dir=out, snapshot_every=args.snapshot_every)
    os.makedirs(out, exist_ok=True)
    np.savetxt(os.path.join(out, "dt_log.csv"), res.dt_log, delimiter=",", fmt="%.17e",
               header="time,dt,dt_p,dt_m", comments="")
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(res.summary, fh, indent=2, default=_json_default)
    print(json.dumps({k: v for k, v in res.summary.items() if k != "snapshots"}, default=_json_default))
    return EXIT_OK


def cmd_relax(args):
    from ..geometry import local_density, nearest_neighbor_cv
    from .runner import build_geometry

    scene = _load(args.scene, args.seed)
    g = scene.geometry
    start = build_geometry(dataclasses.replace(scene, geometry=dataclasses.replace(g, relax_steps=0)))
    geo = build_geometry(scene)
    cv0 = nearest_neighbor_cv(start.pset.r0, geo.box)
    cv1 = nearest_neighbor_cv(geo.pset.r0, geo.box)
    rho = local_density(geo.pset, geo.kernel, box=geo.box)
    out = _out_dir(args, scene)
    write_vtk_points(os.path.join(out, f"{scene.name}_relaxed.vtk"), geo.pset.r0, {"density": rho},
                     title=f"{scene.name} relaxed particles")
    print(json.dumps({"particles": geo.pset.count, "cv_start": cv0, "cv_relaxed": cv1,
                      "density_min": float(rho.min()), "density_max": float(rho.max())}))
    return EXIT_OK


def cmd_fibers(args):
    from .runner import build_geometry

    scene = _load(args.scene, args.seed)
    if scene.geometry.kind != "biventricle":
        raise ConfigError([("geometry.kind", "fiber reconstruction needs a biventricle geometry")])
    geo = build_geometry(scene)
    ff = geo.fibers
    unit = float(max(np.abs(np.linalg.norm(ff.f0, axis=1) - 1).max(), np.abs(np.linalg.norm(ff.s0, axis=1) - 1).max()))
    orth = float(np.abs(np.einsum("na,na->n", ff.f0, ff.s0)).max())
    out = _out_dir(args, scene)
    write_vtk_points(os.path.join(out, f"{scene.name}_fibers.vtk"), geo.pset.r0,
                     {"psi": ff.psi, "angle_deg": np.rad2deg(ff.angles())},
                     {"f0": ff.f0, "s0": ff.s0}, title=f"{scene.name} fibers")
    print(json.dumps({"particles": geo.pset.count, "flagged": int(ff.flagged.sum()), "unit_error": unit,
                      "orthogonality_error": orth, "psi_min": float(ff.psi.min()), "psi_max": float(ff.psi.max())}))
    return EXIT_OK


def _parse_params(items):
    params = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError([("oracle", f"parameter {item!r} must look like key=value")])
        key, value = item.split("=", 1)
        params[key] = json.loads(value)
    return params


def cmd_oracle(args):
    params = _parse_params(args.params)
    t = params.pop("t", 1.0)
    n = int(params.pop("n", 101))
    if args.case == "aniso_gaussian":
        lo, hi = params.pop("lo", 0.0), params.pop("hi", 200.0)
        x = np.linspace(lo, hi, n)
        pts = np.column_stack([x, np.full(n, params.get("x0", (100.0, 100.0))[1])])
        coords = x
    else:
        lo, hi = params.pop("lo", 0.0), params.pop("hi", 1.0)
        coords = np.linspace(lo, hi, n)
        pts = np.column_stack([np.zeros(n), coords])
    vals = oracles.evaluate(args.case, pts, t, params, axis=1)
    rows = np.column_stack([coords, vals])
    if args.out:
        write_probe_csv(os.path.join(args.out, f"oracle_{args.case}.csv"), ["coord", "value"], rows)
    else:
        for c, v in rows:
            print(f"{c:.10e},{v:.10e}")
    return EXIT_OK


def cmd_convergence(args):
    from .runner import run

    scene = _load(args.scene, args.seed)
    if scene.oracle is None:
        raise ConfigError([("oracle", "convergence study needs an oracle block")])
    rows = []
    base = scene_to_dict(scene)
    for level in range(args.levels):
        d = json.loads(json.dumps(base))
        d["geometry"]["dp"] = scene.geometry.dp / 2 ** level
        res = run(scene_from_dict(d), out_dir="", snapshot_every=0)
        o = res.summary["oracle"]
        rows.append([d["geometry"]["dp"], o["L2"], o["Linf"], res.summary["steps"]])
        print(f"dp={rows[-1][0]:.6g} L2={o['L2']:.4e} Linf={o['Linf']:.4e} steps={rows[-1][3]}")
    if args.out:
        write_probe_csv(os.path.join(args.out, f"{scene.name}_convergence.csv"), ["dp", "L2", "Linf", "steps"], rows)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="cardiosph", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker threads for compiled kernels")
    p.add_argument("--seed", type=int, help="override the scene seed")
    p.add_argument("--snapshot-every", type=float, help="snapshot interval in simulation time")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (("run", cmd_run, "run a scene"),
                               ("relax", cmd_relax, "build and relax the particle cloud"),
                               ("fibers", cmd_fibers, "reconstruct rule-based fibers")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("scene", help=f"YAML file or builtin:<name> ({', '.join(sorted(BUILTIN))})")
        s.set_defaults(func=fn)
    s = sub.add_parser("oracle", help="tabulate a closed-form solution")
    s.add_argument("case", choices=["band", "exp", "aniso_gaussian"])
    s.add_argument("params", nargs="*", help="key=value pairs (values parsed as JSON), e.g. t=1 n=201")
    s.set_defaults(func=cmd_oracle)
    s = sub.add_parser("convergence", help="oracle errors under repeated halving of dp")
    s.add_argument("scene")
    s.add_argument("--levels", type=int, default=3)
    s.set_defaults(func=cmd_convergence)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads:
        import numba

        numba.set_num_threads(args.threads)
    try:
        return args.func(args)
    except (NumericalFailure, SingularMomentError, InvertedElementError, DecompositionError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, STLParseError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
