"""Oracle errors of the band/exp diffusion benchmarks and the anisotropic Gaussian."""
import argparse
import csv
import os

import numpy as np

from cardiosph.sim import run
from cardiosph.sim.oracles import half_width
from cardiosph.sim.scenes import builtin_scene


def section_ratio(res):
    r, V = res.simulation.pset.r0, res.electro.V
    ys = np.abs(r[:, 1] - r[np.argmin(np.abs(r[:, 1] - 100.0)), 1]) < 1e-9
    xs = np.abs(r[:, 0] - r[np.argmin(np.abs(r[:, 0] - 100.0)), 0]) < 1e-9
    return half_width(r[ys, 0], V[ys]) / half_width(r[xs, 1], V[xs])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    ap.add_argument("--levels", type=int, default=3)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for name in ("band", "exp"):
        for k in range(args.levels):
            dp = 1.0 / (25 * 2**k)
            res = run(builtin_scene(name, dp=dp), out_dir="")
            o = res.summary["oracle"]
            rows.append([name, dp, o["L2"], o["Linf"], res.summary["wall_seconds"]])
            print(f"{name:5s} dp=1/{round(1 / dp):4d} L2={o['L2']:.3e} Linf={o['Linf']:.3e}")
        for correction in (True, False):
            sc = builtin_scene(name, dp=0.01)
            sc.electro.correction = correction
            o = run(sc, out_dir="").summary["oracle"]
            print(f"{name:5s} dp=1/100 correction={correction}: L2={o['L2']:.3e} Linf={o['Linf']:.3e}")
    for key in ("D1", "D2"):
        for comp in ("stencil", "none"):
            sc = builtin_scene(f"aniso_{key}")
            sc.electro.compensation = comp
            res = run(sc, out_dir="")
            o = res.summary["oracle"]
            ratio = section_ratio(res)
            rows.append([f"aniso_{key}_{comp}", 2.0, o["L2"], o["Linf"], res.summary["wall_seconds"]])
            print(f"aniso {key} compensation={comp:8s} ratio={ratio:.3f} Linf/peak={o['Linf'] / o['peak']:.3%}")
    with open(os.path.join(args.out, "diffusion_convergence.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "dp", "L2", "Linf", "wall_seconds"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
