"""Active cube: top-face displacement against resolution and bulk modulus."""
import argparse

from cardiosph.sim import run
from cardiosph.sim.scenes import builtin_scene


def top_face(res):
    dp = res.simulation.scene.geometry.dp
    z = res.simulation.pset.r0[:, 2]
    top = z > 1 - dp
    below = (z > 1 - 2 * dp) & ~top
    u1, u2 = res.mech.u[top, 2].mean(), res.mech.u[below, 2].mean()
    return u1 + 0.5 * (u1 - u2), u1


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[8, 12, 16])
    ap.add_argument("--lambda-bulk", type=float, nargs="+", default=[450.0])
    ap.add_argument("--end", type=float, default=8.0)
    args = ap.parse_args()
    for lam in args.lambda_bulk:
        for n in args.n:
            for iso in (True, False):
                name = "cube_iso" if iso else "cube_aniso"
                res = run(builtin_scene(name, n=n, end=args.end, lambda_bulk=lam), out_dir="")
                face, layer = top_face(res)
                print(f"{name:10s} lambda={lam:g} n={n:3d} face={face:.4f} top-layer={layer:.4f} "
                      f"wall={res.summary['wall_seconds']:.0f} s")


if __name__ == "__main__":
    main()
