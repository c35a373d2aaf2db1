"""Write every built-in scene as a YAML file (default: ./scenes)."""
import argparse
import os

from cardiosph.sim import dump_scene
from cardiosph.sim.scenes import BUILTIN, builtin_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="scenes")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    for name in sorted(BUILTIN):
        path = os.path.join(args.out, f"{name}.yaml")
        with open(path, "w") as fh:
            fh.write(dump_scene(builtin_scene(name)))
        print(path)


if __name__ == "__main__":
    main()
