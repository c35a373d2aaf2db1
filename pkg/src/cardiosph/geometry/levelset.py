"""Signed-distance fields on Cartesian background grids (positive inside)."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numba as nb
import numpy as np

from .stl import TriangleMesh

log = logging.getLogger(__name__)


@dataclass
class LevelSetGrid:
    """Node-centred scalar field; node ``(i, j, k)`` sits at ``origin + spacing * (i, j, k)``.

    Works for 2D and 3D grids (``len(dims)``).
    """

    origin: np.ndarray
    spacing: float
    dims: tuple
    phi: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.dims = tuple(int(n) for n in self.dims)
        self.phi = np.asarray(self.phi, dtype=float).reshape(self.dims)
        if not self.spacing > 0:
            raise ValueError("grid spacing must be positive")

    @property
    def dim(self) -> int:
        return len(self.dims)

    def nodes(self) -> np.ndarray:
        axes = [self.origin[a] + self.spacing * np.arange(n) for a, n in enumerate(self.dims)]
        g = np.meshgrid(*axes, indexing="ij")
        return np.stack([x.ravel() for x in g], axis=1)

    @classmethod
    def covering(cls, lo, hi, spacing, pad: int = 2, dim=None) -> "LevelSetGrid":
        """Empty grid covering ``[lo, hi]`` with ``pad`` extra nodes per side."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float)) - pad * spacing
        hi = np.atleast_1d(np.asarray(hi, dtype=float)) + pad * spacing
        dims = tuple(int(np.ceil((b - a) / spacing)) + 1 for a, b in zip(lo, hi))
        return cls(lo, spacing, dims, np.zeros(dims))

    @classmethod
    def from_function(cls, func, lo, hi, spacing, pad: int = 2) -> "LevelSetGrid":
        """Sample an analytic signed distance ``func(points) -> phi``."""
        g = cls.covering(lo, hi, spacing, pad)
        g.phi = np.asarray(func(g.nodes()), dtype=float).reshape(g.dims)
        return g

    def interpolate(self, points, field=None) -> np.ndarray:
        """Multilinear interpolation of ``phi`` (or another node field);
        points outside the grid are clamped to it."""
        f = self.phi if field is None else np.asarray(field).reshape(self.dims + np.shape(field)[len(self.dims):])
        x = (np.atleast_2d(np.asarray(points, dtype=float)) - self.origin) / self.spacing
        d = self.dim
        base = np.empty((len(x), d), dtype=np.int64)
        frac = np.empty((len(x), d))
        for a in range(d):
            xa = np.clip(x[:, a], 0.0, self.dims[a] - 1.0)
            i = np.minimum(np.floor(xa).astype(np.int64), self.dims[a] - 2)
            base[:, a] = i
            frac[:, a] = xa - i
        tail = f.shape[d:]
        out = np.zeros((len(x),) + tail)
        for corner in range(2**d):
            w = np.ones(len(x))
            idx = []
            for a in range(d):
                bit = (corner >> a) & 1
                w = w * (frac[:, a] if bit else 1.0 - frac[:, a])
                idx.append(base[:, a] + bit)
            out += w.reshape((-1,) + (1,) * len(tail)) * f[tuple(idx)]
        return out

    def gradient_field(self) -> np.ndarray:
        """Central-difference gradient at nodes, shape ``dims + (d,)``."""
        return np.stack(np.gradient(self.phi, self.spacing), axis=-1)

    def gradient(self, points) -> np.ndarray:
        return self.interpolate(points, self.gradient_field())

    def to_vtk(self, path, name: str = "phi") -> None:
        """Legacy ASCII VTK structured-points file."""
        d3 = list(self.dims) + [1] * (3 - self.dim)
        o3 = list(self.origin) + [0.0] * (3 - self.dim)
        with open(Path(path), "w") as fh:
            fh.write("# vtk DataFile Version 3.0\nlevel set\nASCII\nDATASET STRUCTURED_POINTS\n")
            fh.write(f"DIMENSIONS {d3[0]} {d3[1]} {d3[2]}\n")
            fh.write(f"ORIGIN {o3[0]:.9g} {o3[1]:.9g} {o3[2]:.9g}\n")
            fh.write(f"SPACING {self.spacing:.9g} {self.spacing:.9g} {self.spacing:.9g}\n")
            fh.write(f"POINT_DATA {int(np.prod(d3))}\nSCALARS {name} double 1\nLOOKUP_TABLE default\n")
            # VTK orders x fastest
            vals = self.phi.reshape(d3).transpose(2, 1, 0).ravel()
            fh.write("\n".join(f"{v:.9g}" for v in vals))
            fh.write("\n")


@nb.njit(cache=True)
def _point_triangle_dist2(p, a, b, c):
    # closest point on triangle (Ericson, Real-Time Collision Detection 5.1.5)
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab @ ap
    d2 = ac @ ap
    if d1 <= 0.0 and d2 <= 0.0:
        q = a
    else:
        bp = p - b
        d3 = ab @ bp
        d4 = ac @ bp
        if d3 >= 0.0 and d4 <= d3:
            q = b
        else:
            vc = d1 * d4 - d3 * d2
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                q = a + (d1 / (d1 - d3)) * ab
            else:
                cp = p - c
                d5 = ab @ cp
                d6 = ac @ cp
                if d6 >= 0.0 and d5 <= d6:
                    q = c
                else:
                    vb = d5 * d2 - d1 * d6
                    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                        q = a + (d2 / (d2 - d6)) * ac
                    else:
                        va = d3 * d6 - d5 * d4
                        if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                            q = b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b)
                        else:
                            den = 1.0 / (va + vb + vc)
                            q = a + ab * (vb * den) + ac * (vc * den)
    r = p - q
    return r @ r


@nb.njit(cache=True)
def _unsigned_distance(points, tri):
    n = points.shape[0]
    out = np.empty(n)
    for i in range(n):
        best = np.inf
        p = points[i]
        for t in range(tri.shape[0]):
            d2 = _point_triangle_dist2(p, tri[t, 0], tri[t, 1], tri[t, 2])
            if d2 < best:
                best = d2
        out[i] = np.sqrt(best)
    return out


@nb.njit(cache=True)
def _ray_crossings(points, tri, dy, dz):
    # parity of crossings of the +x ray from each (slightly perturbed) point
    n = points.shape[0]
    out = np.zeros(n, dtype=np.int64)
    for i in range(n):
        py = points[i, 1] + dy
        pz = points[i, 2] + dz
        px = points[i, 0]
        cnt = 0
        for t in range(tri.shape[0]):
            y0 = tri[t, 0, 1] - py
            z0 = tri[t, 0, 2] - pz
            y1 = tri[t, 1, 1] - py
            z1 = tri[t, 1, 2] - pz
            y2 = tri[t, 2, 1] - py
            z2 = tri[t, 2, 2] - pz
            # barycentric test of the projected point (0, 0) in the y-z plane
            e0 = y1 * z2 - y2 * z1
            e1 = y2 * z0 - y0 * z2
            e2 = y0 * z1 - y1 * z0
            if (e0 > 0 and e1 > 0 and e2 > 0) or (e0 < 0 and e1 < 0 and e2 < 0):
                s = e0 + e1 + e2
                x = (e0 * tri[t, 0, 0] + e1 * tri[t, 1, 0] + e2 * tri[t, 2, 0]) / s
                if x > px:
                    cnt += 1
        out[i] = cnt
    return out


def mesh_signed_distance(mesh: TriangleMesh, points) -> np.ndarray:
    """Exact distance to the nearest facet, positive inside (ray parity)."""
    pts = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
    tri = np.ascontiguousarray(mesh.corners, dtype=float)
    dist = _unsigned_distance(pts, tri)
    scale = max(float(np.abs(tri).max(initial=1.0)), 1.0)
    # irrational offsets keep the rays away from edges and vertices
    crossings = _ray_crossings(pts, tri, 1.234567e-7 * scale, 7.654321e-8 * scale)
    return np.where(crossings % 2 == 1, dist, -dist)


def build_signed_distance(mesh: TriangleMesh, origin, spacing, dims) -> LevelSetGrid:
    """Sample the mesh signed distance on a grid."""
    if not mesh.is_watertight():
        log.warning("mesh is not watertight; inside/outside signs may be wrong")
    g = LevelSetGrid(origin, spacing, dims, np.zeros(dims))
    g.phi = mesh_signed_distance(mesh, g.nodes()).reshape(g.dims)
    return g


def grid_for_mesh(mesh: TriangleMesh, spacing: float, pad: int = 3) -> LevelSetGrid:
    lo, hi = mesh.bounds()
    g = LevelSetGrid.covering(lo, hi, spacing, pad)
    return build_signed_distance(mesh, g.origin, spacing, g.dims)
