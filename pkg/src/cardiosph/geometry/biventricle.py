"""Two-ellipsoid generic biventricle (lengths in mm, long axis along y).

The inner (endocardial) surfaces are axis-aligned ellipsoids; the walls are
their exact outward offsets.  Tissue is the union of both walls minus both
cavities, keeping the apex side of the base plane ``y <= base_y``.  The RV
cavity is bounded by the septum, i.e. it excludes the LV wall.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .levelset import LevelSetGrid
from .shapes import ellipsoid_sdf


@dataclass(frozen=True)
class BiventricleSpec:
    a_lv: float = 45.0
    b_lv: float = 54.0
    c_lv: float = 24.0
    a_rv: float = 18.0
    b_rv: float = 58.0
    c_rv: float = 18.0
    wall_lv: float = 6.0
    wall_rv: float = 12.0
    rv_center: tuple = (-45.0, 0.0, 0.0)
    base_y: float = 0.0

    def __post_init__(self):
        for name in ("a_lv", "b_lv", "c_lv", "a_rv", "b_rv", "c_rv", "wall_lv", "wall_rv"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def bounds(self):
        c = np.asarray(self.rv_center, dtype=float)
        lv = np.array([self.a_lv, self.b_lv, self.c_lv]) + self.wall_lv
        rv = np.array([self.a_rv, self.b_rv, self.c_rv]) + self.wall_rv
        lo = np.minimum(-lv, c - rv)
        hi = np.maximum(lv, c + rv)
        hi[1] = min(hi[1], self.base_y)
        return lo, hi


@dataclass
class BiventricleDistances:
    """Signed distances (positive outside) to the two endocardial ellipsoids."""

    s_lv: np.ndarray
    s_rv: np.ndarray
    spec: BiventricleSpec
    y: np.ndarray

    @classmethod
    def at(cls, points, spec: BiventricleSpec) -> "BiventricleDistances":
        p = np.atleast_2d(np.asarray(points, dtype=float))
        s_lv = ellipsoid_sdf(p, [spec.a_lv, spec.b_lv, spec.c_lv])
        s_rv = ellipsoid_sdf(p, [spec.a_rv, spec.b_rv, spec.c_rv], center=spec.rv_center)
        return cls(s_lv, s_rv, spec, p[:, 1])

    @property
    def outside_cavities(self):
        """Positive outside both cavities."""
        sp = self.spec
        return np.minimum(self.s_lv, np.maximum(self.s_rv, sp.wall_lv - self.s_lv))

    @property
    def inside_outer(self):
        """Positive inside the epicardial envelope."""
        sp = self.spec
        return np.maximum(sp.wall_lv - self.s_lv, sp.wall_rv - self.s_rv)

    @property
    def below_base(self):
        return self.spec.base_y - self.y

    @property
    def tissue(self):
        """Level-set value: positive inside the myocardium."""
        return np.minimum(np.minimum(self.inside_outer, self.outside_cavities), self.below_base)


def biventricle_phi(points, spec: BiventricleSpec | None = None) -> np.ndarray:
    return BiventricleDistances.at(points, spec or BiventricleSpec()).tissue


def generate_biventricle(spec: BiventricleSpec | None = None, spacing: float = 1.0, pad: int = 3) -> LevelSetGrid:
    """Level-set grid of the biventricle (positive inside tissue)."""
    spec = spec or BiventricleSpec()
    lo, hi = spec.bounds()
    return LevelSetGrid.from_function(lambda p: biventricle_phi(p, spec), lo, hi, spacing, pad)


def surface_bands(points, spec: BiventricleSpec, band: float):
    """Dirichlet node masks for the transmural Laplace problem.

    Returns ``(tissue, epi, endo)``: ``epi`` / ``endo`` are non-tissue nodes
    within ``band`` of the outer / cavity surface on the apex side of the base
    plane (the base itself stays a natural boundary).
    """
    dist = BiventricleDistances.at(points, spec)
    phi = dist.tissue
    tissue = phi > 0
    apex_side = dist.below_base > 0
    endo = ~tissue & apex_side & (dist.outside_cavities <= 0) & (dist.outside_cavities > -band)
    epi = ~tissue & apex_side & (dist.inside_outer <= 0) & (dist.inside_outer > -band)
    return tissue, epi, endo & ~epi
