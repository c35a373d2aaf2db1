"""End-to-end biventricle preparation: level set, particles, fibers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..kernels import SmoothingKernel
from ..particles import ParticleSet
from .biventricle import BiventricleSpec, generate_biventricle, surface_bands
from .fibers import FiberField, extend_field, reconstruct_fibers, solve_pseudo_distance
from .levelset import LevelSetGrid
from .seeding import generate_lattice_particles, jitter_particles, relax_particles


@dataclass
class HeartModel:
    particles: ParticleSet
    levelset: LevelSetGrid
    fibers: FiberField
    psi_grid: np.ndarray
    spec: BiventricleSpec
    dp: float


def pseudo_distance_grid(ls: LevelSetGrid, spec: BiventricleSpec, band: float, tol: float = 1e-8) -> np.ndarray:
    tissue, epi, endo = surface_bands(ls.nodes(), spec, band)
    shape = ls.dims
    psi = solve_pseudo_distance(tissue.reshape(shape), epi.reshape(shape), endo.reshape(shape), tol=tol)
    return extend_field(psi, (tissue | epi | endo).reshape(shape))


def build_heart(spec: BiventricleSpec | None = None, dp: float = 2.0, grid_spacing: float | None = None,
                relax_steps: int = 200, band: float | None = None, rho0: float = 1.0,
                theta_epi_deg: float = -70.0, theta_endo_deg: float = 80.0, jitter: float = 0.0,
                seed: int = 0) -> HeartModel:
    """Lattice seed, relaxation, transmural ``psi`` and fiber frames.

    ``jitter`` (in units of ``dp``) randomly perturbs the seed lattice before
    relaxation.
    """
    spec = spec or BiventricleSpec()
    gs = 0.5 * dp if grid_spacing is None else grid_spacing
    band = 1.5 * dp if band is None else band
    ls = generate_biventricle(spec, gs)
    start = generate_lattice_particles(ls, dp, rho0)
    if jitter > 0:
        start = jitter_particles(start, jitter * dp, seed, ls, 0.5 * dp)
    k = SmoothingKernel.from_spacing(dp, 3)
    pset = relax_particles(start, ls, k, steps=relax_steps) if relax_steps > 0 else start
    psi_grid = pseudo_distance_grid(ls, spec, band)
    psi = np.clip(ls.interpolate(pset.r0, psi_grid), 0.0, 1.0)
    fibers = reconstruct_fibers(pset.r0, ls, psi, theta_epi_deg, theta_endo_deg)
    return HeartModel(pset, ls, fibers, psi_grid, spec, dp)
