"""Geometry sources, particle generation and fiber reconstruction."""
from .biventricle import BiventricleSpec, biventricle_phi, generate_biventricle, surface_bands
from .fibers import (FiberField, fiber_angle, reconstruct_fibers, rodrigues, rotation_angle,
                     solve_pseudo_distance)
from .heart import HeartModel, build_heart
from .levelset import LevelSetGrid, build_signed_distance, grid_for_mesh, mesh_signed_distance
from .seeding import (generate_lattice_particles, jitter_particles, local_density, nearest_neighbor_cv,
                      project_to_body, relax_particles)
from .shapes import annulus_sdf, box_sdf, ellipsoid_sdf, sphere_sdf
from .stl import TriangleMesh, box_mesh, icosphere, parse_stl, stl_ascii, stl_binary, write_stl

__all__ = [
    "BiventricleSpec", "FiberField", "HeartModel", "LevelSetGrid", "TriangleMesh",
    "annulus_sdf", "biventricle_phi", "box_mesh", "box_sdf", "build_heart", "build_signed_distance",
    "ellipsoid_sdf", "fiber_angle", "generate_biventricle", "generate_lattice_particles",
    "grid_for_mesh", "icosphere", "jitter_particles", "local_density", "mesh_signed_distance", "nearest_neighbor_cv",
    "parse_stl", "project_to_body", "reconstruct_fibers", "relax_particles", "rodrigues",
    "rotation_angle", "solve_pseudo_distance", "sphere_sdf", "stl_ascii", "stl_binary",
    "surface_bands", "write_stl",
]
