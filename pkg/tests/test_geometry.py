import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cardiosph.errors import STLParseError
from cardiosph.geometry import (BiventricleSpec, LevelSetGrid, biventricle_phi, box_mesh, box_sdf, ellipsoid_sdf,
                                fiber_angle, generate_lattice_particles, icosphere, jitter_particles,
                                mesh_signed_distance, nearest_neighbor_cv, parse_stl, reconstruct_fibers,
                                relax_particles, rodrigues, rotation_angle, solve_pseudo_distance, sphere_sdf,
                                stl_ascii, stl_binary, surface_bands, annulus_sdf, grid_for_mesh)
from cardiosph.kernels import SmoothingKernel
from cardiosph.particles import ParticleSet


def test_icosphere_is_closed_and_outward():
    m = icosphere(2.0, 2, center=(1.0, 0.0, 0.0))
    assert m.is_watertight()
    centroids = m.corners.mean(axis=1) - [1.0, 0.0, 0.0]
    assert np.all(np.einsum("na,na->n", m.normals, centroids) > 0)
    assert np.allclose(np.linalg.norm(m.vertices - [1.0, 0.0, 0.0], axis=1), 2.0)


@pytest.mark.parametrize("binary", [True, False])
def test_stl_round_trip(binary):
    m = icosphere(1.0, 1)
    data = stl_binary(m) if binary else stl_ascii(m, "ball")
    back = parse_stl(data)
    assert len(back.triangles) == len(m.triangles)
    assert np.allclose(np.sort(back.corners.reshape(-1, 3), axis=0), np.sort(m.corners.reshape(-1, 3), axis=0),
                       atol=1e-6)
    assert back.is_watertight()


def test_stl_binary_layout():
    data = stl_binary(box_mesh())
    assert len(data) == 84 + 50 * 12
    assert struct.unpack("<I", data[80:84])[0] == 12


def test_stl_errors():
    with pytest.raises(STLParseError):
        parse_stl(b"solid x\n facet normal 0 0 1\n outer loop\n vertex 0 0 0\n")
    bad = bytearray(stl_binary(box_mesh()))
    with pytest.raises(STLParseError):
        parse_stl(bytes(bad[:-10]))


def test_degenerate_facets_dropped():
    tri = np.array([[[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 0, 0], [1, 0, 0], [2, 0, 0]]], dtype=float)
    from cardiosph.geometry import TriangleMesh
    m = TriangleMesh.from_facets(tri)
    assert m.dropped == 1 and len(m.triangles) == 1


def test_mesh_distance_matches_sphere(rng):
    m = icosphere(1.0, 4)
    p = rng.uniform(-1.5, 1.5, (200, 3))
    d = mesh_signed_distance(m, p)
    exact = -sphere_sdf(p, 1.0)  # level-set sign: positive inside
    assert np.all(np.sign(d[np.abs(exact) > 0.02]) == np.sign(exact[np.abs(exact) > 0.02]))
    assert np.abs(d - exact).max() < 0.01


def test_box_mesh_sdf_matches_analytic(rng):
    p = rng.uniform(-0.5, 1.5, (300, 3))
    assert np.allclose(mesh_signed_distance(box_mesh(), p), -box_sdf(p, [0, 0, 0], [1, 1, 1]), atol=1e-9)


def test_level_set_interpolation_is_exact_for_linear_fields():
    g = LevelSetGrid.from_function(lambda x: 2 * x[:, 0] - x[:, 1] + 0.5 * x[:, 2], [0, 0, 0], [1, 1, 1], 0.1)
    p = np.random.default_rng(0).uniform(0, 1, (50, 3))
    assert np.allclose(g.interpolate(p), 2 * p[:, 0] - p[:, 1] + 0.5 * p[:, 2])
    assert np.allclose(g.gradient(p), [2.0, -1.0, 0.5])


@given(st.floats(0.3, 3.0), st.floats(0.3, 3.0), st.floats(-4, 4), st.floats(-4, 4))
def test_ellipse_sdf_properties(a, b, x, y):
    d = ellipsoid_sdf([[x, y]], [a, b])[0]
    inside = (x / a) ** 2 + (y / b) ** 2 < 1
    assert (d < 0) == inside or abs(d) < 1e-9
    # distance is 1-Lipschitz and bounded by the distance to the centre region
    assert abs(d) <= np.hypot(x, y) + max(a, b)


def test_ellipse_sdf_reduces_to_circle():
    p = np.random.default_rng(0).normal(size=(100, 2)) * 2
    assert np.allclose(ellipsoid_sdf(p, [1.5, 1.5]), sphere_sdf(p, 1.5), atol=1e-10)


def test_annulus_sdf():
    assert annulus_sdf([[1.5, 0.0]], 1.0, 2.0)[0] == pytest.approx(-0.5)
    assert annulus_sdf([[0.0, 0.0]], 1.0, 2.0)[0] == pytest.approx(1.0)


def test_lattice_particles_inside_body():
    ls = grid_for_mesh(icosphere(1.0, 3), 0.1)
    ps = generate_lattice_particles(ls, 0.1)
    assert np.all(np.linalg.norm(ps.r0, axis=1) < 1.0 + 0.02)
    assert ps.count * 1e-3 == pytest.approx(4 / 3 * np.pi, rel=0.08)


def test_relaxation_regularizes_a_jittered_disk():
    ls = LevelSetGrid.from_function(lambda x: -sphere_sdf(x, 1.0), [-1, -1], [1, 1], 0.025)
    dp = 0.1
    ps = jitter_particles(generate_lattice_particles(ls, dp), 0.3 * dp, seed=5, ls=ls, offset=0.5 * dp)
    cv0 = nearest_neighbor_cv(ps.r0)
    out = relax_particles(ps, ls, SmoothingKernel.from_spacing(dp, 2), steps=150)
    assert nearest_neighbor_cv(out.r0) < cv0
    assert np.all(ls.interpolate(out.r0) > 0.3 * dp)


def test_jitter_is_seeded():
    ps = ParticleSet.lattice([0, 0], [1, 1], 0.1)
    a, b = jitter_particles(ps, 0.02, 7), jitter_particles(ps, 0.02, 7)
    assert np.array_equal(a.r0, b.r0)
    assert not np.array_equal(a.r0, jitter_particles(ps, 0.02, 8).r0)


def test_pseudo_distance_linear_slab():
    n = 21
    domain = np.zeros((n, 6, 5), dtype=bool)
    domain[1:-1] = True
    endo = np.zeros_like(domain)
    epi = np.zeros_like(domain)
    endo[0] = True
    epi[-1] = True
    psi = solve_pseudo_distance(domain, epi, endo, tol=1e-13)
    expected = np.linspace(0, 1, n)[:, None, None] * np.ones((1, 6, 5))
    assert np.abs(psi - expected).max() < 1e-6


def test_pseudo_distance_needs_both_bands():
    d = np.ones((5, 5), dtype=bool)
    with pytest.raises(ValueError):
        solve_pseudo_distance(d, np.zeros_like(d), np.zeros_like(d))


@given(st.floats(-np.pi, np.pi))
def test_rodrigues_preserves_length_and_axis(theta):
    v = np.array([[1.0, 2.0, 0.5]])
    ax = np.array([[0.0, 0.0, 1.0]])
    r = rodrigues(v, ax, np.array([theta]))
    assert np.linalg.norm(r) == pytest.approx(np.linalg.norm(v))
    assert r[0, 2] == pytest.approx(0.5)


def test_fiber_reconstruction_on_a_shell():
    spec = BiventricleSpec()
    ls = LevelSetGrid.from_function(lambda p: biventricle_phi(p, spec), *spec.bounds(), 2.0)
    pts = ls.nodes()[ls.phi.ravel() > 1.0][::7]
    psi = np.random.default_rng(0).uniform(0, 1, len(pts))
    ff = reconstruct_fibers(pts, ls, psi)
    assert np.abs(np.linalg.norm(ff.f0, axis=1) - 1).max() < 1e-12
    assert np.abs(np.einsum("na,na->n", ff.f0, ff.s0)).max() < 1e-12
    err = np.abs((ff.angles() - rotation_angle(psi) + np.pi) % (2 * np.pi) - np.pi)
    assert err.max() < 1e-10


def test_biventricle_bands_are_disjoint():
    spec = BiventricleSpec()
    ls = LevelSetGrid.from_function(lambda p: biventricle_phi(p, spec), *spec.bounds(), 3.0)
    tissue, epi, endo = surface_bands(ls.nodes(), spec, 4.5)
    assert tissue.any() and epi.any() and endo.any()
    assert not (tissue & (epi | endo)).any() and not (epi & endo).any()


def test_rotation_angle_endpoints():
    assert np.rad2deg(rotation_angle(0.0)) == pytest.approx(80.0)
    assert np.rad2deg(rotation_angle(1.0)) == pytest.approx(-70.0)
