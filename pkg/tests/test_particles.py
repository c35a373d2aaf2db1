import numpy as np
import pytest
from hypothesis import given, strategies as st

from cardiosph.errors import SingularMomentError
from cardiosph.kernels import SmoothingKernel
from cardiosph.particles import (ParticleSet, build_neighbor_lists, compute_correction_matrices, find_pairs,
                                 lattice_positions, pair_geometry)


def brute_pairs(pos, cutoff, box=None):
    d = pos[:, None, :] - pos[None, :, :]
    if box is not None:
        b = np.asarray(box, dtype=float)
        per = b > 0
        d[..., per] -= b[per] * np.round(d[..., per] / b[per])
    r = np.sqrt((d**2).sum(-1))
    np.fill_diagonal(r, np.inf)
    return [set(np.flatnonzero(row < cutoff)) for row in r]


@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 2, 3]), st.integers(5, 60))
def test_neighbor_search_matches_brute_force(seed, dim, n):
    pos = np.random.default_rng(seed).uniform(0, 1, (n, dim))
    offsets, idx = find_pairs(pos, 0.3)
    got = [set(idx[offsets[i]:offsets[i + 1]]) for i in range(n)]
    assert got == brute_pairs(pos, 0.3)


@given(st.integers(0, 2**31 - 1))
def test_periodic_search_matches_minimum_image(seed):
    pos = np.random.default_rng(seed).uniform(0, 1, (40, 2))
    box = [1.0, 0.0]
    offsets, idx = find_pairs(pos, 0.3, box)
    got = [set(idx[offsets[i]:offsets[i + 1]]) for i in range(40)]
    assert got == brute_pairs(pos, 0.3, box)


def test_neighbor_lists_symmetric_and_unit_vectors():
    ps = ParticleSet.lattice([0, 0, 0], [1, 1, 1], 0.2)
    nl = build_neighbor_lists(ps, SmoothingKernel.from_spacing(0.2, 3))
    owners = nl.owners()
    pairs = set(zip(owners.tolist(), nl.indices.tolist()))
    assert all((j, i) in pairs for i, j in pairs)
    assert np.allclose(np.linalg.norm(nl.e, axis=1), 1.0)
    # e points from neighbor to owner
    assert np.allclose(ps.r0[owners] - ps.r0[nl.indices], nl.e * nl.dist[:, None])
    assert np.all(nl.dW <= 0)


def test_lattice_is_cell_centred():
    p = lattice_positions([0, 0], [1, 0.5], 0.25)
    assert p.shape == (8, 2)
    assert p[:, 0].min() == pytest.approx(0.125) and p[:, 1].max() == pytest.approx(0.375)


def test_particle_validation():
    with pytest.raises(ValueError):
        ParticleSet([[0.0, 0.0]], V=0.0, rho0=1.0)
    with pytest.raises(ValueError):
        ParticleSet([[np.nan, 0.0]], V=1.0, rho0=1.0)
    assert ParticleSet([[0.0, 0.0]], V=2.0, rho0=3.0).m[0] == 6.0


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_correction_restores_affine_gradients(dim, rng):
    dp = 0.1
    ps = ParticleSet.lattice([0] * dim, [0.6] * dim, dp)
    ps = ParticleSet(ps.r0 + rng.uniform(-0.2, 0.2, ps.r0.shape) * dp, ps.V, ps.rho0)
    nl = build_neighbor_lists(ps, SmoothingKernel.from_spacing(dp, dim))
    B0 = compute_correction_matrices(ps, nl)
    A = rng.normal(size=(dim, dim))
    u = ps.r0 @ A.T + 0.3
    owners = nl.owners()
    contrib = (ps.V[nl.indices] * nl.dW)[:, None, None] * (u[nl.indices] - u[owners])[:, :, None] * nl.e[:, None, :]
    G = np.zeros((ps.count, dim, dim))
    np.add.at(G, owners, contrib)
    grad = G @ B0
    assert np.allclose(grad, A, atol=1e-10)


def test_isolated_particle_raises_singular_moment():
    ps = ParticleSet([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0]], V=0.01, rho0=1.0)
    nl = build_neighbor_lists(ps, SmoothingKernel.from_spacing(0.1, 2))
    with pytest.raises(SingularMomentError):
        compute_correction_matrices(ps, nl)


def test_pair_geometry_periodic_wrap():
    pos = np.array([[0.05, 0.5], [0.95, 0.5]])
    offsets, idx = find_pairs(pos, 0.2, [1.0, 0.0])
    dist, e = pair_geometry(pos, offsets, idx, [1.0, 0.0])
    assert np.allclose(dist, 0.1)
    assert np.allclose(e[0], [1.0, 0.0])
