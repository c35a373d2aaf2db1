import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cardiosph.errors import DecompositionError, SingularMatrixError
from cardiosph.kernels import (SmoothingKernel, cholesky_lower, invert_lower_triangular, kernel_gradient_scalar,
                               kernel_value, von_mises)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_kernel_integrates_to_one(dim):
    k = SmoothingKernel(h=1.0, dim=dim)
    r = np.linspace(0, 2, 200001)
    w = kernel_value(r, k)
    shell = {1: 2.0, 2: 2 * math.pi * r, 3: 4 * math.pi * r**2}[dim]
    assert np.trapezoid(w * shell, r) == pytest.approx(1.0, rel=1e-8)


def test_compact_support_and_values():
    k = SmoothingKernel.from_spacing(0.1, 2)
    assert k.h == pytest.approx(0.13)
    assert kernel_value(2 * k.h, k) == 0.0
    assert kernel_value(3 * k.h, k) == 0.0
    assert kernel_gradient_scalar(0.0, k) == 0.0
    assert kernel_value(0.0, k) == pytest.approx(k.sigma)


@given(st.floats(0.0, 2.5), st.floats(0.05, 3.0), st.sampled_from([1, 2, 3]))
def test_gradient_is_derivative_and_non_positive(q, h, dim):
    k = SmoothingKernel(h=h, dim=dim)
    r = q * h
    g = kernel_gradient_scalar(r, k)
    assert g <= 0.0
    eps = 1e-6 * h
    if 1e-3 < q < 1.999:
        fd = (kernel_value(r + eps, k) - kernel_value(r - eps, k)) / (2 * eps)
        assert g == pytest.approx(fd, rel=1e-5, abs=1e-9 * k.sigma / h)


def test_negative_radius_rejected():
    with pytest.raises(ValueError):
        kernel_value(-1.0, SmoothingKernel(1.0, 2))
    with pytest.raises(ValueError):
        SmoothingKernel(0.0, 2)
    with pytest.raises(ValueError):
        SmoothingKernel(1.0, 4)


@given(st.integers(1, 3), st.integers(0, 10_000))
def test_cholesky_reconstructs_spd(d, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(5, d, d))
    D = A @ np.swapaxes(A, 1, 2) + 0.1 * np.eye(d)
    L = cholesky_lower(D)
    assert np.allclose(np.tril(L), L)
    assert np.allclose(L @ np.swapaxes(L, 1, 2), D, rtol=1e-10, atol=1e-12)
    Linv = invert_lower_triangular(L)
    assert np.allclose(Linv @ L, np.eye(d), atol=1e-9)


def test_cholesky_reports_offending_particle():
    D = np.tile(np.eye(2), (4, 1, 1))
    D[2] = [[1.0, 2.0], [2.0, 1.0]]
    with pytest.raises(DecompositionError) as info:
        cholesky_lower(D, particle_offset=10)
    assert info.value.particle == 12


def test_singular_triangle():
    with pytest.raises(SingularMatrixError):
        invert_lower_triangular(np.array([[1.0, 0.0], [1.0, 0.0]]))


def test_von_mises_uniaxial_and_hydrostatic():
    s = np.zeros((3, 3))
    s[0, 0] = 5.0
    assert von_mises(s) == pytest.approx(5.0)
    assert von_mises(7.0 * np.eye(3)) == pytest.approx(0.0, abs=1e-12)
    # plane stress in 2D: pure shear tau gives sqrt(3) tau
    assert von_mises(np.array([[0.0, 2.0], [2.0, 0.0]])) == pytest.approx(2 * math.sqrt(3))
