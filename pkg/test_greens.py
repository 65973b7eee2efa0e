#!/usr/bin/env python3
"""
Tests for the Green kernel and the resolvent of A(z)
"""

import logging
from pathlib import Path

import numpy as np
import pytest

from coefficients import load_coefficients
from errors import ResolventPole
from greens import (ResolventRequest, ResolventResult, apply_resolvent, eigenfunction, green_kernel,
                    sampled_function)
from spectrum import Box, eigenvalues_in_box
from transfer import cell_bracket

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')

SETS = Path(__file__).parent / 'coefficient_sets'


@pytest.fixture(scope='module')
def hill():
    return load_coefficients(SETS / 'hill_free.json')


@pytest.fixture(scope='module')
def well():
    return load_coefficients(SETS / 'square_well.json')


def test_resolvent_of_constant_function(hill):
    # -f'' + f = 1 with periodic conditions has f = 1
    grid = np.linspace(0.0, np.pi, 41)
    result = apply_resolvent(hill, ResolventRequest(z=0.0, lam=-1.0, grid=grid, values=np.ones(41)))
    np.testing.assert_allclose(result.f, 1.0, atol=1e-8)
    np.testing.assert_allclose(result.pf_prime, 0.0, atol=1e-8)
    assert result.boundary_residual(0.0) <= 1e-7
    assert len(result.to_rows()) == 41


def test_boundary_residual_ignores_roundoff_in_a_vanishing_derivative():
    grid = np.linspace(0.0, 1.0, 5)
    noise = np.array([1e-13, -2e-13, 0.0, 3e-13, -1e-13])
    result = ResolventResult(grid=grid, f=np.ones(5, dtype=complex), pf_prime=noise.astype(complex))
    assert result.boundary_residual(0.0) <= 1e-11
    # a real mismatch in f still shows
    shifted = ResolventResult(grid=grid, f=np.array([1, 1, 1, 1, 1.1], dtype=complex), pf_prime=noise.astype(complex))
    assert shifted.boundary_residual(0.0) == pytest.approx(0.1 / 1.1, rel=1e-6)


def test_resolvent_of_zero_is_zero(well):
    grid = np.linspace(0.0, 2.0, 21)
    result = apply_resolvent(well, ResolventRequest(z=0.7, lam=1.0 + 1.0j, grid=grid,
                                                    values=np.zeros(21)))
    assert np.all(result.f == 0)
    assert np.all(result.pf_prime == 0)


def test_resolvent_meets_quasi_periodic_conditions(well):
    z = 0.9
    grid = np.linspace(0.0, 2.0, 81)
    values = np.sin(3 * grid) + 0.5j * grid
    result = apply_resolvent(well, ResolventRequest(z=z, lam=0.4 - 2.0j, grid=grid, values=values))
    assert result.boundary_residual(z) <= 1e-7


def test_resolvent_acts_diagonally_on_eigenfunctions(well):
    z = 1.0
    mu = min(eigenvalues_in_box(well, z, Box(-10.0, 10.0, -1.0, 1.0)).values(), key=abs)
    u = eigenfunction(well, z, mu)
    grid = np.linspace(0.0, 2.0, 401)
    lam = 0.3 + 0.2j
    result = apply_resolvent(well, ResolventRequest(z=z, lam=lam, grid=grid, values=u(grid)))
    expected = u(grid) / (mu - lam)
    assert np.max(np.abs(result.f - expected)) <= 1e-6 * np.max(np.abs(expected))


def test_pole_is_reported(hill):
    grid = np.linspace(0.0, np.pi, 11)
    with pytest.raises(ResolventPole):
        apply_resolvent(hill, ResolventRequest(z=0.0, lam=0.0, grid=grid, values=np.ones(11)))


def test_request_grid_is_checked():
    with pytest.raises(ValueError):
        ResolventRequest(z=0.0, lam=1.0, grid=np.array([0.0, 0.0, 1.0]), values=np.zeros(3))
    with pytest.raises(ValueError):
        ResolventRequest(z=0.0, lam=1.0, grid=np.linspace(0.0, 1.0, 4), values=np.zeros(3))


def test_kernel_is_continuous_on_the_diagonal(well):
    for x in (0.3, 1.0, 1.7):
        below = green_kernel(well, 0.5, 2.0 + 1.0j, x, x - 1e-9)
        above = green_kernel(well, 0.5, 2.0 + 1.0j, x, x + 1e-9)
        assert abs(below - above) <= 1e-7 * (1 + abs(below))


def test_resolvent_is_symmetric_in_the_indefinite_product(well):
    # [R(lam) g, h] = [g, R(conj lam) h] for real z
    z, lam = 0.6, 1.5 + 0.8j
    grid = np.linspace(0.0, 2.0, 401)
    g_values = np.cos(np.pi * grid) + 0.3j
    h_values = grid ** 2 - 1.0j * grid
    g = sampled_function(well, grid, g_values)
    h = sampled_function(well, grid, h_values)
    rg = apply_resolvent(well, ResolventRequest(z=z, lam=lam, grid=grid, values=g_values))
    rh = apply_resolvent(well, ResolventRequest(z=z, lam=np.conj(lam), grid=grid, values=h_values))
    left = cell_bracket(well, sampled_function(well, grid, rg.f), h)
    right = cell_bracket(well, g, sampled_function(well, grid, rh.f))
    assert left == pytest.approx(right, rel=1e-6)


def test_sampled_function_respects_breakpoints(well):
    grid = np.linspace(0.0, 2.0, 201)
    values = np.where(grid <= 1.0, grid, 2.0 - grid) ** 3
    f = sampled_function(well, grid, values)
    xs = np.array([0.25, 0.999, 1.001, 1.75])
    expected = np.where(xs <= 1.0, xs, 2.0 - xs) ** 3
    np.testing.assert_allclose(f(xs).real, expected, atol=1e-10)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, '-v']))
