#!/usr/bin/env python3
"""
Tests for the discriminant and its derivatives
"""

import logging
import math
from pathlib import Path

import numpy as np
import pytest

from coefficients import CoefficientSet, Constant, Segment, load_coefficients
from discriminant import (DdotRoute, entry_derivatives, eval_D, eval_D_and_Ddot,
                          eval_Ddot_numdiff, eval_Ddot_quadrature, eval_Ddotdot, sample, scan)
from transfer import transfer

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')

SETS = Path(__file__).parent / 'coefficient_sets'


def unit_cell():
    return CoefficientSet(1.0, (Segment(0.0, 1.0, Constant(1.0), Constant(1.0), Constant(0.0)),))


def hill_ddot(lam):
    s = np.sqrt(complex(lam))
    return -math.pi * np.sin(math.pi * s) / s


def well_ddot(lam):
    s = np.sqrt(complex(lam))
    return (np.cos(s) * np.sinh(s) - np.sin(s) * np.cosh(s)) / s


def stress_points(seed, n=200):
    # |L| stays moderate here, so the three-term sum does not cancel
    rng = np.random.default_rng(seed)
    return rng.uniform(-5.0, 30.0, n) + 1j * rng.uniform(-2.0, 2.0, n)


@pytest.mark.parametrize('name, exact', [('hill_free', hill_ddot), ('square_well', well_ddot)])
def test_quadrature_identity_matches_closed_form(name, exact):
    cs = load_coefficients(SETS / f'{name}.json')
    for lam in stress_points(7):
        expected = exact(lam)
        assert abs(eval_Ddot_quadrature(cs, lam) - expected) <= 1e-6 * (1 + abs(expected)), lam


@pytest.mark.parametrize('name', ['hill_free', 'square_well'])
def test_quadrature_identity_matches_difference_quotient(name):
    cs = load_coefficients(SETS / f'{name}.json')
    for lam in stress_points(11, n=50):
        quad = eval_Ddot_quadrature(cs, lam)
        diff = eval_Ddot_numdiff(cs, lam)
        assert abs(quad - diff) <= 1e-5 * (1 + abs(quad)), lam


def test_identity_on_integrated_coefficients():
    cs = load_coefficients(SETS / 'smooth_indefinite.json')
    for lam in (-7.0, 0.5 + 0.5j, 3.0, 11.0 - 2.0j):
        quad = eval_Ddot_quadrature(cs, lam)
        diff = eval_Ddot_numdiff(cs, lam)
        assert abs(quad - diff) <= 1e-5 * (1 + abs(quad)), lam


def test_hill_derivatives():
    cs = load_coefficients(SETS / 'hill_free.json')
    D, ddot = eval_D_and_Ddot(cs, 0.0)
    assert D == pytest.approx(2.0, abs=1e-12)
    assert ddot == pytest.approx(-math.pi ** 2, rel=1e-9)
    assert eval_Ddotdot(cs, 0.0) == pytest.approx(math.pi ** 4 / 6, rel=1e-6)
    assert eval_Ddotdot(cs, 4.0) == pytest.approx(-math.pi ** 2 / 8, rel=1e-6)


def test_square_well_second_derivative():
    cs = load_coefficients(SETS / 'square_well.json')
    assert eval_D(cs, 0.0) == pytest.approx(2.0, abs=1e-12)
    assert abs(eval_Ddot_quadrature(cs, 0.0)) < 1e-10
    assert eval_Ddotdot(cs, 0.0) == pytest.approx(-2.0 / 3.0, rel=1e-6)


def test_entry_derivatives_on_unit_cell():
    cs = unit_cell()
    dL = entry_derivatives(cs, 0.0)
    assert dL[0, 1] == pytest.approx(-1.0 / 6.0, abs=1e-13)
    assert dL[0, 0] + dL[1, 1] == pytest.approx(-1.0, abs=1e-13)
    assert eval_Ddot_quadrature(cs, 0.0) == pytest.approx(-1.0, abs=1e-13)


def test_entry_derivatives_match_differences():
    cs = load_coefficients(SETS / 'square_well.json')
    lam, h = 2.0 + 1.0j, 1e-6
    numeric = (transfer(cs, lam + h).L - transfer(cs, lam - h).L) / (2 * h)
    np.testing.assert_allclose(entry_derivatives(cs, lam), numeric, rtol=1e-6, atol=1e-8)


def test_sample_is_not_flagged():
    cs = load_coefficients(SETS / 'square_well.json')
    s = sample(cs, 5.0 + 1.0j, with_second=True)
    assert s.Ddot_route is DdotRoute.QuadratureFormula
    assert not s.flagged
    assert np.isfinite(s.Ddotdot)
    assert math.isnan(sample(cs, 5.0).Ddotdot.real)


def test_scan_grid_shape():
    cs = load_coefficients(SETS / 'hill_free.json')
    assert len(scan(cs, (0.0, 10.0), (0.0, 0.0), 5)) == 5
    samples = scan(cs, (0.0, 10.0), (-1.0, 1.0), 4)
    assert len(samples) == 16
    assert samples[0].lam == complex(0.0, -1.0)
    assert not any(s.flagged for s in samples)


@pytest.mark.parametrize('name', sorted(p.stem for p in SETS.glob('*.json')))
def test_discriminant_is_real_and_not_constant_on_the_real_axis(name):
    cs = load_coefficients(SETS / f'{name}.json')
    values = np.array([eval_D(cs, lam) for lam in np.linspace(-10.0, 10.0, 100)])
    assert np.all(np.abs(values.imag) <= 1e-12 * (1 + np.abs(values)))
    assert np.max(np.abs(values)) - np.min(np.abs(values)) > 1e-3


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, '-v']))
