#!/usr/bin/env python3
"""
Tests for the monodromy propagation against closed forms
"""

import logging
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad

from coefficients import (CoefficientSet, Constant, Polynomial, PowerWeighted, Segment,
                          load_coefficients, refined, rotated)
from transfer import (MAX_GRADING_LEVELS, CellPropagation, cell_bracket, check_tolerance, interval_nodes,
                      monodromy_eigenvector, quadrature_nodes, solve_trace, transfer)
from errors import DegenerateEigenvector

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')

SETS = Path(__file__).parent / 'coefficient_sets'
EPS = np.finfo(float).eps


def hill_free():
    return load_coefficients(SETS / 'hill_free.json')


def square_well():
    return load_coefficients(SETS / 'square_well.json')


def unit_cell(q=0.0):
    return CoefficientSet(1.0, (Segment(0.0, 1.0, Constant(1.0), Constant(1.0), Constant(q)),))


def test_hill_discriminant_matches_closed_form():
    cs = hill_free()
    lams = np.linspace(-1.0, 50.0, 500)
    computed = np.array([transfer(cs, lam).D for lam in lams])
    exact = 2 * np.cos(np.pi * np.sqrt(lams.astype(complex)))
    assert np.max(np.abs(computed - exact)) <= 1e-8


def test_square_well_discriminant_matches_closed_form():
    cs = square_well()
    lams = np.linspace(-60.0, 60.0, 500)
    computed = np.array([transfer(cs, lam).D for lam in lams])
    roots = np.sqrt(np.abs(lams))
    exact = 2 * np.cos(roots) * np.cosh(roots)
    assert np.max(np.abs(computed - exact)) <= 1e-8
    mirrored = np.array([transfer(cs, -lam).D for lam in lams])
    assert np.max(np.abs(computed - mirrored)) <= 1e-10


@pytest.mark.parametrize('loader', [hill_free, square_well])
def test_wronskian_on_complex_grid(loader):
    cs = loader()
    for re in np.linspace(-50.0, 50.0, 20):
        for im in np.linspace(-20.0, 20.0, 20):
            result = transfer(cs, complex(re, im))
            bound = 1e-10 + 8 * EPS * np.max(np.abs(result.L)) ** 2
            assert result.wronskian_defect() <= bound, (re, im)


def test_quadratures_at_zero_on_unit_cell():
    result = transfer(unit_cell(), 0.0)
    assert result.Q_phiphi == pytest.approx(1.0, abs=1e-13)
    assert result.Q_phipsi == pytest.approx(0.5, abs=1e-13)
    assert result.Q_psipsi == pytest.approx(1.0 / 3.0, abs=1e-13)
    np.testing.assert_allclose(result.L, [[1.0, 1.0], [0.0, 1.0]], atol=1e-14)


def test_integrated_segment_matches_exact_propagator():
    # q written as a polynomial forces the adaptive integrator
    exact = unit_cell(q=0.7)
    integrated = CoefficientSet(1.0, (Segment(0.0, 1.0, Constant(1.0), Constant(1.0),
                                              Polynomial((0.7, 0.0))),))
    for lam in (-3.0, 2.5, 10.0 + 4.0j):
        a, b = transfer(exact, lam), transfer(integrated, lam)
        np.testing.assert_allclose(b.L, a.L, rtol=1e-8, atol=1e-9)
        assert b.Q_phipsi == pytest.approx(a.Q_phipsi, rel=1e-8, abs=1e-9)
        assert b.est_error < 1e-6


def test_discriminant_is_invariant_under_rotation_and_refinement():
    cs = load_coefficients(SETS / 'smooth_indefinite.json')
    for lam in (0.3, -4.0 + 1.0j, 12.0):
        D = transfer(cs, lam).D
        assert transfer(rotated(cs, 1), lam).D == pytest.approx(D, rel=1e-7, abs=1e-8)
        assert transfer(refined(cs, 1, 1.37), lam).D == pytest.approx(D, rel=1e-7, abs=1e-8)


def test_conjugate_symmetry():
    cs = load_coefficients(SETS / 'smooth_indefinite.json')
    lam = 3.0 + 2.0j
    assert transfer(cs, lam.conjugate()).D == pytest.approx(np.conj(transfer(cs, lam).D), rel=1e-8)


def test_singular_weight_is_integrated():
    # w = x^(-1/2) is integrable but singular at the left end
    seg = Segment(0.0, 1.0, PowerWeighted((1.0,), -0.5, 0.0), Constant(1.0), Constant(0.0))
    cs = CoefficientSet(1.0, (seg,))
    result = transfer(cs, 0.0)
    # at lam = 0 the solutions are 1 and x, so Q_phiphi = int x^-1/2 = 2
    assert result.Q_phiphi == pytest.approx(2.0, rel=1e-6)
    assert result.Q_psipsi == pytest.approx(0.4, rel=1e-6)
    assert result.wronskian_defect() < 1e-9


def test_strong_singularity_stays_on_a_short_mesh():
    # w = x^-0.9 needs many levels if the mesh ignores the one-step sliver
    seg = Segment(0.0, 1.0, PowerWeighted((1.0,), -0.9, 0.0), Constant(1.0), Constant(0.0))
    cs = CoefficientSet(1.0, (seg,))
    propagation = CellPropagation(cs, 0.0)
    assert len(propagation.pieces) <= MAX_GRADING_LEVELS + 2
    result = transfer(cs, 0.0)
    assert result.Q_phiphi == pytest.approx(10.0, rel=1e-6)
    assert result.Q_psipsi == pytest.approx(1.0 / 2.1, rel=1e-6)


def test_quadratures_match_integrals_of_the_traced_solutions():
    cs = load_coefficients(SETS / 'smooth_indefinite.json')
    lam = 2.5
    result = transfer(cs, lam, tol=1e-12)
    trace = solve_trace(cs, lam, tol=1e-12)

    def weighted(i, j):
        def integrand(x):
            state = trace.evaluate(x)[0]
            return float((cs.evaluate('w', x)[0] * state[i] * state[j]).real)
        return sum(quad(integrand, seg.x_lo, seg.x_hi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
                   for seg in cs.segments)

    # phi and psi sit in slots 0 and 2 of the state
    for Q, (i, j) in ((result.Q_phiphi, (0, 0)), (result.Q_phipsi, (0, 2)), (result.Q_psipsi, (2, 2))):
        assert Q.real == pytest.approx(weighted(i, j), abs=1e-8 * (1 + abs(Q)))
        assert abs(Q.imag) <= 1e-12


def test_solve_trace_frames():
    cs = square_well()
    trace = solve_trace(cs, 3.0 + 1.0j, n_points=11)
    assert 1.0 in trace.grid
    np.testing.assert_array_equal(trace.values[0], [1.0, 0.0, 0.0, 1.0])
    L = transfer(cs, 3.0 + 1.0j).L
    np.testing.assert_allclose(trace.values[-1], [L[0, 0], L[1, 0], L[0, 1], L[1, 1]], rtol=1e-9)
    rows = trace.to_rows()
    assert len(rows) == len(trace.grid)
    assert len(rows[0]) == 9
    mid = trace.evaluate(0.5)
    assert mid.shape == (1, 4)


def test_quadrature_nodes_cover_the_cell():
    cs = square_well()
    xs, weights = quadrature_nodes(cs)
    assert weights.sum() == pytest.approx(cs.period, rel=1e-14)
    assert np.all((xs > 0) & (xs < cs.period))
    nodes, node_weights = interval_nodes(cs, 0.25, 0.75)
    assert node_weights.sum() == pytest.approx(0.5, rel=1e-14)
    # [1, x]_a with w = +-1 on halves: int_0^1 x - int_1^2 x = 1/2 - 3/2
    assert cell_bracket(cs, np.ones_like, lambda x: x) == pytest.approx(-1.0, rel=1e-12)


def test_monodromy_eigenvector():
    L = np.array([[0.0, -2.0 / 3.0], [1.5, 0.0]], dtype=complex)
    vector = monodromy_eigenvector(L, 1j)
    np.testing.assert_allclose(L @ vector, 1j * vector, atol=1e-14)
    assert monodromy_eigenvector(np.eye(2, dtype=complex), 1.0) is None
    with pytest.raises(DegenerateEigenvector):
        monodromy_eigenvector(np.array([[1.0, 1e-8], [0.0, 1.0]], dtype=complex), 1.0)


def test_tolerance_range():
    assert check_tolerance(1e-8) == 1e-8
    with pytest.raises(ValueError):
        check_tolerance(1e-2)
    with pytest.raises(ValueError):
        transfer(hill_free(), 1.0, tol=1e-16)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, '-v']))
