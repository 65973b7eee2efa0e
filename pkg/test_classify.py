#!/usr/bin/env python3
"""
Tests for sign types, critical points, negative squares and the definiteness radius
"""

import logging
import math
from pathlib import Path

import numpy as np
import pytest

from classify import (CriticalVerdict, IntervalType, SignRoute, SignType, check_outer_critical_points,
                      critical_points, critical_report, definiteness_radius, interval_partition,
                      negative_squares, nonreal_eigenvalues, projection_form, real_accumulation_points,
                      real_critical_points, routes_agree, sign_type, singularity_diagnostic,
                      spectra_both_real, verify_eigen_identity, with_diagnostic)
from coefficients import load_coefficients
from errors import CurveMissing, NearCritical, NotSpectral
from spectrum import (Box, CurvePoint, SpectralCurve, StopReason, eigenvalues_in_box, real_bands,
                      trace_curves)

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')

SETS = Path(__file__).parent / 'coefficient_sets'


def load(name):
    return load_coefficients(SETS / f'{name}.json')


@pytest.fixture(scope='module')
def hill():
    return load('hill_free')


@pytest.fixture(scope='module')
def well():
    return load('square_well')


@pytest.fixture(scope='module')
def shifted_well():
    return load('square_well_shifted')


@pytest.mark.parametrize('lam', [0.5, 2.5, 7.0])
def test_definite_spectrum_is_positive(hill, lam):
    for route in SignRoute:
        verdict = sign_type(hill, lam, route)
        assert verdict.verdict is SignType.PositiveType
        assert verdict.route is route
    assert routes_agree(hill, lam)


def test_square_well_sign_types_follow_the_sign_of_lam(well):
    positive = sign_type(well, 1.0)
    negative = sign_type(well, -1.0)
    assert positive.verdict is SignType.PositiveType
    assert negative.verdict is SignType.NegativeType
    assert positive.t == pytest.approx(negative.t)
    assert routes_agree(well, 1.0) and routes_agree(well, -1.0)


def test_outermost_bands_of_square_well(well):
    bands = real_bands(well, -30.0, 30.0, n_scan=1500)
    for band, expected in ((bands[0], SignType.NegativeType), (bands[-1], SignType.PositiveType)):
        for lam in np.linspace(band.lo, band.hi, 7)[1:-1]:
            assert sign_type(well, lam).verdict is expected
            assert routes_agree(well, lam) is not False


def test_sign_type_rejects_gaps_and_critical_points(hill, well):
    with pytest.raises(NotSpectral):
        sign_type(hill, -1.0)
    with pytest.raises(NearCritical):
        sign_type(hill, 4.0)
    with pytest.raises(NearCritical):
        sign_type(well, 0.0)


def test_interval_partition_of_square_well(well):
    intervals = interval_partition(well, -30.0, 30.0, n_scan=1500)
    assert intervals[0].label is IntervalType.Negative
    assert intervals[-1].label is IntervalType.Positive
    assert intervals[0].lo == -30.0 and intervals[-1].hi == 30.0
    for left, right in zip(intervals[:-1], intervals[1:]):
        assert left.hi == right.lo
    # the split sits at the critical point 0
    boundary = [i.hi for i in intervals if i.label is IntervalType.Negative][-1]
    assert boundary == pytest.approx(0.0, abs=1e-8)
    assert intervals[0].to_dict()['type'] == 'negative'


def test_real_critical_points_of_hill(hill):
    found = real_critical_points(hill, 0.5, 20.0)
    np.testing.assert_allclose(found, [1.0, 4.0, 9.0, 16.0], atol=1e-9)


def test_square_well_critical_point_is_singular(well):
    reports = critical_points(well, Box(-1.0, 1.0, -1.0, 1.0))
    assert len(reports) == 1
    report = reports[0]
    assert abs(report.lam0) < 1e-8
    assert report.verdict is CriticalVerdict.Singular
    assert report.psi_a == pytest.approx(2.0, abs=1e-10)
    assert report.t0 == pytest.approx(0.0, abs=1e-6)
    assert singularity_diagnostic(well, report) > 0.5


def test_hill_critical_point_is_regular(hill):
    reports = critical_points(hill, Box(3.0, 5.0, -1.0, 1.0))
    assert len(reports) == 1
    report = reports[0]
    assert report.lam0 == pytest.approx(4.0, abs=1e-8)
    assert report.verdict is CriticalVerdict.Regular
    assert abs(report.Ddotdot0) > 1e-3
    assert singularity_diagnostic(hill, report) <= 0.0
    assert with_diagnostic(hill, report).diagnostic_exponent <= 0.0
    assert report.to_dict()['verdict'] == 'regular'


def test_nonspectral_critical_point(hill):
    # a point inside a gap is reported as non-spectral
    report = critical_report(hill, complex(-1.0, 0.0))
    assert report.verdict is CriticalVerdict.NonSpectral
    assert report.t0 is None
    with pytest.raises(CurveMissing):
        singularity_diagnostic(hill, report)
    assert with_diagnostic(hill, report).diagnostic_exponent is None


def test_negative_squares_of_definite_problems(hill, well):
    for cs in (hill, well):
        for t in np.linspace(0.0, math.pi, 20):
            result = negative_squares(cs, t)
            assert result.kappa == 0 and result.kappa_star == 0


def test_negative_squares_with_negative_potential():
    # periodic eigenvalues 4k^2 - 1, antiperiodic (2k + 1)^2 - 1
    shifted = load('hill_shifted')
    at_zero = negative_squares(shifted, 0.0)
    assert at_zero.kappa == 1
    assert at_zero.kappa_star == 1
    assert at_zero.lower_bound_used == pytest.approx(-2.0)
    assert negative_squares(shifted, math.pi).kappa == 0
    for t in np.linspace(0.0, math.pi, 20):
        result = negative_squares(shifted, t)
        assert result.kappa in (result.kappa_star - 1, result.kappa_star)


def test_definite_problems_have_zero_radius(hill, well):
    assert spectra_both_real(hill).both_real
    for cs in (hill, well):
        radius = definiteness_radius(cs, window=10.0, n_scan=400)
        assert radius.R0 == 0.0
        assert radius.nonreal == []
    assert definiteness_radius(hill, window=10.0, n_scan=400).R_effective == 0.0


def test_shifted_well_has_positive_radius(shifted_well):
    radius = definiteness_radius(shifted_well, window=10.0, n_scan=400)
    assert radius.R0 > 0.0
    assert radius.R0 == pytest.approx(math.sqrt(2) * max(abs(z) for z in radius.nonreal))
    assert len(radius.nonreal) % 2 == 0
    assert radius.to_dict()['R0'] == radius.R0
    upper = nonreal_eigenvalues(shifted_well, 0.0, 4.0)
    assert all(any(abs(z - w.conjugate()) < 1e-8 for w in upper) for z in upper)


def test_accumulation_points_lie_inside_radius(shifted_well):
    curves = trace_curves(shifted_well, Box(-6.0, 6.0, -4.0, 4.0), seed_density=8)
    radius = definiteness_radius(shifted_well, curves=curves, window=6.0, n_scan=400)
    for value in real_accumulation_points(curves):
        assert abs(value) <= radius.R0 + 1e-6
    assert radius.R_effective >= max(abs(z) for z in radius.nonreal)


def test_outer_critical_points_for_hill(hill):
    checked = check_outer_critical_points(hill, 0.0, (0.5, 30.0))
    assert [round(c.lam) for c in checked] == [1, 4, 9, 16, 25]
    assert all(c.holds for c in checked)


def test_eigen_identity_on_hill(hill):
    # L = [[0, -2/3], [3/2, 0]] at t = pi/2, lam = 9/4
    assert verify_eigen_identity(hill, math.pi / 2, 2.25) <= 1e-7


def test_eigen_identity_on_square_well(well):
    t = 1.0
    found = eigenvalues_in_box(well, t, Box(-20.0, 20.0, -1.0, 1.0))
    assert found.roots
    for root in found.roots:
        assert verify_eigen_identity(well, t, root.lam) <= 1e-6


def test_eigen_identity_is_trivial_for_diagonal_monodromy(hill):
    # L = I at the periodic eigenvalue 4
    assert verify_eigen_identity(hill, 0.0, 4.0) == 0.0


def test_projection_form_is_real_on_real_curves(hill):
    curves = trace_curves(hill, Box(-1.0, 5.0, -1.0, 1.0), seed_density=8)
    curve = max((c for c in curves if c.is_real), key=lambda c: len(c.points))
    inner = SpectralCurve(curve.points[1:-1], curve.start_reason, curve.end_reason, True)
    value = projection_form(hill, inner, np.cos, np.cos)
    assert abs(value.imag) <= 1e-8 * (1 + abs(value))


def test_projection_form_refuses_critical_points(hill):
    points = (CurvePoint(complex(4.0, 0.0), 0.0), CurvePoint(complex(4.1, 0.0), 0.5))
    curve = SpectralCurve(points, StopReason.CriticalPoint, StopReason.BoxBoundary, True)
    with pytest.raises(NearCritical):
        projection_form(hill, curve, np.cos, np.cos)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, '-v']))
