"""
Classification of spectral points: sign types, critical points, negative
squares of the definite companion and the definiteness radius.
"""

import enum
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np
from scipy.integrate import trapezoid

from coefficients import definite_companion, essinf_ratio
from discriminant import ddot_from_transfer, eval_D_and_Ddot, eval_Ddotdot
from errors import CurveMissing, NearCritical, NotSpectral
from spectrum import (Box, DiscriminantDerivative, bracketed_root, correct_point, eigenvalues_in_box,
                      find_roots, floquet_angle, real_bands)
from transfer import (DEFAULT_TOL, CellPropagation, cell_bracket, monodromy_eigenvector,
                      quadrature_nodes, transfer)

DECISION_THRESHOLD = 1e-8
SPECTRAL_SLACK = 1e-8
NEGATIVE_EDGE = 1e-5
REAL_AXIS_OFFSET = 1e-4
MAX_RADIUS = 1024.0
DIAGNOSTIC_EPS = (1e-4, 1e-2)
DIAGNOSTIC_SAMPLES = 9
SAMPLES_PER_PIECE = 5


def decision_threshold(lam):
    return DECISION_THRESHOLD * (1 + abs(lam))


def _is_spectral_value(D):
    return abs(D.imag) <= SPECTRAL_SLACK and abs(D.real) <= 2 + SPECTRAL_SLACK


# ---------------------------------------------------------------------------
# Sign types

class SignType(enum.Enum):
    PositiveType = 'positive'
    NegativeType = 'negative'
    Undecided = 'undecided'


class SignRoute(enum.Enum):
    PsiRoute = 'psi'
    PPhiRoute = 'pphi'


@dataclass(frozen=True)
class SignTypeVerdict:
    lam: float
    t: float
    verdict: SignType
    route: SignRoute
    witness: float


def sign_type(cs, lam, route=None, tol=DEFAULT_TOL):
    """Sign type of a real spectral point from the sign of D'(lam) psi(a) or D'(lam) (p phi')(a)"""
    lam = float(lam)
    result = transfer(cs, complex(lam, 0.0), tol)
    D = complex(result.D)
    if not _is_spectral_value(D):
        raise NotSpectral(f"D({lam}) = {D} is outside [-2, 2]", lam=lam, D=D)
    ddot = ddot_from_transfer(result).real
    threshold = decision_threshold(lam)
    if abs(ddot) < threshold:
        raise NearCritical(f"|D'({lam})| = {abs(ddot):.3e} is below the decision threshold",
                           lam=lam, Ddot=ddot)

    psi = result.psi_a.real
    pphi = result.pphi_prime_a.real
    if route is None:
        route = SignRoute.PsiRoute if abs(psi) >= abs(pphi) else SignRoute.PPhiRoute
    if route is SignRoute.PsiRoute:
        entry, witness = psi, ddot * psi
        positive = witness < 0
    else:
        entry, witness = pphi, ddot * pphi
        positive = witness > 0

    if abs(entry) <= threshold:
        verdict = SignType.Undecided
    else:
        verdict = SignType.PositiveType if positive else SignType.NegativeType
    return SignTypeVerdict(lam=lam, t=floquet_angle(D), verdict=verdict, route=route, witness=float(witness))


def routes_agree(cs, lam, tol=DEFAULT_TOL):
    """Whether both sign routes give the same verdict (None when one of them is undecided)"""
    by_psi = sign_type(cs, lam, SignRoute.PsiRoute, tol).verdict
    by_pphi = sign_type(cs, lam, SignRoute.PPhiRoute, tol).verdict
    if SignType.Undecided in (by_psi, by_pphi):
        return None
    return by_psi is by_pphi


# ---------------------------------------------------------------------------
# Real critical points and interval partition

def real_critical_points(cs, lo, hi, n=400, tol=DEFAULT_TOL):
    """Zeros of D' on the real interval [lo, hi] from sign changes on a fixed grid"""
    grid = np.linspace(lo, hi, n)
    values = np.array([eval_D_and_Ddot(cs, complex(x, 0.0), tol)[1].real for x in grid])

    def ddot(x):
        return eval_D_and_Ddot(cs, complex(x, 0.0), tol)[1].real

    zeros = [float(x) for x, v in zip(grid, values) if v == 0]
    for k in np.nonzero(values[:-1] * values[1:] < 0)[0]:
        zeros.append(bracketed_root(ddot, grid[k], grid[k + 1]))
    return sorted(zeros)


class IntervalType(enum.Enum):
    Positive = 'positive'
    Negative = 'negative'
    Mixed = 'mixed'
    Unknown = 'unknown'


@dataclass(frozen=True)
class PartitionInterval:
    lo: float
    hi: float
    label: IntervalType
    spectral_pieces: tuple

    def to_dict(self):
        return {'lo': self.lo, 'hi': self.hi, 'type': self.label.value,
                'spectral_pieces': [list(p) for p in self.spectral_pieces]}


def _label_piece(cs, lo, hi, tol):
    verdicts = set()
    for k in range(SAMPLES_PER_PIECE):
        lam = lo + (k + 0.5) * (hi - lo) / SAMPLES_PER_PIECE
        try:
            verdict = sign_type(cs, lam, tol=tol).verdict
        except (NearCritical, NotSpectral):
            continue
        if verdict is not SignType.Undecided:
            verdicts.add(verdict)
    if verdicts == {SignType.PositiveType}:
        return IntervalType.Positive
    if verdicts == {SignType.NegativeType}:
        return IntervalType.Negative
    return IntervalType.Mixed if verdicts else IntervalType.Unknown


def interval_partition(cs, lam_min, lam_max, n_scan=2000, tol=DEFAULT_TOL):
    """Partition of a real window into intervals of one sign type"""
    if not lam_min < lam_max:
        raise ValueError("lam_min must be below lam_max")
    pieces = []
    for band in real_bands(cs, lam_min, lam_max, n_scan, tol):
        inner = [c for c in real_critical_points(cs, band.lo, band.hi, tol=tol)
                 if band.lo + 1e-12 < c < band.hi - 1e-12]
        cuts = [band.lo] + inner + [band.hi]
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            pieces.append((lo, hi, _label_piece(cs, lo, hi, tol)))

    if not pieces:
        return [PartitionInterval(lam_min, lam_max, IntervalType.Unknown, ())]

    # merge neighbours with one label; boundaries sit at critical points or mid-gap
    groups = [[pieces[0]]]
    for piece in pieces[1:]:
        if piece[2] is groups[-1][-1][2]:
            groups[-1].append(piece)
        else:
            groups.append([piece])
    intervals = []
    for index, group in enumerate(groups):
        lo = lam_min if index == 0 else 0.5 * (groups[index - 1][-1][1] + group[0][0])
        hi = lam_max if index == len(groups) - 1 else 0.5 * (group[-1][1] + groups[index + 1][0][0])
        intervals.append(PartitionInterval(lo, hi, group[0][2], tuple((p[0], p[1]) for p in group)))
    logging.info(f"Partitioned [{lam_min}, {lam_max}] into {len(intervals)} intervals")
    return intervals


# ---------------------------------------------------------------------------
# Critical points

class CriticalVerdict(enum.Enum):
    Regular = 'regular'
    Singular = 'singular'
    NonSpectral = 'non_spectral'


@dataclass(frozen=True)
class CriticalPointReport:
    lam0: complex
    t0: Optional[float]
    D0: complex
    Ddot0: complex
    Ddotdot0: complex
    psi_a: complex
    pphi_prime_a: complex
    verdict: CriticalVerdict
    diagnostic_exponent: Optional[float] = None

    def to_dict(self):
        def pair(z):
            return [z.real, z.imag]
        return {
            'lambda': pair(self.lam0), 't0': self.t0, 'D': pair(self.D0), 'Ddot': pair(self.Ddot0),
            'Ddotdot': pair(self.Ddotdot0), 'psi_a': pair(self.psi_a),
            'pphi_prime_a': pair(self.pphi_prime_a), 'verdict': self.verdict.value,
            'diagnostic_exponent': self.diagnostic_exponent,
        }


def critical_report(cs, lam0, tol=DEFAULT_TOL):
    """Regular / Singular / NonSpectral verdict at a zero of D'"""
    result = transfer(cs, lam0, tol)
    D0 = complex(result.D)
    ddotdot = eval_Ddotdot(cs, lam0, tol)
    psi, pphi = complex(result.psi_a), complex(result.pphi_prime_a)
    threshold = decision_threshold(lam0)
    if not _is_spectral_value(D0):
        verdict = CriticalVerdict.NonSpectral
    elif (abs(abs(D0.real) - 2) <= threshold and abs(psi) <= threshold
          and abs(pphi) <= threshold and abs(ddotdot) > threshold):
        verdict = CriticalVerdict.Regular
    else:
        verdict = CriticalVerdict.Singular
    return CriticalPointReport(
        lam0=complex(lam0), t0=floquet_angle(D0) if verdict is not CriticalVerdict.NonSpectral else None,
        D0=D0, Ddot0=complex(ddot_from_transfer(result)), Ddotdot0=ddotdot,
        psi_a=psi, pphi_prime_a=pphi, verdict=verdict,
    )


def critical_points(cs, box, include_nonspectral=False, max_roots=200, tol=DEFAULT_TOL):
    """Zeros of D' in a box with their regular/singular verdicts"""
    roots, _, _ = find_roots(DiscriminantDerivative(cs, tol), box, max_roots)
    reports = [critical_report(cs, root.lam, tol) for root in roots]
    if not include_nonspectral:
        reports = [r for r in reports if r.verdict is not CriticalVerdict.NonSpectral]
    for report in reports:
        logging.info(f"Critical point {report.lam0:.10g}: {report.verdict.value}")
    return reports


def _adjacent_branch(cs, report, eps_values, tol):
    """lam(t0 + s eps) along a curve leaving the critical point, for decreasing eps"""
    lam0, t0 = report.lam0, report.t0
    keep_real = abs(lam0.imag) <= SPECTRAL_SLACK

    def offset(t):
        return np.sqrt(complex(2 * (2 * math.cos(t) - report.D0) / report.Ddotdot0))

    for direction in (1, -1):
        if not 0.0 <= t0 + direction * eps_values[0] <= math.pi:
            continue
        for sign in (1, -1):
            points = []
            for eps in eps_values:
                t = t0 + direction * eps
                delta = offset(t)
                guess = lam0 + sign * delta
                if points:
                    # stay on the branch followed so far
                    guess = min((lam0 + delta, lam0 - delta), key=lambda z: abs(z - points[-1][1]))
                branch_real = keep_real and abs(guess.imag) <= SPECTRAL_SLACK
                lam, _, converged = correct_point(cs, guess, t, tol, branch_real)
                if not converged or abs(lam - lam0) < 1e-14:
                    break
                points.append((t, lam))
            if len(points) == len(eps_values):
                return points
    return None


def singularity_diagnostic(cs, report, eps_range=DIAGNOSTIC_EPS, samples=DIAGNOSTIC_SAMPLES,
                           tol=DEFAULT_TOL):
    """Divergence exponent of the integral of |f/D'|^2 along an adjacent curve

    f runs over the entries of L(lam(t)) - e^{-it}. The integrand behaves like
    eps^(-gamma) near the critical point, so its integral over [eps, eps0]
    behaves like eps^(1 - gamma); the returned beta = gamma - 1 is positive
    exactly when some entry is not square integrable.
    """
    if report.verdict is CriticalVerdict.NonSpectral:
        raise CurveMissing(f"{report.lam0} is not a spectral point", lam=report.lam0)
    eps_values = np.geomspace(eps_range[1], eps_range[0], samples)
    branch = _adjacent_branch(cs, report, eps_values, tol)
    if branch is None:
        raise CurveMissing(f"no spectral curve could be followed into {report.lam0}", lam=report.lam0)

    ratios = []
    for t, lam in branch:
        result = transfer(cs, lam, tol)
        f = result.L - np.exp(-1j * t) * np.eye(2)
        ratios.append(np.abs(f / ddot_from_transfer(result)).ravel() ** 2)
    ratios = np.array(ratios)

    log_eps = np.log(eps_values)
    betas = []
    for entry in range(4):
        column = ratios[:, entry]
        if np.max(column) < 1e-24 or np.any(column == 0):
            continue
        slope = np.polyfit(log_eps, np.log(column), 1)[0]
        betas.append(-slope - 1.0)
    beta = max(betas) if betas else -1.0
    logging.info(f"Singularity diagnostic at {report.lam0:.10g}: beta = {beta:.3f}")
    return float(beta)


def with_diagnostic(cs, report, tol=DEFAULT_TOL):
    """The report with its diagnostic exponent filled in when a curve can be followed"""
    try:
        return replace(report, diagnostic_exponent=singularity_diagnostic(cs, report, tol=tol))
    except CurveMissing as e:
        logging.warning(f"No diagnostic for {report.lam0}: {e}")
        return report


# ---------------------------------------------------------------------------
# Negative squares of the definite companion

@dataclass(frozen=True)
class NegativeSquares:
    t: float
    kappa: int
    lower_bound_used: float
    kappa_star: int


def _lower_bound(companion, tol, max_roots):
    bound = essinf_ratio(companion)
    if math.isfinite(bound):
        return min(0.0, bound) - 1.0
    # w vanishes where q < 0: widen until a band below the window stays empty
    lower = -1.0
    for _ in range(30):
        below = Box(2 * lower, lower, -0.5, 0.5)
        if (eigenvalues_in_box(companion, 0.0, below, max_roots, tol).contour_count == 0
                and eigenvalues_in_box(companion, math.pi, below, max_roots, tol).contour_count == 0):
            logging.warning(f"Lower bound for the companion taken from an empty search band at {lower}")
            return lower
        lower *= 2
    raise NotSpectral("could not bound the companion operator from below")


def _kappa(companion, t, lower, tol, max_roots):
    window = Box(lower, -NEGATIVE_EDGE, -0.5, 0.5)
    return eigenvalues_in_box(companion, t, window, max_roots, tol).contour_count


def negative_squares(cs, t, tol=DEFAULT_TOL, max_roots=200):
    """Number of negative eigenvalues of the definite companion T(t)"""
    companion = definite_companion(cs)
    lower = _lower_bound(companion, tol, max_roots)
    kappa = _kappa(companion, t, lower, tol, max_roots)
    kappa_star = max(_kappa(companion, 0.0, lower, tol, max_roots),
                     _kappa(companion, math.pi, lower, tol, max_roots))
    if kappa not in (kappa_star - 1, kappa_star):
        logging.warning(f"kappa({t}) = {kappa} outside {{{kappa_star - 1}, {kappa_star}}}")
    return NegativeSquares(t=float(t), kappa=kappa, lower_bound_used=lower, kappa_star=kappa_star)


# ---------------------------------------------------------------------------
# Non-real eigenvalues and radii

def nonreal_eigenvalues(cs, t, radius, tol=DEFAULT_TOL, max_roots=200):
    """Non-real eigenvalues of A(t) with |Re|, Im <= radius (upper half plane plus conjugates)"""
    upper = Box(-radius, radius, REAL_AXIS_OFFSET, radius)
    found = [r.lam for r in eigenvalues_in_box(cs, t, upper, max_roots, tol).roots]
    return sorted(found + [lam.conjugate() for lam in found], key=lambda z: (z.real, z.imag))


def _stable_nonreal(cs, start_radius, tol, max_roots):
    radius = start_radius
    previous = None
    while radius <= MAX_RADIUS:
        found = nonreal_eigenvalues(cs, 0.0, radius, tol, max_roots) + \
            nonreal_eigenvalues(cs, math.pi, radius, tol, max_roots)
        if previous is not None and len(found) == len(previous):
            return found, radius
        previous = found
        radius *= 2
    logging.warning(f"Non-real eigenvalue count still changing at radius {MAX_RADIUS}")
    return previous, radius / 2


@dataclass(frozen=True)
class BothRealReport:
    both_real: bool
    nonreal: List[complex]
    search_radius: float


def spectra_both_real(cs, start_radius=4.0, tol=DEFAULT_TOL, max_roots=200):
    """Whether A(0) and A(pi) have only real eigenvalues in the searched region"""
    found, radius = _stable_nonreal(cs, start_radius, tol, max_roots)
    return BothRealReport(both_real=not found, nonreal=found, search_radius=radius)


@dataclass(frozen=True)
class DefinitenessRadius:
    R0: float
    R_effective: float
    nonreal: List[complex]
    search_radius: float

    def to_dict(self):
        return {'R0': self.R0, 'R_effective': self.R_effective, 'search_radius': self.search_radius,
                'nonreal': [[z.real, z.imag] for z in self.nonreal]}


def definiteness_radius(cs, curves=None, window=None, start_radius=4.0, n_scan=2000,
                        tol=DEFAULT_TOL, max_roots=200):
    """R0 from the non-real eigenvalues of A(0), A(pi) and an empirical radius R_effective"""
    found, radius = _stable_nonreal(cs, start_radius, tol, max_roots)
    R0 = math.sqrt(2) * max((abs(z) for z in found), default=0.0)

    half = window if window is not None else max(2 * R0, 10.0)
    outer = 0.0
    for band in real_bands(cs, -half, half, n_scan, tol):
        for k in range(SAMPLES_PER_PIECE * 4):
            lam = band.lo + (k + 0.5) * (band.hi - band.lo) / (SAMPLES_PER_PIECE * 4)
            try:
                verdict = sign_type(cs, lam, tol=tol).verdict
            except (NearCritical, NotSpectral):
                continue
            wrong = ((lam > 0 and verdict is SignType.NegativeType)
                     or (lam < 0 and verdict is SignType.PositiveType))
            if wrong:
                outer = max(outer, abs(lam))
    points = list(found)
    for curve in curves or ():
        if not curve.is_real:
            points.extend(curve.lams)
    outer = max([outer] + [abs(z) for z in points])
    logging.info(f"R0 = {R0:.6g}, R_effective = {outer:.6g}")
    return DefinitenessRadius(R0=R0, R_effective=outer, nonreal=found, search_radius=radius)


@dataclass(frozen=True)
class OuterCriticalPoint:
    lam: float
    D: float
    Ddotdot: float
    holds: bool


def check_outer_critical_points(cs, R0, window, tol=DEFAULT_TOL):
    """Real critical points with |lam| >= R0: each should have |D| >= 2 and D D'' < 0"""
    lo, hi = window
    checked = []
    for lam in real_critical_points(cs, lo, hi, tol=tol):
        if abs(lam) < R0:
            continue
        D = eval_D_and_Ddot(cs, complex(lam, 0.0), tol)[0].real
        ddotdot = eval_Ddotdot(cs, complex(lam, 0.0), tol).real
        holds = abs(D) >= 2 - 1e-8 and D * ddotdot < 0
        if not holds:
            logging.warning(f"Critical point {lam} outside R0 has D = {D}, D'' = {ddotdot}")
        checked.append(OuterCriticalPoint(lam=lam, D=D, Ddotdot=ddotdot, holds=holds))
    return checked


def real_accumulation_points(curves, tol=1e-8):
    """Real endpoints of non-real curves"""
    found = []
    for curve in curves:
        if curve.is_real:
            continue
        for end in (curve.points[0].lam, curve.points[-1].lam):
            if abs(end.imag) <= tol * (1 + abs(end)):
                value = end.real
                if all(abs(value - other) > 1e-6 * (1 + abs(value)) for other in found):
                    found.append(value)
    return sorted(found)


# ---------------------------------------------------------------------------
# Eigenfunction identities and the projection form

def verify_eigen_identity(cs, t, lam, tol=DEFAULT_TOL):
    """Relative mismatch in psi(a)[f, g] = -f(0) conj(g(0)) D' and (p phi')(a)[f, g] = (pf')(0) conj((pg')(0)) D'

    f and g are the eigenfunctions of A(t) at lam and conj(lam).
    """
    lam = complex(lam)
    mu = np.exp(1j * t)
    here = CellPropagation(cs, lam, tol)
    there = CellPropagation(cs, lam.conjugate(), tol)
    L = here.monodromy()
    first = monodromy_eigenvector(L, mu)
    second = monodromy_eigenvector(there.monodromy(), mu)
    if first is None or second is None:
        logging.info(f"Monodromy is diagonal at {lam}; eigen identity holds trivially")
        return 0.0
    alpha, beta = first
    gamma, delta = second

    def f(xs):
        states = here.fundamental(xs)
        return alpha * states[:, 0] + beta * states[:, 2]

    def g(xs):
        states = there.fundamental(xs)
        return gamma * states[:, 0] + delta * states[:, 2]

    bracket = cell_bracket(cs, f, g)
    ddot = ddot_from_transfer(transfer(cs, lam, tol))
    residuals = []
    for lhs, rhs in ((L[0, 1] * bracket, -alpha * np.conj(gamma) * ddot),
                     (L[1, 0] * bracket, beta * np.conj(delta) * ddot)):
        scale = max(abs(lhs), abs(rhs))
        residuals.append(0.0 if scale == 0 else abs(lhs - rhs) / scale)
    residual = max(residuals)
    logging.debug(f"Eigen identity residuals at {lam}: {residuals}")
    return float(residual)


def projection_form(cs, curve, g, h, tol=DEFAULT_TOL):
    """Sesquilinear form of the spectral projection of a regular curve on t-independent g, h

    g and h are callables of x. The integrand pairs ([phi, h], [psi, h]) with
    (L - e^{-it}) / D' and ([g, conj psi], -[g, conj phi]) along the curve.
    """
    xs, weights = quadrature_nodes(cs, tol=tol)
    w = cs.evaluate('w', xs)
    gw = g(xs) * w
    hw = np.conj(h(xs)) * w
    values = []
    for point in curve.points:
        result = transfer(cs, point.lam, tol)
        ddot = ddot_from_transfer(result)
        if abs(ddot) < decision_threshold(point.lam):
            raise NearCritical("projection form needs a curve free of critical points",
                               lam=point.lam)
        states = CellPropagation(cs, point.lam, tol).fundamental(xs)
        phi, psi = states[:, 0], states[:, 2]
        left = np.array([np.sum(weights * phi * hw), np.sum(weights * psi * hw)])
        right = np.array([np.sum(weights * gw * psi), -np.sum(weights * gw * phi)])
        middle = (result.L - np.exp(-1j * point.t) * np.eye(2)) / ddot
        values.append(left @ middle @ right)
    return complex(trapezoid(np.array(values), curve.ts))
