"""
Quasi-periodic eigenvalues, real bands and spectral curves.

lam is an eigenvalue of A(t) exactly when D(lam) = 2 cos t. Roots in a complex
box are counted with the argument principle along the box boundary (phase
unwrapping guided by D' from the quadrature identity), isolated by recursive
bisection of the box and polished by Newton's method. Spectral curves are
followed in the Floquet parameter t with a predictor along
D'(lam(t)) lam'(t) = -2 sin t and a Newton corrector on D(lam) = 2 cos t.
"""

import enum
import logging
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.optimize import brentq

from discriminant import ddot_from_transfer, eval_D_and_Ddot, eval_Ddotdot
from errors import BoxCountUnstable, MaxRootsExceeded, NumericalFailure, SeedExhaustion
from transfer import DEFAULT_TOL, transfer

# Contour sampling
INITIAL_CONTOUR_POINTS = 64
MAX_CONTOUR_POINTS = 40000
MAX_PHASE_STEP = 0.4
MAX_LOG_STEP = 1.0
BOUNDARY_DISTANCE = 1e-6
NEWTON_REACH = 1.0

# Root isolation
CLUSTER_DIAMETER = 5e-4
MERGE_RADIUS = 1e-4
MULTIPLICITY_RADII = (1e-3, 1e-4)
SPLIT_FRACTIONS = (0.4637, 0.5371, 0.4172, 0.5)
JITTER_STEPS = (0.0, 1.37e-3, -2.11e-3, 3.07e-3)

# Curve continuation
DT_MIN = 1e-4
DT_MAX = 1e-2
DT_BRANCH = 1e-3
CORRECTOR_TOL = 1e-10
CORRECTOR_ITERATIONS = 12
ENDPOINT_ITERATIONS = 40
CRITICAL_THRESHOLD = 1e-6
REAL_CURVE_TOL = 1e-8
MAX_CURVE_POINTS = 20000

# Real scan
BAND_SLACK = 1e-9


def critical_threshold(lam):
    return CRITICAL_THRESHOLD * (1 + abs(lam))


def dedup_radius(lam):
    return 1e-6 * (1 + abs(lam))


@dataclass(frozen=True)
class Box:
    re_lo: float
    re_hi: float
    im_lo: float
    im_hi: float

    def __post_init__(self):
        if not (self.re_lo < self.re_hi and self.im_lo < self.im_hi):
            raise ValueError(f"empty box {self}")

    @classmethod
    def around(cls, lam, radius):
        return cls(lam.real - radius, lam.real + radius, lam.imag - radius, lam.imag + radius)

    @property
    def width(self):
        return self.re_hi - self.re_lo

    @property
    def height(self):
        return self.im_hi - self.im_lo

    @property
    def center(self):
        return complex(0.5 * (self.re_lo + self.re_hi), 0.5 * (self.im_lo + self.im_hi))

    @property
    def diameter(self):
        return math.hypot(self.width, self.height)

    def contains(self, lam, margin=0.0):
        return (self.re_lo - margin <= lam.real <= self.re_hi + margin
                and self.im_lo - margin <= lam.imag <= self.im_hi + margin)

    def split(self, fraction=0.5):
        if self.width >= self.height:
            cut = self.re_lo + fraction * self.width
            return (Box(self.re_lo, cut, self.im_lo, self.im_hi),
                    Box(cut, self.re_hi, self.im_lo, self.im_hi))
        cut = self.im_lo + fraction * self.height
        return (Box(self.re_lo, self.re_hi, self.im_lo, cut),
                Box(self.re_lo, self.re_hi, cut, self.im_hi))

    def jittered(self, amount):
        """Move every edge by amount times the box size (outward for positive amounts)"""
        dx, dy = amount * self.width, amount * self.height
        return Box(self.re_lo - dx, self.re_hi + dx * 0.618, self.im_lo - dy * 0.382, self.im_hi + dy)

    def scaled(self, factor):
        c = self.center
        hw, hh = 0.5 * factor * self.width, 0.5 * factor * self.height
        return Box(c.real - hw, c.real + hw, c.imag - hh, c.imag + hh)

    def path(self, s):
        """Counterclockwise boundary parametrised by s in [0, 1)"""
        s = np.asarray(s, dtype=float)
        w, h = self.width, self.height
        d = s * 2 * (w + h)
        z = np.empty(s.shape, dtype=complex)
        bottom = d < w
        right = (d >= w) & (d < w + h)
        top = (d >= w + h) & (d < 2 * w + h)
        left = d >= 2 * w + h
        z[bottom] = complex(self.re_lo, self.im_lo) + d[bottom]
        z[right] = complex(self.re_hi, self.im_lo) + 1j * (d[right] - w)
        z[top] = complex(self.re_hi, self.im_hi) - (d[top] - w - h)
        z[left] = complex(self.re_lo, self.im_hi) - 1j * (d[left] - 2 * w - h)
        return z

    def as_list(self):
        return [self.re_lo, self.re_hi, self.im_lo, self.im_hi]


def circle_path(center, radius):
    def path(s):
        return center + radius * np.exp(2j * np.pi * np.asarray(s, dtype=float))
    return path


class _RootOnContour(Exception):
    """A root lies on (or numerically too close to) the contour"""


# ---------------------------------------------------------------------------
# Root problems

def _newton(fn, lam0, multiplicity=1, max_iter=60):
    """Newton iteration on fn(lam) -> (g, g'); returns (lam, converged)"""
    lam = complex(lam0)
    step = math.inf
    for iteration in range(max_iter):
        g, gd = fn(lam)
        if g == 0:
            return lam, True
        if gd == 0 or not np.isfinite(gd):
            return lam, False
        step = multiplicity * g / gd
        lam = lam - step
        if abs(step) <= 1e-14 * (1 + abs(lam)):
            logging.debug(f"Newton converged to {lam} after {iteration + 1} iterations")
            return lam, True
    # stagnation at the noise floor still counts
    return lam, abs(step) <= 1e-10 * (1 + abs(lam))


class ShiftedDiscriminant:
    """g(lam) = D(lam) - target with g' = D' from the quadrature identity"""

    def __init__(self, cs, target, tol=DEFAULT_TOL):
        self.cs = cs
        self.target = complex(target)
        self.tol = tol
        self.evaluations = 0

    def __call__(self, lam):
        self.evaluations += 1
        result = transfer(self.cs, lam, self.tol)
        return complex(result.D) - self.target, complex(ddot_from_transfer(result))

    def evaluate(self, zs):
        pairs = [self(z) for z in zs]
        return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])

    def derivative_pair(self, lam):
        return (complex(ddot_from_transfer(transfer(self.cs, lam, self.tol))),
                eval_Ddotdot(self.cs, lam, self.tol))

    def polish(self, lam0, multiplicity):
        if multiplicity == 2:
            # double roots of D - target are simple roots of D'
            return _newton(self.derivative_pair, lam0)
        return _newton(self, lam0, multiplicity)

    def residual(self, lam):
        return abs(self(lam)[0])


class DiscriminantDerivative:
    """g(lam) = D'(lam); counted by phase only, polished with D'' by extrapolation"""

    def __init__(self, cs, tol=DEFAULT_TOL):
        self.cs = cs
        self.tol = tol

    def __call__(self, lam):
        return (complex(ddot_from_transfer(transfer(self.cs, lam, self.tol))),
                eval_Ddotdot(self.cs, lam, self.tol))

    def evaluate(self, zs):
        values = [complex(ddot_from_transfer(transfer(self.cs, z, self.tol))) for z in zs]
        return np.array(values), None

    def polish(self, lam0, multiplicity):
        return _newton(self, lam0, multiplicity)

    def residual(self, lam):
        return abs(self(lam)[0])


# ---------------------------------------------------------------------------
# Argument principle

def contour_count(problem, path):
    """Number of zeros enclosed by a closed path, by adaptive phase unwrapping"""
    s = np.linspace(0.0, 1.0, INITIAL_CONTOUR_POINTS, endpoint=False)
    z = path(s)
    g, gd = problem.evaluate(z)
    while True:
        if np.any(g == 0) or not np.all(np.isfinite(g)):
            raise _RootOnContour()
        if gd is not None and np.any(np.abs(g / gd) < BOUNDARY_DISTANCE * (1 + np.abs(z))):
            raise _RootOnContour()
        if gd is None and np.any(np.abs(g) < 1e-12 * np.max(np.abs(g))):
            raise _RootOnContour()

        s_next = np.append(s[1:], 1.0)
        g_next = np.roll(g, -1)
        ratio = g_next / g
        darg = np.angle(ratio)
        bad = (np.abs(darg) > MAX_PHASE_STEP) | (np.abs(np.log(np.abs(ratio))) > MAX_LOG_STEP)
        if gd is not None:
            z_next = np.roll(z, -1)
            trapezoid = 0.5 * (gd / g + np.roll(gd / g, -1)) * (z_next - z)
            bad |= np.abs(trapezoid.imag - darg) > 0.5 * MAX_PHASE_STEP
            # an even-order root beside a long step leaves no phase trace at its ends
            reach = np.minimum(np.abs(g / gd), np.abs(g_next / np.roll(gd, -1)))
            bad |= np.abs(z_next - z) > NEWTON_REACH * reach
        if not np.any(bad):
            break
        if len(s) + np.count_nonzero(bad) > MAX_CONTOUR_POINTS:
            raise _RootOnContour()
        if np.min((s_next - s)[bad]) < 1e-12:
            raise _RootOnContour()

        mids = 0.5 * (s[bad] + s_next[bad])
        z_mid = path(mids)
        g_mid, gd_mid = problem.evaluate(z_mid)
        order = np.argsort(np.concatenate([s, mids]), kind='stable')
        s = np.concatenate([s, mids])[order]
        z = np.concatenate([z, z_mid])[order]
        g = np.concatenate([g, g_mid])[order]
        if gd is not None:
            gd = np.concatenate([gd, gd_mid])[order]

    winding = float(np.sum(darg)) / (2 * np.pi)
    count = int(round(winding))
    if abs(winding - count) > 0.1:
        raise _RootOnContour()
    logging.debug(f"Contour count {count} from {len(s)} samples")
    return count


def _count_in_box(problem, box):
    return contour_count(problem, box.path)


def _stable_top_count(problem, box):
    """Count on the given box, moving its edges slightly when a root sits on them"""
    for step in JITTER_STEPS:
        candidate = box.jittered(step) if step else box
        try:
            count = _count_in_box(problem, candidate)
        except _RootOnContour:
            logging.warning(f"Root near the boundary of {candidate.as_list()}, re-jittering")
            continue
        return candidate, count
    raise BoxCountUnstable("could not find a contour clear of roots", box=box.as_list())


@dataclass(frozen=True)
class Root:
    lam: complex
    multiplicity: int
    newton_residual: float


def _isolate(problem, box, count, found, depth=0):
    if count == 0:
        return
    if count == 1 or box.diameter <= CLUSTER_DIAMETER:
        found.append((box, count))
        return
    for fraction in SPLIT_FRACTIONS:
        first, second = box.split(fraction)
        try:
            counts = (_count_in_box(problem, first), _count_in_box(problem, second))
        except _RootOnContour:
            continue
        if counts[0] + counts[1] != count:
            logging.debug(f"Split counts {counts} disagree with {count} at depth {depth}")
            continue
        _isolate(problem, first, counts[0], found, depth + 1)
        _isolate(problem, second, counts[1], found, depth + 1)
        return
    raise BoxCountUnstable(f"contour counts disagree across refinement of {box.as_list()}",
                           box=box.as_list(), count=count)


def _polish_cluster(problem, box, count):
    lam, converged = problem.polish(box.center, count)
    if converged and box.contains(lam, margin=0.5 * box.diameter):
        return lam
    # Newton left the box: keep bisecting toward the root
    if box.diameter <= 1e-12 * (1 + abs(box.center)):
        raise BoxCountUnstable(f"Newton failed to converge in {box.as_list()}", box=box.as_list())
    for fraction in SPLIT_FRACTIONS:
        try:
            for half in box.split(fraction):
                if _count_in_box(problem, half) == count:
                    return _polish_cluster(problem, half, count)
        except _RootOnContour:
            continue
    raise BoxCountUnstable(f"could not localise root in {box.as_list()}", box=box.as_list())


def _multiplicity(problem, lam, count):
    counts = []
    for radius in MULTIPLICITY_RADII:
        try:
            counts.append(contour_count(problem, circle_path(lam, radius)))
        except _RootOnContour:
            counts.append(None)
    if counts[0] != counts[1] or counts[1] != count:
        raise BoxCountUnstable(
            f"multiplicity circles around {lam} give {counts}, expected {count}",
            lam=lam, counts=counts)
    return count


def _merge_clusters(problem, polished):
    """Join clusters whose polished roots coincide, as when a cut runs through a multiple root"""
    merged = []
    for lam, count in sorted(polished, key=lambda item: (item[0].real, item[0].imag)):
        for index, (other, other_count) in enumerate(merged):
            if abs(lam - other) <= MERGE_RADIUS * (1 + abs(lam)):
                logging.debug(f"Merging clusters at {other} and {lam}")
                joined = other_count + count
                start = (other * other_count + lam * count) / joined
                repolished, converged = problem.polish(start, joined)
                merged[index] = (repolished if converged and abs(repolished - start) <= MERGE_RADIUS
                                 else start, joined)
                break
        else:
            merged.append((lam, count))
    return merged


def find_roots(problem, box, max_roots=200):
    """All roots of a root problem inside a box, with multiplicities"""
    box, total = _stable_top_count(problem, box)
    if total > max_roots:
        raise MaxRootsExceeded(f"{total} roots in box exceeds max_roots={max_roots}",
                               box=box.as_list(), count=total)
    clusters = []
    _isolate(problem, box, total, clusters)
    polished = [(_polish_cluster(problem, cluster_box, count), count) for cluster_box, count in clusters]
    roots = []
    for lam, count in _merge_clusters(problem, polished):
        multiplicity = _multiplicity(problem, lam, count)
        roots.append(Root(lam=lam, multiplicity=multiplicity,
                          newton_residual=float(problem.residual(lam))))
    roots.sort(key=lambda r: (r.lam.real, r.lam.imag))
    return roots, total, box


@dataclass(frozen=True)
class EigenvalueList:
    t: float
    roots: List[Root]
    box: Box
    contour_count: int

    def values(self):
        return [r.lam for r in self.roots]

    def nonreal(self, tol=1e-8):
        return [r for r in self.roots if abs(r.lam.imag) > tol * (1 + abs(r.lam))]


def eigenvalues_in_box(cs, t, box, max_roots=200, tol=DEFAULT_TOL):
    """All eigenvalues of A(t) in a complex box (roots of D(lam) = 2 cos t)"""
    problem = ShiftedDiscriminant(cs, 2 * math.cos(t), tol)
    roots, total, used = find_roots(problem, box, max_roots)
    logging.info(f"t={t:.6g}: {len(roots)} distinct eigenvalues ({total} with multiplicity) "
                 f"in {used.as_list()} after {problem.evaluations} evaluations")
    return EigenvalueList(t=float(t), roots=roots, box=used, contour_count=total)


# ---------------------------------------------------------------------------
# Real bands

class EdgeKind(enum.Enum):
    BandEdgeDPlus2 = 'D=+2'
    BandEdgeDMinus2 = 'D=-2'
    WindowEdge = 'window'


@dataclass(frozen=True)
class Band:
    lo: float
    hi: float
    d_lo: float
    d_hi: float
    monotone: bool
    lo_kind: EdgeKind = EdgeKind.WindowEdge
    hi_kind: EdgeKind = EdgeKind.WindowEdge

    def contains(self, lam):
        return self.lo <= lam <= self.hi


def bracketed_root(f, lo, hi):
    """brentq with its failures reported as numerical failures"""
    try:
        return brentq(f, lo, hi, xtol=1e-14)
    except (ValueError, RuntimeError) as e:
        raise NumericalFailure(f"root bracketing failed on [{lo}, {hi}]: {e}", bracket=[lo, hi])


def real_D(cs, lam, tol=DEFAULT_TOL):
    return eval_D_and_Ddot(cs, complex(lam, 0.0), tol)[0].real


def _edge(cs, inside, outside, d_outside, tol):
    """Locate |D| = 2 between a point inside the band and one outside"""
    level = 2.0 if d_outside > 0 else -2.0
    kind = EdgeKind.BandEdgeDPlus2 if level > 0 else EdgeKind.BandEdgeDMinus2

    def f(lam):
        return real_D(cs, lam, tol) - level

    f_in = f(inside)
    if f_in == 0 or np.sign(f_in) == np.sign(d_outside - level):
        return inside, kind
    return bracketed_root(f, min(inside, outside), max(inside, outside)), kind


def real_bands(cs, lam_min, lam_max, n_scan=2000, tol=DEFAULT_TOL):
    """Maximal subintervals of [lam_min, lam_max] on which D lies in [-2, 2]"""
    if not lam_min < lam_max:
        raise ValueError("lam_min must be below lam_max")
    grid = np.linspace(lam_min, lam_max, n_scan)
    pairs = [eval_D_and_Ddot(cs, complex(x, 0.0), tol) for x in grid]
    d = np.array([p[0].real for p in pairs])
    ddot = np.array([p[1].real for p in pairs])
    inside = np.abs(d) <= 2 + BAND_SLACK

    bands = []
    index = 0
    while index < n_scan:
        if not inside[index]:
            index += 1
            continue
        start = index
        while index + 1 < n_scan and inside[index + 1]:
            index += 1
        stop = index
        index += 1

        if start == 0:
            lo, lo_kind = float(grid[0]), EdgeKind.WindowEdge
        else:
            lo, lo_kind = _edge(cs, grid[start], grid[start - 1], d[start - 1], tol)
        if stop == n_scan - 1:
            hi, hi_kind = float(grid[-1]), EdgeKind.WindowEdge
        else:
            hi, hi_kind = _edge(cs, grid[stop], grid[stop + 1], d[stop + 1], tol)
        if not lo < hi:
            continue

        run = ddot[start:stop + 1]
        monotone = bool(np.all(run > 0) or np.all(run < 0))
        bands.append(Band(lo=float(lo), hi=float(hi), d_lo=real_D(cs, lo, tol), d_hi=real_D(cs, hi, tol),
                          monotone=monotone, lo_kind=lo_kind, hi_kind=hi_kind))

    logging.info(f"Found {len(bands)} real bands in [{lam_min}, {lam_max}]")
    return bands


# ---------------------------------------------------------------------------
# Spectral curves

class StopReason(enum.Enum):
    CriticalPoint = 'critical_point'
    BandEdgeDPlus2 = 'band_edge_+2'
    BandEdgeDMinus2 = 'band_edge_-2'
    BoxBoundary = 'box_boundary'


@dataclass(frozen=True)
class CurvePoint:
    lam: complex
    t: float


@dataclass(frozen=True, eq=False)
class SpectralCurve:
    points: Tuple[CurvePoint, ...]
    start_reason: StopReason
    end_reason: StopReason
    is_real: bool

    @property
    def lams(self):
        return np.array([p.lam for p in self.points])

    @property
    def ts(self):
        return np.array([p.t for p in self.points])

    def conjugate(self):
        points = tuple(CurvePoint(p.lam.conjugate(), p.t) for p in self.points)
        return SpectralCurve(points, self.start_reason, self.end_reason, self.is_real)

    def sort_key(self):
        first = self.points[0]
        return (first.t, first.lam.real, first.lam.imag)


def correct_point(cs, guess, t, tol, keep_real, iterations=CORRECTOR_ITERATIONS):
    """Newton corrector on D(lam) = 2 cos t; returns (lam, Ddot, converged)"""
    target = 2 * math.cos(t)
    lam = complex(guess)
    ddot = complex('nan')
    for _ in range(iterations):
        result = transfer(cs, lam, tol)
        g = complex(result.D) - target
        ddot = complex(ddot_from_transfer(result))
        if abs(g) <= CORRECTOR_TOL * (1 + abs(ddot)):
            return lam, ddot, True
        if ddot == 0:
            return lam, ddot, False
        lam = lam - g / ddot
        if keep_real:
            lam = complex(lam.real, 0.0)
    result = transfer(cs, lam, tol)
    ddot = complex(ddot_from_transfer(result))
    return lam, ddot, abs(complex(result.D) - target) <= CORRECTOR_TOL * (1 + abs(ddot))


def locate_critical_point(cs, lam_guess, tol=DEFAULT_TOL):
    """Nearest zero of D' by Newton's method (D'' by extrapolation)"""
    lam, converged = _newton(DiscriminantDerivative(cs, tol), lam_guess, max_iter=30)
    return lam, converged


def _edge_reason(t, ddot, lam):
    if abs(ddot) < critical_threshold(lam):
        return StopReason.CriticalPoint
    return StopReason.BandEdgeDPlus2 if t < 0.5 * math.pi else StopReason.BandEdgeDMinus2


def _continue(cs, lam, t, ddot, direction, box, tol, keep_real):
    """Follow one branch from (lam, t) in the given t-direction"""
    points = []
    dt = DT_MAX
    critical = None
    while len(points) < MAX_CURVE_POINTS:
        if abs(ddot) < critical_threshold(lam):
            return points, StopReason.CriticalPoint, lam
        t_new = min(max(t + direction * dt, 0.0), math.pi)
        at_end = t_new in (0.0, math.pi)
        # predictor from D'(lam) dlam = d(2 cos t)
        predicted = lam + (2 * math.cos(t_new) - 2 * math.cos(t)) / ddot
        if keep_real:
            predicted = complex(predicted.real, 0.0)
        iterations = ENDPOINT_ITERATIONS if at_end else CORRECTOR_ITERATIONS
        corrected, ddot_new, converged = correct_point(cs, predicted, t_new, tol, keep_real, iterations)
        jump = abs(corrected - predicted)
        accepted = converged and jump <= 0.25 * abs(predicted - lam) + 1e-9 * (1 + abs(lam))
        if at_end and converged and not accepted:
            # the last step onto a double root converges slowly but stays on the branch
            accepted = jump <= abs(predicted - lam) + 1e-6 * (1 + abs(lam))
        if not accepted:
            dt *= 0.5
            if dt < DT_MIN:
                critical, found = locate_critical_point(cs, lam, tol)
                if found and abs(critical - lam) <= 50 * max(abs(predicted - lam), DT_MIN):
                    return points, StopReason.CriticalPoint, critical
                logging.warning(f"Continuation stalled at lam={lam}, t={t}")
                return points, StopReason.CriticalPoint, None
            continue
        if not box.contains(corrected):
            return points, StopReason.BoxBoundary, None
        points.append(CurvePoint(corrected, t_new))
        lam, t, ddot = corrected, t_new, ddot_new
        if at_end:
            reason = _edge_reason(t, ddot, lam)
            return points, reason, lam if reason is StopReason.CriticalPoint else None
        dt = min(2 * dt, DT_MAX)
    logging.warning(f"Curve exceeded {MAX_CURVE_POINTS} points near lam={lam}")
    return points, StopReason.BoxBoundary, None


def floquet_angle(D):
    return math.acos(min(1.0, max(-1.0, D.real / 2)))


def _curve_from_branches(seed, backward, forward, keep_real):
    """Join backward (decreasing t) and forward branches around a seed into one curve"""
    back_points, back_reason = backward
    fwd_points, fwd_reason = forward
    points = list(reversed(back_points)) + [seed] + fwd_points
    lams = np.array([p.lam for p in points])
    is_real = keep_real or bool(np.max(np.abs(lams.imag)) <= REAL_CURVE_TOL)
    return SpectralCurve(tuple(points), back_reason, fwd_reason, is_real)


class CurveTracer:
    """Collects spectral curves in a box and the critical points met on the way"""

    def __init__(self, cs, box, tol=DEFAULT_TOL):
        self.cs = cs
        self.box = box
        self.tol = tol
        self.curves = []
        self.critical_points = []

    def _is_real(self, lam):
        return abs(lam.imag) <= REAL_CURVE_TOL * (1 + abs(lam))

    def covered(self, lam, t):
        """Whether the spectral point (lam, t) already lies on a traced curve"""
        radius = dedup_radius(lam)
        for curve in self.curves:
            lams = curve.lams
            if np.min(np.abs(lams - lam)) <= radius:
                return True
            ts = curve.ts
            if not (ts[0] - 1e-12 <= t <= ts[-1] + 1e-12) or len(ts) < 2:
                continue
            guess = complex(np.interp(t, ts, lams.real), np.interp(t, ts, lams.imag))
            spacing = np.max(np.abs(np.diff(lams))) if len(lams) > 1 else 0.0
            if abs(guess - lam) > 4 * spacing + radius:
                continue
            snapped, _, converged = correct_point(self.cs, guess, t, self.tol, self._is_real(guess) and self._is_real(lam))
            if converged and abs(snapped - lam) <= radius:
                return True
        return False

    def _record_critical(self, lam):
        if lam is None:
            return
        for known in self.critical_points:
            if abs(known - lam) <= dedup_radius(lam) * 10:
                return
        self.critical_points.append(lam)

    def trace_from(self, lam, t, directions=(-1, 1)):
        """Trace the curve through a spectral point in the requested t-directions"""
        keep_real = self._is_real(lam)
        if keep_real:
            lam = complex(lam.real, 0.0)
        D, ddot = eval_D_and_Ddot(self.cs, lam, self.tol)
        if abs(ddot) < critical_threshold(lam):
            self._record_critical(lam)
            return None
        branches = {}
        for direction in (-1, 1):
            if direction not in directions:
                reason = _edge_reason(t, ddot, lam)
                branches[direction] = ([], reason)
                continue
            points, reason, critical = _continue(self.cs, lam, t, ddot, direction, self.box,
                                                 self.tol, keep_real)
            if reason is StopReason.CriticalPoint and critical is not None:
                self._record_critical(critical)
                if points and abs(critical - points[-1].lam) > 0:
                    crit_t = floquet_angle(eval_D_and_Ddot(self.cs, critical, self.tol)[0])
                    if (crit_t - points[-1].t) * direction > 0:
                        points.append(CurvePoint(critical, crit_t))
            branches[direction] = (points, reason)
        curve = _curve_from_branches(CurvePoint(lam, t), branches[-1], branches[1], keep_real)
        if len(curve.points) < 2:
            return None
        self.curves.append(curve)
        return curve

    def trace_from_critical(self, lam0):
        """Start the branches leaving a critical point (D' = 0, D'' != 0)"""
        D0, _ = eval_D_and_Ddot(self.cs, lam0, self.tol)
        if abs(D0.imag) > 1e-8 or abs(D0.real) > 2 + 1e-8:
            return []
        t0 = floquet_angle(D0)
        ddotdot = eval_Ddotdot(self.cs, lam0, self.tol)
        if abs(ddotdot) < 1e-10:
            logging.warning(f"Higher-order critical point at {lam0}; branches not started")
            return []
        started = []
        for direction in (-1, 1):
            t1 = t0 + direction * DT_BRANCH
            if not 0.0 <= t1 <= math.pi:
                continue
            delta = np.sqrt(complex(2 * (2 * math.cos(t1) - D0) / ddotdot))
            for sign in (1, -1):
                guess = lam0 + sign * delta
                keep_real = self._is_real(lam0) and self._is_real(guess)
                lam1, ddot1, converged = correct_point(self.cs, guess, t1, self.tol, keep_real)
                if not converged or abs(lam1 - lam0) < 1e-3 * abs(delta) or not self.box.contains(lam1):
                    continue
                if self.covered(lam1, t1):
                    continue
                curve = self.trace_from(lam1, t1, directions=(direction,))
                if curve is None:
                    continue
                # prepend the critical point itself as the curve start
                self.curves.pop()
                points = (CurvePoint(complex(lam0.real, 0.0) if keep_real else lam0, t0),) + curve.points \
                    if direction > 0 else curve.points + (CurvePoint(lam0, t0),)
                if direction > 0:
                    curve = SpectralCurve(points, StopReason.CriticalPoint, curve.end_reason, curve.is_real)
                else:
                    curve = SpectralCurve(points, curve.start_reason, StopReason.CriticalPoint, curve.is_real)
                self.curves.append(curve)
                started.append(curve)
        return started

    def seed(self, lam, t, directions=(-1, 1)):
        if not self.box.contains(lam) or self.covered(lam, t):
            return None
        return self.trace_from(lam, t, directions)

    def branch_all_critical(self):
        done = 0
        while done < len(self.critical_points):
            lam0 = self.critical_points[done]
            done += 1
            self.trace_from_critical(lam0)

    def deduplicate(self):
        kept = []
        for curve in sorted(self.curves, key=lambda c: -len(c.points)):
            mid = curve.points[len(curve.points) // 2]
            self.curves = kept
            if self.covered(mid.lam, mid.t):
                continue
            kept.append(curve)
        self.curves = kept

    def complete_conjugates(self):
        """Keep the upper-half non-real curves and mirror them into the lower half"""
        real, upper = [], []
        for curve in self.curves:
            if curve.is_real:
                real.append(curve)
                continue
            mid = curve.points[len(curve.points) // 2]
            if mid.lam.imag > 0:
                upper.append(curve)
            else:
                self.curves = upper
                if not self.covered(mid.lam.conjugate(), mid.t):
                    upper.append(curve.conjugate())
        for curve in upper:
            mid = curve.points[len(curve.points) // 2]
            mirror = mid.lam.conjugate()
            snapped, _, converged = correct_point(self.cs, mirror, mid.t, self.tol, False)
            if not converged or abs(snapped - mirror) > dedup_radius(mirror):
                logging.warning(f"Mirror of the curve through {mid.lam} does not solve D = 2 cos t "
                                f"(corrector moved it to {snapped})")
        self.curves = real + upper + [curve.conjugate() for curve in upper]


def grid_spectral_points(cs, box, n, offset=0.0, tol=DEFAULT_TOL):
    """Spectral points where the zero set of Im D crosses the edges of an n x n grid"""
    re = box.re_lo + (np.arange(n) + offset) * box.width / max(n - 1 + offset, 1)
    im = box.im_lo + (np.arange(n) + offset) * box.height / max(n - 1 + offset, 1)
    re = re[re <= box.re_hi]
    im = im[im <= box.im_hi]
    values = np.array([[eval_D_and_Ddot(cs, complex(x, y), tol)[0] for x in re] for y in im])
    found = []

    def crossing(z0, z1):
        def f(s):
            return eval_D_and_Ddot(cs, z0 + s * (z1 - z0), tol)[0].imag
        s = bracketed_root(f, 0.0, 1.0)
        lam = z0 + s * (z1 - z0)
        D = eval_D_and_Ddot(cs, lam, tol)[0]
        if abs(D.real) <= 2.0:
            found.append((lam, floquet_angle(D)))

    for i, y in enumerate(im):
        for j, x in enumerate(re):
            here = values[i, j].imag
            if j + 1 < len(re) and here * values[i, j + 1].imag < 0:
                crossing(complex(x, y), complex(re[j + 1], y))
            if i + 1 < len(im) and here * values[i + 1, j].imag < 0:
                crossing(complex(x, y), complex(x, im[i + 1]))
    return found


def trace_curves(cs, box, seed_density=16, tol=DEFAULT_TOL, max_roots=200):
    """Spectral curves of A inside a complex box"""
    tracer = CurveTracer(cs, box, tol)

    for t, direction in ((0.0, 1), (math.pi, -1)):
        for root in eigenvalues_in_box(cs, t, box, max_roots, tol).roots:
            if root.multiplicity > 1:
                tracer._record_critical(root.lam)
            else:
                tracer.seed(root.lam, t, directions=(direction,))
    tracer.branch_all_critical()

    for lam, t in grid_spectral_points(cs, box, seed_density, 0.0, tol):
        tracer.seed(lam, t)
    tracer.branch_all_critical()

    for attempt in range(2):
        uncovered = [(lam, t) for lam, t in grid_spectral_points(cs, box, seed_density, 0.5, tol)
                     if not tracer.covered(lam, t)]
        if not uncovered:
            break
        logging.info(f"Verification grid found {len(uncovered)} uncovered spectral points, reseeding")
        for lam, t in uncovered:
            tracer.seed(lam, t)
        tracer.branch_all_critical()
    else:
        raise SeedExhaustion(f"{len(uncovered)} spectral points not covered by any curve",
                             uncovered=[[lam.real, lam.imag] for lam, _ in uncovered])

    tracer.deduplicate()
    tracer.complete_conjugates()
    curves = sorted(tracer.curves, key=SpectralCurve.sort_key)
    logging.info(f"Traced {len(curves)} spectral curves "
                 f"({sum(1 for c in curves if not c.is_real)} non-real) in {box.as_list()}")
    return curves


def continuation_defect(cs, curve, tol=DEFAULT_TOL):
    """max |D'(lam(t)) lam'(t) + 2 sin t| / (1 + |D' lam'|) over interior curve points"""
    ts, lams = curve.ts, curve.lams
    worst = 0.0
    for k in range(1, len(ts) - 1):
        dt = ts[k + 1] - ts[k - 1]
        if dt == 0:
            continue
        lam_dot = (lams[k + 1] - lams[k - 1]) / dt
        ddot = eval_D_and_Ddot(cs, lams[k], tol)[1]
        value = ddot * lam_dot
        worst = max(worst, abs(value + 2 * math.sin(ts[k])) / (1 + abs(value)))
    return worst
