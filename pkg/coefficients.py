"""
Periodic coefficient triples (w, p, q) for the expression (1/w)(-(pf')' + qf).

Coefficients are piecewise: each segment of the period cell carries one form
per coefficient (constant, polynomial in the local coordinate x - x_lo, or a
power-weighted polynomial rho(x)|x - x0|^tau). Turning points of w must sit on
segment breakpoints so 1-simplicity can be read off the forms directly.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly

from errors import CoefficientFormatError, UnresolvableSign

# Relative tolerance for breakpoint comparisons
BREAKPOINT_TOL = 1e-12
# Interior sample count used for sign and positivity checks
SAMPLE_COUNT = 65


def _trim(coeffs):
    """Drop trailing zero coefficients (keeps at least one entry)"""
    coeffs = np.asarray(coeffs, dtype=float)
    nonzero = np.flatnonzero(coeffs)
    if len(nonzero) == 0:
        return np.zeros(1)
    return coeffs[:nonzero[-1] + 1]


def _real_roots(coeffs):
    coeffs = _trim(coeffs)
    if len(coeffs) < 2:
        return np.empty(0)
    roots = npoly.polyroots(coeffs)
    scale = max(1.0, float(np.max(np.abs(roots))))
    return np.sort(roots[np.abs(roots.imag) <= 1e-10 * scale].real)


def _vanishing_order(coeffs, u):
    """Order of the zero of a polynomial at u (None if identically zero)"""
    coeffs = _trim(coeffs)
    if not np.any(coeffs):
        return None
    scale = float(np.max(np.abs(coeffs)))
    current = coeffs
    for order in range(len(coeffs)):
        if abs(npoly.polyval(u, current)) > 1e-12 * scale:
            return order
        current = npoly.polyder(current)
    return None


@dataclass(frozen=True)
class Constant:
    value: float

    kind = 'const'

    def __call__(self, x, x_lo=0.0):
        return np.full(np.shape(x), float(self.value))

    def scaled(self, factor):
        return Constant(self.value * factor)

    def recentered(self, old_lo, new_lo):
        return self

    def shifted(self, offset, period):
        return self

    def is_zero(self):
        return self.value == 0.0

    def roots(self, x_lo):
        return np.empty(0)

    def to_dict(self):
        return {'const': self.value}


@dataclass(frozen=True)
class Polynomial:
    """sum_k c_k (x - x_lo)^k on its segment"""
    coeffs: Tuple[float, ...]

    kind = 'poly'

    def __call__(self, x, x_lo=0.0):
        return npoly.polyval(np.asarray(x, dtype=float) - x_lo, self.coeffs)

    def scaled(self, factor):
        return Polynomial(tuple(c * factor for c in self.coeffs))

    def recentered(self, old_lo, new_lo):
        # re-expand in powers of (x - new_lo)
        shift = np.polynomial.Polynomial([new_lo - old_lo, 1.0])
        composed = np.polynomial.Polynomial(self.coeffs)(shift)
        return Polynomial(tuple(float(c) for c in composed.coef))

    def shifted(self, offset, period):
        return self

    def is_zero(self):
        return not any(self.coeffs)

    def roots(self, x_lo):
        return _real_roots(self.coeffs) + x_lo

    def to_dict(self):
        return {'poly': list(self.coeffs)}


@dataclass(frozen=True)
class PowerWeighted:
    """rho(x) |x - anchor|^tau with rho given in powers of (x - anchor)"""
    rho: Tuple[float, ...]
    tau: float
    anchor: float

    kind = 'power'

    def __call__(self, x, x_lo=0.0):
        local = np.asarray(x, dtype=float) - self.anchor
        with np.errstate(divide='ignore', invalid='ignore'):
            return npoly.polyval(local, self.rho) * np.abs(local) ** self.tau

    def rho_at(self, x):
        return npoly.polyval(np.asarray(x, dtype=float) - self.anchor, self.rho)

    def scaled(self, factor):
        return PowerWeighted(tuple(c * factor for c in self.rho), self.tau, self.anchor)

    def recentered(self, old_lo, new_lo):
        return self

    def shifted(self, offset, period):
        anchor = self.anchor - offset
        if anchor < -BREAKPOINT_TOL * period:
            anchor += period
        return PowerWeighted(self.rho, self.tau, anchor)

    def is_zero(self):
        return not any(self.rho)

    def roots(self, x_lo):
        return _real_roots(self.rho) + self.anchor

    def is_singular(self):
        return self.tau < 0

    def to_dict(self):
        return {'power': {'rho': list(self.rho), 'tau': self.tau, 'anchor': self.anchor}}


@dataclass(frozen=True)
class Segment:
    x_lo: float
    x_hi: float
    w: object
    p: object
    q: object

    @property
    def length(self):
        return self.x_hi - self.x_lo

    def forms(self):
        return (('w', self.w), ('p', self.p), ('q', self.q))

    def is_constant(self):
        return all(isinstance(form, Constant) for _, form in self.forms())

    def evaluate(self, name, x):
        return getattr(self, name)(x, self.x_lo)

    def anchors(self):
        """Anchors of power-weighted forms lying in the closed segment"""
        found = set()
        for _, form in self.forms():
            if isinstance(form, PowerWeighted):
                if self.x_lo - BREAKPOINT_TOL <= form.anchor <= self.x_hi + BREAKPOINT_TOL:
                    found.add(min(max(form.anchor, self.x_lo), self.x_hi))
        return sorted(found)

    def to_dict(self):
        return {'lo': self.x_lo, 'hi': self.x_hi,
                'w': self.w.to_dict(), 'p': self.p.to_dict(), 'q': self.q.to_dict()}


@dataclass(frozen=True)
class CoefficientSet:
    period: float
    segments: Tuple[Segment, ...]
    name: str = ''

    @property
    def breakpoints(self):
        return [seg.x_lo for seg in self.segments] + [self.segments[-1].x_hi]

    def is_piecewise_constant(self):
        return all(seg.is_constant() for seg in self.segments)

    def segment_index(self, x):
        """Index of the segment containing x (right-closed at the cell end)"""
        for index, seg in enumerate(self.segments):
            if x < seg.x_hi:
                return index
        return len(self.segments) - 1

    def evaluate(self, name, x):
        """Evaluate one coefficient on an array of points in [0, a]"""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        starts = np.array([seg.x_lo for seg in self.segments])
        owner = np.clip(np.searchsorted(starts, x, side='right') - 1, 0, len(self.segments) - 1)
        for index in np.unique(owner):
            mask = owner == index
            out[mask] = self.segments[index].evaluate(name, x[mask])
        return out

    def to_dict(self):
        doc = {'period': self.period, 'segments': [seg.to_dict() for seg in self.segments]}
        if self.name:
            doc['name'] = self.name
        return doc


@dataclass(frozen=True)
class Violation:
    message: str
    segment: Optional[int] = None
    coefficient: Optional[str] = None

    def __str__(self):
        where = '' if self.segment is None else f" in segment {self.segment}"
        which = '' if self.coefficient is None else f" ({self.coefficient})"
        return f"{self.message}{which}{where}"


@dataclass(frozen=True)
class TurningPointReport:
    location: float
    is_one_simple: bool
    tau_plus: Optional[float]
    tau_minus: Optional[float]
    p_bounded_near: bool
    reason: str = ''


@dataclass(frozen=True)
class InfinityCheck:
    holds: bool
    witnesses: List[TurningPointReport] = field(default_factory=list)
    turning_points: List[TurningPointReport] = field(default_factory=list)


def _sample_points(seg, form, closed=True):
    """Sample points that resolve every sign change of a form on the segment"""
    lo, hi = seg.x_lo, seg.x_hi
    cuts = [lo]
    cuts.extend(r for r in form.roots(seg.x_lo) if lo < r < hi)
    if isinstance(form, PowerWeighted) and lo < form.anchor < hi:
        cuts.append(form.anchor)
    if isinstance(form, Polynomial):
        derivative = npoly.polyder(_trim(form.coeffs))
        cuts.extend(r + lo for r in _real_roots(derivative) if lo < r + lo < hi)
    cuts.append(hi)
    cuts = np.unique(cuts)
    points = list(0.5 * (cuts[:-1] + cuts[1:]))
    points.extend(np.linspace(lo, hi, SAMPLE_COUNT)[1:-1])
    if closed:
        points.extend([lo, hi])
    return np.array(sorted(points))


def weight_sign(seg, index=None):
    """Constant sign of w on the interior of a segment"""
    points = _sample_points(seg, seg.w, closed=False)
    values = seg.evaluate('w', points)
    values = values[np.isfinite(values) & (values != 0.0)]
    signs = np.unique(np.sign(values))
    if len(signs) == 0:
        raise UnresolvableSign(f"w vanishes on segment {index}", segment=index)
    if len(signs) > 1:
        raise UnresolvableSign(
            f"w changes sign inside segment {index} on [{seg.x_lo}, {seg.x_hi}]; re-segment the data",
            segment=index)
    return int(signs[0])


def validate(cs):
    """Return every violated invariant of the coefficient set (empty when valid)"""
    violations = []
    if not (isinstance(cs.period, (int, float)) and math.isfinite(cs.period) and cs.period > 0):
        violations.append(Violation("period must be a positive real"))
        return violations
    if not cs.segments:
        violations.append(Violation("no segments"))
        return violations

    tol = BREAKPOINT_TOL * max(1.0, cs.period)
    if abs(cs.segments[0].x_lo) > tol:
        violations.append(Violation("first segment must start at 0", 0))
    if abs(cs.segments[-1].x_hi - cs.period) > tol:
        violations.append(Violation("last segment must end at the period", len(cs.segments) - 1))

    for index, seg in enumerate(cs.segments):
        if not seg.x_lo < seg.x_hi:
            violations.append(Violation("breakpoints must strictly increase", index))
            continue
        if index > 0 and abs(cs.segments[index - 1].x_hi - seg.x_lo) > tol:
            violations.append(Violation("segments leave a gap or overlap", index))

        for name, form in seg.forms():
            if isinstance(form, PowerWeighted) and not form.tau > -1:
                violations.append(Violation("power exponent must exceed -1", index, name))

        if seg.w.is_zero():
            violations.append(Violation("w identically zero", index, 'w'))

        violations.extend(_check_p(seg, index))

    return violations


def _check_p(seg, index):
    found = []
    p = seg.p
    if isinstance(p, PowerWeighted):
        points = _sample_points(seg, p)
        points = points[np.abs(points - p.anchor) > BREAKPOINT_TOL]
        if np.any(p.rho_at(points) <= 0):
            found.append(Violation("p not positive", index, 'p'))
        elif p.tau >= 1 and seg.x_lo <= p.anchor <= seg.x_hi:
            found.append(Violation("1/p not integrable", index, 'p'))
        return found
    values = seg.evaluate('p', _sample_points(seg, p))
    if np.any(~np.isfinite(values)) or np.any(values <= 0):
        found.append(Violation("p not positive", index, 'p'))
    return found


def _one_sided_exponent(form, x0, x_lo):
    """(tau, rho nonzero) for w written as rho|x - x0|^tau on one side of x0"""
    if isinstance(form, Constant):
        return 0.0, form.value != 0.0
    if isinstance(form, Polynomial):
        order = _vanishing_order(form.coeffs, x0 - x_lo)
        return (None, False) if order is None else (float(order), True)
    if abs(form.anchor - x0) <= BREAKPOINT_TOL * max(1.0, abs(x0)):
        rho0 = npoly.polyval(0.0, form.rho)
        scale = max(abs(c) for c in form.rho) or 1.0
        return form.tau, abs(rho0) > 1e-14 * scale
    order = _vanishing_order(form.rho, x0 - form.anchor)
    return (None, False) if order is None else (float(order), True)


def _p_bounds(form, x0, x_lo):
    """(p bounded, 1/p bounded) near x0 from one side"""
    if isinstance(form, PowerWeighted):
        if abs(form.anchor - x0) <= BREAKPOINT_TOL * max(1.0, abs(x0)):
            return form.tau >= 0, form.tau <= 0
        return True, True
    return True, bool(form(x0, x_lo) > 0)


def turning_points(cs):
    """Breakpoints (including the wrap-around point 0 = a) where w changes sign"""
    signs = [weight_sign(seg, index) for index, seg in enumerate(cs.segments)]
    count = len(cs.segments)
    reports = []
    if count < 2:
        return reports

    for index in range(count):
        left = cs.segments[index - 1]
        right = cs.segments[index]
        if signs[index - 1] == signs[index]:
            continue
        location = right.x_lo if index > 0 else 0.0
        # left side lives at the end of the previous segment (x = a for the wrap)
        left_x0 = left.x_hi
        tau_minus, rho_minus = _one_sided_exponent(left.w, left_x0, left.x_lo)
        tau_plus, rho_plus = _one_sided_exponent(right.w, right.x_lo, right.x_lo)

        reasons = []
        if tau_minus is None or tau_plus is None:
            reasons.append("weight vanishes identically next to the turning point")
        if not (rho_minus and rho_plus):
            reasons.append("rho vanishes at the turning point")
        if (tau_minus is not None and tau_minus <= -1) or (tau_plus is not None and tau_plus <= -1):
            reasons.append("exponent not above -1")
        one_simple = not reasons

        p_left = _p_bounds(left.p, left_x0, left.x_lo)
        p_right = _p_bounds(right.p, right.x_lo, right.x_lo)
        p_bounded = all(p_left) and all(p_right)
        if not p_bounded:
            reasons.append("p or 1/p unbounded near the turning point")

        report = TurningPointReport(
            location=float(location),
            is_one_simple=one_simple,
            tau_plus=tau_plus,
            tau_minus=tau_minus,
            p_bounded_near=p_bounded,
            reason='; '.join(reasons),
        )
        logging.debug(f"Turning point at x={location}: {report}")
        reports.append(report)

    return sorted(reports, key=lambda r: r.location)


def infinity_condition(cs):
    """Static check of the sufficient condition for infinity not being a spectral singularity"""
    reports = turning_points(cs)
    witnesses = [r for r in reports if not (r.is_one_simple and r.p_bounded_near)]
    if witnesses:
        logging.info(f"Regularity condition at infinity fails at {[w.location for w in witnesses]}")
    return InfinityCheck(holds=not witnesses, witnesses=witnesses, turning_points=reports)


def rotated(cs, breakpoint_index):
    """Shift the period cell so that it starts at the given breakpoint"""
    offset = cs.segments[breakpoint_index].x_lo
    a = cs.period
    moved = []
    for seg in cs.segments[breakpoint_index:] + cs.segments[:breakpoint_index]:
        lo = seg.x_lo - offset
        hi = seg.x_hi - offset
        if lo < -BREAKPOINT_TOL * a:
            lo += a
            hi += a
        moved.append(Segment(lo, hi, *(form.shifted(offset, a) for _, form in seg.forms())))
    return CoefficientSet(a, tuple(moved), cs.name)


def refined(cs, index, x_split):
    """Split one segment into two carrying the same coefficient functions"""
    seg = cs.segments[index]
    if not seg.x_lo < x_split < seg.x_hi:
        raise ValueError(f"split point {x_split} outside segment {index}")
    first = Segment(seg.x_lo, x_split, seg.w, seg.p, seg.q)
    second = Segment(x_split, seg.x_hi,
                     *(form.recentered(seg.x_lo, x_split) for _, form in seg.forms()))
    segments = cs.segments[:index] + (first, second) + cs.segments[index + 1:]
    return CoefficientSet(cs.period, segments, cs.name)


def definite_companion(cs):
    """Same data with w replaced by |w| (the definite expression behind T(t))"""
    segments = []
    for index, seg in enumerate(cs.segments):
        sign = weight_sign(seg, index)
        segments.append(Segment(seg.x_lo, seg.x_hi, seg.w.scaled(sign), seg.p, seg.q))
    return CoefficientSet(cs.period, tuple(segments), f"{cs.name}|definite" if cs.name else '')


def with_potential_shift(cs, shift):
    """Add a constant to q on every segment"""
    segments = []
    for seg in cs.segments:
        q = seg.q
        if isinstance(q, Constant):
            q = Constant(q.value + shift)
        elif isinstance(q, Polynomial):
            q = Polynomial((q.coeffs[0] + shift,) + tuple(q.coeffs[1:]))
        else:
            raise ValueError("cannot shift a power-weighted potential by a constant")
        segments.append(Segment(seg.x_lo, seg.x_hi, seg.w, seg.p, q))
    return CoefficientSet(cs.period, tuple(segments), cs.name)


def essinf_ratio(cs):
    """Lower bound for ess inf q/|w| over the cell (-inf when w vanishes where q < 0)"""
    lowest = math.inf
    for seg in cs.segments:
        zeros = list(seg.w.roots(seg.x_lo))
        if isinstance(seg.w, PowerWeighted) and seg.w.tau > 0:
            zeros.append(seg.w.anchor)
        for x0 in zeros:
            if seg.x_lo <= x0 <= seg.x_hi:
                nearby = np.clip(np.array([x0 - 1e-9, x0, x0 + 1e-9]), seg.x_lo, seg.x_hi)
                q_near = seg.evaluate('q', nearby)
                if np.any(q_near[np.isfinite(q_near)] < 0):
                    return -math.inf
        nodes = seg.x_lo + seg.length * (np.arange(256) + 0.5) / 256
        nodes = np.concatenate([nodes, _sample_points(seg, seg.q, closed=False)])
        with np.errstate(divide='ignore', invalid='ignore'):
            ratio = seg.evaluate('q', nodes) / np.abs(seg.evaluate('w', nodes))
        ratio = ratio[np.isfinite(ratio)]
        if len(ratio):
            lowest = min(lowest, float(np.min(ratio)))
    return lowest


# ---------------------------------------------------------------------------
# JSON documents

def _number(value, pointer):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise CoefficientFormatError("expected a finite number", pointer)
    return float(value)


def _number_list(value, pointer):
    if not isinstance(value, list) or not value:
        raise CoefficientFormatError("expected a non-empty list of numbers", pointer)
    return tuple(_number(v, f"{pointer}/{i}") for i, v in enumerate(value))


def form_from_dict(doc, pointer):
    """Parse one coefficient form"""
    if not isinstance(doc, dict) or len(doc) != 1:
        raise CoefficientFormatError("form must be an object with exactly one of const/poly/power", pointer)
    (kind, body), = doc.items()
    if kind == 'const':
        return Constant(_number(body, f"{pointer}/const"))
    if kind == 'poly':
        return Polynomial(_number_list(body, f"{pointer}/poly"))
    if kind == 'power':
        if not isinstance(body, dict):
            raise CoefficientFormatError("power form must be an object", f"{pointer}/power")
        for key in ('rho', 'tau', 'anchor'):
            if key not in body:
                raise CoefficientFormatError(f"missing key '{key}'", f"{pointer}/power")
        return PowerWeighted(_number_list(body['rho'], f"{pointer}/power/rho"),
                             _number(body['tau'], f"{pointer}/power/tau"),
                             _number(body['anchor'], f"{pointer}/power/anchor"))
    raise CoefficientFormatError(f"unknown form '{kind}'", pointer)


def coefficients_from_dict(doc):
    """Build a CoefficientSet from a parsed JSON document"""
    if not isinstance(doc, dict):
        raise CoefficientFormatError("document must be an object", "/")
    if 'period' not in doc:
        raise CoefficientFormatError("missing key 'period'", "/")
    period = _number(doc['period'], "/period")
    raw_segments = doc.get('segments')
    if not isinstance(raw_segments, list) or not raw_segments:
        raise CoefficientFormatError("expected a non-empty list of segments", "/segments")

    segments = []
    for index, raw in enumerate(raw_segments):
        pointer = f"/segments/{index}"
        if not isinstance(raw, dict):
            raise CoefficientFormatError("segment must be an object", pointer)
        for key in ('lo', 'hi', 'w', 'p', 'q'):
            if key not in raw:
                raise CoefficientFormatError(f"missing key '{key}'", pointer)
        segments.append(Segment(
            _number(raw['lo'], f"{pointer}/lo"),
            _number(raw['hi'], f"{pointer}/hi"),
            form_from_dict(raw['w'], f"{pointer}/w"),
            form_from_dict(raw['p'], f"{pointer}/p"),
            form_from_dict(raw['q'], f"{pointer}/q"),
        ))
    return CoefficientSet(period, tuple(segments), str(doc.get('name', '')))


def load_coefficients(path):
    """Load a coefficient set from a JSON file"""
    try:
        with open(path, 'r') as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise CoefficientFormatError(f"invalid JSON: {e.msg}", f"line {e.lineno} column {e.colno}")
    cs = coefficients_from_dict(doc)
    logging.info(f"Loaded coefficient set '{cs.name or path}' with {len(cs.segments)} segments")
    return cs
