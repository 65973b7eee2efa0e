"""
Propagation of the fundamental system of (1/w)(-(pu')' + qu) = lam u across one period.

The first-order system u' = v/p, v' = (q - lam w)u is carried for the two
canonical solutions (phi, p phi') and (psi, p psi') starting from the identity
frame, together with the three period-cell quadratures

    Q_phiphi = int phi^2 w,  Q_phipsi = int phi psi w,  Q_psipsi = int psi^2 w

that feed the derivative formulas of the discriminant.

Segments whose three coefficients are constants use the exact 2x2 propagator
(cosh / sinh(s h)/s with s^2 = (q - lam w)/p, both even in s so no branch is
chosen). Everything else goes through scipy's DOP853 with dense output and
embedded error control. Power-weighted forms with an integrable singularity
are integrated on a geometric mesh toward the anchor.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from coefficients import Constant, PowerWeighted
from errors import DegenerateEigenvector, IntegratorFailure

DEFAULT_TOL = 1e-10
MIN_TOL = 1e-14
MAX_TOL = 1e-3

GAUSS_ORDER = 16
GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(GAUSS_ORDER)

# Geometric grading toward singular anchors
GRADING_RATIO = 0.5
MAX_GRADING_LEVELS = 48
MAX_NODE_LEVELS = 120

IDENTITY_FRAME = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex)


def check_tolerance(tol):
    if not (MIN_TOL <= tol <= MAX_TOL):
        raise ValueError(f"tolerance {tol} outside [{MIN_TOL}, {MAX_TOL}]")
    return float(tol)


@dataclass(frozen=True, eq=False)
class TransferResult:
    lam: complex
    L: np.ndarray
    Q_phiphi: complex
    Q_phipsi: complex
    Q_psipsi: complex
    est_error: float

    @property
    def phi_a(self):
        return self.L[0, 0]

    @property
    def psi_a(self):
        return self.L[0, 1]

    @property
    def pphi_prime_a(self):
        return self.L[1, 0]

    @property
    def ppsi_prime_a(self):
        return self.L[1, 1]

    @property
    def D(self):
        return self.L[0, 0] + self.L[1, 1]

    def wronskian_defect(self):
        return abs(np.linalg.det(self.L) - 1.0)


@dataclass(frozen=True, eq=False)
class SolutionTrace:
    """phi, p phi', psi, p psi' sampled on a grid containing every breakpoint"""
    lam: complex
    grid: np.ndarray
    values: np.ndarray
    propagation: object = field(repr=False, default=None)

    def evaluate(self, x):
        """Dense evaluation of the four states at arbitrary points in [0, a]"""
        return self.propagation.fundamental(np.atleast_1d(np.asarray(x, dtype=float)))

    def to_rows(self):
        rows = []
        for x, state in zip(self.grid, self.values):
            row = [float(x)]
            for value in state:
                row.extend([float(value.real), float(value.imag)])
            rows.append(row)
        return rows


# ---------------------------------------------------------------------------
# Pieces of one propagation pass

def _exact_blocks(w, p, q, lam, h):
    """Entries of the exact propagator over offsets h for constant coefficients"""
    k2 = complex((q - lam * w) / p)
    s = np.sqrt(k2)
    z = s * h
    cosh = np.cosh(z)
    small = np.abs(z) < 1e-4
    with np.errstate(divide='ignore', invalid='ignore'):
        sinhc = np.where(small, h * (1 + z * z / 6 + z ** 4 / 120), np.sinh(z) / np.where(small, 1.0, s))
    return cosh, sinhc / p, p * k2 * sinhc, cosh


class _ExactPiece:
    kind = 'exact'

    def __init__(self, seg, lam, start):
        self.x_lo = seg.x_lo
        self.x_hi = seg.x_hi
        self.lam = lam
        self.w = seg.w.value
        self.p = seg.p.value
        self.q = seg.q.value
        self.start = start
        self.end_state = self.fundamental(np.array([seg.x_hi]))[0]

    def fundamental(self, xs):
        m00, m01, m10, m11 = _exact_blocks(self.w, self.p, self.q, self.lam, xs - self.x_lo)
        u1, v1, u2, v2 = self.start
        return np.stack([m00 * u1 + m01 * v1, m10 * u1 + m11 * v1,
                         m00 * u2 + m01 * v2, m10 * u2 + m11 * v2], axis=-1)

    def quadratures(self):
        s = abs(np.sqrt(complex((self.q - self.lam * self.w) / self.p)))
        panels = 1 + int(math.ceil(s * (self.x_hi - self.x_lo) / 2.0))
        edges = np.linspace(self.x_lo, self.x_hi, panels + 1)
        half = 0.5 * np.diff(edges)
        xs = (0.5 * (edges[:-1] + edges[1:]))[:, None] + half[:, None] * GAUSS_NODES[None, :]
        weights = (half[:, None] * GAUSS_WEIGHTS[None, :]).ravel()
        states = self.fundamental(xs.ravel())
        phi, psi = states[:, 0], states[:, 2]
        return self.w * np.array([np.dot(weights, phi * phi),
                                  np.dot(weights, phi * psi),
                                  np.dot(weights, psi * psi)])


class _OdePiece:
    kind = 'ode'

    def __init__(self, solution, x_lo, x_hi):
        self.solution = solution
        self.x_lo = x_lo
        self.x_hi = x_hi
        self.end_state_full = solution(x_hi)
        self.end_state = self.end_state_full[:4]

    def fundamental(self, xs):
        return np.atleast_2d(self.solution(xs)[:4].T)


class _FrozenPiece:
    """Innermost sliver next to a singular anchor, one first-order Magnus step"""
    kind = 'frozen'

    def __init__(self, x_lo, x_hi, start, end):
        self.x_lo = x_lo
        self.x_hi = x_hi
        self.start = start
        self.end_state = end

    def fundamental(self, xs):
        theta = ((xs - self.x_lo) / (self.x_hi - self.x_lo))[:, None]
        return (1 - theta) * self.start[None, :] + theta * self.end_state[None, :]


def _rhs(seg, lam):
    def rhs(x, y):
        w = float(seg.w(x, seg.x_lo))
        p = float(seg.p(x, seg.x_lo))
        q = float(seg.q(x, seg.x_lo))
        u1, v1, u2, v2 = y[0], y[1], y[2], y[3]
        k = q - lam * w
        return np.array([v1 / p, k * u1, v2 / p, k * u2,
                         w * u1 * u1, w * u1 * u2, w * u2 * u2])
    return rhs


def _singular_exponents(seg, anchor):
    """Exponents of the integrable singularities of w, q and 1/p at an anchor"""
    exponents = []
    for name, form in seg.forms():
        if not isinstance(form, PowerWeighted) or abs(form.anchor - anchor) > 1e-12:
            continue
        if name in ('w', 'q') and form.tau < 0:
            exponents.append((name, form.tau))
        if name == 'p' and form.tau > 0:
            exponents.append((name, -form.tau))
    return exponents


def _sliver_integral(seg, name, anchor, eps, toward_right):
    """Integral over [anchor, anchor + eps] (or its mirror) of w, q or 1/p"""
    form = getattr(seg, name)
    if isinstance(form, PowerWeighted) and abs(form.anchor - anchor) <= 1e-12:
        rho0 = float(form.rho_at(anchor))
        if name == 'p':
            return eps ** (1 - form.tau) / ((1 - form.tau) * rho0)
        return rho0 * eps ** (1 + form.tau) / (1 + form.tau)
    mid = anchor + (0.5 * eps if toward_right else -0.5 * eps)
    value = float(form(mid, seg.x_lo))
    return eps / value if name == 'p' else value * eps


def _graded_edges(x_lo, x_hi, anchor_at_lo, exponent, tol, lam_scale=1.0, with_sliver=True):
    """Geometric breakpoints toward a singular end; returns (edges, width left next to the anchor)"""
    length = x_hi - x_lo
    if with_sliver:
        # the one-step sliver is exact to first order; its defect scales like eps^(2 + exponent)
        power, max_levels = 2.0 + exponent, MAX_GRADING_LEVELS
    else:
        # the piece next to the anchor is dropped, worth eps^(1 + exponent)
        power, max_levels = 1.0 + exponent, MAX_NODE_LEVELS
    eps = length
    levels = 0
    while (1.0 + lam_scale) * eps ** power > 1e-2 * tol and levels < max_levels:
        eps *= GRADING_RATIO
        levels += 1
    offsets = length * GRADING_RATIO ** np.arange(levels, -1, -1)
    if anchor_at_lo:
        return x_lo + offsets, eps
    return (x_hi - offsets)[::-1], eps


class CellPropagation:
    """One pass of the fundamental system across [0, a]"""

    def __init__(self, cs, lam, tol=DEFAULT_TOL):
        self.cs = cs
        self.lam = complex(lam)
        self.tol = check_tolerance(tol)
        self.pieces = []
        self.est_error = 0.0
        state = IDENTITY_FRAME.copy()
        quad = np.zeros(3, dtype=complex)
        for index, seg in enumerate(cs.segments):
            if seg.is_constant():
                piece = _ExactPiece(seg, self.lam, state)
                quad = quad + piece.quadratures()
                self.pieces.append(piece)
                state = piece.end_state
            else:
                state, quad = self._integrate_segment(index, seg, state, quad)
        self.end_state = state
        self.quadratures = quad
        self.starts = np.array([piece.x_lo for piece in self.pieces])

    def _integrate_segment(self, index, seg, state, quad):
        cuts = [seg.x_lo] + [x for x in seg.anchors() if seg.x_lo < x < seg.x_hi] + [seg.x_hi]
        for x_lo, x_hi in zip(cuts[:-1], cuts[1:]):
            at_lo = _singular_exponents(seg, x_lo)
            at_hi = _singular_exponents(seg, x_hi)
            if at_lo:
                state, quad = self._graded(index, seg, x_lo, x_hi, True, at_lo, state, quad)
            elif at_hi:
                state, quad = self._graded(index, seg, x_lo, x_hi, False, at_hi, state, quad)
            else:
                state, quad = self._ode(index, seg, x_lo, x_hi, state, quad)
        return state, quad

    def _ode(self, index, seg, x_lo, x_hi, state, quad, estimate=True):
        y0 = np.concatenate([state, quad])
        rhs = _rhs(seg, self.lam)
        sol = solve_ivp(rhs, (x_lo, x_hi), y0, method='DOP853', dense_output=True,
                        rtol=self.tol, atol=self.tol * 1e-2)
        if not sol.success:
            raise IntegratorFailure(
                f"integrator failed on segment {index} over [{x_lo}, {x_hi}]: {sol.message}",
                segment=index, x_range=[x_lo, x_hi], lam=self.lam)
        piece = _OdePiece(sol.sol, x_lo, x_hi)
        self.pieces.append(piece)
        if estimate:
            coarse = solve_ivp(rhs, (x_lo, x_hi), y0, method='DOP853',
                               rtol=min(self.tol * 100, MAX_TOL), atol=self.tol)
            if coarse.success:
                scale = 1.0 + float(np.max(np.abs(piece.end_state_full)))
                self.est_error += float(np.max(np.abs(coarse.y[:, -1] - piece.end_state_full))) / scale
        return piece.end_state_full[:4], piece.end_state_full[4:]

    def _graded(self, index, seg, x_lo, x_hi, anchor_at_lo, exponents, state, quad):
        exponent = min(e for _, e in exponents)
        edges, eps = _graded_edges(x_lo, x_hi, anchor_at_lo, exponent, self.tol, abs(self.lam))
        logging.debug(f"Segment {index}: graded mesh with {len(edges) - 1} pieces toward "
                      f"{'left' if anchor_at_lo else 'right'} anchor")
        if anchor_at_lo:
            state, quad = self._sliver(seg, x_lo, eps, True, state, quad)
            for a, b in zip(edges[:-1], edges[1:]):
                state, quad = self._ode(index, seg, a, b, state, quad, estimate=False)
        else:
            for a, b in zip(edges[:-1], edges[1:]):
                state, quad = self._ode(index, seg, a, b, state, quad, estimate=False)
            state, quad = self._sliver(seg, x_hi, eps, False, state, quad)
        return state, quad

    def _sliver(self, seg, anchor, eps, toward_right, state, quad):
        int_w = _sliver_integral(seg, 'w', anchor, eps, toward_right)
        int_q = _sliver_integral(seg, 'q', anchor, eps, toward_right)
        int_p_inv = _sliver_integral(seg, 'p', anchor, eps, toward_right)
        step = np.array([[1.0, int_p_inv], [int_q - self.lam * int_w, 1.0]], dtype=complex)
        u1, v1, u2, v2 = state
        end = np.concatenate([step @ np.array([u1, v1]), step @ np.array([u2, v2])])
        quad = quad + int_w * np.array([u1 * u1, u1 * u2, u2 * u2])
        if toward_right:
            piece = _FrozenPiece(anchor, anchor + eps, state, end)
        else:
            piece = _FrozenPiece(anchor - eps, anchor, state, end)
        self.pieces.append(piece)
        return end, quad

    def fundamental(self, xs):
        """States (phi, p phi', psi, p psi') at the points xs"""
        xs = np.asarray(xs, dtype=float)
        out = np.empty((len(xs), 4), dtype=complex)
        owner = np.clip(np.searchsorted(self.starts, xs, side='right') - 1, 0, len(self.pieces) - 1)
        for index in np.unique(owner):
            mask = owner == index
            out[mask] = self.pieces[index].fundamental(xs[mask])
        return out

    def monodromy(self):
        u1, v1, u2, v2 = self.end_state
        return np.array([[u1, u2], [v1, v2]], dtype=complex)


def transfer(cs, lam, tol=DEFAULT_TOL):
    """Monodromy matrix, boundary values and period-cell quadratures at lam"""
    propagation = CellPropagation(cs, lam, tol)
    L = propagation.monodromy()
    roundoff = np.finfo(float).eps * (1.0 + float(np.max(np.abs(L)))) ** 2
    q_pp, q_ps, q_ss = propagation.quadratures
    return TransferResult(
        lam=complex(lam), L=L, Q_phiphi=q_pp, Q_phipsi=q_ps, Q_psipsi=q_ss,
        est_error=max(propagation.est_error, roundoff),
    )


def _merged_grid(cs, n_points):
    points = np.sort(np.concatenate([np.linspace(0.0, cs.period, n_points), cs.breakpoints]))
    keep = np.concatenate([[True], np.diff(points) > 1e-13 * cs.period])
    return points[keep]


def solve_trace(cs, lam, n_points=201, tol=DEFAULT_TOL):
    """phi, psi and their quasi-derivatives on a grid containing every breakpoint"""
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    propagation = CellPropagation(cs, lam, tol)
    grid = _merged_grid(cs, n_points)
    values = propagation.fundamental(grid)
    values[0] = IDENTITY_FRAME
    return SolutionTrace(lam=complex(lam), grid=grid, values=values, propagation=propagation)


def _gauss_on_edges(edges):
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    return ((mid[:, None] + half[:, None] * GAUSS_NODES[None, :]).ravel(),
            (half[:, None] * GAUSS_WEIGHTS[None, :]).ravel())


def interval_nodes(cs, x_lo, x_hi, panels=1, tol=DEFAULT_TOL):
    """Gauss nodes and weights over [x_lo, x_hi] inside one segment, graded toward singular anchors"""
    seg = cs.segments[cs.segment_index(0.5 * (x_lo + x_hi))]
    cuts = [x_lo] + [x for x in seg.anchors() if x_lo < x < x_hi] + [x_hi]
    xs, weights = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        at_lo = _singular_exponents(seg, lo)
        at_hi = _singular_exponents(seg, hi)
        if at_lo or at_hi:
            exponent = min(e for _, e in at_lo + at_hi)
            edges, _ = _graded_edges(lo, hi, bool(at_lo), exponent, tol, lam_scale=0.0, with_sliver=False)
        else:
            edges = np.linspace(lo, hi, panels + 1)
        nodes, node_weights = _gauss_on_edges(edges)
        xs.append(nodes)
        weights.append(node_weights)
    return np.concatenate(xs), np.concatenate(weights)


def quadrature_nodes(cs, panels=8, tol=DEFAULT_TOL):
    """Composite Gauss nodes and weights over the cell, graded near singular anchors"""
    parts = [interval_nodes(cs, seg.x_lo, seg.x_hi, panels, tol) for seg in cs.segments]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def cell_bracket(cs, u, v, panels=8):
    """[u, v]_a = int_0^a u conj(v) w dx for callables u, v of x"""
    xs, weights = quadrature_nodes(cs, panels)
    w = cs.evaluate('w', xs)
    return complex(np.sum(weights * u(xs) * np.conj(v(xs)) * w))


def monodromy_eigenvector(L, mu):
    """Kernel vector (u(0), pu'(0)) of L - mu from the adjugate; None when L = mu I"""
    M = L - mu * np.eye(2)
    columns = np.array([[M[1, 1], -M[1, 0]], [-M[0, 1], M[0, 0]]])
    norms = np.abs(columns).sum(axis=1)
    scale = 1.0 + float(np.abs(L).max())
    best = int(np.argmax(norms))
    if norms[best] <= 1e-10 * scale:
        return None
    if norms[best] <= 1e-6 * scale:
        raise DegenerateEigenvector("monodromy eigenvector is numerically ambiguous",
                                    adjugate_norm=float(norms[best]), mu=complex(mu))
    return columns[best]
