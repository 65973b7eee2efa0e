"""
Resolvent of the fiber operator A(z) through its Green kernel

    G(z, x, y) = Psi(x)^T ((L - e^{-iz}) / d + 1_{y <= x}) J Psi(y)

with Psi = (phi, psi), J = [[0, 1], [-1, 0]] and d = 2 cos z - D(lam). One
propagation per lam supplies Psi at every x and y through dense output.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from errors import ResolventPole
from transfer import DEFAULT_TOL, CellPropagation, interval_nodes, monodromy_eigenvector

POLE_THRESHOLD = 1e-10
SYMPLECTIC = np.array([[0.0, 1.0], [-1.0, 0.0]])


def _pole_factor(propagation, z):
    L = propagation.monodromy()
    d = 2 * np.cos(z) - (L[0, 0] + L[1, 1])
    if abs(d) <= POLE_THRESHOLD:
        raise ResolventPole(f"2 cos z - D(lam) = {d:.3e} at z={z}, lam={propagation.lam}",
                            z=complex(z), lam=propagation.lam, d=complex(d))
    return (L - np.exp(-1j * z) * np.eye(2)) / d


def green_kernel(cs, z, lam, x, y, tol=DEFAULT_TOL, propagation=None):
    """Green kernel G(z, x, y) of A(z) - lam"""
    propagation = propagation or CellPropagation(cs, lam, tol)
    K = _pole_factor(propagation, z)
    states = propagation.fundamental(np.array([x, y], dtype=float))
    psi_x = states[0, [0, 2]]
    psi_y = states[1, [0, 2]]
    local = np.eye(2) if y <= x else np.zeros((2, 2))
    return complex(psi_x @ (K + local) @ SYMPLECTIC @ psi_y)


@dataclass(frozen=True, eq=False)
class ResolventRequest:
    z: complex
    lam: complex
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing with at least two points")
        if len(self.values) != len(grid):
            raise ValueError("grid and values differ in length")


@dataclass(frozen=True, eq=False)
class ResolventResult:
    grid: np.ndarray
    f: np.ndarray
    pf_prime: np.ndarray

    def boundary_residual(self, z):
        """Relative defect in f(a) = e^{iz} f(0) and (pf')(a) = e^{iz} (pf')(0)"""
        mu = np.exp(1j * z)
        # one scale for both rows: pf' may vanish identically
        scale = max(float(np.max(np.abs(self.f))), float(np.max(np.abs(self.pf_prime))), 1e-300)
        return max(abs(self.f[-1] - mu * self.f[0]),
                   abs(self.pf_prime[-1] - mu * self.pf_prime[0])) / scale

    def to_rows(self):
        return [[float(x), float(f.real), float(f.imag), float(d.real), float(d.imag)]
                for x, f, d in zip(self.grid, self.f, self.pf_prime)]


def sampled_function(cs, grid, values):
    """Callable interpolating samples by cubic splines between breakpoints"""
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=complex)
    cuts = [b for b in cs.breakpoints[1:-1] if grid[0] < b < grid[-1]]
    edges = [grid[0]] + cuts + [grid[-1]]
    splines = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (grid >= lo) & (grid <= hi)
        if np.count_nonzero(mask) < 2:
            splines = [(edges[0], edges[-1], CubicSpline(grid, values))]
            break
        splines.append((lo, hi, CubicSpline(grid[mask], values[mask])))

    def evaluate(xs):
        xs = np.asarray(xs, dtype=float)
        out = np.empty(xs.shape, dtype=complex)
        owner = np.clip(np.searchsorted([s[1] for s in splines], xs, side='left'), 0, len(splines) - 1)
        for index, (_, _, spline) in enumerate(splines):
            mask = owner == index
            out[mask] = spline(xs[mask])
        return out

    return evaluate


def apply_resolvent(cs, req, tol=DEFAULT_TOL):
    """f = (A(z) - lam)^{-1} g on the request grid, with its quasi-derivative pf'"""
    propagation = CellPropagation(cs, req.lam, tol)
    K = _pole_factor(propagation, req.z)
    g = sampled_function(cs, req.grid, req.values)

    grid = np.asarray(req.grid, dtype=float)
    points = np.union1d(grid, [b for b in cs.breakpoints if grid[0] < b < grid[-1]])
    # running moments c(x) = int_0^x Psi g w dy
    moments = np.zeros((len(points), 2), dtype=complex)
    for k, (lo, hi) in enumerate(zip(points[:-1], points[1:])):
        xs, weights = interval_nodes(cs, lo, hi, tol=tol)
        states = propagation.fundamental(xs)
        integrand = g(xs) * cs.evaluate('w', xs) * weights
        moments[k + 1] = moments[k] + np.array([np.sum(states[:, 0] * integrand),
                                                np.sum(states[:, 2] * integrand)])
    keep = np.searchsorted(points, grid)
    moments = moments[keep]

    coupled = (K @ SYMPLECTIC @ moments[-1])[None, :] + moments @ SYMPLECTIC.T
    states = propagation.fundamental(grid)
    f = states[:, 0] * coupled[:, 0] + states[:, 2] * coupled[:, 1]
    pf_prime = states[:, 1] * coupled[:, 0] + states[:, 3] * coupled[:, 1]
    result = ResolventResult(grid=grid, f=f, pf_prime=pf_prime)
    logging.debug(f"Resolvent at z={req.z}, lam={req.lam}: boundary residual "
                  f"{result.boundary_residual(req.z):.2e}")
    return result


def eigenfunction(cs, z, mu, tol=DEFAULT_TOL):
    """Eigenfunction of A(z) at an eigenvalue mu as a callable of x (None when L = e^{iz} I)"""
    propagation = CellPropagation(cs, mu, tol)
    vector = monodromy_eigenvector(propagation.monodromy(), np.exp(1j * z))
    if vector is None:
        return None
    alpha, beta = vector

    def f(xs):
        states = propagation.fundamental(np.atleast_1d(np.asarray(xs, dtype=float)))
        return alpha * states[:, 0] + beta * states[:, 2]

    return f
