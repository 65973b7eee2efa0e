"""
Floquet discriminant D(lam) = trace L(lam) and its first two lam-derivatives.

The first derivative comes from the period-cell quadratures of one transfer
pass:

    D'(lam) = -psi(a) Q_phiphi + (phi(a) - (p psi')(a)) Q_phipsi + (p phi')(a) Q_psipsi

Central differences of D are only used as a cross-check; D'' is obtained by
Richardson extrapolation of central differences of D'.
"""

import enum
import logging
from dataclasses import dataclass

import numpy as np

from transfer import DEFAULT_TOL, transfer

CROSS_CHECK_STEP = 1e-5
CROSS_CHECK_FLAG = 1e-5
SECOND_DERIVATIVE_STEP = 1e-4


class DdotRoute(enum.Enum):
    QuadratureFormula = 'quadrature'
    NumericalDifference = 'numdiff'


@dataclass(frozen=True)
class DiscriminantSample:
    lam: complex
    D: complex
    Ddot: complex
    Ddotdot: complex
    Ddot_route: DdotRoute
    residual_cross_check: float

    @property
    def flagged(self):
        return self.residual_cross_check > CROSS_CHECK_FLAG


def ddot_from_transfer(result):
    """Right-hand side of the derivative identity for one transfer result"""
    return (-result.psi_a * result.Q_phiphi
            + (result.phi_a - result.ppsi_prime_a) * result.Q_phipsi
            + result.pphi_prime_a * result.Q_psipsi)


def entry_derivatives_from_transfer(result):
    """d/dlam of the monodromy entries from one transfer result"""
    phi, psi = result.phi_a, result.psi_a
    pphi, ppsi = result.pphi_prime_a, result.ppsi_prime_a
    q_pp, q_ps, q_ss = result.Q_phiphi, result.Q_phipsi, result.Q_psipsi
    return np.array([
        [phi * q_ps - psi * q_pp, phi * q_ss - psi * q_ps],
        [pphi * q_ps - ppsi * q_pp, pphi * q_ss - ppsi * q_ps],
    ], dtype=complex)


def eval_D(cs, lam, tol=DEFAULT_TOL):
    """Floquet discriminant at lam"""
    return complex(transfer(cs, lam, tol).D)


def eval_D_and_Ddot(cs, lam, tol=DEFAULT_TOL):
    """(D, D') from a single transfer pass"""
    result = transfer(cs, lam, tol)
    return complex(result.D), complex(ddot_from_transfer(result))


def eval_Ddot_quadrature(cs, lam, tol=DEFAULT_TOL):
    """D'(lam) via the quadrature identity"""
    return complex(ddot_from_transfer(transfer(cs, lam, tol)))


def eval_Ddot_numdiff(cs, lam, tol=DEFAULT_TOL, step=None):
    """Central-difference D'(lam), used to cross-check the quadrature route"""
    h = step if step is not None else CROSS_CHECK_STEP * (1 + abs(lam))
    return (eval_D(cs, lam + h, tol) - eval_D(cs, lam - h, tol)) / (2 * h)


def eval_Ddotdot(cs, lam, tol=DEFAULT_TOL):
    """D''(lam) by two Richardson levels over central differences of D'"""
    h = SECOND_DERIVATIVE_STEP * (1 + abs(lam))

    def central(step):
        return (eval_Ddot_quadrature(cs, lam + step, tol)
                - eval_Ddot_quadrature(cs, lam - step, tol)) / (2 * step)

    level0 = [central(h), central(h / 2), central(h / 4)]
    level1 = [(4 * level0[1] - level0[0]) / 3, (4 * level0[2] - level0[1]) / 3]
    return complex((16 * level1[1] - level1[0]) / 15)


def entry_derivatives(cs, lam, tol=DEFAULT_TOL):
    """2x2 matrix of d/dlam of the monodromy entries"""
    return entry_derivatives_from_transfer(transfer(cs, lam, tol))


def sample(cs, lam, tol=DEFAULT_TOL, with_second=False):
    """D, D' (quadrature route), optionally D'', with the finite-difference cross-check"""
    lam = complex(lam)
    result = transfer(cs, lam, tol)
    D = complex(result.D)
    ddot = complex(ddot_from_transfer(result))
    numdiff = eval_Ddot_numdiff(cs, lam, tol)
    residual = abs(ddot - numdiff) / (1 + abs(ddot))
    if residual > CROSS_CHECK_FLAG:
        logging.warning(f"Derivative cross-check residual {residual:.2e} at lam={lam}")
    ddotdot = eval_Ddotdot(cs, lam, tol) if with_second else complex('nan')
    return DiscriminantSample(lam=lam, D=D, Ddot=ddot, Ddotdot=ddotdot,
                              Ddot_route=DdotRoute.QuadratureFormula,
                              residual_cross_check=float(residual))


def scan(cs, re_range, im_range, n, tol=DEFAULT_TOL):
    """Discriminant samples on an n x n grid (a single row when the imaginary range is degenerate)"""
    re_values = np.linspace(re_range[0], re_range[1], n)
    im_values = np.linspace(im_range[0], im_range[1], n) if im_range[1] > im_range[0] else [im_range[0]]
    samples = []
    for im in im_values:
        for re in re_values:
            samples.append(sample(cs, complex(re, im), tol))
    flagged = sum(1 for s in samples if s.flagged)
    logging.info(f"Scanned {len(samples)} points, {flagged} flagged by the derivative cross-check")
    return samples
