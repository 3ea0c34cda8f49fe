"""Maximum-likelihood estimate and the relative-entropy decay diagnostics.

The estimate is found with the R-rho-R fixed point iteration started from the
maximally mixed state.  If a full R-rho-R step would lower the likelihood the
step is diluted, ``(I + tR) rho (I + tR)`` with ``t`` halved until it does not,
so the recorded likelihood sequence is non-decreasing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .hilbert import DensityMatrix
from .likelihood import MeasurementRecord

__all__ = [
    "MleResult",
    "mle_estimate",
    "stationarity_check",
    "decay_exponent",
    "pinsker_halfwidth",
    "frequency_entropy",
    "l1_deviation",
]

log = logging.getLogger(__name__)

BOUNDARY_EIG = 1e-8
_MAX_DILUTIONS = 40


@dataclass(frozen=True)
class MleResult:
    estimate: DensityMatrix
    log_likelihood_value: float
    iterations: int
    stationarity_residual: float
    boundary_flag: bool
    converged: bool
    unique: bool
    history: tuple[float, ...] = field(repr=False, default=())

    def to_dict(self) -> dict:
        from .serialization import matrix_to_json

        return {
            "estimate": matrix_to_json(self.estimate.matrix),
            "log_likelihood": self.log_likelihood_value,
            "iterations": self.iterations,
            "stationarity_residual": self.stationarity_residual,
            "boundary": self.boundary_flag,
            "converged": self.converged,
            "unique": self.unique,
        }


def _mean_loglik(fbar: np.ndarray, active: np.ndarray, probs: np.ndarray) -> float:
    p = probs[active]
    if np.any(p <= 0):
        return -math.inf
    return float(np.dot(fbar[active], np.log(p)))


def _normalize(m: np.ndarray) -> np.ndarray:
    m = 0.5 * (m + m.conj().T)
    return m / np.trace(m).real


def _rrr_step(A, sigma, povm, fbar, active):
    cand = _normalize(A @ sigma @ A.conj().T)
    cprobs = povm.probabilities(cand)
    return cand, cprobs, _mean_loglik(fbar, active, cprobs)


def _best(a, b):
    return b if a is None or b[2] > a[2] else a


def mle_estimate(record: MeasurementRecord, tol: float = 1e-15, max_iter: int = 20000) -> MleResult:
    """Maximize ``sum_i fbar_i ln tr(E_i sigma)`` over density matrices.

    Iterates ``sigma <- N[A sigma A]`` with ``R = sum_i fbar_i / tr(E_i sigma) E_i``
    and ``A`` the better of ``R`` and ``I + R`` (shorter ``I + tR`` steps if
    neither increases the likelihood), until the gain in mean log-likelihood
    drops below ``tol``.  ``tol`` applies to
    the per-outcome (``1/n``-scaled) log-likelihood.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    povm = record.povm
    d = record.dim
    fbar = record.frequencies
    active = fbar > 0
    els = povm.elements
    eye = np.eye(d, dtype=complex)

    sigma = eye / d
    probs = povm.probabilities(sigma)
    ll = _mean_loglik(fbar, active, probs)
    history = [ll]
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        weights = np.where(active, fbar / np.where(active, probs, 1.0), 0.0)
        R = np.einsum("k,kij->ij", weights, els)
        # the plain step can flip the error sign without shrinking it (projective
        # POVMs), so compare it with the I + R step and keep the better one
        step = None
        for A in (R, eye + R):
            step = _best(step, _rrr_step(A, sigma, povm, fbar, active))
        t = 0.5
        while step[2] < ll and t > 0.5**_MAX_DILUTIONS:
            step = _rrr_step(eye + t * R, sigma, povm, fbar, active)
            t *= 0.5
        if step[2] < ll:
            step = None
        if step is None:
            converged = True
            break
        gain = step[2] - ll
        sigma, probs, ll = step
        history.append(ll)
        if gain < tol:
            converged = True
            break
    if not converged:
        log.warning("R-rho-R iteration stopped at max_iter=%d without converging", max_iter)

    est = DensityMatrix(_normalize(sigma))
    unique = povm.span_dimension() >= d * d
    if not unique:
        log.warning(
            "POVM spans %d < d^2 = %d dimensions: the maximizer is not unique",
            povm.span_dimension(),
            d * d,
        )
    resid = stationarity_check(record, est)
    return MleResult(
        estimate=est,
        log_likelihood_value=ll * record.n,
        iterations=it,
        stationarity_residual=float(np.max(np.abs(resid[active]))),
        boundary_flag=bool(est.eigenvalues().min() < BOUNDARY_EIG),
        converged=converged,
        unique=unique,
        history=tuple(h * record.n for h in history),
    )


def stationarity_check(record: MeasurementRecord, sigma) -> np.ndarray:
    """Residuals ``fbar_i - tr(E_i sigma)``; zero at an interior maximizer of a complete POVM."""
    return record.frequencies - record.povm.probabilities(sigma)


def frequency_entropy(record: MeasurementRecord) -> float:
    """Shannon entropy (nats) of the relative frequencies."""
    f = record.frequencies
    f = f[f > 0]
    return float(-np.dot(f, np.log(f)))


def decay_exponent(record: MeasurementRecord, sigma) -> float:
    """Relative entropy ``D(fbar || E(sigma))`` in nats; ``inf`` on a support violation."""
    f = record.frequencies
    p = record.povm.probabilities(sigma)
    active = f > 0
    if np.any(p[active] <= 0):
        return math.inf
    return float(np.dot(f[active], np.log(f[active]) - np.log(p[active])))


def l1_deviation(record: MeasurementRecord, sigma) -> float:
    """``||fbar - E(sigma)||_1``."""
    return float(np.abs(stationarity_check(record, sigma)).sum())


def pinsker_halfwidth(record: MeasurementRecord, sigma) -> float:
    """``sqrt(2 D)``, an upper bound on :func:`l1_deviation` by Pinsker's inequality."""
    return math.sqrt(2.0 * decay_exponent(record, sigma))
